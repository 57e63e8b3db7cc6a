//! HMCK checkpoint format.
//!
//! Layout: magic "HMCK", format version u32 LE, record count u32 LE, then
//! per record (name_len u32 LE, name bytes, rank u32 LE, dims u32 LE each,
//! payload), and a trailing CRC-32 (IEEE) of all preceding bytes.
//!
//! Parameter records carry raw little-endian f32 data. The "__config__"
//! record instead carries a length-prefixed UTF-8 JSON blob (u32 LE length
//! + bytes) holding the model/run configuration; its single dim is the
//! blob length.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tactogen_core::diffusion::NoiseSchedule;
use tactogen_core::flow::{Coupling, FlowConfig};
use tactogen_core::nn::{CondNet, CondNetConfig};
use tactogen_core::tensor::Tensor;

use crate::{format_err, io_err, Result};

pub const MAGIC: &[u8; 4] = b"HMCK";
pub const FORMAT_VERSION: u32 = 1;
pub const CONFIG_RECORD: &str = "__config__";

/// IEEE 802.3 CRC-32 (the zlib polynomial), table-driven.
pub fn crc32(bytes: &[u8]) -> u32 {
    const fn table() -> [u32; 256] {
        let mut t = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB88320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            t[i] = c;
            i += 1;
        }
        t
    }
    const TABLE: [u32; 256] = table();
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

/// Everything needed to rebuild a sampler from disk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// "flow" or "ddpm".
    pub family: String,
    pub base_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
    /// Training image size.
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coupling: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ode_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma_aug: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_end: Option<f64>,
}

impl ModelConfig {
    pub fn net_config(&self) -> CondNetConfig {
        CondNetConfig {
            target_channels: 1,
            cond_channels: 3,
            base_width: self.base_width,
            depth: self.depth,
            time_embed_dim: self.time_embed_dim,
        }
    }

    pub fn flow_config(&self) -> Option<FlowConfig> {
        if self.family != "flow" {
            return None;
        }
        Some(FlowConfig {
            coupling: match self.coupling.as_deref() {
                Some("image-to-target") => Coupling::ImageToTarget,
                _ => Coupling::NoiseToTarget,
            },
            ode_steps: self.ode_steps.unwrap_or(50),
            sigma_aug: self.sigma_aug.unwrap_or(0.05),
            width: self.width,
            height: self.height,
        })
    }

    pub fn schedule(&self) -> Option<NoiseSchedule> {
        if self.family != "ddpm" {
            return None;
        }
        tactogen_core::diffusion::make_schedule(
            self.t_steps.unwrap_or(tactogen_core::diffusion::DEFAULT_STEPS),
            self.beta_start.unwrap_or(tactogen_core::diffusion::DEFAULT_BETA_START),
            self.beta_end.unwrap_or(tactogen_core::diffusion::DEFAULT_BETA_END),
        )
        .ok()
    }
}

fn push_record_header(out: &mut Vec<u8>, name: &str, dims: &[usize]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

pub fn save(path: &Path, config: &ModelConfig, net: &CondNet<f32>) -> Result<()> {
    let records: Vec<(&str, &Tensor<f32>)> = net.param_entries().collect();
    save_records(path, config, &records)
}

pub fn save_records(path: &Path, config: &ModelConfig, records: &[(&str, &Tensor<f32>)]) -> Result<()> {
    let json = serde_json::to_string(config)
        .map_err(|e| format_err(path, None, format!("config encode: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32 + 1).to_le_bytes());

    push_record_header(&mut out, CONFIG_RECORD, &[json.len()]);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());

    for (name, tensor) in records {
        push_record_header(&mut out, name, tensor.shape());
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, out).map_err(io_err(path))
}

#[derive(Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    /// Rebuild the network: init from the stored config, then overwrite every
    /// parameter bit-exactly.
    pub fn instantiate(&self) -> Result<CondNet<f32>> {
        let mut net = CondNet::init(self.config.net_config(), self.config.seed, true)
            .map_err(crate::IoError::Core)?;
        net.load_params(&self.params).map_err(crate::IoError::Core)?;
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, msg: impl std::fmt::Display) -> Result<T> {
        Err(format_err(self.path, Some(self.pos as u64), msg))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.err(format!("truncated: want {n} bytes"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 12 {
        return Err(format_err(path, Some(0), "file too short for HMCK header"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let actual = crc32(body);
    if stored_crc != actual {
        return Err(format_err(
            path,
            Some(body.len() as u64),
            format!("CRC mismatch: stored {stored_crc:#010x}, computed {actual:#010x}"),
        ));
    }

    let mut r = Reader { bytes: body, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(format_err(path, Some(0), "bad magic: expected HMCK"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return r.err(format!("unsupported format version {version}"));
    }
    let count = r.u32()? as usize;

    let mut config: Option<ModelConfig> = None;
    let mut params = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| format_err(path, Some(r.pos as u64), format!("record name: {e}")))?;
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        if name == CONFIG_RECORD {
            let len = r.u32()? as usize;
            let blob = r.take(len)?;
            let json = std::str::from_utf8(blob)
                .map_err(|e| format_err(path, Some(r.pos as u64), format!("config blob: {e}")))?;
            config = Some(
                serde_json::from_str(json)
                    .map_err(|e| format_err(path, Some(r.pos as u64), format!("config parse: {e}")))?,
            );
        } else {
            let numel: usize = dims.iter().product();
            let raw = r.take(numel * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.push((
                name,
                Tensor::new(&dims, data).map_err(crate::IoError::Core)?,
            ));
        }
    }
    if r.pos != body.len() {
        return r.err("trailing bytes after last record");
    }
    let config = config.ok_or_else(|| format_err(path, None, "missing __config__ record"))?;
    Ok(Checkpoint { config, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn demo_config() -> ModelConfig {
        ModelConfig {
            family: "flow".into(),
            base_width: 8,
            depth: 1,
            time_embed_dim: 16,
            width: 16,
            height: 16,
            seed: 3,
            coupling: Some("noise-to-target".into()),
            ode_steps: Some(50),
            sigma_aug: Some(0.05),
            t_steps: None,
            beta_start: None,
            beta_end: None,
        }
    }

    #[test]
    fn crc32_known_vector() {
        // standard check value for "123456789"
        assert_eq!(crc32(b"123456789"), 0xCBF43926);
    }

    #[test]
    fn roundtrip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.hmck");
        let cfg = demo_config();
        let net = CondNet::<f32>::init(cfg.net_config(), 3, true).unwrap();
        save(&path, &cfg, &net).unwrap();
        let ck = load(&path).unwrap();
        assert_eq!(ck.config, cfg);
        let restored = ck.instantiate().unwrap();
        for (a, b) in net.param_tensors().iter().zip(restored.param_tensors()) {
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn flipped_byte_fails_crc() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.hmck");
        let cfg = demo_config();
        let net = CondNet::<f32>::init(cfg.net_config(), 3, true).unwrap();
        save(&path, &cfg, &net).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(format!("{err}").contains("CRC"), "{err}");
    }

    #[test]
    fn empty_parameter_table_is_valid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("e.hmck");
        save_records(&path, &demo_config(), &[]).unwrap();
        let ck = load(&path).unwrap();
        assert!(ck.params.is_empty());
        assert_eq!(ck.config.family, "flow");
    }
}
