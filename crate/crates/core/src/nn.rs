//! The conditional U-Net shared by the flow-matching and diffusion trainers.
//!
//! Layout: concat(target, condition) -> 3x3 conv to the base width -> per
//! resolution two residual blocks, stride-2 conv between resolutions ->
//! mirrored decoder with nearest-upsample and skip concat -> 3x3 conv to one
//! channel. Time enters through a sinusoidal embedding, one shared SiLU MLP
//! layer, and per-block scale/shift projections.

use alloc::format;
use alloc::string::String;

use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{contract, Result};

pub const GROUP_NORM_GROUPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CondNetConfig {
    /// Channels of the generated field (1 for height maps).
    pub target_channels: usize,
    /// Channels of the conditioning image (3 for RGB).
    pub cond_channels: usize,
    /// Width at full resolution; doubles per level. Must be a multiple of 8.
    pub base_width: usize,
    /// Resolutions below the input (2 gives widths base, 2*base, 4*base).
    pub depth: usize,
    pub time_embed_dim: usize,
}

impl Default for CondNetConfig {
    fn default() -> Self {
        CondNetConfig {
            target_channels: 1,
            cond_channels: 3,
            base_width: 32,
            depth: 2,
            time_embed_dim: 64,
        }
    }
}

impl CondNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.base_width % GROUP_NORM_GROUPS != 0 {
            return Err(contract(format_args!(
                "base width {} must be a positive multiple of {GROUP_NORM_GROUPS}",
                self.base_width
            )));
        }
        if self.target_channels == 0 || self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(contract("invalid target channels or time embedding dim"));
        }
        Ok(())
    }

    fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

/// Network output plus the graph nodes its parameters were bound to,
/// in parameter order — the handle for reading gradients back.
pub struct BoundForward {
    pub out: NodeId,
    pub param_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct CondNet<T: Real> {
    pub config: CondNetConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> CondNet<T> {
    /// Deterministic He-normal init. With `zero_init_tails` the final conv
    /// starts at zero so the untrained net is the zero field; scale/shift
    /// projections always start at zero (identity modulation).
    pub fn init(config: CondNetConfig, seed: u64, zero_init_tails: bool) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::stream(seed, 0x434E4554);
        let mut params = Vec::new();

        fn conv_param<T: Real>(
            params: &mut Vec<(String, Tensor<T>)>,
            rng: &mut Rng,
            name: &str,
            co: usize,
            ci: usize,
            zero: bool,
        ) {
            let std = if zero { 0.0 } else { libm::sqrt(2.0 / (ci * 9) as f64) };
            params.push((format!("{name}.w"), Tensor::randn(&[co, ci, 3, 3], std, rng)));
            params.push((format!("{name}.b"), Tensor::zeros(&[co])));
        }
        fn linear_param<T: Real>(
            params: &mut Vec<(String, Tensor<T>)>,
            rng: &mut Rng,
            name: &str,
            fan_in: usize,
            fan_out: usize,
            zero: bool,
        ) {
            let std = if zero { 0.0 } else { libm::sqrt(2.0 / fan_in as f64) };
            params.push((format!("{name}.w"), Tensor::randn(&[fan_in, fan_out], std, rng)));
            params.push((format!("{name}.b"), Tensor::zeros(&[fan_out])));
        }
        fn res_block<T: Real>(
            params: &mut Vec<(String, Tensor<T>)>,
            rng: &mut Rng,
            prefix: &str,
            w: usize,
            emb: usize,
        ) {
            params.push((format!("{prefix}.gn1.g"), Tensor::filled(&[w], T::ONE)));
            params.push((format!("{prefix}.gn1.b"), Tensor::zeros(&[w])));
            conv_param(params, rng, &format!("{prefix}.conv1"), w, w, false);
            // zero-init scale/shift: blocks start as identity modulation
            linear_param(params, rng, &format!("{prefix}.scale"), emb, w, true);
            linear_param(params, rng, &format!("{prefix}.shift"), emb, w, true);
            params.push((format!("{prefix}.gn2.g"), Tensor::filled(&[w], T::ONE)));
            params.push((format!("{prefix}.gn2.b"), Tensor::zeros(&[w])));
            conv_param(params, rng, &format!("{prefix}.conv2"), w, w, false);
        }

        let emb = config.time_embed_dim;
        let in_ch = config.target_channels + config.cond_channels;
        conv_param(&mut params, &mut rng, "conv_in", config.base_width, in_ch, false);
        linear_param(&mut params, &mut rng, "temb.fc", emb, emb, false);
        for l in 0..=config.depth {
            let w = config.width(l);
            for b in 0..2 {
                res_block(&mut params, &mut rng, &format!("down{l}.rb{b}"), w, emb);
            }
            if l < config.depth {
                conv_param(&mut params, &mut rng, &format!("down{l}.pool"), config.width(l + 1), w, false);
            }
        }
        for l in (0..config.depth).rev() {
            let w = config.width(l);
            let in_up = config.width(l + 1) + w;
            conv_param(&mut params, &mut rng, &format!("up{l}.fuse"), w, in_up, false);
            for b in 0..2 {
                res_block(&mut params, &mut rng, &format!("up{l}.rb{b}"), w, emb);
            }
        }
        conv_param(&mut params, &mut rng, "conv_out", config.target_channels, config.base_width, zero_init_tails);

        let (names, tensors) = params.into_iter().unzip();
        Ok(CondNet { config, names, tensors })
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn param_tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn param_entries(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replace all parameters (checkpoint load). Names and shapes must match.
    pub fn load_params(&mut self, incoming: &[(String, Tensor<T>)]) -> Result<()> {
        if incoming.len() != self.tensors.len() {
            return Err(contract(format_args!(
                "expected {} parameter records, got {}",
                self.tensors.len(),
                incoming.len()
            )));
        }
        for (i, (in_name, in_tensor)) in incoming.iter().enumerate() {
            if &self.names[i] != in_name || self.tensors[i].shape() != in_tensor.shape() {
                return Err(contract(format_args!(
                    "parameter mismatch: have {} {:?}, got {in_name} {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    in_tensor.shape()
                )));
            }
            self.tensors[i] = in_tensor.clone();
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> CondNet<U> {
        CondNet {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    fn find(&self, ids: &[NodeId], name: &str) -> NodeId {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        ids[idx]
    }

    /// Build the forward graph. `x` is [n, target_ch, h, w], `cond` is
    /// [n, cond_ch, h, w], `t` one time value in [0, 1] per sample.
    /// With `train` the parameters participate in backward.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        x: Tensor<T>,
        cond: Tensor<T>,
        t: &[f64],
        train: bool,
    ) -> Result<BoundForward> {
        let param_nodes: Vec<NodeId> =
            self.tensors.iter().map(|tensor| g.input(tensor.clone(), train)).collect();
        let x = g.input(x, false);
        let cond = g.input(cond, false);
        let out = self.forward_with_params(g, &param_nodes, x, cond, t)?;
        Ok(BoundForward { out, param_nodes })
    }

    /// Forward against already-registered parameter nodes (gradient checks
    /// bind the leaves themselves). `ids` must follow `param_names` order.
    pub fn forward_with_params(
        &self,
        g: &mut Graph<T>,
        ids: &[NodeId],
        x: NodeId,
        cond: NodeId,
        t: &[f64],
    ) -> Result<NodeId> {
        if ids.len() != self.names.len() {
            return Err(contract(format_args!(
                "expected {} parameter nodes, got {}",
                self.names.len(),
                ids.len()
            )));
        }
        let [n, tc, h, w] = *g.value(x).shape() else {
            return Err(contract(format_args!("x must be 4-D, got {:?}", g.value(x).shape())));
        };
        if tc != self.config.target_channels {
            return Err(contract(format_args!("x has {tc} channels, config wants {}", self.config.target_channels)));
        }
        if *g.value(cond).shape() != [n, self.config.cond_channels, h, w] {
            return Err(contract(format_args!(
                "condition shape {:?} does not match x {:?}",
                g.value(cond).shape(),
                g.value(x).shape()
            )));
        }
        if t.len() != n {
            return Err(contract(format_args!("{} time values for batch {n}", t.len())));
        }
        let div = 1 << self.config.depth;
        if h % div != 0 || w % div != 0 {
            return Err(contract(format_args!("spatial dims {h}x{w} not divisible by {div}")));
        }

        let emb = sinusoidal_embedding::<T>(t, self.config.time_embed_dim);
        let emb = g.input(emb, false);
        let temb = g.matmul(emb, self.find(ids, "temb.fc.w"))?;
        let temb = g.add_chan(temb, self.find(ids, "temb.fc.b"))?;
        let temb = g.silu(temb)?;

        let mut cur = g.concat_c(x, cond)?;
        cur = g.conv3x3(
            cur,
            self.find(ids, "conv_in.w"),
            self.find(ids, "conv_in.b"),
            1,
        )?;

        let ones_cache = |g: &mut Graph<T>, n: usize, w: usize| g.input(Tensor::filled(&[n, w], T::ONE), false);

        let mut skips = Vec::new();
        for l in 0..=self.config.depth {
            for b in 0..2 {
                cur = self.res_block(g, ids, &format!("down{l}.rb{b}"), cur, temb, n, self.config.width(l), &ones_cache)?;
            }
            if l < self.config.depth {
                skips.push(cur);
                cur = g.conv3x3(
                    cur,
                    self.find(ids, &format!("down{l}.pool.w")),
                    self.find(ids, &format!("down{l}.pool.b")),
                    2,
                )?;
            }
        }
        for l in (0..self.config.depth).rev() {
            cur = g.upsample2x(cur)?;
            cur = g.concat_c(cur, skips[l])?;
            cur = g.conv3x3(
                cur,
                self.find(ids, &format!("up{l}.fuse.w")),
                self.find(ids, &format!("up{l}.fuse.b")),
                1,
            )?;
            for b in 0..2 {
                cur = self.res_block(g, ids, &format!("up{l}.rb{b}"), cur, temb, n, self.config.width(l), &ones_cache)?;
            }
        }
        let out = g.conv3x3(
            cur,
            self.find(ids, "conv_out.w"),
            self.find(ids, "conv_out.b"),
            1,
        )?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn res_block(
        &self,
        g: &mut Graph<T>,
        ids: &[NodeId],
        prefix: &str,
        x: NodeId,
        temb: NodeId,
        n: usize,
        width: usize,
        ones: &impl Fn(&mut Graph<T>, usize, usize) -> NodeId,
    ) -> Result<NodeId> {
        let mut h = g.group_norm(
            x,
            self.find(ids, &format!("{prefix}.gn1.g")),
            self.find(ids, &format!("{prefix}.gn1.b")),
            GROUP_NORM_GROUPS,
        )?;
        h = g.silu(h)?;
        h = g.conv3x3(
            h,
            self.find(ids, &format!("{prefix}.conv1.w")),
            self.find(ids, &format!("{prefix}.conv1.b")),
            1,
        )?;
        // scale/shift from the time embedding; zero-init makes this identity
        let mut scale = g.matmul(temb, self.find(ids, &format!("{prefix}.scale.w")))?;
        scale = g.add_chan(scale, self.find(ids, &format!("{prefix}.scale.b")))?;
        let one = ones(g, n, width);
        scale = g.add(scale, one)?;
        let mut shift = g.matmul(temb, self.find(ids, &format!("{prefix}.shift.w")))?;
        shift = g.add_chan(shift, self.find(ids, &format!("{prefix}.shift.b")))?;
        h = g.mul_chan(h, scale)?;
        h = g.add_chan(h, shift)?;
        h = g.group_norm(
            h,
            self.find(ids, &format!("{prefix}.gn2.g")),
            self.find(ids, &format!("{prefix}.gn2.b")),
            GROUP_NORM_GROUPS,
        )?;
        h = g.silu(h)?;
        h = g.conv3x3(
            h,
            self.find(ids, &format!("{prefix}.conv2.w")),
            self.find(ids, &format!("{prefix}.conv2.b")),
            1,
        )?;
        g.add(x, h)
    }
}

/// Transformer-style sinusoidal embedding of t in [0, 1], shape [n, dim].
pub fn sinusoidal_embedding<T: Real>(t: &[f64], dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &tv in t {
        for i in 0..half {
            let freq = libm::exp(-libm::log(10_000.0) * i as f64 / (half.max(2) - 1) as f64);
            let arg = tv * 1000.0 * freq;
            data.push(T::from_f64(libm::sin(arg)));
            data.push(T::from_f64(libm::cos(arg)));
        }
    }
    Tensor::new(&[t.len(), dim], data).expect("embedding shape is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> CondNetConfig {
        CondNetConfig { base_width: 8, depth: 1, time_embed_dim: 8, ..CondNetConfig::default() }
    }

    #[test]
    fn output_shape_matches_target() {
        let net = CondNet::<f32>::init(tiny_config(), 1, true).unwrap();
        let mut g = Graph::new();
        let x = Tensor::zeros(&[2, 1, 16, 16]);
        let cond = Tensor::zeros(&[2, 3, 16, 16]);
        let bound = net.forward(&mut g, x, cond, &[0.1, 0.9], false).unwrap();
        assert_eq!(g.value(bound.out).shape(), &[2, 1, 16, 16]);
    }

    #[test]
    fn param_count_is_config_function() {
        let a = CondNet::<f32>::init(tiny_config(), 1, true).unwrap();
        let b = CondNet::<f32>::init(tiny_config(), 999, false).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        let wider =
            CondNet::<f32>::init(CondNetConfig { base_width: 16, ..tiny_config() }, 1, true).unwrap();
        assert!(wider.param_count() > a.param_count());
    }

    #[test]
    fn zero_tail_net_outputs_zero() {
        let net = CondNet::<f32>::init(tiny_config(), 3, true).unwrap();
        let mut g = Graph::new();
        let mut rng = Rng::new(5);
        let x = Tensor::randn(&[1, 1, 16, 16], 1.0, &mut rng);
        let cond = Tensor::randn(&[1, 3, 16, 16], 1.0, &mut rng);
        let bound = net.forward(&mut g, x, cond, &[0.5], false).unwrap();
        assert!(g.value(bound.out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = CondNet::<f32>::init(tiny_config(), 7, true).unwrap();
        let b = CondNet::<f32>::init(tiny_config(), 7, true).unwrap();
        for ((na, ta), (nb, tb)) in a.param_entries().zip(b.param_entries()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn rejects_bad_dims() {
        let net = CondNet::<f32>::init(tiny_config(), 1, true).unwrap();
        let mut g = Graph::new();
        // 15 not divisible by 2^depth
        let x = Tensor::zeros(&[1, 1, 15, 15]);
        let cond = Tensor::zeros(&[1, 3, 15, 15]);
        assert!(net.forward(&mut g, x, cond, &[0.5], false).is_err());
        // width not multiple of 8
        assert!(CondNet::<f32>::init(
            CondNetConfig { base_width: 12, ..CondNetConfig::default() },
            1,
            true
        )
        .is_err());
    }

    #[test]
    fn embedding_distinguishes_times() {
        let e = sinusoidal_embedding::<f64>(&[0.1, 0.2], 16);
        let a = &e.data()[..16];
        let b = &e.data()[16..];
        assert!(a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-3));
    }
}
