//! JSONL corpus manifest: one header line, then one entry object per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{format_err, io_err, pnm, Result};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    /// "paper" when the corpus follows the 5 x 20 x 20 layout, else "custom".
    pub layout: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Entry {
    pub id: String,
    pub category: String,
    pub material: String,
    /// Paths relative to the corpus root, forward slashes.
    pub image: String,
    pub height: String,
    /// "train" | "val" | "test", assigned 80/10/10 by pair index.
    pub split: String,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub header: Header,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn counts_by_category(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.category.as_str()).or_insert(0) += 1;
        }
        counts
    }

    pub fn materials_by_category(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.category.as_str()).or_default().insert(e.material.as_str());
        }
        out
    }
}

pub fn write(root: &Path, manifest: &Manifest) -> Result<()> {
    let path = root.join(MANIFEST_NAME);
    let mut out = String::new();
    out.push_str(
        &serde_json::to_string(&manifest.header)
            .map_err(|e| format_err(&path, None, format!("header encode: {e}")))?,
    );
    out.push('\n');
    for e in &manifest.entries {
        out.push_str(
            &serde_json::to_string(e)
                .map_err(|err| format_err(&path, None, format!("entry encode: {err}")))?,
        );
        out.push('\n');
    }
    fs::write(&path, out).map_err(io_err(&path))
}

pub fn read(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| format_err(&path, None, "empty manifest"))?;
    let header: Header = serde_json::from_str(first)
        .map_err(|e| format_err(&path, None, format!("header line: {e}")))?;
    let mut entries = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(line)
            .map_err(|e| format_err(&path, None, format!("line {}: {e}", ln + 1)))?;
        entries.push(entry);
    }
    Ok(Manifest { header, entries })
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub entries: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check id uniqueness, path existence, per-pair dimension equality, split
/// labels, and (for paper-layout manifests) the 5 x 20 x 20 = 2000 shape.
/// Read-only and idempotent.
pub fn validate(root: &Path) -> Result<ValidationReport> {
    let manifest = read(root)?;
    let mut report = ValidationReport { entries: manifest.entries.len(), ..Default::default() };

    let mut seen = BTreeSet::new();
    for e in &manifest.entries {
        if !seen.insert(e.id.as_str()) {
            report.violations.push(format!("{}: duplicate id", e.id));
        }
        if !matches!(e.split.as_str(), "train" | "val" | "test") {
            report.violations.push(format!("{}: bad split `{}`", e.id, e.split));
        }
        let image_path = root.join(&e.image);
        let height_path = root.join(&e.height);
        let image_dims = dims_of(&image_path);
        let height_dims = dims_of(&height_path);
        match (&image_dims, &height_dims) {
            (Err(msg), _) => report.violations.push(format!("{}: image {msg}", e.id)),
            (_, Err(msg)) => report.violations.push(format!("{}: height {msg}", e.id)),
            (Ok((iw, ih)), Ok((hw, hh))) => {
                if (iw, ih) != (hw, hh) {
                    report.violations.push(format!(
                        "{}: dimension mismatch image {iw}x{ih} vs height {hw}x{hh}",
                        e.id
                    ));
                }
            }
        }
    }

    if manifest.header.layout == "paper" {
        let cats = manifest.materials_by_category();
        if cats.len() != 5 {
            report.violations.push(format!("paper layout wants 5 categories, found {}", cats.len()));
        }
        for (cat, mats) in &cats {
            if mats.len() != 20 {
                report
                    .violations
                    .push(format!("category {cat}: wants 20 materials, found {}", mats.len()));
            }
        }
        let mut per_material: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for e in &manifest.entries {
            *per_material.entry((e.category.as_str(), e.material.as_str())).or_insert(0) += 1;
        }
        for ((cat, mat), n) in &per_material {
            if *n != 20 {
                report.violations.push(format!("{cat}/{mat}: wants 20 pairs, found {n}"));
            }
        }
        if manifest.entries.len() != 2000 {
            report
                .violations
                .push(format!("paper layout wants 2000 entries, found {}", manifest.entries.len()));
        }
    }
    Ok(report)
}

fn dims_of(path: &PathBuf) -> std::result::Result<(usize, usize), String> {
    if !path.exists() {
        return Err(format!("missing file {}", path.display()));
    }
    match pnm::read_dims(path) {
        Ok((_, w, h, _)) => Ok((w, h)),
        Err(e) => Err(format!("unreadable: {e}")),
    }
}

/// The fixed 80/10/10 split rule: by pair index within each material.
pub fn split_for(pair_index: usize, pairs_per_material: usize) -> &'static str {
    let train_end = pairs_per_material * 8 / 10;
    let val_end = pairs_per_material * 9 / 10;
    if pair_index < train_end {
        "train"
    } else if pair_index < val_end {
        "val"
    } else {
        "test"
    }
}
