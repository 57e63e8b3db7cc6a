//! Load corpus splits from disk into the core's in-memory training types.

use std::path::Path;

use tactogen_core::heightmap::{HeightMap, ImageRgb};
use tactogen_core::train::{planar_image, TrainItem, TrainSet};

use crate::{manifest, pnm, Result};

/// One loaded pair with everything evaluation needs.
pub struct LoadedPair {
    pub id: String,
    pub image: ImageRgb,
    pub height: HeightMap,
    /// Relative height path in the corpus, for mirror-layout outputs.
    pub height_rel: String,
}

/// Read every entry of the given split, center-cropped / reflect-padded to
/// `size` when requested. Entries come back in manifest order.
pub fn load_split(root: &Path, split: &str, size: Option<usize>) -> Result<Vec<LoadedPair>> {
    let manifest = manifest::read(root)?;
    let mut out = Vec::new();
    for e in &manifest.entries {
        if e.split != split && split != "all" {
            continue;
        }
        let mut image = pnm::read_ppm(&root.join(&e.image))?;
        let mut height = pnm::read_pgm(&root.join(&e.height))?;
        if let Some(s) = size {
            image = image.crop_pad(s, s)?;
            height = height.crop_pad(s, s)?;
        }
        out.push(LoadedPair {
            id: e.id.clone(),
            image,
            height,
            height_rel: e.height.clone(),
        });
    }
    Ok(out)
}

pub fn to_train_set(pairs: &[LoadedPair]) -> Result<TrainSet> {
    let items = pairs
        .iter()
        .map(|p| TrainItem::from_pair(&p.id, &p.image, &p.height))
        .collect::<tactogen_core::Result<Vec<_>>>()?;
    Ok(TrainSet::new(items)?)
}

pub fn condition_tensor(pair: &LoadedPair) -> tactogen_core::Tensor<f32> {
    planar_image(&pair.image)
}
