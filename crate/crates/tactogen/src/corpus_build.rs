//! Materialize a procedural corpus on disk: PPM images, 16-bit PGM heights,
//! JSONL manifest with the 80/10/10 split baked in.

use std::fs;
use std::path::Path;

use tactogen_core::corpus::{gen_pair, MaterialRecipe};

use crate::manifest::{split_for, Entry, Header, Manifest};
use crate::{io_err, manifest, pnm, worker_threads, Result};

/// Layout: root/<category>/<material>/pair_<k>.{image.ppm,height.pgm}.
pub fn build_corpus(
    recipes: &[(String, String, MaterialRecipe)],
    pairs_per_material: usize,
    size: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    // 5 categories x 20 materials x 20 pairs declares the paper layout
    let paper_shaped = {
        let mut cats = std::collections::BTreeMap::<&str, usize>::new();
        for (cat, ..) in recipes {
            *cats.entry(cat.as_str()).or_insert(0) += 1;
        }
        cats.len() == 5 && cats.values().all(|&n| n == 20) && pairs_per_material == 20
    };

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    // generate and write pairs; material-level parallelism is safe because
    // every pair only depends on its own recipe and index
    let jobs: Vec<(usize, &(String, String, MaterialRecipe))> = recipes.iter().enumerate().collect();
    let threads = worker_threads().min(jobs.len().max(1));
    let write_material = |(_, (category, material, recipe)): &(usize, &(String, String, MaterialRecipe))| -> Result<Vec<Entry>> {
        let dir = out_dir.join(category).join(material);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut entries = Vec::with_capacity(pairs_per_material);
        for k in 0..pairs_per_material {
            let pair = gen_pair(recipe, category, material, k, size, size)?;
            let image_rel = format!("{category}/{material}/pair_{k:04}.image.ppm");
            let height_rel = format!("{category}/{material}/pair_{k:04}.height.pgm");
            pnm::write_ppm(&out_dir.join(&image_rel), &pair.image)?;
            pnm::write_pgm16(&out_dir.join(&height_rel), &pair.height)?;
            entries.push(Entry {
                id: pair.id,
                category: category.clone(),
                material: material.clone(),
                image: image_rel,
                height: height_rel,
                split: split_for(k, pairs_per_material).to_string(),
            });
        }
        Ok(entries)
    };

    let mut per_material: Vec<Vec<Entry>> = Vec::with_capacity(jobs.len());
    if threads <= 1 {
        for job in &jobs {
            per_material.push(write_material(job)?);
        }
    } else {
        let results: Vec<Result<Vec<Entry>>> = std::thread::scope(|scope| {
            let chunks: Vec<_> = jobs.chunks(jobs.len().div_ceil(threads)).collect();
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || chunk.iter().map(write_material).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            per_material.push(r?);
        }
    }

    let entries: Vec<Entry> = per_material.into_iter().flatten().collect();
    let manifest = Manifest {
        header: Header { version: 1, layout: if paper_shaped { "paper".into() } else { "custom".into() } },
        entries,
    };
    manifest::write(out_dir, &manifest)?;
    Ok(manifest)
}
