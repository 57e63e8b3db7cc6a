//! Byte-level format properties: PNM and checkpoint round trips, manifest
//! validation failure modes.

use proptest::prelude::*;
use tactogen::{checkpoint, manifest, pnm};
use tactogen_core::heightmap::{HeightMap, ImageRgb};
use tactogen_core::nn::{CondNet, CondNetConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ppm_roundtrip_u8_bit_exact(seed in 0u64..10_000) {
        let mut rng = tactogen_core::rng::Rng::new(seed);
        let (w, h) = (5 + rng.below(12), 5 + rng.below(12));
        // byte-valued pixels so quantization is exact
        let data: Vec<f32> = (0..w * h * 3).map(|_| rng.below(256) as f32 / 255.0).collect();
        let img = ImageRgb::new(w, h, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        pnm::write_ppm(&path, &img).unwrap();
        let back = pnm::read_ppm(&path).unwrap();
        prop_assert_eq!(back, img.clone());
        // writing the read-back image reproduces the file byte-for-byte
        let path2 = dir.path().join("y.ppm");
        pnm::write_ppm(&path2, &img).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn pgm16_roundtrip_within_quantum(seed in 0u64..10_000) {
        let mut rng = tactogen_core::rng::Rng::new(seed);
        let (w, h) = (6 + rng.below(10), 6 + rng.below(10));
        let data: Vec<f32> = (0..w * h).map(|_| rng.uniform() as f32).collect();
        let map = HeightMap::new(w, h, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        pnm::write_pgm16(&path, &map).unwrap();
        let back = pnm::read_pgm(&path).unwrap();
        for (a, b) in map.values.iter().zip(&back.values) {
            prop_assert!((a - b).abs() <= 1.0 / 65535.0, "{a} vs {b}");
        }
        // second trip is bit-exact: already on the 16-bit lattice
        let path2 = dir.path().join("h2.pgm");
        pnm::write_pgm16(&path2, &back).unwrap();
        prop_assert_eq!(pnm::read_pgm(&path2).unwrap(), back);
    }
}

#[test]
fn pgm8_writes_normalized_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.pgm");
    let map = HeightMap::new(3, 1, vec![0.25, 0.5, 0.75]).unwrap();
    pnm::write_pgm8(&path, &map).unwrap();
    let back = pnm::read_pgm(&path).unwrap();
    // min-max normalized: 0.25 -> 0, 0.5 -> 127.5 -> half-up 128, 0.75 -> 255
    assert_eq!(back.values[0], 0.0);
    assert_eq!(back.values[1], 128.0 / 255.0);
    assert_eq!(back.values[2], 1.0);
}

#[test]
fn checkpoint_roundtrip_larger_net() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.hmck");
    let cfg = checkpoint::ModelConfig {
        family: "ddpm".into(),
        base_width: 16,
        depth: 2,
        time_embed_dim: 64,
        width: 32,
        height: 32,
        seed: 9,
        coupling: None,
        ode_steps: None,
        sigma_aug: None,
        t_steps: Some(200),
        beta_start: Some(1e-4),
        beta_end: Some(0.04),
    };
    let net = CondNet::<f32>::init(cfg.net_config(), 9, false).unwrap();
    checkpoint::save(&path, &cfg, &net).unwrap();
    let ck = checkpoint::load(&path).unwrap();
    let restored = ck.instantiate().unwrap();
    assert_eq!(net.param_count(), restored.param_count());
    for (a, b) in net.param_tensors().iter().zip(restored.param_tensors()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert!(ck.config.schedule().is_some());
    assert!(ck.config.flow_config().is_none());
}

#[test]
fn manifest_validation_catches_violations() {
    use tactogen_core::corpus::default5;

    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let recipes: Vec<_> = default5(3).into_iter().take(2).collect();
    tactogen::corpus_build::build_corpus(&recipes, 5, 16, root).unwrap();
    assert!(manifest::validate(root).unwrap().ok());

    // deleted height file -> one missing-path violation
    let m = manifest::read(root).unwrap();
    let victim = root.join(&m.entries[0].height);
    std::fs::remove_file(&victim).unwrap();
    let report = manifest::validate(root).unwrap();
    assert_eq!(report.violations.len(), 1);
    assert!(report.violations[0].contains("missing"), "{:?}", report.violations);

    // dimension mismatch: replace a height with transposed dims
    let h = HeightMap::new(16, 8, vec![0.5; 128]).unwrap();
    pnm::write_pgm16(&victim, &h).unwrap();
    let report = manifest::validate(root).unwrap();
    assert_eq!(report.violations.len(), 1);
    assert!(report.violations[0].contains("dimension mismatch"), "{:?}", report.violations);

    // duplicate id
    let mut m2 = manifest::read(root).unwrap();
    let clone = m2.entries[1].clone();
    m2.entries.push(clone);
    manifest::write(root, &m2).unwrap();
    let report = manifest::validate(root).unwrap();
    assert!(report.violations.iter().any(|v| v.contains("duplicate id")), "{:?}", report.violations);
}

#[test]
fn split_assignment_is_80_10_10() {
    let splits: Vec<&str> = (0..20).map(|k| manifest::split_for(k, 20)).collect();
    assert_eq!(splits.iter().filter(|s| **s == "train").count(), 16);
    assert_eq!(splits.iter().filter(|s| **s == "val").count(), 2);
    assert_eq!(splits.iter().filter(|s| **s == "test").count(), 2);
    assert_eq!(manifest::split_for(0, 20), "train");
    assert_eq!(manifest::split_for(16, 20), "val");
    assert_eq!(manifest::split_for(18, 20), "test");
}
