use std::time::Instant;
use tactogen_core::corpus::{gen_pair, two_class};
use tactogen_core::flow::{sample_flow, train_flow, FlowConfig};
use tactogen_core::nn::{CondNet, CondNetConfig};
use tactogen_core::spectral::{dominant_peak, signed_freq};
use tactogen_core::train::{planar_image, TrainItem, TrainOpts, TrainSet};

/// class 0: weave period 8 -> peak near (|fy|, |fx|) = (4, 4)
/// class 1: stripes period 16, angle 0 -> peak near (0, 2)
fn classify(map: &tactogen_core::HeightMap) -> Option<usize> {
    let field: Vec<f64> = map.values.iter().map(|&v| v as f64).collect();
    let (ky, kx) = dominant_peak(&field, map.height, map.width).unwrap();
    let fy = signed_freq(ky, map.height).unsigned_abs();
    let fx = signed_freq(kx, map.width).unsigned_abs();
    if fy == 4 && fx == 4 {
        Some(0)
    } else if fy == 0 && fx == 2 {
        Some(1)
    } else {
        None
    }
}

#[test]
#[ignore]
fn conditioning_experiment() {
    let t0 = Instant::now();
    let recipes = two_class(42);
    let mut items = Vec::new();
    let mut val = Vec::new();
    // 250 pairs per class: 200 train, 25 val, 25 test
    for (ci, (cat, mat, recipe)) in recipes.iter().enumerate() {
        for k in 0..250usize {
            let p = gen_pair(recipe, cat, mat, k, 32, 32).unwrap();
            if k < 200 {
                items.push(TrainItem::from_pair(&p.id, &p.image, &p.height).unwrap());
            } else if k < 225 {
                val.push((ci, p));
            }
        }
    }
    println!("train {} val {}", items.len(), val.len());
    let data = TrainSet::new(items).unwrap();

    let mut net = CondNet::init(
        CondNetConfig { base_width: 16, ..CondNetConfig::default() },
        21,
        true,
    )
    .unwrap();
    let fc = FlowConfig::default();
    let opts = TrainOpts { steps: 1500, batch_size: 4, learning_rate: 1e-3, seed: 21 };
    let log = train_flow(&mut net, &data, &fc, &opts, |s, l| {
        if s % 250 == 0 {
            println!("step {s}: {l:.4}");
        }
    })
    .unwrap();
    let (h, t) = log.head_tail_mean(50);
    println!("train {:.0}s loss {h:.4} -> {t:.4}", t0.elapsed().as_secs_f64());

    let mut correct = 0;
    let mut unknown = 0;
    for (i, (class, p)) in val.iter().enumerate() {
        let cond = planar_image(&p.image);
        let s = sample_flow(&net, &cond, &fc, 5000 + i as u64).unwrap();
        match classify(&s) {
            Some(c) if c == *class => correct += 1,
            Some(_) => {}
            None => unknown += 1,
        }
    }
    println!(
        "conditioning fidelity: {correct}/{} correct, {unknown} off-signature, total {:.0}s",
        val.len(),
        t0.elapsed().as_secs_f64()
    );
}
