use std::time::Instant;
use tactogen_core::corpus::{default5, gen_pair};
use tactogen_core::diffusion::{default_schedule, sample_ddpm, train_ddpm};
use tactogen_core::flow::{sample_flow, train_flow, FlowConfig};
use tactogen_core::heightmap::grayscale_proxy;
use tactogen_core::heightmap::{HeightMap, ImageRgb};
use tactogen_core::nn::{CondNet, CondNetConfig};
use tactogen_core::spectral::psd_mse;
use tactogen_core::train::{TrainItem, TrainOpts, TrainSet};

struct Pair {
    image: ImageRgb,
    height: HeightMap,
    id: String,
}

fn build(size: usize, pairs_per: usize) -> (Vec<Pair>, Vec<Pair>) {
    let recipes = default5(42);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (cat, mat, recipe) in &recipes {
        for k in 0..pairs_per {
            let p = gen_pair(recipe, cat, mat, k, size, size).unwrap();
            let pair = Pair { image: p.image, height: p.height, id: p.id };
            // 80/10/10 by pair index
            if k < (pairs_per * 8) / 10 {
                train.push(pair);
            } else if k < (pairs_per * 9) / 10 {
                val.push(pair);
            }
        }
    }
    (train, val)
}

#[test]
#[ignore]
fn e2e_experiment() {
    let t_start = Instant::now();
    let (train, val) = build(32, 20);
    let items: Vec<TrainItem> = train
        .iter()
        .map(|p| TrainItem::from_pair(&p.id, &p.image, &p.height).unwrap())
        .collect();
    let data = TrainSet::new(items).unwrap();
    println!("train {} val {}", train.len(), val.len());

    // proxy baseline
    let proxy_mean = val
        .iter()
        .map(|p| psd_mse(&grayscale_proxy(&p.image), &p.height).unwrap())
        .sum::<f64>()
        / val.len() as f64;
    println!("proxy mean PSD-MSE: {proxy_mean:.4}");

    let config16 = CondNetConfig { base_width: 16, ..CondNetConfig::default() };

    // FLOW
    let fc = FlowConfig::default();
    let mut fnet = CondNet::init(config16.clone(), 11, true).unwrap();
    let opts = TrainOpts { steps: 2000, batch_size: 4, learning_rate: 1e-3, seed: 11 };
    let t0 = Instant::now();
    let log = train_flow(&mut fnet, &data, &fc, &opts, |s, l| {
        if s % 250 == 0 {
            println!("flow step {s}: {l:.4}");
        }
    })
    .unwrap();
    let (h, t) = log.head_tail_mean(50);
    println!("flow train {:.1}s, loss {h:.4} -> {t:.4}", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let flow_mean = val
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let cond = tactogen_core::train::planar_image(&p.image);
            let s = sample_flow(&fnet, &cond, &fc, 1000 + i as u64).unwrap();
            psd_mse(&s, &p.height).unwrap()
        })
        .sum::<f64>()
        / val.len() as f64;
    println!("flow mean PSD-MSE: {flow_mean:.4} (sampling {:.1}s)", t0.elapsed().as_secs_f64());
    println!("flow improvement: {:.1}%", (1.0 - flow_mean / proxy_mean) * 100.0);

    // DDPM
    let schedule = default_schedule();
    let mut dnet = CondNet::init(config16, 12, true).unwrap();
    let opts = TrainOpts { steps: 2000, batch_size: 4, learning_rate: 2e-4, seed: 12 };
    let t0 = Instant::now();
    let log = train_ddpm(&mut dnet, &data, &schedule, &opts, |s, l| {
        if s % 250 == 0 {
            println!("ddpm step {s}: {l:.4}");
        }
    })
    .unwrap();
    let (h, t) = log.head_tail_mean(50);
    println!("ddpm train {:.1}s, loss {h:.4} -> {t:.4}", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let ddpm_mean = val
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let cond = tactogen_core::train::planar_image(&p.image);
            let s = sample_ddpm(&dnet, &cond, &schedule, 2000 + i as u64).unwrap();
            psd_mse(&s, &p.height).unwrap()
        })
        .sum::<f64>()
        / val.len() as f64;
    println!("ddpm mean PSD-MSE: {ddpm_mean:.4} (sampling {:.1}s)", t0.elapsed().as_secs_f64());
    println!("ddpm improvement: {:.1}%", (1.0 - ddpm_mean / proxy_mean) * 100.0);
    println!("TOTAL {:.1}s", t_start.elapsed().as_secs_f64());
}
