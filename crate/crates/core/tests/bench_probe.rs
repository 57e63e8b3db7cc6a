use std::time::Instant;
use tactogen_core::corpus::{default5, gen_pair};
use tactogen_core::flow::{train_flow, FlowConfig};
use tactogen_core::nn::{CondNet, CondNetConfig};
use tactogen_core::train::{TrainItem, TrainOpts, TrainSet};

#[test]
#[ignore]
fn probe_step_cost() {
    let recipes = default5(42);
    let mut items = Vec::new();
    for (cat, mat, recipe) in &recipes {
        for k in 0..20 {
            let p = gen_pair(recipe, cat, mat, k, 32, 32).unwrap();
            items.push(TrainItem::from_pair(&p.id, &p.image, &p.height).unwrap());
        }
    }
    let data = TrainSet::new(items).unwrap();
    let mut net = CondNet::init(CondNetConfig::default(), 1, true).unwrap();
    println!("param count: {}", net.param_count());
    let config = FlowConfig::default();
    let opts = TrainOpts { steps: 20, batch_size: 4, learning_rate: 1e-3, seed: 1 };
    let t0 = Instant::now();
    train_flow(&mut net, &data, &config, &opts, |_, _| {}).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("20 steps batch4 at 32x32 base32: {dt:.2}s -> {:.1} ms/step", dt * 50.0);
}
