//! In-memory training data and the shared minibatch loop.

use alloc::string::String;
use alloc::vec::Vec;

use crate::adam::{adam_step, OptimizerState};
use crate::graph::{Graph, NodeId};
use crate::heightmap::{HeightMap, ImageRgb};
use crate::nn::{BoundForward, CondNet};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{contract, Error, Result};

/// Loss above this aborts training as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct TrainItem {
    pub id: String,
    /// Planar [3, h, w] RGB in [0, 1].
    pub image: Tensor<f32>,
    /// [1, h, w] height in [0, 1].
    pub height: Tensor<f32>,
}

impl TrainItem {
    pub fn from_pair(id: &str, image: &ImageRgb, height: &HeightMap) -> Result<Self> {
        if (image.width, image.height) != (height.width, height.height) {
            return Err(contract(format_args!(
                "pair {id}: image {}x{} vs height {}x{}",
                image.width, image.height, height.width, height.height
            )));
        }
        Ok(TrainItem {
            id: String::from(id),
            image: planar_image(image),
            height: Tensor::new(&[1, height.height, height.width], height.values.clone())?,
        })
    }
}

/// Interleaved RGB -> planar [3, h, w].
pub fn planar_image(image: &ImageRgb) -> Tensor<f32> {
    let (w, h) = (image.width, image.height);
    let mut data = Vec::with_capacity(3 * w * h);
    for c in 0..3 {
        data.extend(image.data.iter().skip(c).step_by(3));
    }
    Tensor::new(&[3, h, w], data).expect("planar layout is consistent")
}

#[derive(Debug, Clone)]
pub struct TrainSet {
    pub items: Vec<TrainItem>,
    pub width: usize,
    pub height: usize,
}

impl TrainSet {
    pub fn new(items: Vec<TrainItem>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(contract("train split is empty"));
        };
        let [_, h, w] = *first.height.shape() else { unreachable!() };
        for item in &items {
            if item.height.shape() != [1, h, w] || item.image.shape() != [3, h, w] {
                return Err(contract(format_args!("item {} has inconsistent dims", item.id)));
            }
        }
        Ok(TrainSet { items, width: w, height: h })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Stack per-item tensors into one [b, c, h, w] batch.
pub fn stack_batch(tensors: &[&Tensor<f32>]) -> Tensor<f32> {
    let shape = tensors[0].shape();
    let mut out_shape = Vec::with_capacity(shape.len() + 1);
    out_shape.push(tensors.len());
    out_shape.extend_from_slice(shape);
    let mut data = Vec::with_capacity(tensors.len() * tensors[0].numel());
    for t in tensors {
        data.extend_from_slice(t.data());
    }
    Tensor::new(&out_shape, data).expect("stacked shapes are consistent")
}

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    /// One loss value per step.
    pub losses: Vec<f64>,
}

impl TrainLog {
    /// Mean loss over the first / last `k` steps, for decrease checks.
    pub fn head_tail_mean(&self, k: usize) -> (f64, f64) {
        let k = k.min(self.losses.len()).max(1);
        let head = self.losses[..k].iter().sum::<f64>() / k as f64;
        let tail = self.losses[self.losses.len() - k..].iter().sum::<f64>() / k as f64;
        (head, tail)
    }
}

/// Minibatch loop shared by the flow and diffusion trainers.
///
/// `build_step` assembles the loss graph for the drawn batch; the loop then
/// backpropagates, applies one adam update, and repeats. All randomness
/// comes from streams of `opts.seed`, so training is bit-deterministic.
pub fn run_training<F>(
    net: &mut CondNet<f32>,
    data: &TrainSet,
    opts: &TrainOpts,
    learning_rate: f64,
    mut build_step: F,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainLog>
where
    F: FnMut(&CondNet<f32>, &mut Graph<f32>, &[&TrainItem], &mut Rng) -> Result<(NodeId, BoundForward)>,
{
    if data.is_empty() {
        return Err(contract("train split is empty"));
    }
    if opts.batch_size == 0 || opts.steps == 0 {
        return Err(contract("batch size and steps must be positive"));
    }
    let mut batch_rng = Rng::stream(opts.seed, 0xBA7C4);
    let mut draw_rng = Rng::stream(opts.seed, 0xD0A3);
    let mut state = OptimizerState::new(&net.param_shapes(), learning_rate);
    let mut losses = Vec::with_capacity(opts.steps);

    for step in 0..opts.steps {
        let items: Vec<&TrainItem> =
            (0..opts.batch_size).map(|_| &data.items[batch_rng.below(data.len())]).collect();
        let mut g = Graph::new();
        let (loss_id, bound) = build_step(net, &mut g, &items, &mut draw_rng)?;
        let loss = g.value(loss_id).data()[0] as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "training-loss", index: step });
        }
        if loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step, loss_bits: loss.to_bits() });
        }
        let grads = g.backward(loss_id)?;
        let grad_tensors: Vec<Tensor<f32>> = bound
            .param_nodes
            .iter()
            .zip(net.param_shapes())
            .map(|(&id, shape)| grads.get_or_zeros(id, &shape))
            .collect();
        adam_step(net.param_tensors_mut(), &grad_tensors, &mut state)?;
        losses.push(loss);
        progress(step, loss);
    }
    Ok(TrainLog { losses })
}
