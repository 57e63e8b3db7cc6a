//! Rectified flow matching: linear interpolant, straight-line velocity
//! target, squared-residual loss, and forward-Euler ODE sampling.

use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::heightmap::HeightMap;
use crate::nn::{BoundForward, CondNet};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::{run_training, stack_batch, TrainItem, TrainLog, TrainOpts, TrainSet};
use crate::{contract, Result};

/// How the source distribution p0 is coupled to the height-map target p1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// x0 ~ standard normal; RGB enters only as the condition.
    NoiseToTarget,
    /// x0 = grayscale proxy of the image plus sigma_aug * normal, the
    /// "path between any two distributions" variant.
    ImageToTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub coupling: Coupling,
    pub ode_steps: usize,
    /// Smoothing noise for the image-to-target source; ignored otherwise.
    pub sigma_aug: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            coupling: Coupling::NoiseToTarget,
            ode_steps: 50,
            sigma_aug: 0.05,
            width: 32,
            height: 32,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ode_steps == 0 {
            return Err(contract("ode_steps must be >= 1"));
        }
        if self.sigma_aug < 0.0 {
            return Err(contract("sigma_aug must be >= 0"));
        }
        Ok(())
    }
}

/// Linear interpolant x_t = (1-t) x0 + t x1 and its straight-line velocity
/// u = x1 - x0 (independent of t).
pub fn fm_interpolate<T: Real>(
    x0: &Tensor<T>,
    x1: &Tensor<T>,
    t: f64,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if !x0.same_shape(x1) {
        return Err(contract(format_args!(
            "fm_interpolate: {:?} vs {:?}",
            x0.shape(),
            x1.shape()
        )));
    }
    if t == 0.0 {
        return Ok((x0.clone(), velocity(x0, x1)));
    }
    if t == 1.0 {
        return Ok((x1.clone(), velocity(x0, x1)));
    }
    let tv = T::from_f64(t);
    let one_minus = T::ONE - tv;
    let data = x0
        .data()
        .iter()
        .zip(x1.data())
        .map(|(&a, &b)| one_minus * a + tv * b)
        .collect();
    Ok((Tensor::new(x0.shape(), data)?, velocity(x0, x1)))
}

fn velocity<T: Real>(x0: &Tensor<T>, x1: &Tensor<T>) -> Tensor<T> {
    let data = x1.data().iter().zip(x0.data()).map(|(&b, &a)| b - a).collect();
    Tensor::new(x0.shape(), data).expect("same shape")
}

/// One training batch: interpolated states, velocity targets, conditions,
/// and the per-sample times (drawn i.i.d. per sample).
#[derive(Debug, Clone)]
pub struct FlowBatch {
    pub x_t: Tensor<f32>,
    pub target: Tensor<f32>,
    pub cond: Tensor<f32>,
    pub t: Vec<f64>,
}

/// Draw the coupling's source sample for one item.
fn draw_x0(item: &TrainItem, coupling: Coupling, sigma_aug: f64, rng: &mut Rng) -> Tensor<f32> {
    match coupling {
        Coupling::NoiseToTarget => Tensor::randn(item.height.shape(), 1.0, rng),
        Coupling::ImageToTarget => {
            // luminance of the planar image plus smoothing noise
            let [_, h, w] = *item.image.shape() else { unreachable!() };
            let px = h * w;
            let img = item.image.data();
            let mut data = Vec::with_capacity(px);
            for i in 0..px {
                let lum = 0.299 * img[i] + 0.587 * img[px + i] + 0.114 * img[2 * px + i];
                data.push(lum + (rng.normal() * sigma_aug) as f32);
            }
            Tensor::new(&[1, h, w], data).expect("proxy shape")
        }
    }
}

pub fn flow_batch(
    items: &[&TrainItem],
    config: &FlowConfig,
    rng: &mut Rng,
) -> Result<FlowBatch> {
    let mut xts = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    let mut ts = Vec::with_capacity(items.len());
    for item in items {
        let t = rng.uniform();
        let x0 = draw_x0(item, config.coupling, config.sigma_aug, rng);
        let (x_t, u) = fm_interpolate(&x0, &item.height, t)?;
        xts.push(x_t);
        targets.push(u);
        ts.push(t);
    }
    let conds: Vec<&Tensor<f32>> = items.iter().map(|i| &i.image).collect();
    Ok(FlowBatch {
        x_t: stack_batch(&xts.iter().collect::<Vec<_>>()),
        target: stack_batch(&targets.iter().collect::<Vec<_>>()),
        cond: stack_batch(&conds),
        t: ts,
    })
}

/// Mean over batch and pixels of the squared velocity residual.
pub fn fm_loss_with_net(
    net: &CondNet<f32>,
    g: &mut Graph<f32>,
    batch: &FlowBatch,
    train: bool,
) -> Result<(NodeId, BoundForward)> {
    let bound = net.forward(g, batch.x_t.clone(), batch.cond.clone(), &batch.t, train)?;
    let target = g.input(batch.target.clone(), false);
    let loss = g.mse(bound.out, target)?;
    Ok((loss, bound))
}

/// Pure form of the loss for oracle checks: mean |target - v|^2.
pub fn fm_residual_loss(target: &Tensor<f32>, v: &Tensor<f32>) -> Result<f64> {
    if !target.same_shape(v) {
        return Err(contract("fm_residual_loss: shape mismatch"));
    }
    let n = target.numel() as f64;
    Ok(target
        .data()
        .iter()
        .zip(v.data())
        .map(|(&u, &p)| ((u - p) as f64) * ((u - p) as f64))
        .sum::<f64>()
        / n)
}

pub fn train_flow(
    net: &mut CondNet<f32>,
    data: &TrainSet,
    config: &FlowConfig,
    opts: &TrainOpts,
    progress: impl FnMut(usize, f64),
) -> Result<TrainLog> {
    config.validate()?;
    run_training(
        net,
        data,
        opts,
        opts.learning_rate,
        |net, g, items, rng| {
            let batch = flow_batch(items, config, rng)?;
            fm_loss_with_net(net, g, &batch, true)
        },
        progress,
    )
}

/// Forward Euler over a stub or learned field:
/// x_{k+1} = x_k + (1/n) f(k/n, x_k).
pub fn euler_integrate<T: Real, F>(x0: Tensor<T>, steps: usize, mut field: F) -> Result<Tensor<T>>
where
    F: FnMut(f64, &Tensor<T>) -> Result<Tensor<T>>,
{
    if steps == 0 {
        return Err(contract("euler: steps must be >= 1"));
    }
    let dt = T::from_f64(1.0 / steps as f64);
    let mut x = x0;
    for k in 0..steps {
        let v = field(k as f64 / steps as f64, &x)?;
        if !x.same_shape(&v) {
            return Err(contract("euler: field output shape mismatch"));
        }
        let data = x.data().iter().zip(v.data()).map(|(&a, &b)| a + dt * b).collect();
        x = Tensor::new(x.shape(), data)?;
    }
    Ok(x)
}

/// Integrate the learned field from the coupling's source draw and clamp
/// into [0, 1]. Pure given (net, condition, seed).
pub fn sample_flow(
    net: &CondNet<f32>,
    condition: &Tensor<f32>,
    config: &FlowConfig,
    seed: u64,
) -> Result<HeightMap> {
    config.validate()?;
    let [c, h, w] = *condition.shape() else {
        return Err(contract(format_args!("condition must be [3, h, w], got {:?}", condition.shape())));
    };
    if c != net.config.cond_channels || (w, h) != (config.width, config.height) {
        return Err(contract(format_args!(
            "condition {c}x{h}x{w} does not match config {}x{}",
            config.height, config.width
        )));
    }
    let mut rng = Rng::stream(seed, 0xF10E);
    let item = TrainItem {
        id: alloc::string::String::new(),
        image: condition.clone(),
        height: Tensor::zeros(&[1, h, w]),
    };
    let x0 = draw_x0(&item, config.coupling, config.sigma_aug, &mut rng)
        .reshape(&[1, 1, h, w])?;
    let cond = condition.reshape(&[1, c, h, w])?;
    let out = euler_integrate(x0, config.ode_steps, |t, x| {
        let mut g = Graph::new();
        let bound = net.forward(&mut g, x.clone(), cond.clone(), &[t], false)?;
        Ok(g.value(bound.out).clone())
    })?;
    let values: Vec<f32> = out.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    HeightMap::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn interpolation_endpoints_exact() {
        let mut rng = Rng::new(2);
        let x0 = Tensor::<f32>::randn(&[1, 4, 4], 1.0, &mut rng);
        let x1 = Tensor::<f32>::randn(&[1, 4, 4], 1.0, &mut rng);
        let (at0, u0) = fm_interpolate(&x0, &x1, 0.0).unwrap();
        let (at1, u1) = fm_interpolate(&x0, &x1, 1.0).unwrap();
        assert_eq!(at0, x0);
        assert_eq!(at1, x1);
        // velocity independent of t
        assert_eq!(u0, u1);
    }

    #[test]
    fn interpolation_scalar_case() {
        let x0 = Tensor::<f32>::scalar(0.0);
        let x1 = Tensor::<f32>::scalar(4.0);
        let (xt, u) = fm_interpolate(&x0, &x1, 0.25).unwrap();
        assert_eq!(xt.data()[0], 1.0);
        assert_eq!(u.data()[0], 4.0);
    }

    #[test]
    fn interpolation_shape_mismatch() {
        let x0 = Tensor::<f32>::zeros(&[2]);
        let x1 = Tensor::<f32>::zeros(&[3]);
        assert!(fm_interpolate(&x0, &x1, 0.5).is_err());
    }

    #[test]
    fn residual_loss_oracle_values() {
        // oracle net v == target -> 0; v == 0 -> mean |target|^2; scalar case
        let u = Tensor::<f32>::new(&[2], vec![1.0, 3.0]).unwrap();
        assert_eq!(fm_residual_loss(&u, &u).unwrap(), 0.0);
        let zero = Tensor::zeros(&[2]);
        assert_eq!(fm_residual_loss(&u, &zero).unwrap(), 5.0);
        let half = Tensor::<f32>::scalar(0.5);
        let one = Tensor::<f32>::scalar(1.0);
        assert!((fm_residual_loss(&one, &half).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn euler_exact_on_constant_field() {
        let x0 = Tensor::<f64>::new(&[3], vec![0.0, 1.0, -2.0]).unwrap();
        let c = Tensor::<f64>::new(&[3], vec![2.0, 2.0, 2.0]).unwrap();
        for steps in [1, 7, 50] {
            let out = euler_integrate(x0.clone(), steps, |_, _| Ok(c.clone())).unwrap();
            for (o, x) in out.data().iter().zip(x0.data()) {
                assert!((o - (x + 2.0)).abs() < 1e-12, "steps {steps}");
            }
        }
    }

    #[test]
    fn euler_linear_field_converges_to_e() {
        // dx/dt = x: single step doubles, n -> inf approaches e * x0
        let x0 = Tensor::<f64>::scalar(1.0);
        let one_step = euler_integrate(x0.clone(), 1, |_, x| Ok(x.clone())).unwrap();
        assert!((one_step.data()[0] - 2.0).abs() < 1e-12);
        let fine = euler_integrate(x0, 1000, |_, x| Ok(x.clone())).unwrap();
        let rel = (fine.data()[0] - core::f64::consts::E).abs() / core::f64::consts::E;
        assert!(rel < 0.002, "rel err {rel}");
    }

    #[test]
    fn euler_first_order_decay() {
        // halving ratio of the error vs exact e as n doubles stays near 1/2
        let exact = core::f64::consts::E;
        let mut errs = Vec::new();
        for &n in &[10usize, 20, 40, 80] {
            let out = euler_integrate(Tensor::<f64>::scalar(1.0), n, |_, x| Ok(x.clone())).unwrap();
            errs.push((out.data()[0] - exact).abs());
        }
        for pair in errs.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
        }
    }
}
