//! Pixel-space DDPM: linear variance schedule, closed-form forward noising,
//! noise-prediction loss, ancestral reverse sampling.

use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::heightmap::HeightMap;
use crate::nn::{BoundForward, CondNet};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::{run_training, stack_batch, TrainItem, TrainLog, TrainOpts, TrainSet};
use crate::{contract, Result};

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_BETA_START: f64 = 1e-4;
/// End of the linear beta ramp. At T = 200 this puts alpha_bar_T below 0.02,
/// so the forward process actually terminates near pure noise; the classic
/// 0.02 end value only does that at T = 1000.
pub const DEFAULT_BETA_END: f64 = 0.04;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// 1-based accessors matching the usual t = 1..=T indexing.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }
}

/// Linear beta schedule: beta_t = start + (t-1)/(T-1) * (end - start),
/// with alpha_t = 1 - beta_t and alpha_bar_t the running product.
pub fn make_schedule(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_steps == 0 {
        return Err(contract("schedule needs T >= 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(contract(format_args!(
            "schedule needs 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
        )));
    }
    let mut betas = Vec::with_capacity(t_steps);
    for t in 0..t_steps {
        let frac = if t_steps == 1 { 0.0 } else { t as f64 / (t_steps - 1) as f64 };
        betas.push(beta_start + frac * (beta_end - beta_start));
    }
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_steps);
    let mut prod = 1.0;
    for &a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule { betas, alphas, alpha_bars })
}

pub fn default_schedule() -> NoiseSchedule {
    make_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("defaults are valid")
}

/// Closed-form forward sample z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
/// `t` is 1-based.
pub fn q_sample<T: Real>(
    z0: &Tensor<T>,
    t: usize,
    eps: &Tensor<T>,
    schedule: &NoiseSchedule,
) -> Result<Tensor<T>> {
    if t == 0 || t > schedule.len() {
        return Err(contract(format_args!("t = {t} outside 1..={}", schedule.len())));
    }
    if !z0.same_shape(eps) {
        return Err(contract("q_sample: eps shape mismatch"));
    }
    let ab = schedule.alpha_bar(t);
    let sa = T::from_f64(libm::sqrt(ab));
    let sn = T::from_f64(libm::sqrt(1.0 - ab));
    let data = z0.data().iter().zip(eps.data()).map(|(&z, &e)| sa * z + sn * e).collect();
    Tensor::new(z0.shape(), data)
}

/// Forward process step by step: z_s = sqrt(alpha_s) z_{s-1} + sqrt(beta_s) e_s.
/// Distributionally equal to `q_sample` at t; used as its oracle.
pub fn q_sample_sequential<T: Real>(
    z0: &Tensor<T>,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    if t == 0 || t > schedule.len() {
        return Err(contract(format_args!("t = {t} outside 1..={}", schedule.len())));
    }
    let mut z = z0.clone();
    for s in 1..=t {
        let sa = T::from_f64(libm::sqrt(schedule.alpha(s)));
        let sb = T::from_f64(libm::sqrt(schedule.beta(s)));
        let data = z.data().iter().map(|&v| sa * v + sb * T::from_f64(rng.normal())).collect();
        z = Tensor::new(z.shape(), data)?;
    }
    Ok(z)
}

/// One training batch: noised latents, the injected noise as target,
/// conditions, and normalized times t/T for the embedding.
#[derive(Debug, Clone)]
pub struct DdpmBatch {
    pub z_t: Tensor<f32>,
    pub eps: Tensor<f32>,
    pub cond: Tensor<f32>,
    pub t_norm: Vec<f64>,
}

/// Heights live in [0, 1]; diffusion trains in [-1, 1] to match unit noise.
pub fn to_signed(height: &Tensor<f32>) -> Tensor<f32> {
    height.map(|v| v * 2.0 - 1.0)
}

pub fn from_signed(v: f32) -> f32 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn ddpm_batch(
    items: &[&TrainItem],
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<DdpmBatch> {
    let total = schedule.len();
    let mut zts = Vec::with_capacity(items.len());
    let mut epss = Vec::with_capacity(items.len());
    let mut ts = Vec::with_capacity(items.len());
    for item in items {
        let t = rng.below(total) + 1;
        let z0 = to_signed(&item.height);
        let eps = Tensor::randn(z0.shape(), 1.0, rng);
        zts.push(q_sample(&z0, t, &eps, schedule)?);
        epss.push(eps);
        ts.push(t as f64 / total as f64);
    }
    let conds: Vec<&Tensor<f32>> = items.iter().map(|i| &i.image).collect();
    Ok(DdpmBatch {
        z_t: stack_batch(&zts.iter().collect::<Vec<_>>()),
        eps: stack_batch(&epss.iter().collect::<Vec<_>>()),
        cond: stack_batch(&conds),
        t_norm: ts,
    })
}

/// Mean squared error between predicted and injected noise.
pub fn ddpm_loss_with_net(
    net: &CondNet<f32>,
    g: &mut Graph<f32>,
    batch: &DdpmBatch,
    train: bool,
) -> Result<(NodeId, BoundForward)> {
    let bound = net.forward(g, batch.z_t.clone(), batch.cond.clone(), &batch.t_norm, train)?;
    let target = g.input(batch.eps.clone(), false);
    let loss = g.mse(bound.out, target)?;
    Ok((loss, bound))
}

pub fn train_ddpm(
    net: &mut CondNet<f32>,
    data: &TrainSet,
    schedule: &NoiseSchedule,
    opts: &TrainOpts,
    progress: impl FnMut(usize, f64),
) -> Result<TrainLog> {
    run_training(
        net,
        data,
        opts,
        opts.learning_rate,
        |net, g, items, rng| {
            let batch = ddpm_batch(items, schedule, rng)?;
            ddpm_loss_with_net(net, g, &batch, true)
        },
        progress,
    )
}

/// Ancestral reverse walk with an arbitrary noise predictor, for tests that
/// inject oracle predictors. z starts at z_T and is denoised to z_0 (still
/// in signed [-1, 1] space).
pub fn ddpm_reverse<F>(
    z_init: Tensor<f32>,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
    mut predict_eps: F,
) -> Result<Tensor<f32>>
where
    F: FnMut(&Tensor<f32>, usize) -> Result<Tensor<f32>>,
{
    let mut z = z_init;
    for t in (1..=schedule.len()).rev() {
        let eps_hat = predict_eps(&z, t)?;
        if !z.same_shape(&eps_hat) {
            return Err(contract("ddpm_reverse: predictor shape mismatch"));
        }
        let beta = schedule.beta(t);
        let inv_sqrt_alpha = (1.0 / libm::sqrt(schedule.alpha(t))) as f32;
        let eps_coef = (beta / libm::sqrt(1.0 - schedule.alpha_bar(t))) as f32;
        let sigma = libm::sqrt(beta) as f32;
        let mut data: Vec<f32> = z
            .data()
            .iter()
            .zip(eps_hat.data())
            .map(|(&zv, &ev)| inv_sqrt_alpha * (zv - eps_coef * ev))
            .collect();
        if t > 1 {
            for v in &mut data {
                *v += sigma * rng.normal() as f32;
            }
        }
        z = Tensor::new(z.shape(), data)?;
        if let Some(index) = z.first_non_finite() {
            return Err(crate::Error::NonFinite { op: "ddpm-reverse", index });
        }
    }
    Ok(z)
}

/// Sample a height map for one condition. Pure given (net, condition, seed).
pub fn sample_ddpm(
    net: &CondNet<f32>,
    condition: &Tensor<f32>,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<HeightMap> {
    let [c, h, w] = *condition.shape() else {
        return Err(contract(format_args!("condition must be [3, h, w], got {:?}", condition.shape())));
    };
    if c != net.config.cond_channels {
        return Err(contract("condition channels do not match net config"));
    }
    let mut rng = Rng::stream(seed, 0xDD01);
    let cond = condition.reshape(&[1, c, h, w])?;
    let total = schedule.len();
    let z_init = Tensor::randn(&[1, 1, h, w], 1.0, &mut rng);
    let z0 = ddpm_reverse(z_init, schedule, &mut rng, |z, t| {
        let mut g = Graph::new();
        let bound = net.forward(&mut g, z.clone(), cond.clone(), &[t as f64 / total as f64], false)?;
        Ok(g.value(bound.out).clone())
    })?;
    let values: Vec<f32> = z0.data().iter().map(|&v| from_signed(v)).collect();
    HeightMap::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn schedule_small_cases() {
        let s1 = make_schedule(1, 0.1, 0.2).unwrap();
        assert_eq!(s1.betas, vec![0.1]);
        assert!((s1.alpha_bars[0] - 0.9).abs() < 1e-15);

        let s2 = make_schedule(2, 0.1, 0.2).unwrap();
        assert_eq!(s2.betas, vec![0.1, 0.2]);
        assert!((s2.alpha_bars[0] - 0.9).abs() < 1e-15);
        assert!((s2.alpha_bars[1] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn default_schedule_tail_is_heavily_noised() {
        let s = default_schedule();
        assert_eq!(s.len(), 200);
        // direct product evaluation: abar_200 well below 0.02
        let direct: f64 = s.alphas.iter().product();
        assert!((direct - s.alpha_bar(200)).abs() < 1e-15);
        assert!(s.alpha_bar(200) < 0.02, "abar_200 = {}", s.alpha_bar(200));
    }

    #[test]
    fn schedule_monotonicity() {
        let s = default_schedule();
        for t in 2..=s.len() {
            assert!(s.beta(t) >= s.beta(t - 1));
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!(s.alpha_bar(s.len()) < s.alpha_bar(1));
    }

    #[test]
    fn schedule_rejects_bad_params() {
        assert!(make_schedule(0, 0.1, 0.2).is_err());
        assert!(make_schedule(10, 0.0, 0.2).is_err());
        assert!(make_schedule(10, 0.3, 0.2).is_err());
        assert!(make_schedule(10, 0.5, 1.0).is_err());
    }

    #[test]
    fn q_sample_mean_and_scaling() {
        let s = make_schedule(10, 0.1, 0.2).unwrap();
        let z0 = Tensor::<f64>::new(&[3], vec![1.0, -1.0, 0.5]).unwrap();
        let zero = Tensor::zeros(&[3]);
        // eps = 0 -> z_t = sqrt(abar) z0
        let zt = q_sample(&z0, 4, &zero, &s).unwrap();
        let sa = libm::sqrt(s.alpha_bar(4));
        for (a, b) in zt.data().iter().zip(z0.data()) {
            assert!((a - sa * b).abs() < 1e-15);
        }
        // eps-scaling identity: q(z0,t,a*eps) - q(z0,t,0) = a*sqrt(1-abar)*eps
        let mut rng = Rng::new(4);
        let eps = Tensor::<f64>::randn(&[3], 1.0, &mut rng);
        for &a in &[0.5, 2.0, -3.0] {
            let scaled = eps.map(|v| v * a);
            let with = q_sample(&z0, 7, &scaled, &s).unwrap();
            let without = q_sample(&z0, 7, &zero, &s).unwrap();
            let sn = libm::sqrt(1.0 - s.alpha_bar(7));
            for i in 0..3 {
                let diff = with.data()[i] - without.data()[i];
                assert!((diff - a * sn * eps.data()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn q_sample_rejects_bad_t() {
        let s = make_schedule(5, 0.1, 0.2).unwrap();
        let z = Tensor::<f64>::zeros(&[2]);
        assert!(q_sample(&z, 0, &z, &s).is_err());
        assert!(q_sample(&z, 6, &z, &s).is_err());
    }

    #[test]
    fn single_step_oracle_inversion() {
        // T=1, eps predictor returns the true eps: reverse recovers z0 exactly
        let s = make_schedule(1, 0.05, 0.05).unwrap();
        let mut rng = Rng::new(9);
        let z0 = Tensor::<f32>::randn(&[1, 1, 4, 4], 1.0, &mut rng);
        let eps = Tensor::<f32>::randn(&[1, 1, 4, 4], 1.0, &mut rng);
        let z1 = q_sample(&z0, 1, &eps, &s).unwrap();
        let rec = ddpm_reverse(z1, &s, &mut rng, |_, _| Ok(eps.clone())).unwrap();
        for (a, b) in rec.data().iter().zip(z0.data()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_predictor_stays_bounded() {
        let s = default_schedule();
        let mut rng = Rng::new(11);
        let z_init = Tensor::<f32>::randn(&[1, 1, 4, 4], 1.0, &mut rng);
        let out = ddpm_reverse(z_init, &s, &mut rng, |_, _| Ok(Tensor::zeros(&[1, 1, 4, 4]))).unwrap();
        assert!(out.first_non_finite().is_none());
        for &v in out.data() {
            let mapped = from_signed(v);
            assert!((0.0..=1.0).contains(&mapped));
        }
    }

    #[test]
    fn reverse_deterministic_given_seed() {
        let s = make_schedule(20, 1e-4, 0.02).unwrap();
        let run = || {
            let mut rng = Rng::stream(77, 1);
            let z = Tensor::<f32>::randn(&[1, 1, 4, 4], 1.0, &mut rng);
            ddpm_reverse(z, &s, &mut rng, |z, _| Ok(z.map(|v| v * 0.1))).unwrap()
        };
        assert_eq!(run(), run());
    }
}
