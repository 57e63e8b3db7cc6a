//! Finite-difference validation of analytic gradients.
//!
//! Central differences with step h = 1e-5, always in f64; f32 finite
//! differences are too noisy to say anything.

use alloc::vec::Vec;

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use crate::{contract, Result};

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (tensor index, element index) of the worst coordinate.
    pub worst: (usize, usize),
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Relative error with a floored denominator: gradients above the floor are
/// compared relatively; smaller ones are held to |a - fd| <= floor * tol,
/// which still sits three orders of magnitude above central-difference noise.
pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / (analytic.abs().max(fd.abs())).max(1e-4)
}

/// Check the analytic gradient of a scalar-valued graph against central
/// finite differences.
///
/// `build` must construct the graph from the given leaf nodes and return the
/// scalar output node. `max_coords_per_tensor` limits how many coordinates
/// of each leaf are probed (evenly spaced, deterministic); `None` probes all.
pub fn grad_check<F>(
    build: F,
    leaves: &[Tensor<f64>],
    max_coords_per_tensor: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.input(t.clone(), false)).collect();
        let out = build(&mut g, &ids)?;
        if g.value(out).numel() != 1 {
            return Err(contract("grad_check: graph output must be scalar"));
        }
        Ok(g.value(out).data()[0])
    };

    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.input(t.clone(), true)).collect();
    let out = build(&mut g, &ids)?;
    if g.value(out).numel() != 1 {
        return Err(contract("grad_check: graph output must be scalar"));
    }
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = ids
        .iter()
        .zip(leaves)
        .map(|(&id, leaf)| grads.get_or_zeros(id, leaf.shape()))
        .collect();

    let mut work: Vec<Tensor<f64>> = leaves.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), coords_checked: 0 };

    for ti in 0..leaves.len() {
        let n = leaves[ti].numel();
        let coords: Vec<usize> = match max_coords_per_tensor {
            Some(k) if k < n => {
                // Evenly spaced coverage of the tensor.
                let stride = n as f64 / k as f64;
                (0..k).map(|i| (i as f64 * stride) as usize).collect()
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let orig = work[ti].data()[j];
            work[ti].data_mut()[j] = orig + FD_STEP;
            let f_plus = eval(&work)?;
            work[ti].data_mut()[j] = orig - FD_STEP;
            let f_minus = eval(&work)?;
            work[ti].data_mut()[j] = orig;

            let fd = (f_plus - f_minus) / (2.0 * FD_STEP);
            let a = analytic[ti].data()[j];
            let e = rel_err(a, fd);
            report.coords_checked += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = (ti, j);
            }
        }
    }
    Ok(report)
}

/// One entry of the op-level FD suite.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

/// FD-check every graph op on `trials` random 64-bit inputs each.
/// All leaves of every op participate; tolerance for this suite is 1e-4.
pub fn op_suite(trials: usize, seed: u64) -> Result<alloc::vec::Vec<SuiteEntry>> {
    use crate::rng::Rng;
    let mut rng = Rng::stream(seed, 0x0B5);
    let mut entries: alloc::vec::Vec<SuiteEntry> = alloc::vec::Vec::new();

    let run = |entries: &mut alloc::vec::Vec<SuiteEntry>,
                   name: &'static str,
                   leaves: alloc::vec::Vec<Tensor<f64>>,
                   build: &dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>|
     -> Result<()> {
        let report = grad_check(build, &leaves, None)?;
        match entries.iter_mut().find(|e| e.name == name) {
            Some(e) if e.report.max_rel_err < report.max_rel_err => e.report = report,
            Some(_) => {}
            None => entries.push(SuiteEntry { name, report }),
        }
        Ok(())
    };

    for _ in 0..trials {
        let a = Tensor::randn(&[2, 8, 4, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[2, 8, 4, 4], 1.0, &mut rng);
        run(&mut entries, "add", alloc::vec![a.clone(), b.clone()], &|g, ids| {
            let y = g.add(ids[0], ids[1])?;
            g.sum(y)
        })?;
        run(&mut entries, "sub", alloc::vec![a.clone(), b.clone()], &|g, ids| {
            let y = g.sub(ids[0], ids[1])?;
            g.sum(y)
        })?;
        // weight the summed output so mul grads are not symmetric
        run(&mut entries, "mul", alloc::vec![a.clone(), b.clone()], &|g, ids| {
            let y = g.mul(ids[0], ids[1])?;
            let y = g.silu(y)?;
            g.sum(y)
        })?;
        run(&mut entries, "scalar-mul", alloc::vec![a.clone()], &|g, ids| {
            let y = g.scalar_mul(ids[0], -1.7)?;
            let y = g.silu(y)?;
            g.sum(y)
        })?;
        run(&mut entries, "silu", alloc::vec![a.clone()], &|g, ids| {
            let y = g.silu(ids[0])?;
            g.sum(y)
        })?;
        run(&mut entries, "nearest-upsample2x", alloc::vec![a.clone()], &|g, ids| {
            let y = g.upsample2x(ids[0])?;
            let y = g.silu(y)?;
            g.sum(y)
        })?;
        run(&mut entries, "channel-concat", alloc::vec![a.clone(), b.clone()], &|g, ids| {
            let y = g.concat_c(ids[0], ids[1])?;
            let y = g.silu(y)?;
            g.sum(y)
        })?;
        run(&mut entries, "mse", alloc::vec![a.clone(), b.clone()], &|g, ids| {
            g.mse(ids[0], ids[1])
        })?;
        run(&mut entries, "sum", alloc::vec![a.clone()], &|g, ids| g.sum(ids[0]))?;

        let m = Tensor::randn(&[3, 5], 1.0, &mut rng);
        let n = Tensor::randn(&[5, 4], 1.0, &mut rng);
        run(&mut entries, "matmul", alloc::vec![m, n], &|g, ids| {
            let y = g.matmul(ids[0], ids[1])?;
            let y = g.silu(y)?;
            g.sum(y)
        })?;

        let x = Tensor::randn(&[2, 3, 5, 5], 1.0, &mut rng);
        let w = Tensor::randn(&[4, 3, 3, 3], 0.5, &mut rng);
        let bias = Tensor::randn(&[4], 0.5, &mut rng);
        run(
            &mut entries,
            "conv3x3-stride1",
            alloc::vec![x.clone(), w.clone(), bias.clone()],
            &|g, ids| {
                let y = g.conv3x3(ids[0], ids[1], ids[2], 1)?;
                let y = g.silu(y)?;
                g.sum(y)
            },
        )?;
        run(&mut entries, "conv3x3-stride2", alloc::vec![x, w, bias], &|g, ids| {
            let y = g.conv3x3(ids[0], ids[1], ids[2], 2)?;
            let y = g.silu(y)?;
            g.sum(y)
        })?;

        let gamma = Tensor::randn(&[8], 0.3, &mut rng).map(|v| v + 1.0);
        let beta = Tensor::randn(&[8], 0.3, &mut rng);
        run(
            &mut entries,
            "group-norm",
            alloc::vec![a.clone(), gamma, beta],
            &|g, ids| {
                let y = g.group_norm(ids[0], ids[1], ids[2], 8)?;
                let y = g.silu(y)?;
                g.sum(y)
            },
        )?;

        let v1 = Tensor::randn(&[8], 1.0, &mut rng);
        let v2 = Tensor::randn(&[2, 8], 1.0, &mut rng);
        run(
            &mut entries,
            "broadcast-add-channelwise",
            alloc::vec![a.clone(), v1.clone()],
            &|g, ids| {
                let y = g.add_chan(ids[0], ids[1])?;
                let y = g.silu(y)?;
                g.sum(y)
            },
        )?;
        run(
            &mut entries,
            "broadcast-mul-channelwise",
            alloc::vec![a.clone(), v2],
            &|g, ids| {
                let y = g.mul_chan(ids[0], ids[1])?;
                let y = g.silu(y)?;
                g.sum(y)
            },
        )?;
    }
    Ok(entries)
}

/// FD-check a full conditional net loss in f64: every parameter plus the
/// noisy input is a leaf, `max_coords` probes per tensor. Tolerance 1e-3.
pub fn condnet_suite(max_coords: usize, seed: u64) -> Result<GradCheckReport> {
    use crate::nn::{CondNet, CondNetConfig};
    use crate::rng::Rng;

    let config = CondNetConfig {
        base_width: 8,
        depth: 1,
        time_embed_dim: 8,
        ..CondNetConfig::default()
    };
    // random tails: zero-init would block gradient flow upstream
    let net = CondNet::<f64>::init(config, seed, false)?;
    let mut rng = Rng::stream(seed, 0xC04D);
    let x = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
    let cond = Tensor::randn(&[1, 3, 8, 8], 1.0, &mut rng);
    let target = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
    let t = [0.37];

    let mut leaves: alloc::vec::Vec<Tensor<f64>> = net.param_tensors().to_vec();
    leaves.push(x);
    let n_params = net.param_tensors().len();

    grad_check(
        |g, ids| {
            let cond_id = g.input(cond.clone(), false);
            let out = net.forward_with_params(g, &ids[..n_params], ids[n_params], cond_id, &t)?;
            let tgt = g.input(target.clone(), false);
            g.mse(out, tgt)
        },
        &leaves,
        Some(max_coords),
    )
}

/// FD-check a plain 3-layer conv chain with an MSE head on an 8x8 input.
pub fn conv_chain_suite(seed: u64) -> Result<GradCheckReport> {
    use crate::rng::Rng;
    let mut rng = Rng::stream(seed, 0xC3);
    let x = Tensor::randn(&[1, 3, 8, 8], 1.0, &mut rng);
    let w1 = Tensor::randn(&[8, 3, 3, 3], 0.3, &mut rng);
    let b1 = Tensor::randn(&[8], 0.1, &mut rng);
    let w2 = Tensor::randn(&[8, 8, 3, 3], 0.2, &mut rng);
    let b2 = Tensor::randn(&[8], 0.1, &mut rng);
    let w3 = Tensor::randn(&[1, 8, 3, 3], 0.3, &mut rng);
    let b3 = Tensor::randn(&[1], 0.1, &mut rng);
    let target = Tensor::randn(&[1, 1, 8, 8], 1.0, &mut rng);
    let leaves = alloc::vec![x, w1, b1, w2, b2, w3, b3];
    grad_check(
        |g, ids| {
            let h = g.conv3x3(ids[0], ids[1], ids[2], 1)?;
            let h = g.silu(h)?;
            let h = g.conv3x3(h, ids[3], ids[4], 1)?;
            let h = g.silu(h)?;
            let h = g.conv3x3(h, ids[5], ids[6], 1)?;
            let tgt = g.input(target.clone(), false);
            g.mse(h, tgt)
        },
        &leaves,
        None,
    )
}
