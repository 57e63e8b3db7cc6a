//! Define-by-run reverse-mode autodiff.
//!
//! A `Graph` is built per forward pass; `backward` replays it in reverse
//! computing vector-Jacobian products. Node order is creation order, which
//! is already topological. Every forward and backward buffer is checked for
//! NaN/Inf; a non-finite value is a hard error naming the op and index.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernels;
use crate::real::Real;
use crate::tensor::Tensor;
use crate::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T: Real> {
    Input,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, T),
    Matmul(NodeId, NodeId),
    Conv3x3 { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    Upsample2x(NodeId),
    Silu(NodeId),
    GroupNorm { x: NodeId, gamma: NodeId, beta: NodeId, groups: usize, mean: Vec<T>, inv_std: Vec<T> },
    ConcatC(NodeId, NodeId),
    Mse(NodeId, NodeId),
    Sum(NodeId),
    /// Broadcast add over channels: value shape [c] or [n, c].
    AddChan(NodeId, NodeId),
    /// Broadcast multiply over channels: value shape [c] or [n, c].
    MulChan(NodeId, NodeId),
}

impl<T: Real> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScalarMul(..) => "scalar-mul",
            Op::Matmul(..) => "matmul",
            Op::Conv3x3 { .. } => "conv3x3",
            Op::Upsample2x(..) => "nearest-upsample2x",
            Op::Silu(..) => "silu",
            Op::GroupNorm { .. } => "group-norm",
            Op::ConcatC(..) => "channel-concat",
            Op::Mse(..) => "mse",
            Op::Sum(..) => "sum",
            Op::AddChan(..) => "broadcast-add-channelwise",
            Op::MulChan(..) => "broadcast-mul-channelwise",
        }
    }
}

struct Node<T: Real> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Interpret a 2-D `[n, c]` or 4-D `[n, c, h, w]` shape as (n, c, h, w).
fn dims4(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [n, c] => Ok((*n, *c, 1, 1)),
        [n, c, h, w] => Ok((*n, *c, *h, *w)),
        other => Err(contract(format_args!("expected 2-D or 4-D tensor, got {other:?}"))),
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(Op::Input, value, requires_grad)
            .expect("input tensors are pre-validated")
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Result<NodeId> {
        if let Some(index) = value.first_non_finite() {
            return Err(Error::NonFinite { op: op.name(), index });
        }
        self.nodes.push(Node { op, value, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn binary_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !va.same_shape(vb) {
            return Err(contract(format_args!(
                "{op}: shape {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b)?;
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.nodes[a.0].value.shape(), data)?;
        self.push(Op::Add(a, b), value, self.rg(&[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b)?;
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let value = Tensor::new(self.nodes[a.0].value.shape(), data)?;
        self.push(Op::Sub(a, b), value, self.rg(&[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b)?;
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.nodes[a.0].value.shape(), data)?;
        self.push(Op::Mul(a, b), value, self.rg(&[a, b]))
    }

    pub fn scalar_mul(&mut self, x: NodeId, c: T) -> Result<NodeId> {
        let value = self.nodes[x.0].value.map(|v| v * c);
        self.push(Op::ScalarMul(x, c), value, self.rg(&[x]))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        let (&[m, k], &[k2, n]) = (sa, sb) else {
            return Err(contract(format_args!("matmul: need 2-D operands, got {sa:?} x {sb:?}")));
        };
        if k != k2 {
            return Err(contract(format_args!("matmul: inner dims {k} vs {k2}")));
        }
        let mut data = vec![T::ZERO; m * n];
        kernels::matmul_acc(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            &mut data,
            m,
            k,
            n,
        );
        let value = Tensor::new(&[m, n], data)?;
        self.push(Op::Matmul(a, b), value, self.rg(&[a, b]))
    }

    /// 3x3 convolution, zero padding 1. x [n,ci,h,w], w [co,ci,3,3], b [co].
    pub fn conv3x3(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        if stride != 1 && stride != 2 {
            return Err(contract(format_args!("conv3x3: stride must be 1 or 2, got {stride}")));
        }
        let sx = self.nodes[x.0].value.shape();
        let sw = self.nodes[w.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        let (&[n, ci, h, w_dim], &[co, ci2, 3, 3], &[co2]) = (sx, sw, sb) else {
            return Err(contract(format_args!(
                "conv3x3: shapes x{sx:?} w{sw:?} b{sb:?}"
            )));
        };
        if ci != ci2 || co != co2 {
            return Err(contract(format_args!("conv3x3: channel mismatch x{sx:?} w{sw:?} b{sb:?}")));
        }
        let out = kernels::conv3x3_forward(
            self.nodes[x.0].value.data(),
            n,
            ci,
            h,
            w_dim,
            self.nodes[w.0].value.data(),
            self.nodes[b.0].value.data(),
            co,
            stride,
        );
        let oh = kernels::conv_out_dim(h, stride);
        let ow = kernels::conv_out_dim(w_dim, stride);
        let value = Tensor::new(&[n, co, oh, ow], out)?;
        self.push(Op::Conv3x3 { x, w, b, stride }, value, self.rg(&[x, w, b]))
    }

    pub fn upsample2x(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = dims4(self.nodes[x.0].value.shape())?;
        let src = self.nodes[x.0].value.data();
        let mut out = vec![T::ZERO; n * c * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        for plane in 0..n * c {
            let s = &src[plane * h * w..(plane + 1) * h * w];
            let d = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..h {
                for x_ in 0..w {
                    let v = s[y * w + x_];
                    d[(2 * y) * ow + 2 * x_] = v;
                    d[(2 * y) * ow + 2 * x_ + 1] = v;
                    d[(2 * y + 1) * ow + 2 * x_] = v;
                    d[(2 * y + 1) * ow + 2 * x_ + 1] = v;
                }
            }
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        self.push(Op::Upsample2x(x), value, self.rg(&[x]))
    }

    pub fn silu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.nodes[x.0].value.map(|v| v * v.sigmoid());
        self.push(Op::Silu(x), value, self.rg(&[x]))
    }

    /// Group normalization with per-channel affine. gamma/beta shape [c].
    pub fn group_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, groups: usize) -> Result<NodeId> {
        let (n, c, h, w) = dims4(self.nodes[x.0].value.shape())?;
        if groups == 0 || c % groups != 0 {
            return Err(contract(format_args!("group-norm: {c} channels not divisible by {groups} groups")));
        }
        if self.nodes[gamma.0].value.shape() != [c] || self.nodes[beta.0].value.shape() != [c] {
            return Err(contract("group-norm: gamma/beta must have shape [c]"));
        }
        let eps = T::from_f64(1e-5);
        let cpg = c / groups;
        let group_len = cpg * h * w;
        let src = self.nodes[x.0].value.data();
        let g_data = self.nodes[gamma.0].value.data();
        let b_data = self.nodes[beta.0].value.data();
        let mut out = vec![T::ZERO; src.len()];
        let mut means = vec![T::ZERO; n * groups];
        let mut inv_stds = vec![T::ZERO; n * groups];
        let inv_len = T::ONE / T::from_f64(group_len as f64);
        for ni in 0..n {
            for gi in 0..groups {
                let base = ni * c * h * w + gi * group_len;
                let chunk = &src[base..base + group_len];
                let mut mean = T::ZERO;
                for &v in chunk {
                    mean += v;
                }
                mean *= inv_len;
                let mut var = T::ZERO;
                for &v in chunk {
                    let d = v - mean;
                    var += d * d;
                }
                var *= inv_len;
                let inv_std = T::ONE / (var + eps).sqrt();
                means[ni * groups + gi] = mean;
                inv_stds[ni * groups + gi] = inv_std;
                for ci in 0..cpg {
                    let ch = gi * cpg + ci;
                    let (ga, be) = (g_data[ch], b_data[ch]);
                    let off = base + ci * h * w;
                    for idx in 0..h * w {
                        out[off + idx] = (chunk[ci * h * w + idx] - mean) * inv_std * ga + be;
                    }
                }
            }
        }
        let value = Tensor::new(self.nodes[x.0].value.shape(), out)?;
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            Op::GroupNorm { x, gamma, beta, groups, mean: means, inv_std: inv_stds },
            value,
            rg,
        )
    }

    /// Concatenate along the channel axis.
    pub fn concat_c(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, ca, ha, wa) = dims4(self.nodes[a.0].value.shape())?;
        let (nb, cb, hb, wb) = dims4(self.nodes[b.0].value.shape())?;
        if (na, ha, wa) != (nb, hb, wb) {
            return Err(contract(format_args!(
                "channel-concat: {:?} vs {:?}",
                self.nodes[a.0].value.shape(),
                self.nodes[b.0].value.shape()
            )));
        }
        let (sa, sb) = (ca * ha * wa, cb * hb * wb);
        let mut out = vec![T::ZERO; na * (sa + sb)];
        for ni in 0..na {
            out[ni * (sa + sb)..ni * (sa + sb) + sa]
                .copy_from_slice(&self.nodes[a.0].value.data()[ni * sa..(ni + 1) * sa]);
            out[ni * (sa + sb) + sa..(ni + 1) * (sa + sb)]
                .copy_from_slice(&self.nodes[b.0].value.data()[ni * sb..(ni + 1) * sb]);
        }
        let shape = if self.nodes[a.0].value.shape().len() == 2 {
            vec![na, ca + cb]
        } else {
            vec![na, ca + cb, ha, wa]
        };
        let value = Tensor::new(&shape, out)?;
        self.push(Op::ConcatC(a, b), value, self.rg(&[a, b]))
    }

    /// Mean of squared differences over all elements; scalar output.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mse", a, b)?;
        let mut acc = T::ZERO;
        for (&x, &y) in self.nodes[a.0].value.data().iter().zip(self.nodes[b.0].value.data()) {
            let d = x - y;
            acc += d * d;
        }
        let value = Tensor::scalar(acc / T::from_f64(self.nodes[a.0].value.numel() as f64));
        self.push(Op::Mse(a, b), value, self.rg(&[a, b]))
    }

    /// Sum of all elements; scalar output.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let mut acc = T::ZERO;
        for &v in self.nodes[x.0].value.data() {
            acc += v;
        }
        let value = Tensor::scalar(acc);
        self.push(Op::Sum(x), value, self.rg(&[x]))
    }

    fn chan_vec_dims(&self, op: &'static str, x: NodeId, v: NodeId) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = dims4(self.nodes[x.0].value.shape())?;
        match *self.nodes[v.0].value.shape() {
            [vc] if vc == c => Ok((n, c, h * w)),
            [vn, vc] if vn == n && vc == c => Ok((n, c, h * w)),
            _ => Err(contract(format_args!(
                "{op}: value shape {:?} does not broadcast over {:?}",
                self.nodes[v.0].value.shape(),
                self.nodes[x.0].value.shape()
            ))),
        }
    }

    /// out[n,c,h,w] = x[n,c,h,w] + v[c] (or v[n,c]).
    pub fn add_chan(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (n, c, hw) = self.chan_vec_dims("broadcast-add-channelwise", x, v)?;
        let per_sample = self.nodes[v.0].value.shape().len() == 2;
        let mut out = self.nodes[x.0].value.data().to_vec();
        let vdata = self.nodes[v.0].value.data();
        for ni in 0..n {
            for ci in 0..c {
                let add = vdata[if per_sample { ni * c + ci } else { ci }];
                for o in &mut out[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                    *o += add;
                }
            }
        }
        let value = Tensor::new(self.nodes[x.0].value.shape(), out)?;
        self.push(Op::AddChan(x, v), value, self.rg(&[x, v]))
    }

    /// out[n,c,h,w] = x[n,c,h,w] * v[c] (or v[n,c]).
    pub fn mul_chan(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (n, c, hw) = self.chan_vec_dims("broadcast-mul-channelwise", x, v)?;
        let per_sample = self.nodes[v.0].value.shape().len() == 2;
        let mut out = self.nodes[x.0].value.data().to_vec();
        let vdata = self.nodes[v.0].value.data();
        for ni in 0..n {
            for ci in 0..c {
                let f = vdata[if per_sample { ni * c + ci } else { ci }];
                for o in &mut out[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                    *o *= f;
                }
            }
        }
        let value = Tensor::new(self.nodes[x.0].value.shape(), out)?;
        self.push(Op::MulChan(x, v), value, self.rg(&[x, v]))
    }

    /// Reverse pass from a scalar loss. Returns per-node gradients; read them
    /// back through [`Graph::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(contract("backward: loss must be scalar"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.nodes[loss.0].value.shape(), T::ONE));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if let Some(index) = g.first_non_finite() {
                    return Err(Error::NonFinite { op: self.nodes[i].op.name(), index });
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor<T>>],
        id: NodeId,
        contribution: impl FnOnce(&mut [T]),
    ) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[id.0].value.shape()));
        }
        contribution(slot.as_mut().unwrap().data_mut());
    }

    #[allow(clippy::too_many_lines)]
    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Input => {}
            Op::Add(a, b) => {
                self.accumulate(grads, a, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g.data()) {
                        *dv += gv;
                    }
                });
                self.accumulate(grads, b, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g.data()) {
                        *dv += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g.data()) {
                        *dv += gv;
                    }
                });
                self.accumulate(grads, b, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g.data()) {
                        *dv -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                self.accumulate(grads, a, |d| {
                    for ((dv, &gv), &bv) in d.iter_mut().zip(g.data()).zip(vb) {
                        *dv += gv * bv;
                    }
                });
                self.accumulate(grads, b, |d| {
                    for ((dv, &gv), &av) in d.iter_mut().zip(g.data()).zip(va) {
                        *dv += gv * av;
                    }
                });
            }
            Op::ScalarMul(x, c) => {
                self.accumulate(grads, x, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g.data()) {
                        *dv += gv * c;
                    }
                });
            }
            Op::Matmul(a, b) => {
                let [m, k] = *self.nodes[a.0].value.shape() else { unreachable!() };
                let [_, n] = *self.nodes[b.0].value.shape() else { unreachable!() };
                // dA += G . B^T
                let bt = kernels::transpose(self.nodes[b.0].value.data(), k, n);
                self.accumulate(grads, a, |d| {
                    kernels::matmul_acc(g.data(), &bt, d, m, n, k);
                });
                // dB += A^T . G
                let at = kernels::transpose(self.nodes[a.0].value.data(), m, k);
                self.accumulate(grads, b, |d| {
                    kernels::matmul_acc(&at, g.data(), d, k, m, n);
                });
            }
            Op::Conv3x3 { x, w, b, stride } => {
                let [n, ci, h, w_dim] = *self.nodes[x.0].value.shape() else { unreachable!() };
                let [co, ..] = *self.nodes[w.0].value.shape() else { unreachable!() };
                let (dx, dw, db) = kernels::conv3x3_backward(
                    self.nodes[x.0].value.data(),
                    n,
                    ci,
                    h,
                    w_dim,
                    self.nodes[w.0].value.data(),
                    co,
                    stride,
                    g.data(),
                );
                self.accumulate(grads, x, |d| {
                    for (dv, &s) in d.iter_mut().zip(&dx) {
                        *dv += s;
                    }
                });
                self.accumulate(grads, w, |d| {
                    for (dv, &s) in d.iter_mut().zip(&dw) {
                        *dv += s;
                    }
                });
                self.accumulate(grads, b, |d| {
                    for (dv, &s) in d.iter_mut().zip(&db) {
                        *dv += s;
                    }
                });
            }
            Op::Upsample2x(x) => {
                let (n, c, h, w) = dims4(self.nodes[x.0].value.shape())?;
                let ow = 2 * w;
                self.accumulate(grads, x, |d| {
                    for plane in 0..n * c {
                        let gs = &g.data()[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                        let ds = &mut d[plane * h * w..(plane + 1) * h * w];
                        for y in 0..h {
                            for x_ in 0..w {
                                ds[y * w + x_] += gs[(2 * y) * ow + 2 * x_]
                                    + gs[(2 * y) * ow + 2 * x_ + 1]
                                    + gs[(2 * y + 1) * ow + 2 * x_]
                                    + gs[(2 * y + 1) * ow + 2 * x_ + 1];
                            }
                        }
                    }
                });
            }
            Op::Silu(x) => {
                let vx = self.nodes[x.0].value.data();
                self.accumulate(grads, x, |d| {
                    for ((dv, &gv), &xv) in d.iter_mut().zip(g.data()).zip(vx) {
                        let s = xv.sigmoid();
                        *dv += gv * (s + xv * s * (T::ONE - s));
                    }
                });
            }
            Op::GroupNorm { x, gamma, beta, groups, ref mean, ref inv_std } => {
                let (n, c, h, w) = dims4(self.nodes[x.0].value.shape())?;
                let cpg = c / groups;
                let group_len = cpg * h * w;
                let inv_len = T::ONE / T::from_f64(group_len as f64);
                let src = self.nodes[x.0].value.data();
                let ga = self.nodes[gamma.0].value.data();

                // d_gamma[ch] = sum g * xhat; d_beta[ch] = sum g
                self.accumulate(grads, gamma, |d| {
                    for ni in 0..n {
                        for gi in 0..groups {
                            let (mu, is) = (mean[ni * groups + gi], inv_std[ni * groups + gi]);
                            for ci in 0..cpg {
                                let ch = gi * cpg + ci;
                                let off = ni * c * h * w + ch * h * w;
                                let mut s = T::ZERO;
                                for idx in 0..h * w {
                                    s += g.data()[off + idx] * (src[off + idx] - mu) * is;
                                }
                                d[ch] += s;
                            }
                        }
                    }
                });
                self.accumulate(grads, beta, |d| {
                    for ni in 0..n {
                        for ch in 0..c {
                            let off = ni * c * h * w + ch * h * w;
                            let mut s = T::ZERO;
                            for idx in 0..h * w {
                                s += g.data()[off + idx];
                            }
                            d[ch] += s;
                        }
                    }
                });
                // dx = inv_std/M * (M*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
                self.accumulate(grads, x, |d| {
                    for ni in 0..n {
                        for gi in 0..groups {
                            let (mu, is) = (mean[ni * groups + gi], inv_std[ni * groups + gi]);
                            let base = ni * c * h * w + gi * group_len;
                            let mut sum_dxhat = T::ZERO;
                            let mut sum_dxhat_xhat = T::ZERO;
                            for ci in 0..cpg {
                                let ch = gi * cpg + ci;
                                let off = base + ci * h * w;
                                for idx in 0..h * w {
                                    let dxh = g.data()[off + idx] * ga[ch];
                                    let xh = (src[off + idx] - mu) * is;
                                    sum_dxhat += dxh;
                                    sum_dxhat_xhat += dxh * xh;
                                }
                            }
                            for ci in 0..cpg {
                                let ch = gi * cpg + ci;
                                let off = base + ci * h * w;
                                for idx in 0..h * w {
                                    let dxh = g.data()[off + idx] * ga[ch];
                                    let xh = (src[off + idx] - mu) * is;
                                    d[off + idx] += is
                                        * inv_len
                                        * (T::from_f64(group_len as f64) * dxh
                                            - sum_dxhat
                                            - xh * sum_dxhat_xhat);
                                }
                            }
                        }
                    }
                });
            }
            Op::ConcatC(a, b) => {
                let (na, ca, ha, wa) = dims4(self.nodes[a.0].value.shape())?;
                let (_, cb, ..) = dims4(self.nodes[b.0].value.shape())?;
                let (sa, sb) = (ca * ha * wa, cb * ha * wa);
                self.accumulate(grads, a, |d| {
                    for ni in 0..na {
                        let gs = &g.data()[ni * (sa + sb)..ni * (sa + sb) + sa];
                        for (dv, &gv) in d[ni * sa..(ni + 1) * sa].iter_mut().zip(gs) {
                            *dv += gv;
                        }
                    }
                });
                self.accumulate(grads, b, |d| {
                    for ni in 0..na {
                        let gs = &g.data()[ni * (sa + sb) + sa..(ni + 1) * (sa + sb)];
                        for (dv, &gv) in d[ni * sb..(ni + 1) * sb].iter_mut().zip(gs) {
                            *dv += gv;
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let scale = g.data()[0] * T::from_f64(2.0 / self.nodes[a.0].value.numel() as f64);
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                self.accumulate(grads, a, |d| {
                    for ((dv, &x), &y) in d.iter_mut().zip(va).zip(vb) {
                        *dv += scale * (x - y);
                    }
                });
                self.accumulate(grads, b, |d| {
                    for ((dv, &x), &y) in d.iter_mut().zip(va).zip(vb) {
                        *dv -= scale * (x - y);
                    }
                });
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, x, |d| {
                    for dv in d.iter_mut() {
                        *dv += gv;
                    }
                });
            }
            Op::AddChan(x, v) => {
                let (n, c, hw) = self.chan_vec_dims("broadcast-add-channelwise", x, v)?;
                let per_sample = self.nodes[v.0].value.shape().len() == 2;
                self.accumulate(grads, x, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g.data()) {
                        *dv += gv;
                    }
                });
                self.accumulate(grads, v, |d| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let mut s = T::ZERO;
                            for &gv in &g.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                                s += gv;
                            }
                            d[if per_sample { ni * c + ci } else { ci }] += s;
                        }
                    }
                });
            }
            Op::MulChan(x, v) => {
                let (n, c, hw) = self.chan_vec_dims("broadcast-mul-channelwise", x, v)?;
                let per_sample = self.nodes[v.0].value.shape().len() == 2;
                let vx = self.nodes[x.0].value.data();
                let vv = self.nodes[v.0].value.data();
                self.accumulate(grads, x, |d| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let f = vv[if per_sample { ni * c + ci } else { ci }];
                            let off = (ni * c + ci) * hw;
                            for (dv, &gv) in d[off..off + hw].iter_mut().zip(&g.data()[off..off + hw]) {
                                *dv += gv * f;
                            }
                        }
                    }
                });
                self.accumulate(grads, v, |d| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let off = (ni * c + ci) * hw;
                            let mut s = T::ZERO;
                            for (&gv, &xv) in g.data()[off..off + hw].iter().zip(&vx[off..off + hw]) {
                                s += gv * xv;
                            }
                            d[if per_sample { ni * c + ci } else { ci }] += s;
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass, indexed by node.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss w.r.t. a node, if any flowed to it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a parameter node; zero tensor if nothing flowed.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor<T> {
        self.grads[id.0].clone().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_backward_is_identity() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), true);
        let b = g.input(Tensor::new(&[2], vec![3.0, 4.0]).unwrap(), true);
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
        let s = g.sum(c).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn silu_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(0.0), true);
        let y = g.silu(x).unwrap();
        assert_eq!(g.value(y).data()[0], 0.0);
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert!((grads.get(x).unwrap().data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::zeros(&[2]), false);
        let b = g.input(Tensor::zeros(&[3]), false);
        assert!(matches!(g.add(a, b), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_forward_is_numeric_fault() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::scalar(1e308), false);
        let b = g.input(Tensor::scalar(1e308), false);
        match g.mul(a, b) {
            Err(Error::NonFinite { op, index }) => {
                assert_eq!(op, "mul");
                assert_eq!(index, 0);
            }
            other => panic!("expected numeric fault, got {other:?}"),
        }
    }

    #[test]
    fn mse_gradient() {
        // f = mean((a-b)^2), a=[1,2], b=[0,0] -> f=2.5, df/da = (a-b)
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), true);
        let b = g.input(Tensor::new(&[2], vec![0.0, 0.0]).unwrap(), false);
        let l = g.mse(a, b).unwrap();
        assert!((g.value(l).data()[0] - 2.5).abs() < 1e-12);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn grad_accumulates_over_multiple_uses() {
        // y = x*x + x -> dy/dx = 2x + 1
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(3.0), true);
        let sq = g.mul(x, x).unwrap();
        let y = g.add(sq, x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert!((grads.get(x).unwrap().data()[0] - 7.0).abs() < 1e-12);
    }
}
