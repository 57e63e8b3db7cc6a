//! Raw slice kernels behind the graph ops.
//!
//! The inner loops are written accumulator-last (`c[j] += a * b[j]`) so the
//! compiler can vectorize them without reassociating reductions; summation
//! order is fixed, which the bit-determinism contract relies on.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

/// C[m*n] += A[m*k] . B[k*n], all row-major.
///
/// Rows of A are processed four at a time so each B row is reused from
/// registers/L1; the within-row accumulation order is unchanged, keeping
/// results identical to the plain loop.
pub fn matmul_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let (c01, c23) = c[i * n..(i + 4) * n].split_at_mut(2 * n);
        let (c0, c1) = c01.split_at_mut(n);
        let (c2, c3) = c23.split_at_mut(n);
        for kk in 0..k {
            let a0 = a[i * k + kk];
            let a1 = a[(i + 1) * k + kk];
            let a2 = a[(i + 2) * k + kk];
            let a3 = a[(i + 3) * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                let bv = b_row[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
        i += 4;
    }
    while i < m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
        i += 1;
    }
}

/// out[n*m] = transpose of a[m*n].
pub fn transpose<T: Real>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Output spatial size of a 3x3 convolution with zero padding 1.
pub fn conv_out_dim(dim: usize, stride: usize) -> usize {
    (dim + 2 - 3) / stride + 1
}

/// Unfold one [c, h, w] image into [c*9, oh*ow] patch columns
/// (3x3 kernel, zero padding 1).
pub fn im2col<T: Real>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    stride: usize,
    cols: &mut [T],
) {
    let oh = conv_out_dim(h, stride);
    let ow = conv_out_dim(w, stride);
    debug_assert_eq!(cols.len(), c * 9 * oh * ow);
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        *d = if ix < 0 || ix >= w as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add the inverse of `im2col`: cols [c*9, oh*ow] back into [c, h, w].
pub fn col2im_acc<T: Real>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    stride: usize,
    out: &mut [T],
) {
    let oh = conv_out_dim(h, stride);
    let ow = conv_out_dim(w, stride);
    debug_assert_eq!(cols.len(), c * 9 * oh * ow);
    debug_assert_eq!(out.len(), c * h * w);
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Forward 3x3 convolution, zero padding 1, over a batch.
/// input [n, ci, h, w], weight [co, ci, 3, 3], bias [co] -> [n, co, oh, ow].
pub fn conv3x3_forward<T: Real>(
    input: &[T],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    co: usize,
    stride: usize,
) -> Vec<T> {
    let oh = conv_out_dim(h, stride);
    let ow = conv_out_dim(w, stride);
    let k = ci * 9;
    let spatial = oh * ow;
    let mut out = vec![T::ZERO; n * co * spatial];
    let mut cols = vec![T::ZERO; k * spatial];
    for ni in 0..n {
        im2col(&input[ni * ci * h * w..(ni + 1) * ci * h * w], ci, h, w, stride, &mut cols);
        let out_n = &mut out[ni * co * spatial..(ni + 1) * co * spatial];
        matmul_acc(weight, &cols, out_n, co, k, spatial);
        for coi in 0..co {
            let b = bias[coi];
            for v in &mut out_n[coi * spatial..(coi + 1) * spatial] {
                *v += b;
            }
        }
    }
    out
}

/// Backward of `conv3x3_forward`. Returns (d_input, d_weight, d_bias).
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Real>(
    input: &[T],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[T],
    co: usize,
    stride: usize,
    d_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let oh = conv_out_dim(h, stride);
    let ow = conv_out_dim(w, stride);
    let k = ci * 9;
    let spatial = oh * ow;
    let mut d_input = vec![T::ZERO; n * ci * h * w];
    let mut d_weight = vec![T::ZERO; co * k];
    let mut d_bias = vec![T::ZERO; co];
    let mut cols = vec![T::ZERO; k * spatial];
    let mut d_cols = vec![T::ZERO; k * spatial];
    let w_t = transpose(weight, co, k);
    for ni in 0..n {
        let d_out_n = &d_out[ni * co * spatial..(ni + 1) * co * spatial];

        // d_weight += d_out_n . cols^T
        im2col(&input[ni * ci * h * w..(ni + 1) * ci * h * w], ci, h, w, stride, &mut cols);
        let cols_t = transpose(&cols, k, spatial);
        matmul_acc(d_out_n, &cols_t, &mut d_weight, co, spatial, k);

        // d_bias += row sums of d_out_n
        for coi in 0..co {
            let mut s = T::ZERO;
            for &v in &d_out_n[coi * spatial..(coi + 1) * spatial] {
                s += v;
            }
            d_bias[coi] += s;
        }

        // d_cols = W^T . d_out_n, scattered back to the input layout
        d_cols.fill(T::ZERO);
        matmul_acc(&w_t, d_out_n, &mut d_cols, k, co, spatial);
        col2im_acc(
            &d_cols,
            ci,
            h,
            w,
            stride,
            &mut d_input[ni * ci * h * w..(ni + 1) * ci * h * w],
        );
    }
    (d_input, d_weight, d_bias)
}
