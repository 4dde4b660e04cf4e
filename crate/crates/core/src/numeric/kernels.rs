//! Forward/backward kernels over flat row-major slices.
//!
//! Every kernel computes each output row from its own input row(s) with a fixed
//! accumulation order, so evaluating a subset of rows yields bitwise the same
//! values as evaluating the whole matrix. The streaming runtime relies on this.

use super::tensor::Scalar;

/// `a[m,k] · b[k,n]`. Each output element accumulates over `k` in ascending order,
/// so blocking rows below does not change any value.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![T::zero(); m * n];
    let mut blocks = out.chunks_exact_mut(4 * n);
    let mut i = 0;
    for block in &mut blocks {
        let (r0, rest) = block.split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, r3) = rest.split_at_mut(n);
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                let bv = b_row[j];
                r0[j] += a0 * bv;
                r1[j] += a1 * bv;
                r2[j] += a2 * bv;
                r3[j] += a3 * bv;
            }
        }
        i += 4;
    }
    for out_row in blocks.into_remainder().chunks_exact_mut(n) {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
        i += 1;
    }
    out
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// `x · w + b` for `x[m,k]`, `w[k,n]`, `b[n]`.
pub fn linear<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = matmul(x, w, m, k, n);
    if let Some(b) = b {
        for row in out.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    out
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization. Returns `(y, mean, rstd)`.
pub fn layer_norm<T: Scalar>(x: &[T], gamma: &[T], beta: &[T], d: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    let dn = T::from_usize(d).unwrap();
    let eps = T::from_f64_lossy(LAYER_NORM_EPS);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mut sum = T::zero();
        for &v in row {
            sum += v;
        }
        let mean = sum / dn;
        let mut var = T::zero();
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var = var / dn;
        let rstd = T::one() / (var + eps).sqrt();
        let out = &mut y[r * d..(r + 1) * d];
        for i in 0..d {
            out[i] = (row[i] - mean) * rstd * gamma[i] + beta[i];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (y, means, rstds)
}

/// Backward of [`layer_norm`]. Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward<T: Scalar>(
    x: &[T],
    gamma: &[T],
    mean: &[T],
    rstd: &[T],
    dy: &[T],
    d: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let dn = T::from_usize(d).unwrap();
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); d];
    let mut dbeta = vec![T::zero(); d];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let (m, s) = (mean[r], rstd[r]);
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for i in 0..d {
            let xhat = (xr[i] - m) * s;
            let dxhat = dyr[i] * gamma[i];
            dgamma[i] += dyr[i] * xhat;
            dbeta[i] += dyr[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        let out = &mut dx[r * d..(r + 1) * d];
        for i in 0..d {
            let xhat = (xr[i] - m) * s;
            let dxhat = dyr[i] * gamma[i];
            out[i] = s * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
        }
    }
    (dx, dgamma, dbeta)
}

/// In-place numerically shifted softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// In-place log-softmax of one row.
pub fn log_softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for &v in row.iter() {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    for v in row.iter_mut() {
        *v = *v - lse;
    }
}

pub fn log_softmax_rows<T: Scalar>(x: &[T], cols: usize) -> Vec<T> {
    let mut out = x.to_vec();
    for row in out.chunks_mut(cols) {
        log_softmax_in_place(row);
    }
    out
}

/// Masked multi-head scaled dot-product attention.
///
/// Query row `i` attends to key rows `0..horizons[i]`. `q` is `[tq, d]`, `k`/`v` are
/// `[tk, d]`. Returns the `[tq, d]` output and the `[heads, tq, tk]` attention
/// probabilities (zero beyond each horizon).
pub fn attention<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    d: usize,
    heads: usize,
    horizons: &[usize],
) -> (Vec<T>, Vec<T>) {
    let tq = horizons.len();
    let tk = k.len() / d;
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut out = vec![T::zero(); tq * d];
    let mut probs = vec![T::zero(); heads * tq * tk];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..tq {
            let hz = horizons[i];
            debug_assert!(hz >= 1 && hz <= tk);
            let qi = &q[i * d + off..i * d + off + dh];
            let p = &mut probs[(h * tq + i) * tk..(h * tq + i) * tk + hz];
            for (j, pj) in p.iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + dh];
                let mut s = T::zero();
                for c in 0..dh {
                    s += qi[c] * kj[c];
                }
                *pj = s * scale;
            }
            softmax_in_place(p);
            let o = &mut out[i * d + off..i * d + off + dh];
            for (j, &pj) in p.iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + dh];
                for c in 0..dh {
                    o[c] += pj * vj[c];
                }
            }
        }
    }
    (out, probs)
}

/// Backward of [`attention`]. Returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    d: usize,
    heads: usize,
    horizons: &[usize],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let tq = horizons.len();
    let tk = k.len() / d;
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut dq = vec![T::zero(); q.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let mut dp = vec![T::zero(); tk];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..tq {
            let hz = horizons[i];
            let p = &probs[(h * tq + i) * tk..(h * tq + i) * tk + hz];
            let doi = &dout[i * d + off..i * d + off + dh];
            let mut dot = T::zero();
            for j in 0..hz {
                let vj = &v[j * d + off..j * d + off + dh];
                let mut s = T::zero();
                for c in 0..dh {
                    s += doi[c] * vj[c];
                }
                dp[j] = s;
                dot += s * p[j];
                let dvj = &mut dv[j * d + off..j * d + off + dh];
                for c in 0..dh {
                    dvj[c] += p[j] * doi[c];
                }
            }
            for j in 0..hz {
                let ds = p[j] * (dp[j] - dot) * scale;
                let kj = &k[j * d + off..j * d + off + dh];
                let qi = &q[i * d + off..i * d + off + dh];
                let dqi = &mut dq[i * d + off..i * d + off + dh];
                for c in 0..dh {
                    dqi[c] += ds * kj[c];
                }
                let dkj = &mut dk[j * d + off..j * d + off + dh];
                for c in 0..dh {
                    dkj[c] += ds * qi[c];
                }
            }
        }
    }
    (dq, dk, dv)
}
