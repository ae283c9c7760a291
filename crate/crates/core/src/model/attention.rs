//! Multi-head self-attention layer without normalization:
//! `x̂ = MHA(x) + x`, `out = FF(x̂) + x̂`, `FF(z) = max(0, z·W1 + b1)·W2 + b2`.
//!
//! Rows of the input are grouped into independent segments (one token set
//! each); attention never crosses a segment boundary. Packing many token
//! sets into one matrix lets the projections run as a few large GEMMs.

use super::params::AttnWeights;
use super::tensor::{gemm, Matrix, Scalar, View, ViewMut};

/// Row range `start..start + len` of one token set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

/// One segment covering all rows.
pub fn whole(rows: usize) -> Vec<Segment> {
    vec![Segment { start: 0, len: rows }]
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    x: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// Attention probabilities, per segment then head, each `len × len`.
    probs: Vec<T>,
    /// Concatenated head outputs before the output map.
    o: Matrix<T>,
    xhat: Matrix<T>,
    /// Feed-forward pre-activation.
    z1: Matrix<T>,
    h1: Matrix<T>,
}

impl<T: Scalar> LayerCache<T> {
    /// Sign pattern of the feed-forward pre-activation.
    pub fn relu_pattern(&self, out: &mut Vec<bool>) {
        out.extend(self.z1.as_slice().iter().map(|v| v.to_f64() > 0.0));
    }
}

fn prob_offsets(segments: &[Segment], heads: usize) -> (Vec<usize>, usize) {
    let mut offs = Vec::with_capacity(segments.len());
    let mut total = 0;
    for s in segments {
        offs.push(total);
        total += heads * s.len * s.len;
    }
    (offs, total)
}

/// In-place row softmax of a `rows × cols` block, accumulated in `f64`.
fn softmax_rows<T: Scalar>(block: &mut [T], cols: usize) {
    for row in block.chunks_mut(cols) {
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let mut tmp = Vec::with_capacity(cols);
        for v in row.iter() {
            let e = (v.to_f64() - max).exp();
            sum += e;
            tmp.push(e);
        }
        for (v, e) in row.iter_mut().zip(tmp) {
            *v = T::from_f64(e / sum);
        }
    }
}

/// Forward pass. When `cache` is given it is filled for [`backward`].
pub fn forward<T: Scalar>(
    x: &Matrix<T>,
    w: &AttnWeights<T>,
    heads: usize,
    segments: &[Segment],
    cache: Option<&mut Option<LayerCache<T>>>,
) -> Matrix<T> {
    let (rows, d) = x.shape();
    let dk = d / heads;
    let scale = T::from_f64(1.0 / (dk as f64).sqrt());
    let q = x.matmul(&w.wq);
    let k = x.matmul(&w.wk);
    let v = x.matmul(&w.wv);
    let (offs, total) = prob_offsets(segments, heads);
    let mut probs = vec![T::ZERO; total];
    let mut o = Matrix::zeros(rows, d);
    for (s, &off) in segments.iter().zip(&offs) {
        let m = s.len;
        for h in 0..heads {
            let p = &mut probs[off + h * m * m..off + (h + 1) * m * m];
            gemm(
                scale,
                q.view().block(s.start, m, h * dk, dk),
                k.view().block(s.start, m, h * dk, dk).t(),
                T::ZERO,
                ViewMut::from_slice(p, m, m),
            );
            softmax_rows(p, m.max(1));
            gemm(
                T::ONE,
                View::from_slice(p, m, m),
                v.view().block(s.start, m, h * dk, dk),
                T::ZERO,
                o.view_mut().block(s.start, m, h * dk, dk),
            );
        }
    }
    let mut xhat = o.matmul(&w.wo);
    xhat.add_assign(x);
    let mut z1 = xhat.matmul(&w.w1);
    z1.add_row(w.b1.as_slice());
    let h1 = z1.map(|v| if v > T::ZERO { v } else { T::ZERO });
    let mut out = h1.matmul(&w.w2);
    out.add_row(w.b2.as_slice());
    out.add_assign(&xhat);
    if let Some(slot) = cache {
        *slot = Some(LayerCache { x: x.clone(), q, k, v, probs, o, xhat, z1, h1 });
    }
    out
}

/// Backward pass: accumulates weight gradients into `grad` and returns the
/// gradient with respect to the layer input.
pub fn backward<T: Scalar>(
    dout: &Matrix<T>,
    w: &AttnWeights<T>,
    heads: usize,
    segments: &[Segment],
    cache: &LayerCache<T>,
    grad: &mut AttnWeights<T>,
) -> Matrix<T> {
    let (rows, d) = dout.shape();
    let dk = d / heads;
    let scale = T::from_f64(1.0 / (dk as f64).sqrt());

    // feed-forward branch
    gemm(T::ONE, cache.h1.view().t(), dout.view(), T::ONE, grad.w2.view_mut());
    dout.col_sums_into(grad.b2.as_mut_slice());
    let mut dz1 = Matrix::zeros(rows, w.w1.cols());
    gemm(T::ONE, dout.view(), w.w2.view().t(), T::ZERO, dz1.view_mut());
    for (g, &z) in dz1.as_mut_slice().iter_mut().zip(cache.z1.as_slice()) {
        if z <= T::ZERO {
            *g = T::ZERO;
        }
    }
    gemm(T::ONE, cache.xhat.view().t(), dz1.view(), T::ONE, grad.w1.view_mut());
    dz1.col_sums_into(grad.b1.as_mut_slice());
    let mut dxhat = dout.clone();
    gemm(T::ONE, dz1.view(), w.w1.view().t(), T::ONE, dxhat.view_mut());

    // attention branch
    gemm(T::ONE, cache.o.view().t(), dxhat.view(), T::ONE, grad.wo.view_mut());
    let mut d_o = Matrix::zeros(rows, d);
    gemm(T::ONE, dxhat.view(), w.wo.view().t(), T::ZERO, d_o.view_mut());

    let mut dq = Matrix::zeros(rows, d);
    let mut dk_m = Matrix::zeros(rows, d);
    let mut dv = Matrix::zeros(rows, d);
    let (offs, _) = prob_offsets(segments, heads);
    for (s, &off) in segments.iter().zip(&offs) {
        let m = s.len;
        if m == 0 {
            continue;
        }
        for h in 0..heads {
            let p = &cache.probs[off + h * m * m..off + (h + 1) * m * m];
            let dob = d_o.view().block(s.start, m, h * dk, dk);
            // dV = Pᵀ dO
            gemm(T::ONE, View::from_slice(p, m, m).t(), dob, T::ZERO, dv.view_mut().block(s.start, m, h * dk, dk));
            // dP = dO Vᵀ
            let mut ds = Matrix::zeros(m, m);
            gemm(T::ONE, dob, cache.v.view().block(s.start, m, h * dk, dk).t(), T::ZERO, ds.view_mut());
            // softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P))
            for i in 0..m {
                let pr = &p[i * m..(i + 1) * m];
                let dr = ds.row_mut(i);
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a.to_f64() * b.to_f64()).sum();
                for (g, &pv) in dr.iter_mut().zip(pr) {
                    *g = pv * (*g - T::from_f64(dot));
                }
            }
            gemm(
                scale,
                ds.view(),
                cache.k.view().block(s.start, m, h * dk, dk),
                T::ZERO,
                dq.view_mut().block(s.start, m, h * dk, dk),
            );
            gemm(
                scale,
                ds.view().t(),
                cache.q.view().block(s.start, m, h * dk, dk),
                T::ZERO,
                dk_m.view_mut().block(s.start, m, h * dk, dk),
            );
        }
    }
    gemm(T::ONE, cache.x.view().t(), dq.view(), T::ONE, grad.wq.view_mut());
    gemm(T::ONE, cache.x.view().t(), dk_m.view(), T::ONE, grad.wk.view_mut());
    gemm(T::ONE, cache.x.view().t(), dv.view(), T::ONE, grad.wv.view_mut());
    let mut dx = dxhat;
    gemm(T::ONE, dq.view(), w.wq.view().t(), T::ONE, dx.view_mut());
    gemm(T::ONE, dk_m.view(), w.wk.view().t(), T::ONE, dx.view_mut());
    gemm(T::ONE, dv.view(), w.wv.view().t(), T::ONE, dx.view_mut());
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_weights(d: usize, d_ff: usize, r: &mut crate::rng::Rng) -> AttnWeights<f64> {
        let mut m = |a, b| Matrix::from_fn(a, b, |_, _| r.gen_range(-0.5..0.5));
        AttnWeights { wq: m(d, d), wk: m(d, d), wv: m(d, d), wo: m(d, d), w1: m(d, d_ff), b1: m(1, d_ff), w2: m(d_ff, d), b2: m(1, d) }
    }

    #[test]
    fn zero_weights_pass_input_through() {
        let x = Matrix::from_fn(4, 6, |i, j| (i as f64) - 0.3 * j as f64);
        let w = AttnWeights::zeros(6, 5);
        assert_eq!(forward(&x, &w, 2, &whole(4), None), x);
    }

    #[test]
    fn segments_are_independent() {
        let mut r = rng::seeded(3);
        let w = random_weights(8, 6, &mut r);
        let x = Matrix::from_fn(7, 8, |_, _| r.gen_range(-1.0..1.0));
        let segs = [Segment { start: 0, len: 3 }, Segment { start: 3, len: 4 }];
        let packed = forward(&x, &w, 2, &segs, None);
        let top = Matrix::from_vec(3, 8, x.as_slice()[..24].to_vec());
        let bottom = Matrix::from_vec(4, 8, x.as_slice()[24..].to_vec());
        let a = forward(&top, &w, 2, &whole(3), None);
        let b = forward(&bottom, &w, 2, &whole(4), None);
        assert!(Matrix::from_vec(3, 8, packed.as_slice()[..24].to_vec()).max_abs_diff(&a) < 1e-12);
        assert!(Matrix::from_vec(4, 8, packed.as_slice()[24..].to_vec()).max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::seeded(5);
        let w = random_weights(6, 5, &mut r);
        let x = Matrix::from_fn(5, 6, |_, _| r.gen_range(-1.0..1.0));
        let proj = Matrix::from_fn(5, 6, |_, _| r.gen_range(-1.0..1.0));
        let segs = [Segment { start: 0, len: 2 }, Segment { start: 2, len: 3 }];
        let loss = |x: &Matrix<f64>, w: &AttnWeights<f64>| -> f64 {
            let y = forward(x, w, 3, &segs, None);
            y.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum()
        };
        let mut cache = None;
        forward(&x, &w, 3, &segs, Some(&mut cache));
        let mut g = AttnWeights::zeros(6, 5);
        let dx = backward(&proj, &w, 3, &segs, cache.as_ref().unwrap(), &mut g);
        let h = 1e-6;
        for i in 0..x.as_slice().len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.as_mut_slice()[i] += h;
            xm.as_mut_slice()[i] -= h;
            let fd = (loss(&xp, &w) - loss(&xm, &w)) / (2.0 * h);
            assert!((fd - dx.as_slice()[i]).abs() < 1e-6, "dx[{i}] {fd} vs {}", dx.as_slice()[i]);
        }
        let mut wp = w.clone();
        for i in 0..w.wq.as_slice().len() {
            wp.wq.as_mut_slice()[i] += h;
            let up = loss(&x, &wp);
            wp.wq.as_mut_slice()[i] -= 2.0 * h;
            let down = loss(&x, &wp);
            wp.wq.as_mut_slice()[i] += h;
            assert!(((up - down) / (2.0 * h) - g.wq.as_slice()[i]).abs() < 1e-6);
        }
        for i in 0..w.b1.as_slice().len() {
            wp.b1.as_mut_slice()[i] += h;
            let up = loss(&x, &wp);
            wp.b1.as_mut_slice()[i] -= 2.0 * h;
            let down = loss(&x, &wp);
            wp.b1.as_mut_slice()[i] += h;
            assert!(((up - down) / (2.0 * h) - g.b1.as_slice()[i]).abs() < 1e-6);
        }
    }
}
