//! Straight-line reference forward pass, written with plain loops and no
//! shared code from the library's model module beyond reading the weights.

#![allow(dead_code)]

use insert_nco::construct::{InsertionState, Position};
use insert_nco::instance::Instance;
use insert_nco::model::{AttnWeights, Matrix, ModelParams};

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix<f64>) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// `x · w (+ b)`.
pub fn affine(x: &Rows, w: &Matrix<f64>, b: Option<&Matrix<f64>>) -> Rows {
    x.iter()
        .map(|row| {
            (0..w.cols())
                .map(|c| {
                    let mut s = b.map_or(0.0, |b| b.get(0, c));
                    for (r, v) in row.iter().enumerate() {
                        s += v * w.get(r, c);
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Per-axis min-max scaled coordinates, plus demand over capacity for CVRP.
pub fn features(inst: &Instance) -> Rows {
    let pts = inst.coords();
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let scale = |v: &[f64], i: usize| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (v[i] - lo) / (hi - lo)
        } else {
            0.5
        }
    };
    (0..inst.len())
        .map(|i| {
            let mut f = vec![scale(&xs, i), scale(&ys, i)];
            if inst.is_cvrp() {
                f.push(inst.demand(i) / inst.capacity());
            }
            f
        })
        .collect()
}

/// One layer: multi-head scaled dot-product attention with a residual, then
/// a ReLU feed-forward block with a residual. No normalization.
pub fn attention(x: &Rows, w: &AttnWeights<f64>, heads: usize) -> Rows {
    let n = x.len();
    let d = x[0].len();
    let dk = d / heads;
    let q = affine(x, &w.wq, None);
    let k = affine(x, &w.wk, None);
    let v = affine(x, &w.wv, None);
    let mut concat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in cols.clone() {
                concat[i][c] = (0..n).map(|j| e[j] / z * v[j][c]).sum();
            }
        }
    }
    let o = affine(&concat, &w.wo, None);
    let xhat: Rows = x.iter().zip(&o).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
    let hidden: Rows =
        affine(&xhat, &w.w1, Some(&w.b1)).into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let ff = affine(&hidden, &w.w2, Some(&w.b2));
    xhat.iter().zip(&ff).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect()
}

pub fn encode(p: &ModelParams<f64>, inst: &Instance) -> Rows {
    let h0 = affine(&features(inst), &p.input_w, Some(&p.input_b));
    attention(&h0, &p.encoder, p.config.heads)
}

/// Probabilities over `state.all_positions()` for a model without the
/// neighborhood filter.
pub fn decode(p: &ModelParams<f64>, h: &Rows, state: &InsertionState<'_>) -> Vec<f64> {
    assert!(p.config.k_filter.is_none(), "oracle covers the unfiltered decoder");
    let inst = state.instance();
    let current = state.current_node().unwrap();
    let positions = state.all_positions();
    let mut tokens: Rows = affine(&vec![h[current].clone()], &p.current_w, None);
    for &(pos, _) in &positions {
        let (a, b) = state.endpoints(pos).unwrap();
        let mut x = h[a].clone();
        x.extend_from_slice(&h[b]);
        if inst.is_cvrp() {
            x.push(match pos {
                Position::NewRoute => 1.0,
                Position::Edge { route, .. } => state.remaining_capacity(route).unwrap() / inst.capacity(),
            });
        }
        tokens.extend(affine(&vec![x], &p.position_w, None));
    }
    if p.config.include_unvisited {
        let mut rest: Vec<usize> = state.unvisited().iter().copied().filter(|&u| u != current).collect();
        rest.sort_unstable();
        for u in rest {
            tokens.extend(affine(&vec![h[u].clone()], &p.unvisited_w, None));
        }
    }
    for w in &p.layers {
        tokens = attention(&tokens, w, p.config.heads);
    }
    let logits: Vec<f64> = (0..positions.len())
        .map(|j| {
            let row = &tokens[1 + j];
            (0..row.len()).map(|c| row[c] * p.head_w.get(c, 0)).sum::<f64>() + p.head_b.get(0, 0)
        })
        .collect();
    let m = logits.iter().zip(&positions).filter(|(_, (_, ok))| *ok).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> =
        logits.iter().zip(&positions).map(|(l, (_, ok))| if *ok { (l - m).exp() } else { 0.0 }).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn max_abs(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}
