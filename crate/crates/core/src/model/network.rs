//! Encoder, decoder token sets and the packed forward/backward pass.
//!
//! The encoder maps each node's features to an embedding once per instance.
//! Each decoding step then builds a token set
//! `[current, positions…, unvisited…]`: the current node's embedding through
//! one map, each position's concatenated endpoint embeddings (plus the
//! route's normalized remaining capacity for CVRP) through another, and the
//! other unvisited nodes through a third. The decoder layers run over the
//! token set and a linear head scores the position tokens; a masked softmax
//! turns the scores into insertion probabilities.

use super::attention::{self, LayerCache, Segment};
use super::params::{ModelConfig, ModelParams};
use super::tensor::{gemm, Matrix, Scalar};
use crate::construct::{InsertionState, Position};
use crate::error::{Error, Result};
use crate::instance::{k_nearest, Instance};

/// Floor inside the log of the loss.
pub const LOG_FLOOR: f64 = 1e-12;

/// Node features on min-max scaled coordinates: `(x, y)` for TSP and
/// `(x, y, demand / capacity)` for CVRP.
pub fn node_features<T: Scalar>(inst: &Instance) -> Matrix<T> {
    let scaled = inst.minmax_scale();
    let cols = if inst.is_cvrp() { 3 } else { 2 };
    Matrix::from_fn(inst.len(), cols, |i, j| {
        let p = scaled.coord(i);
        T::from_f64(match j {
            0 => p.x,
            1 => p.y,
            _ => inst.demand(i) / inst.capacity(),
        })
    })
}

/// One position token: its two endpoints and, for CVRP, the normalized
/// remaining capacity of its route (1 for a new route).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionToken {
    pub pred: usize,
    pub succ: usize,
    pub capacity: f64,
}

/// Decoder input of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTokens {
    pub current: usize,
    pub positions: Vec<PositionToken>,
    pub feasible: Vec<bool>,
    /// For each kept position, its index in `InsertionState::all_positions`.
    pub source: Vec<usize>,
    /// Length of `all_positions` before filtering.
    pub total_positions: usize,
    pub unvisited: Vec<usize>,
}

impl StepTokens {
    pub fn len(&self) -> usize {
        1 + self.positions.len() + self.unvisited.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index among kept positions of the `all_positions` entry `full`.
    pub fn kept_index(&self, full: usize) -> Option<usize> {
        self.source.iter().position(|&s| s == full)
    }

    /// Spreads probabilities over kept positions back onto `all_positions`.
    pub fn expand(&self, probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total_positions];
        for (&s, &p) in self.source.iter().zip(probs) {
            out[s] = p;
        }
        out
    }
}

/// Builds the token set for the state's current node.
pub fn step_tokens(state: &InsertionState<'_>, config: &ModelConfig) -> Result<StepTokens> {
    let inst = state.instance();
    let current = state.current_node().ok_or(Error::NoCurrentNode)?;
    let all = state.all_positions();
    if !all.iter().any(|&(_, ok)| ok) {
        return Err(Error::NoValidPosition);
    }
    let d = |a: usize, b: usize| inst.dist(a, b);
    let mut tokens = Vec::with_capacity(all.len());
    for &(pos, _) in &all {
        let (pred, succ) = state.endpoints(pos)?;
        let capacity = match pos {
            _ if !inst.is_cvrp() => 0.0,
            Position::NewRoute => 1.0,
            Position::Edge { route, .. } => state.remaining_capacity(route)? / inst.capacity(),
        };
        tokens.push(PositionToken { pred, succ, capacity });
    }
    let mut keep: Vec<usize> = (0..all.len()).collect();
    if let Some(k) = config.k_filter {
        if k < all.len() {
            let key = |i: usize| d(current, tokens[i].pred).min(d(current, tokens[i].succ));
            let mut ranked: Vec<(f64, usize)> = (0..all.len()).map(|i| (key(i), i)).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keep = ranked[..k].iter().map(|&(_, i)| i).collect();
            if !keep.iter().any(|&i| all[i].1) {
                let fallback = ranked.iter().find(|&&(_, i)| all[i].1).map(|&(_, i)| i);
                keep.extend(fallback);
            }
            keep.sort_unstable();
        }
    }
    let unvisited: Vec<usize> = if config.include_unvisited {
        let pool = state.unvisited().iter().copied().filter(|&u| u != current);
        match config.k_filter {
            Some(k) => {
                let mut near = k_nearest(current, pool, k, d);
                near.sort_unstable();
                near
            }
            None => pool.collect(),
        }
    } else {
        Vec::new()
    };
    Ok(StepTokens {
        current,
        positions: keep.iter().map(|&i| tokens[i]).collect(),
        feasible: keep.iter().map(|&i| all[i].1).collect(),
        source: keep,
        total_positions: all.len(),
        unvisited,
    })
}

/// Masked softmax over one step's logits, in `f64`. Infeasible entries get
/// exactly zero.
pub fn masked_softmax(logits: &[f64], feasible: &[bool]) -> Vec<f64> {
    let max = logits.iter().zip(feasible).filter(|(_, &f)| f).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().zip(feasible).map(|(&l, &f)| if f { (l - max).exp() } else { 0.0 }).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

fn check_kind<T: Scalar>(params: &ModelParams<T>, inst: &Instance) -> Result<()> {
    if params.config.kind != inst.kind() {
        return Err(Error::ShapeMismatch(format!(
            "model built for {:?}, instance is {:?}",
            params.config.kind,
            inst.kind()
        )));
    }
    Ok(())
}

/// Packed encoder over several instances. Returns the stacked embeddings and
/// the first row of each instance.
fn encode_packed<T: Scalar>(
    params: &ModelParams<T>,
    instances: &[&Instance],
    record: Option<&mut EncoderTape<T>>,
) -> Result<(Matrix<T>, Vec<usize>)> {
    let cols = params.config.input_dim();
    let mut offsets = Vec::with_capacity(instances.len());
    let mut segments = Vec::with_capacity(instances.len());
    let mut feats = Vec::new();
    let mut rows = 0;
    for inst in instances {
        check_kind(params, inst)?;
        offsets.push(rows);
        segments.push(Segment { start: rows, len: inst.len() });
        feats.extend_from_slice(node_features::<T>(inst).as_slice());
        rows += inst.len();
    }
    let feats = Matrix::from_vec(rows, cols, feats);
    let mut h0 = feats.matmul(&params.input_w);
    h0.add_row(params.input_b.as_slice());
    let heads = params.config.heads;
    let h = match record {
        Some(tape) => {
            let h = attention::forward(&h0, &params.encoder, heads, &segments, Some(&mut tape.cache));
            tape.feats = feats;
            tape.segments = segments;
            h
        }
        None => attention::forward(&h0, &params.encoder, heads, &segments, None),
    };
    Ok((h, offsets))
}

/// Node embeddings of one instance, `n × d`.
pub fn encode<T: Scalar>(params: &ModelParams<T>, inst: &Instance) -> Result<Matrix<T>> {
    Ok(encode_packed(params, &[inst], None)?.0)
}

struct EncoderTape<T> {
    feats: Matrix<T>,
    segments: Vec<Segment>,
    cache: Option<LayerCache<T>>,
}

/// Row layout of a packed decoder batch.
struct Layout<T> {
    segments: Vec<Segment>,
    /// Gathered current-node embeddings and their embedding rows.
    gc: Matrix<T>,
    cur_src: Vec<usize>,
    gp: Matrix<T>,
    pos_src: Vec<(usize, usize)>,
    gu: Matrix<T>,
    unv_src: Vec<usize>,
}

fn gather<T: Scalar>(h: &Matrix<T>, rows: &[usize]) -> Matrix<T> {
    let d = h.cols();
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(h.row(r));
    }
    Matrix::from_vec(rows.len(), d, out)
}

fn layout<T: Scalar>(config: &ModelConfig, h: &Matrix<T>, steps: &[(usize, &StepTokens)]) -> Layout<T> {
    let d = config.d;
    let pdim = config.position_dim();
    let mut segments = Vec::with_capacity(steps.len());
    let (mut cur_src, mut pos_src, mut unv_src) = (Vec::new(), Vec::new(), Vec::new());
    let mut gp_data = Vec::new();
    let mut start = 0;
    for &(off, st) in steps {
        segments.push(Segment { start, len: st.len() });
        start += st.len();
        cur_src.push(off + st.current);
        for p in &st.positions {
            pos_src.push((off + p.pred, off + p.succ));
            gp_data.extend_from_slice(h.row(off + p.pred));
            gp_data.extend_from_slice(h.row(off + p.succ));
            if pdim > 2 * d {
                gp_data.push(T::from_f64(p.capacity));
            }
        }
        unv_src.extend(st.unvisited.iter().map(|&u| off + u));
    }
    Layout {
        segments,
        gc: gather(h, &cur_src),
        cur_src,
        gp: Matrix::from_vec(pos_src.len(), pdim, gp_data),
        pos_src,
        gu: gather(h, &unv_src),
        unv_src,
    }
}

/// Per-step views into the packed rows.
fn scatter_inputs<T: Scalar>(
    lay: &Layout<T>,
    steps: &[(usize, &StepTokens)],
    yc: &Matrix<T>,
    yp: &Matrix<T>,
    yu: &Matrix<T>,
    d: usize,
) -> Matrix<T> {
    let rows: usize = lay.segments.iter().map(|s| s.len).sum();
    let mut x = Matrix::zeros(rows, d);
    let (mut ip, mut iu) = (0, 0);
    for (i, (&(_, st), seg)) in steps.iter().zip(&lay.segments).enumerate() {
        x.row_mut(seg.start).copy_from_slice(yc.row(i));
        for j in 0..st.positions.len() {
            x.row_mut(seg.start + 1 + j).copy_from_slice(yp.row(ip));
            ip += 1;
        }
        let base = seg.start + 1 + st.positions.len();
        for j in 0..st.unvisited.len() {
            x.row_mut(base + j).copy_from_slice(yu.row(iu));
            iu += 1;
        }
    }
    x
}

struct DecoderTape<T> {
    layout: Layout<T>,
    caches: Vec<Option<LayerCache<T>>>,
    last: Matrix<T>,
}

/// Runs the decoder over packed steps; `steps[i].0` is the embedding row of
/// that step's node 0. Returns probabilities over each step's kept positions.
fn decode_packed<T: Scalar>(
    params: &ModelParams<T>,
    h: &Matrix<T>,
    steps: &[(usize, &StepTokens)],
    record: Option<&mut Option<DecoderTape<T>>>,
) -> Vec<Vec<f64>> {
    let cfg = &params.config;
    let lay = layout(cfg, h, steps);
    let yc = lay.gc.matmul(&params.current_w);
    let yp = lay.gp.matmul(&params.position_w);
    let yu = lay.gu.matmul(&params.unvisited_w);
    let mut x = scatter_inputs(&lay, steps, &yc, &yp, &yu, cfg.d);
    let mut caches: Vec<Option<LayerCache<T>>> = Vec::new();
    for w in &params.layers {
        if record.is_some() {
            caches.push(None);
            x = attention::forward(&x, w, cfg.heads, &lay.segments, caches.last_mut());
        } else {
            x = attention::forward(&x, w, cfg.heads, &lay.segments, None);
        }
    }
    let bias = params.head_b.get(0, 0).to_f64();
    let probs = steps
        .iter()
        .zip(&lay.segments)
        .map(|(&(_, st), seg)| {
            let logits: Vec<f64> = (0..st.positions.len())
                .map(|j| {
                    let row = x.row(seg.start + 1 + j);
                    row.iter().zip(params.head_w.as_slice()).map(|(a, b)| a.to_f64() * b.to_f64()).sum::<f64>() + bias
                })
                .collect();
            masked_softmax(&logits, &st.feasible)
        })
        .collect();
    if let Some(slot) = record {
        *slot = Some(DecoderTape { layout: lay, caches, last: x });
    }
    probs
}

/// Probabilities over each step's kept positions for one encoded instance.
pub fn decode_probs<T: Scalar>(params: &ModelParams<T>, h: &Matrix<T>, steps: &[&StepTokens]) -> Vec<Vec<f64>> {
    let packed: Vec<(usize, &StepTokens)> = steps.iter().map(|&s| (0, s)).collect();
    decode_packed(params, h, &packed, None)
}

/// Insertion probabilities for the state's current node, aligned with
/// `state.all_positions()`. Filtered-out and infeasible positions get 0.
pub fn decode_step<T: Scalar>(params: &ModelParams<T>, h: &Matrix<T>, state: &InsertionState<'_>) -> Result<Vec<f64>> {
    check_kind(params, state.instance())?;
    if h.shape() != (state.instance().len(), params.config.d) {
        return Err(Error::ShapeMismatch(format!("embeddings are {:?}", h.shape())));
    }
    let tokens = step_tokens(state, &params.config)?;
    let p = decode_probs(params, h, &[&tokens]).pop().expect("one step");
    Ok(tokens.expand(&p))
}

/// Teacher-forced steps of one episode with the target (kept index) of each.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    pub instance: &'a Instance,
    pub steps: Vec<StepTokens>,
    pub targets: Vec<usize>,
}

struct Recorded<T> {
    encoder: EncoderTape<T>,
    decoder: DecoderTape<T>,
    /// Per step: embedding offset, kept-position count, probabilities, target.
    outputs: Vec<(Vec<f64>, usize)>,
    token_counts: Vec<(usize, usize)>,
}

/// Records one forward pass so gradients can be taken.
pub struct Tape<T> {
    recorded: Option<Recorded<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape { recorded: None }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mean of `-ln max(p[target], 1e-12)` over all steps of all episodes.
    pub fn forward(&mut self, params: &ModelParams<T>, episodes: &[Episode<'_>]) -> Result<f64> {
        let instances: Vec<&Instance> = episodes.iter().map(|e| e.instance).collect();
        let mut enc = EncoderTape { feats: Matrix::zeros(0, 0), segments: Vec::new(), cache: None };
        let (h, offsets) = encode_packed(params, &instances, Some(&mut enc))?;
        let mut steps = Vec::new();
        let mut targets = Vec::new();
        for (e, &off) in episodes.iter().zip(&offsets) {
            if e.steps.len() != e.targets.len() {
                return Err(Error::ShapeMismatch("one target per step required".into()));
            }
            for (st, &t) in e.steps.iter().zip(&e.targets) {
                if t >= st.positions.len() || !st.feasible[t] {
                    return Err(Error::InvalidPosition);
                }
                steps.push((off, st));
                targets.push(t);
            }
        }
        if steps.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut dec = None;
        let probs = decode_packed(params, &h, &steps, Some(&mut dec));
        let loss = probs.iter().zip(&targets).map(|(p, &t)| -p[t].max(LOG_FLOOR).ln()).sum::<f64>() / steps.len() as f64;
        self.recorded = Some(Recorded {
            encoder: enc,
            decoder: dec.expect("decoder recorded"),
            token_counts: steps.iter().map(|(_, s)| (s.positions.len(), s.unvisited.len())).collect(),
            outputs: probs.into_iter().zip(targets).collect(),
        });
        Ok(loss)
    }

    /// Probabilities of the recorded steps, in order.
    pub fn probabilities(&self) -> Result<Vec<&[f64]>> {
        let rec = self.recorded.as_ref().ok_or(Error::NoForwardRecorded)?;
        Ok(rec.outputs.iter().map(|(p, _)| p.as_slice()).collect())
    }

    /// Which ReLU units were active in the recorded pass, encoder first.
    pub fn relu_pattern(&self) -> Result<Vec<bool>> {
        let rec = self.recorded.as_ref().ok_or(Error::NoForwardRecorded)?;
        let mut out = Vec::new();
        rec.encoder.cache.iter().for_each(|c| c.relu_pattern(&mut out));
        rec.decoder.caches.iter().flatten().for_each(|c| c.relu_pattern(&mut out));
        Ok(out)
    }

    /// Gradient of the recorded mean loss with respect to every parameter.
    /// Consumes the recording.
    pub fn backward(&mut self, params: &ModelParams<T>) -> Result<ModelParams<T>> {
        let rec = self.recorded.take().ok_or(Error::NoForwardRecorded)?;
        let cfg = params.config;
        let d = cfg.d;
        let mut grad = params.zeros_like();
        let dec = rec.decoder;
        let lay = &dec.layout;
        let n_steps = rec.outputs.len() as f64;

        // head and masked softmax
        let rows = dec.last.rows();
        let mut dx = Matrix::<T>::zeros(rows, d);
        let mut db = 0.0f64;
        let mut dw = vec![0.0f64; d];
        for ((probs, target), seg) in rec.outputs.iter().zip(&lay.segments) {
            if probs[*target] < LOG_FLOOR {
                continue;
            }
            for (j, &p) in probs.iter().enumerate() {
                let g = (p - if j == *target { 1.0 } else { 0.0 }) / n_steps;
                if g == 0.0 {
                    continue;
                }
                let r = seg.start + 1 + j;
                db += g;
                for (acc, &x) in dw.iter_mut().zip(dec.last.row(r)) {
                    *acc += g * x.to_f64();
                }
                for (o, &w) in dx.row_mut(r).iter_mut().zip(params.head_w.as_slice()) {
                    *o = T::from_f64(g * w.to_f64());
                }
            }
        }
        grad.head_b.set(0, 0, T::from_f64(db));
        for (g, v) in grad.head_w.as_mut_slice().iter_mut().zip(dw) {
            *g = T::from_f64(v);
        }

        for (i, w) in params.layers.iter().enumerate().rev() {
            let cache = dec.caches[i].as_ref().expect("layer recorded");
            dx = attention::backward(&dx, w, cfg.heads, &lay.segments, cache, &mut grad.layers[i]);
        }

        // split the input gradient by token kind
        let (np, nu) = (lay.gp.rows(), lay.gu.rows());
        let mut dyc = Matrix::zeros(lay.gc.rows(), d);
        let mut dyp = Matrix::zeros(np, d);
        let mut dyu = Matrix::zeros(nu, d);
        let (mut ip, mut iu) = (0, 0);
        for (i, (seg, &(npos, nunv))) in lay.segments.iter().zip(&rec.token_counts).enumerate() {
            dyc.row_mut(i).copy_from_slice(dx.row(seg.start));
            for j in 0..npos {
                dyp.row_mut(ip).copy_from_slice(dx.row(seg.start + 1 + j));
                ip += 1;
            }
            for j in 0..nunv {
                dyu.row_mut(iu).copy_from_slice(dx.row(seg.start + 1 + npos + j));
                iu += 1;
            }
        }
        gemm(T::ONE, lay.gc.view().t(), dyc.view(), T::ONE, grad.current_w.view_mut());
        gemm(T::ONE, lay.gp.view().t(), dyp.view(), T::ONE, grad.position_w.view_mut());
        gemm(T::ONE, lay.gu.view().t(), dyu.view(), T::ONE, grad.unvisited_w.view_mut());

        let enc = rec.encoder;
        let mut dh = Matrix::<T>::zeros(enc.feats.rows(), d);
        let scatter = |dh: &mut Matrix<T>, src: &Matrix<T>, c0: usize, row: usize, to: usize| {
            for (o, &v) in dh.row_mut(to).iter_mut().zip(&src.row(row)[c0..c0 + d]) {
                *o += v;
            }
        };
        let dgc = dyc.matmul(&transpose(&params.current_w));
        for (i, &r) in lay.cur_src.iter().enumerate() {
            scatter(&mut dh, &dgc, 0, i, r);
        }
        let dgp = dyp.matmul(&transpose(&params.position_w));
        for (i, &(a, b)) in lay.pos_src.iter().enumerate() {
            scatter(&mut dh, &dgp, 0, i, a);
            scatter(&mut dh, &dgp, d, i, b);
        }
        let dgu = dyu.matmul(&transpose(&params.unvisited_w));
        for (i, &r) in lay.unv_src.iter().enumerate() {
            scatter(&mut dh, &dgu, 0, i, r);
        }

        let cache = enc.cache.as_ref().expect("encoder recorded");
        let dh0 = attention::backward(&dh, &params.encoder, cfg.heads, &enc.segments, cache, &mut grad.encoder);
        gemm(T::ONE, enc.feats.view().t(), dh0.view(), T::ONE, grad.input_w.view_mut());
        dh0.col_sums_into(grad.input_b.as_mut_slice());
        Ok(grad)
    }
}

fn transpose<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    Matrix::from_fn(m.cols(), m.rows(), |i, j| m.get(j, i))
}
