//! Supervised training on labeled solutions.
//!
//! Each labeled instance is replayed as a teacher-forced episode: nodes are
//! picked by the usual selector, the label decides where each one belongs
//! ([`target_position`]) and the node is inserted there, so the partial
//! always stays a sub-cycle of the label. The loss is the mean negative log
//! probability of the target positions.

mod gradcheck;
mod optim;
mod target;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

pub use gradcheck::{gradient_check, GroupCheck, NORM_FLOOR};
pub use optim::Adam;
pub use target::target_position;

use crate::construct::{InsertionState, NodeSelector, Position};
use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{decode_step, encode, step_tokens, Episode, ModelConfig, ModelParams, Scalar, Tape, LOG_FLOOR};
use crate::rng::{self, Rng};
use crate::solution::CyclicSolution;

/// An instance with its reference solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub instance: Instance,
    pub label: CyclicSolution,
}

impl LabeledExample {
    pub fn new(instance: Instance, label: CyclicSolution) -> Result<Self> {
        label.validate(&instance)?;
        Ok(LabeledExample { instance, label })
    }
}

impl TryFrom<DatasetRecord> for LabeledExample {
    type Error = Error;

    fn try_from(r: DatasetRecord) -> Result<Self> {
        let label = r.label.ok_or_else(|| Error::InvalidSolution(format!("{} has no label", r.instance.name())))?;
        LabeledExample::new(r.instance, label)
    }
}

/// `-ln max(p[target], 1e-12)`.
pub fn loss(p: &[f64], target: usize) -> f64 {
    -p[target].max(LOG_FLOOR).ln()
}

fn start_state<'a>(inst: &'a Instance, rng: &mut Rng) -> Result<InsertionState<'a>> {
    if inst.is_cvrp() {
        InsertionState::cvrp_start(inst)
    } else {
        InsertionState::tsp_start(inst, rng.gen_range(0..inst.len()))
    }
}

/// Replays `label` with teacher forcing and records every step's token set
/// and target. Steps whose target was removed by the neighborhood filter
/// are inserted but not recorded.
pub fn teacher_episode<'a>(
    inst: &'a Instance,
    label: &CyclicSolution,
    config: &ModelConfig,
    selector: NodeSelector,
    rng: &mut Rng,
) -> Result<Episode<'a>> {
    let mut state = start_state(inst, rng)?;
    let mut steps = Vec::with_capacity(inst.len());
    let mut targets = Vec::with_capacity(inst.len());
    while !state.unvisited().is_empty() {
        state.select_next_node(selector, rng)?;
        let target = target_position(label, &state)?;
        let tokens = step_tokens(&state, config)?;
        let full = state.all_positions().iter().position(|&(p, _)| p == target).ok_or(Error::InconsistentPartial)?;
        if let Some(kept) = tokens.kept_index(full) {
            steps.push(tokens);
            targets.push(kept);
        }
        state.insert(target)?;
    }
    Ok(Episode { instance: inst, steps, targets })
}

/// One teacher-forced step as seen by the model.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Visited part before the insertion.
    pub partial: CyclicSolution,
    pub current: usize,
    pub target: Position,
    /// Probabilities aligned with the state's `all_positions`.
    pub probs: Vec<f64>,
    pub target_index: usize,
}

/// Teacher-forced rollout with the model's distribution at every step.
pub fn rollout_training_episode(
    example: &LabeledExample,
    params: &ModelParams<f32>,
    selector: NodeSelector,
    rng: &mut Rng,
) -> Result<Vec<StepRecord>> {
    let inst = &example.instance;
    let h = encode(params, inst)?;
    let mut state = start_state(inst, rng)?;
    let mut out = Vec::with_capacity(inst.len());
    while !state.unvisited().is_empty() {
        let current = state.select_next_node(selector, rng)?;
        let target = target_position(&example.label, &state)?;
        let probs = decode_step(params, &h, &state)?;
        let target_index =
            state.all_positions().iter().position(|&(p, _)| p == target).ok_or(Error::InconsistentPartial)?;
        out.push(StepRecord { partial: state.partial_solution(), current, target, probs, target_index });
        state.insert(target)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Initial learning rate.
    pub lr: f64,
    /// Learning-rate factor applied after every epoch.
    pub decay: f64,
    pub epochs: usize,
    /// Episodes per optimizer step.
    pub batch_size: usize,
    /// Train on this many random steps per episode instead of all of them.
    pub steps_per_episode: Option<usize>,
    pub selector: NodeSelector,
    /// Episodes per gradient chunk. Chunks are the unit of parallel work and
    /// are reduced in a fixed order, so results do not depend on the thread
    /// count.
    pub chunk: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 1e-4,
            decay: 0.97,
            epochs: 50,
            batch_size: 1024,
            steps_per_episode: None,
            selector: NodeSelector::NearestEuclid,
            chunk: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

/// Parameters plus optimizer and schedule state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    pub adam: Adam,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
}

impl TrainState {
    pub fn new(params: ModelParams<f32>, lr: f64) -> Self {
        TrainState { adam: Adam::new(&params), params, lr, epoch: 0, history: Vec::new() }
    }
}

/// Mean loss and its gradient over `episodes`, computed chunk by chunk.
pub fn loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    episodes: &[Episode<'_>],
    chunk: usize,
) -> Result<(f64, ModelParams<T>)> {
    let total: usize = episodes.iter().map(|e| e.steps.len()).sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let parts: Vec<Result<Option<(usize, f64, ModelParams<T>)>>> = episodes
        .par_chunks(chunk.max(1))
        .map(|eps| {
            let steps: usize = eps.iter().map(|e| e.steps.len()).sum();
            if steps == 0 {
                return Ok(None);
            }
            let mut tape = Tape::new();
            let l = tape.forward(params, eps)?;
            Ok(Some((steps, l, tape.backward(params)?)))
        })
        .collect();
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for part in parts {
        if let Some((steps, l, g)) = part? {
            let w = steps as f64 / total as f64;
            loss += w * l;
            grad.axpy(T::from_f64(w), &g);
        }
    }
    Ok((loss, grad))
}

/// Mean teacher-forced loss over `examples` without updating anything.
pub fn evaluate_loss(
    params: &ModelParams<f32>,
    examples: &[LabeledExample],
    selector: NodeSelector,
    rng: &mut Rng,
) -> Result<f64> {
    let episodes = examples
        .iter()
        .map(|e| teacher_episode(&e.instance, &e.label, &params.config, selector, rng))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = episodes.iter().map(|e| e.steps.len()).sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let parts = episodes
        .par_chunks(32)
        .map(|eps| -> Result<f64> {
            let steps: usize = eps.iter().map(|e| e.steps.len()).sum();
            if steps == 0 {
                return Ok(0.0);
            }
            Ok(Tape::new().forward(params, eps)? * steps as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum::<f64>() / total as f64)
}

fn subsample<'a>(mut e: Episode<'a>, keep: usize, rng: &mut Rng) -> Episode<'a> {
    if keep >= e.steps.len() {
        return e;
    }
    let mut idx: Vec<usize> = (0..e.steps.len()).collect();
    idx.shuffle(rng);
    idx.truncate(keep);
    idx.sort_unstable();
    let steps = std::mem::take(&mut e.steps);
    let mut slots: Vec<Option<_>> = steps.into_iter().map(Some).collect();
    e.steps = idx.iter().map(|&i| slots[i].take().unwrap()).collect();
    e.targets = idx.iter().map(|&i| e.targets[i]).collect();
    e
}

/// Trains from scratch with freshly initialized parameters.
pub fn train(
    dataset: &[LabeledExample],
    config: ModelConfig,
    options: &TrainOptions,
    rng: &mut Rng,
) -> Result<TrainState> {
    let params = ModelParams::init(config, rng)?;
    train_with(TrainState::new(params, options.lr), dataset, options, rng, |_, _| Ok(()))
}

/// Runs `options.epochs` more epochs from `state`. `on_epoch` sees each
/// epoch's statistics and the updated state.
pub fn train_with(
    mut state: TrainState,
    dataset: &[LabeledExample],
    options: &TrainOptions,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(&EpochStats, &TrainState) -> Result<()>,
) -> Result<TrainState> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let config = state.params.config;
    for _ in 0..options.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(rng);
        let (mut loss_sum, mut steps_sum) = (0.0, 0usize);
        for batch in order.chunks(options.batch_size.max(1)) {
            let episodes = batch
                .iter()
                .map(|&i| {
                    let ex = &dataset[i];
                    let e = teacher_episode(&ex.instance, &ex.label, &config, options.selector, rng)?;
                    Ok(match options.steps_per_episode {
                        Some(k) => subsample(e, k, rng),
                        None => e,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let steps: usize = episodes.iter().map(|e| e.steps.len()).sum();
            if steps == 0 {
                continue;
            }
            let (l, grad) = loss_and_grad(&state.params, &episodes, options.chunk)?;
            state.adam.step(&mut state.params, &grad, state.lr);
            loss_sum += l * steps as f64;
            steps_sum += steps;
        }
        let stats = EpochStats {
            epoch: state.epoch + 1,
            mean_loss: if steps_sum > 0 { loss_sum / steps_sum as f64 } else { 0.0 },
            lr: state.lr,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("epoch {} loss {:.5} lr {:.3e} ({:.1}s)", stats.epoch, stats.mean_loss, stats.lr, stats.wall_seconds);
        state.epoch += 1;
        state.lr *= options.decay;
        state.history.push(stats);
        on_epoch(&stats, &state)?;
    }
    Ok(state)
}

/// Writes the per-epoch log as CSV: `epoch,mean_loss,lr,wall_seconds`.
pub fn write_log_csv(path: impl AsRef<Path>, history: &[EpochStats]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,mean_loss,lr,wall_seconds")?;
    for s in history {
        writeln!(f, "{},{},{},{:.3}", s.epoch, s.mean_loss, s.lr, s.wall_seconds)?;
    }
    f.flush()?;
    Ok(())
}

/// Per-example episode streams, so a dataset can be replayed identically.
pub fn episode_rng(seed: u64, index: usize) -> Rng {
    rng::fork(seed, index as u64)
}
