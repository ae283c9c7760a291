use std::sync::Arc;

use rand::Rng as _;

use super::network::{decode_probs, encode, step_tokens};
use super::params::ModelParams;
use super::tensor::Matrix;
use crate::construct::{InsertionState, Position, PositionPolicy};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::rng::Rng;

/// How a position is drawn from the model's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// Most probable position; the first one on ties.
    #[default]
    Greedy,
    /// Categorical sample.
    Sample,
}

/// Position policy backed by a trained network. Node embeddings are computed
/// once per instance and reused across steps and repair rounds.
#[derive(Debug, Clone)]
pub struct NeuralPolicy {
    params: Arc<ModelParams<f32>>,
    mode: DecodeMode,
    encoded: Option<(Instance, Matrix<f32>)>,
}

impl NeuralPolicy {
    pub fn new(params: Arc<ModelParams<f32>>, mode: DecodeMode) -> Self {
        NeuralPolicy { params, mode, encoded: None }
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    fn embeddings(&mut self, inst: &Instance) -> Result<&Matrix<f32>> {
        if !matches!(&self.encoded, Some((cached, _)) if cached == inst) {
            let h = encode(&self.params, inst)?;
            self.encoded = Some((inst.clone(), h));
        }
        Ok(&self.encoded.as_ref().expect("just encoded").1)
    }
}

/// Index drawn from `p` (argmax with first-index ties, or a sample).
pub fn pick_index(p: &[f64], mode: DecodeMode, rng: &mut Rng) -> Option<usize> {
    match mode {
        DecodeMode::Greedy => {
            let mut best: Option<(usize, f64)> = None;
            for (i, &v) in p.iter().enumerate() {
                if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            best.map(|(i, _)| i)
        }
        DecodeMode::Sample => {
            let total: f64 = p.iter().sum();
            if total <= 0.0 {
                return None;
            }
            let mut u = rng.gen::<f64>() * total;
            let mut last = None;
            for (i, &v) in p.iter().enumerate() {
                if v > 0.0 {
                    if u < v {
                        return Some(i);
                    }
                    u -= v;
                    last = Some(i);
                }
            }
            last
        }
    }
}

impl PositionPolicy for NeuralPolicy {
    fn prepare(&mut self, instance: &Instance) -> Result<()> {
        self.embeddings(instance).map(|_| ())
    }

    fn choose(&mut self, state: &InsertionState<'_>, rng: &mut Rng) -> Result<Position> {
        let params = Arc::clone(&self.params);
        let tokens = step_tokens(state, &params.config)?;
        let h = self.embeddings(state.instance())?;
        let p = decode_probs(&params, h, &[&tokens]).pop().expect("one step");
        let kept = pick_index(&p, self.mode, rng).ok_or(Error::NoValidPosition)?;
        Ok(state.all_positions()[tokens.source[kept]].0)
    }
}
