use rand::Rng as _;

use super::tensor::{Matrix, Scalar};
use crate::error::{Error, Result};
use crate::instance::ProblemKind;
use crate::rng::Rng;

/// Shape and behavior of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ProblemKind,
    /// Embedding width.
    pub d: usize,
    /// Decoder attention layers.
    pub layers: usize,
    pub heads: usize,
    /// Hidden width of the feed-forward sublayers.
    pub d_ff: usize,
    /// Whether unvisited nodes other than the current one enter the decoder.
    pub include_unvisited: bool,
    /// Keep only this many nearest positions and unvisited nodes per step.
    pub k_filter: Option<usize>,
}

impl ModelConfig {
    /// Full-size configuration: 128-wide, 9 decoder layers of 8 heads.
    pub fn full(kind: ProblemKind) -> Self {
        ModelConfig {
            kind,
            d: 128,
            layers: 9,
            heads: 8,
            d_ff: 512,
            include_unvisited: true,
            k_filter: Some(match kind {
                ProblemKind::Tsp => 100,
                ProblemKind::Cvrp => 200,
            }),
        }
    }

    /// Single-CPU configuration: 64-wide, 3 decoder layers of 4 heads.
    pub fn desk(kind: ProblemKind) -> Self {
        ModelConfig { d: 64, layers: 3, heads: 4, d_ff: 256, ..Self::full(kind) }
    }

    /// Node feature count: `(x, y)` or `(x, y, demand / capacity)`.
    pub fn input_dim(&self) -> usize {
        match self.kind {
            ProblemKind::Tsp => 2,
            ProblemKind::Cvrp => 3,
        }
    }

    /// Width of a position's concatenated endpoint embeddings.
    pub fn position_dim(&self) -> usize {
        match self.kind {
            ProblemKind::Tsp => 2 * self.d,
            ProblemKind::Cvrp => 2 * self.d + 1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::ShapeMismatch(format!("d={} not divisible by heads={}", self.d, self.heads)));
        }
        if self.layers == 0 || self.d_ff == 0 {
            return Err(Error::ShapeMismatch("need at least one layer and d_ff > 0".into()));
        }
        if self.k_filter == Some(0) {
            return Err(Error::ShapeMismatch("k_filter must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of one attention layer. Heads are column blocks of the
/// query/key/value maps.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnWeights<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

impl<T: Scalar> AttnWeights<T> {
    pub fn zeros(d: usize, d_ff: usize) -> Self {
        AttnWeights {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            w1: Matrix::zeros(d, d_ff),
            b1: Matrix::zeros(1, d_ff),
            w2: Matrix::zeros(d_ff, d),
            b2: Matrix::zeros(1, d),
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix<T>)>) {
        for (n, m) in [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("ff1.w", &self.w1),
            ("ff1.b", &self.b1),
            ("ff2.w", &self.w2),
            ("ff2.b", &self.b2),
        ] {
            out.push((format!("{prefix}.{n}"), m));
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix<T>)>) {
        for (n, m) in [
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("ff1.w", &mut self.w1),
            ("ff1.b", &mut self.b1),
            ("ff2.w", &mut self.w2),
            ("ff2.b", &mut self.b2),
        ] {
            out.push((format!("{prefix}.{n}"), m));
        }
    }
}

/// All learnable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    /// Node features to embeddings.
    pub input_w: Matrix<T>,
    pub input_b: Matrix<T>,
    pub encoder: AttnWeights<T>,
    /// Decoder input maps for the current node, unvisited nodes and
    /// positions. No biases.
    pub current_w: Matrix<T>,
    pub unvisited_w: Matrix<T>,
    pub position_w: Matrix<T>,
    pub layers: Vec<AttnWeights<T>>,
    /// Per-position logit.
    pub head_w: Matrix<T>,
    pub head_b: Matrix<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        Ok(ModelParams {
            config,
            input_w: Matrix::zeros(config.input_dim(), d),
            input_b: Matrix::zeros(1, d),
            encoder: AttnWeights::zeros(d, config.d_ff),
            current_w: Matrix::zeros(d, d),
            unvisited_w: Matrix::zeros(d, d),
            position_w: Matrix::zeros(config.position_dim(), d),
            layers: (0..config.layers).map(|_| AttnWeights::zeros(d, config.d_ff)).collect(),
            head_w: Matrix::zeros(d, 1),
            head_b: Matrix::zeros(1, 1),
        })
    }

    /// Weights uniform in `±1/sqrt(d)`, biases zero.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let bound = 1.0 / (config.d as f64).sqrt();
        for (name, m) in p.tensors_mut() {
            if !name.ends_with(".b") {
                for v in m.as_mut_slice() {
                    *v = T::from_f64(rng.gen_range(-bound..bound));
                }
            }
        }
        Ok(p)
    }

    /// Every tensor with a stable name, in file order.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![("input.w".to_string(), &self.input_w), ("input.b".to_string(), &self.input_b)];
        self.encoder.tensors("encoder", &mut out);
        out.push(("decoder.current.w".into(), &self.current_w));
        out.push(("decoder.unvisited.w".into(), &self.unvisited_w));
        out.push(("decoder.position.w".into(), &self.position_w));
        for (i, l) in self.layers.iter().enumerate() {
            l.tensors(&format!("layer{i}"), &mut out);
        }
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out =
            vec![("input.w".to_string(), &mut self.input_w), ("input.b".to_string(), &mut self.input_b)];
        self.encoder.tensors_mut("encoder", &mut out);
        out.push(("decoder.current.w".into(), &mut self.current_w));
        out.push(("decoder.unvisited.w".into(), &mut self.unvisited_w));
        out.push(("decoder.position.w".into(), &mut self.position_w));
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.tensors_mut(&format!("layer{i}"), &mut out);
        }
        out.push(("head.w".into(), &mut self.head_w));
        out.push(("head.b".into(), &mut self.head_b));
        out
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.config).expect("config already validated");
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.map(|v| U::from_f64(v.to_f64()));
        }
        out
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn axpy(&mut self, scale: T, other: &ModelParams<T>) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.as_slice().iter().all(|v| v.to_f64().is_finite()))
    }
}
