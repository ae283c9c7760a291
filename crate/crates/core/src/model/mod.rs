//! The attention model that scores insertion positions.

mod attention;
mod io;
mod network;
mod params;
mod policy;
mod tensor;

pub use attention::{backward as attention_backward, forward as attention_forward, whole, LayerCache, Segment};
pub use io::{load_params, params_from_bytes, params_to_bytes, save_params};
pub use network::{
    decode_probs, decode_step, encode, masked_softmax, node_features, step_tokens, Episode, PositionToken,
    StepTokens, Tape, LOG_FLOOR,
};
pub use params::{AttnWeights, ModelConfig, ModelParams};
pub use policy::{pick_index, DecodeMode, NeuralPolicy};
pub use tensor::{gemm, Matrix, Scalar, View, ViewMut};

/// Single attention layer over one token set.
pub fn attention_layer<T: Scalar>(x: &Matrix<T>, w: &AttnWeights<T>, heads: usize) -> Matrix<T> {
    attention::forward(x, w, heads, &whole(x.rows()), None)
}

#[cfg(test)]
mod tests;
