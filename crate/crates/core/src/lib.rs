//! Insertion-based construction and improvement for TSP and CVRP.

pub mod construct;
pub mod data;
pub mod error;
pub mod geometry;
pub mod instance;
pub mod model;
pub mod reconstruct;
pub mod rng;
pub mod solution;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/instances.md")]
    struct Instances;
    #[doc = include_str!("../../../book/src/construction.md")]
    struct Construction;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/improvement.md")]
    struct Improvement;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
