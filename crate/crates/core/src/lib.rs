//! Robust multi-modal MeanShift for test-time augmentation.
//!
//! Given the embeddings of `N` augmented views of one image and the text
//! embeddings of `K` classes, [`mta_solve`] finds a mode of the kernel density
//! of the views while jointly estimating an inlierness score for every view.
//! Scores live on the probability simplex and are coupled through the
//! agreement of the views' zero-shot predictions, so degenerate views lose
//! their weight. The class prediction is the cosine argmax of the mode.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the CLI and benchmarks use.

// `!(x >= y)` is used deliberately so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affinity;
pub mod bandwidth;
pub mod bundle;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod predict;
pub mod scalar;
pub mod solver;
pub mod synthetic;

pub use affinity::{AffinityKind, AffinityMatrix, DiagonalMode};
pub use bandwidth::BandwidthVector;
pub use embedding::{ClassEmbeddings, EmbeddingSet, PredictionMatrix};
pub use error::{MtaError, Result};
pub use linalg::Matrix;
pub use predict::{Method, PredictionReport};
pub use scalar::Scalar;
pub use solver::{
    mta_solve, ConvergenceTrace, Filtering, Hyperparams, InliernessVector, ModeState, ModeUpdate,
    MtaProblem, MtaSolution, SolverFlag,
};

pub type Matrix64 = Matrix<f64>;
pub type EmbeddingSet64 = EmbeddingSet<f64>;
pub type ClassEmbeddings64 = ClassEmbeddings<f64>;
pub type MtaSolution64 = MtaSolution<f64>;
pub type PredictionReport64 = PredictionReport<f64>;

pub type Matrix32 = Matrix<f32>;
pub type EmbeddingSet32 = EmbeddingSet<f32>;
pub type ClassEmbeddings32 = ClassEmbeddings<f32>;
pub type MtaSolution32 = MtaSolution<f32>;
pub type PredictionReport32 = PredictionReport<f32>;
