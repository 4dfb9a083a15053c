//! Ordinal embedding from relative similarity comparisons.
//!
//! Embeddings are learned directly in `R^{n x d}` (no Gram matrix, no PSD
//! projection) by minimizing a finite-sum of per-comparison losses. The main
//! solver is SVRG driven by a stabilized Barzilai-Borwein step size; SGD,
//! fixed-step SVRG and batch gradient descent are provided as baselines.
//!
//! Modules:
//!
//! - [`embedding`]: the embedding matrix, comparisons and distance/margin primitives
//! - [`losses`]: GNMDS / CKL / STE / t-STE losses with sparse analytic gradients
//! - [`optimizer`]: SVRG-SBB and baselines, step-size rules, per-epoch traces
//! - [`synth`]: synthetic ground truth, triplet enumeration, splitting, noise
//! - [`metrics`]: held-out violation rate and retrieval metrics (P@K, R@K, MAP)
//! - [`experiment`]: multi-trial orchestration helpers shared by the CLI
//! - [`io`]: text formats for comparisons, embeddings, labels and traces

pub mod embedding;
pub mod error;
pub mod experiment;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod synth;

pub use embedding::{margin, squared_distance, Comparison, ComparisonSet, EmbeddingMatrix};
pub use error::{Error, Result};
pub use losses::{LossKind, LossModel, SparseGradient};
pub use metrics::{LabeledEmbedding, RankingReport};
pub use optimizer::{EpochTrace, Method, OptimizerConfig, OutputRule, RunOutput};
pub use synth::SynthConfig;
