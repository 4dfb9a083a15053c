//! Multi-trial experiment helpers: initialization, per-trial seeds and
//! quantile aggregation of error curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::optimizer::{EpochTrace, OptimizerConfig};
use crate::synth::SynthConfig;

pub const DEFAULT_INIT_SCALE: f64 = 0.1;
pub const DEFAULT_DIM: usize = 10;
/// Training-error level used for time-to-target measurements.
pub const TIME_TO_TARGET_ERROR: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub synth: SynthConfig,
    pub model: LossModel,
    pub optimizer: OptimizerConfig,
    pub trials: usize,
    pub dim: usize,
    pub init_scale: f64,
    pub output_dir: std::path::PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::usage("trials must be >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::usage("embedding dimension must be >= 1"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::usage(format!("init scale must be > 0, got {}", self.init_scale)));
        }
        self.model.validate()?;
        self.optimizer.validate()
    }
}

/// `n x d` matrix of i.i.d. `N(0, scale^2)` entries.
///
/// Draws standard normals and multiplies by `scale`, so for a fixed seed the
/// result is exactly linear in `scale`.
pub fn init_embedding(n: usize, d: usize, seed: u64, scale: f64) -> Result<EmbeddingMatrix> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::usage(format!("init scale must be > 0, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    EmbeddingMatrix::from_vec(n, d, values)
}

/// Seed for trial `t`: initialization and optimizer streams differ per trial.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    // splitmix64 step so neighbouring trials get unrelated streams
    let mut z = base.wrapping_add((trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Linear-interpolation quantile of a sorted, non-empty slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and inter-quartile band of one epoch across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub epoch: usize,
    pub grad_evals: u64,
    pub trials: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Aggregates test error (train error when no test set) across trials, one
/// row per epoch. Trials that stopped early contribute only the epochs they completed.
pub fn aggregate_errors(runs: &[Vec<EpochTrace>]) -> Vec<AggregateRow> {
    let epochs = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let mut vals: Vec<f64> =
                runs.iter().filter_map(|r| r.get(e)).map(|t| t.test_error.unwrap_or(t.train_error)).collect();
            vals.sort_by(f64::total_cmp);
            let grad_evals = runs.iter().find_map(|r| r.get(e)).map_or(0, |t| t.grad_evals);
            AggregateRow {
                epoch: e,
                grad_evals,
                trials: vals.len(),
                q25: quantile(&vals, 0.25),
                median: quantile(&vals, 0.5),
                q75: quantile(&vals, 0.75),
            }
        })
        .collect()
}

pub fn format_aggregate(rows: &[AggregateRow]) -> String {
    let mut s = String::from("epoch,grad_evals,trials,q25,median,q75\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:?},{:?},{:?}\n", r.epoch, r.grad_evals, r.trials, r.q25, r.median, r.q75));
    }
    s
}

/// Elapsed milliseconds at the first epoch whose training error is at most
/// `target`, if any.
pub fn time_to_target(traces: &[EpochTrace], target: f64) -> Option<f64> {
    traces.iter().find(|t| t.train_error <= target).map(|t| t.elapsed_ms)
}
