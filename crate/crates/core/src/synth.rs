//! Synthetic ground truth and comparison sampling.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::{squared_distance, Comparison, ComparisonSet, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d_true: usize,
    pub variance: f64,
    pub num_train: usize,
    #[serde(default)]
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 100, d_true: 10, variance: 1.0 / 20.0, num_train: 10_000, noise_fraction: 0.0, seed: 0 }
    }
}

impl SynthConfig {
    /// `n (n-1) (n-2) / 2`: one triplet per anchor and unordered pair.
    pub fn total_triplets(&self) -> usize {
        total_triplets(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::usage(format!("need n >= 3 to form triplets, got {}", self.n)));
        }
        if self.d_true < 1 {
            return Err(Error::usage("d_true must be >= 1"));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::usage(format!("variance must be > 0, got {}", self.variance)));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::usage(format!("noise_fraction must lie in [0, 1], got {}", self.noise_fraction)));
        }
        if self.num_train > self.total_triplets() {
            return Err(Error::usage(format!(
                "num_train {} exceeds the {} available triplets",
                self.num_train,
                self.total_triplets()
            )));
        }
        Ok(())
    }
}

pub fn total_triplets(n: usize) -> usize {
    n * n.saturating_sub(1) * n.saturating_sub(2) / 2
}

/// `n x d_true` matrix of i.i.d. `N(0, variance)` entries.
pub fn generate_points(cfg: &SynthConfig) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.variance.sqrt()).map_err(|e| Error::usage(e.to_string()))?;
    let values = (0..cfg.n * cfg.d_true).map(|_| normal.sample(&mut rng)).collect();
    EmbeddingMatrix::from_vec(cfg.n, cfg.d_true, values)
}

/// All triplets of `x`, plus the number of exact distance ties encountered.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub comparisons: ComparisonSet,
    /// Pairs `{j, k}` with `d2(i,j) == d2(i,k)`; oriented as `(i, j, k)` with `j < k`.
    pub ties: usize,
}

/// For every anchor `i` and unordered pair `{j, k}` not containing `i`, emits
/// `(i, j, i, k)` oriented so that `d2(i,j) < d2(i,k)` under `x`.
pub fn enumerate_triplets(x: &EmbeddingMatrix) -> Enumeration {
    let n = x.n();
    let mut out = Vec::with_capacity(total_triplets(n));
    let mut ties = 0;
    let mut dist = vec![0.0; n];
    for i in 0..n {
        for (j, slot) in dist.iter_mut().enumerate() {
            *slot = squared_distance(x, i, j);
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in j + 1..n {
                if k == i {
                    continue;
                }
                if dist[j] == dist[k] {
                    ties += 1;
                }
                if dist[k] < dist[j] {
                    out.push(Comparison::triplet(i, k, j));
                } else {
                    out.push(Comparison::triplet(i, j, k));
                }
            }
        }
    }
    Enumeration { comparisons: ComparisonSet::from_trusted(n, out), ties }
}

/// Uniformly samples `num_train` comparisons without replacement; the rest
/// form the test set. Both keep the original relative order.
pub fn split(set: &ComparisonSet, num_train: usize, seed: u64) -> Result<(ComparisonSet, ComparisonSet)> {
    if num_train > set.len() {
        return Err(Error::usage(format!("num_train {num_train} exceeds the {} comparisons available", set.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; set.len()];
    for idx in index::sample(&mut rng, set.len(), num_train) {
        in_train[idx] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(num_train), Vec::with_capacity(set.len() - num_train));
    for (c, &t) in set.iter().zip(&in_train) {
        if t {
            train.push(*c);
        } else {
            test.push(*c);
        }
    }
    Ok((ComparisonSet::from_trusted(set.n(), train), ComparisonSet::from_trusted(set.n(), test)))
}

/// Number of comparisons [`inject_noise`] flips for a set of `len` comparisons.
pub fn noise_count(len: usize, fraction: f64) -> usize {
    ((fraction * len as f64).round() as usize).min(len)
}

/// Swaps the two sides of `round(fraction * |P|)` uniformly chosen
/// comparisons; for a triplet this exchanges `j` and `k`.
///
/// Applying it twice with the same seed and fraction restores the input.
pub fn inject_noise(set: &ComparisonSet, fraction: f64, seed: u64) -> Result<(ComparisonSet, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::usage(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = noise_count(set.len(), fraction);
    let mut flipped: Vec<usize> = index::sample(&mut rng, set.len(), count).into_vec();
    flipped.sort_unstable();
    let mut out = set.as_slice().to_vec();
    for &idx in &flipped {
        out[idx] = out[idx].reversed();
    }
    Ok((ComparisonSet::from_trusted(set.n(), out), flipped))
}
