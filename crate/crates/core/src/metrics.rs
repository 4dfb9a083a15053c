//! Held-out violation rate and retrieval metrics.
//!
//! Retrieval: every object acts as a query once; the other `n - 1` objects
//! are ranked by squared distance (ties by index) and an item is relevant
//! when it shares the query's label. The query itself is never ranked.
//! Queries whose class has no other member have nothing to retrieve and
//! score 0 on recall and AP.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{margin, squared_distance, ComparisonSet, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Default rank cutoff for average precision.
pub const DEFAULT_AP_CUTOFF: usize = 40;

/// Fraction of comparisons violated by `x`; a zero margin counts as a violation.
pub fn generalization_error(x: &EmbeddingMatrix, test: &ComparisonSet) -> Result<f64> {
    test.ensure_non_empty("generalization_error")?;
    test.check_against(x)?;
    Ok(violation_fraction(x, test))
}

pub(crate) fn violation_fraction(x: &EmbeddingMatrix, set: &ComparisonSet) -> f64 {
    let violated = set.iter().filter(|p| margin(x, p) >= 0.0).count();
    violated as f64 / set.len() as f64
}

/// Embedding paired with one class label per object.
#[derive(Debug, Clone)]
pub struct LabeledEmbedding {
    x: EmbeddingMatrix,
    labels: Vec<String>,
    class_sizes: HashMap<String, usize>,
}

impl LabeledEmbedding {
    pub fn new<L: ToString>(x: EmbeddingMatrix, labels: &[L]) -> Result<Self> {
        if labels.len() != x.n() {
            return Err(Error::usage(format!(
                "label count {} does not match embedding rows {}",
                labels.len(),
                x.n()
            )));
        }
        let labels: Vec<String> = labels.iter().map(ToString::to_string).collect();
        let mut class_sizes = HashMap::new();
        for l in &labels {
            *class_sizes.entry(l.clone()).or_insert(0) += 1;
        }
        Ok(Self { x, labels, class_sizes })
    }

    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    /// Number of relevant items for `query` (same class, excluding itself).
    pub fn relevant_count(&self, query: usize) -> usize {
        self.class_sizes[&self.labels[query]] - 1
    }

    fn is_relevant(&self, query: usize, item: usize) -> bool {
        self.labels[query] == self.labels[item]
    }
}

/// The other `n - 1` indices sorted by squared distance to `query`, ties by index.
pub fn retrieval_ranking(data: &LabeledEmbedding, query: usize) -> Result<Vec<usize>> {
    data.x.check_index(query)?;
    Ok(ranking(&data.x, query))
}

fn ranking(x: &EmbeddingMatrix, query: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> =
        (0..x.n()).filter(|&i| i != query).map(|i| (squared_distance(x, query, i), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, i)| i).collect()
}

fn check_k(k: usize, n: usize, what: &str) -> Result<()> {
    if k == 0 || k > n - 1 {
        return Err(Error::usage(format!("{what} = {k} out of range [1, {}]", n - 1)));
    }
    Ok(())
}

/// Per-query relevance flags in rank order.
fn relevance_lists(data: &LabeledEmbedding) -> Vec<Vec<bool>> {
    (0..data.n())
        .map(|q| ranking(&data.x, q).into_iter().map(|i| data.is_relevant(q, i)).collect())
        .collect()
}

fn precision_recall(hits: &[bool], relevant: usize, k: usize) -> (f64, f64) {
    let tp = hits[..k].iter().filter(|&&h| h).count() as f64;
    let recall = if relevant == 0 { 0.0 } else { tp / relevant as f64 };
    (tp / k as f64, recall)
}

/// `sum_q p(q) * dr(q)` over ranks `1..=cutoff`; `dr(q)` is `1/relevant` at hits.
fn average_precision(hits: &[bool], relevant: usize, cutoff: usize) -> f64 {
    if relevant == 0 {
        return 0.0;
    }
    let step = 1.0 / relevant as f64;
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (rank, &hit) in hits[..cutoff].iter().enumerate() {
        if hit {
            tp += 1;
            ap += (tp as f64 / (rank + 1) as f64) * step;
        }
    }
    ap
}

/// Mean Precision@K and Recall@K over all queries.
pub fn precision_recall_at_k(data: &LabeledEmbedding, k: usize) -> Result<(f64, f64)> {
    check_k(k, data.n(), "K")?;
    let lists = relevance_lists(data);
    let (p, r) = lists.iter().enumerate().fold((0.0, 0.0), |(p, r), (q, hits)| {
        let (pq, rq) = precision_recall(hits, data.relevant_count(q), k);
        (p + pq, r + rq)
    });
    let n = data.n() as f64;
    Ok((p / n, r / n))
}

/// Mean over queries of average precision truncated at rank `k_max`.
pub fn mean_average_precision(data: &LabeledEmbedding, k_max: usize) -> Result<f64> {
    check_k(k_max, data.n(), "K_max")?;
    let lists = relevance_lists(data);
    let total: f64 = lists.iter().enumerate().map(|(q, hits)| average_precision(hits, data.relevant_count(q), k_max)).sum();
    Ok(total / data.n() as f64)
}

/// Point on the precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub k_max: usize,
    /// Per-query AP truncated at `k_max`.
    pub average_precision: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub map: f64,
}

impl RankingReport {
    /// Computes AP per query and the P@K/R@K curve for `k_range`, ranking each query once.
    pub fn compute(data: &LabeledEmbedding, k_range: std::ops::RangeInclusive<usize>, k_max: usize) -> Result<Self> {
        let n = data.n();
        check_k(k_max, n, "K_max")?;
        check_k(*k_range.start(), n, "K")?;
        check_k(*k_range.end(), n, "K")?;
        let lists = relevance_lists(data);
        let average_precision: Vec<f64> =
            lists.iter().enumerate().map(|(q, hits)| average_precision(hits, data.relevant_count(q), k_max)).collect();
        let curve = k_range
            .map(|k| {
                let (p, r) = lists.iter().enumerate().fold((0.0, 0.0), |(p, r), (q, hits)| {
                    let (pq, rq) = precision_recall(hits, data.relevant_count(q), k);
                    (p + pq, r + rq)
                });
                CurvePoint { k, precision: p / n as f64, recall: r / n as f64 }
            })
            .collect();
        let map = average_precision.iter().sum::<f64>() / n as f64;
        Ok(Self { k_max, average_precision, curve, map })
    }
}
