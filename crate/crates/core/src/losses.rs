//! Per-comparison ordinal losses and their finite-sum aggregates.
//!
//! Every model is a function of the two squared distances `d2(i,j)` and
//! `d2(l,k)` only, so its gradient reduces to two scalar coefficients
//! `c_ij = df/d d2(i,j)` and `c_lk = df/d d2(l,k)`. The gradient on the
//! stacked rows `(x_i, x_j, x_l, x_k)` is then
//!
//! ```text
//! x_i: +2 c_ij (x_i - x_j)     x_l: +2 c_lk (x_l - x_k)
//! x_j: -2 c_ij (x_i - x_j)     x_k: -2 c_lk (x_l - x_k)
//! ```
//!
//! which is the `M X_p` block structure, one `2x2` block per side.
//! All losses are in negative-log-likelihood form, so each is
//! non-decreasing in the margin `d2(i,j) - d2(l,k)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{squared_distance, Comparison, ComparisonSet, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Hinge loss `max(0, 1 + margin)`.
    Gnmds,
    /// Scale-invariant crowd-kernel loss.
    Ckl,
    /// Logistic loss `log(1 + exp(margin))`.
    Ste,
    /// Student-t kernel loss.
    Tste,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Gnmds, LossKind::Ckl, LossKind::Ste, LossKind::Tste];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Gnmds => "gnmds",
            LossKind::Ckl => "ckl",
            LossKind::Ste => "ste",
            LossKind::Tste => "tste",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gnmds" => Ok(LossKind::Gnmds),
            "ckl" => Ok(LossKind::Ckl),
            "ste" => Ok(LossKind::Ste),
            "tste" => Ok(LossKind::Tste),
            other => Err(Error::usage(format!("unknown model {other:?}; expected gnmds, ckl, ste or tste"))),
        }
    }
}

/// Loss selector plus hyperparameters. `delta` is used by CKL only,
/// `alpha` by t-STE only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    pub delta: f64,
    pub alpha: f64,
}

impl LossModel {
    /// Model with default hyperparameters for embedding dimension `d`:
    /// `delta = 0.1`, `alpha = max(d - 1, 1)`.
    pub fn new(kind: LossKind, d: usize) -> Self {
        Self { kind, delta: DEFAULT_DELTA, alpha: default_alpha(d) }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LossKind::Ckl if !(self.delta > 0.0 && self.delta.is_finite()) => {
                Err(Error::usage(format!("ckl requires delta > 0, got {}", self.delta)))
            }
            LossKind::Tste if !(self.alpha > 0.0 && self.alpha.is_finite()) => {
                Err(Error::usage(format!("tste requires alpha > 0, got {}", self.alpha)))
            }
            _ => Ok(()),
        }
    }

    /// Loss value from the two squared distances.
    pub fn value_from_distances(&self, d_ij: f64, d_lk: f64) -> f64 {
        match self.kind {
            LossKind::Gnmds => (1.0 + d_ij - d_lk).max(0.0),
            LossKind::Ckl => {
                let delta = self.delta;
                (d_ij + d_lk + 2.0 * delta).ln() - (d_lk + delta).ln()
            }
            LossKind::Ste => softplus(d_ij - d_lk),
            LossKind::Tste => {
                // -log(a / (a + b)) = softplus(log b - log a)
                let (log_a, log_b) = self.student_log_kernels(d_ij, d_lk);
                softplus(log_b - log_a)
            }
        }
    }

    /// `(df/d d2(i,j), df/d d2(l,k))`.
    pub fn distance_coefficients(&self, d_ij: f64, d_lk: f64) -> (f64, f64) {
        match self.kind {
            LossKind::Gnmds => {
                // zero subgradient at the kink
                if 1.0 + d_ij - d_lk > 0.0 {
                    (1.0, -1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            LossKind::Ckl => {
                let total = 1.0 / (d_ij + d_lk + 2.0 * self.delta);
                (total, total - 1.0 / (d_lk + self.delta))
            }
            LossKind::Ste => {
                let s = sigmoid(d_ij - d_lk);
                (s, -s)
            }
            LossKind::Tste => {
                let alpha = self.alpha;
                let (log_a, log_b) = self.student_log_kernels(d_ij, d_lk);
                let s = sigmoid(log_b - log_a);
                let half = 0.5 * (alpha + 1.0);
                (s * half / (alpha + d_ij), -s * half / (alpha + d_lk))
            }
        }
    }

    fn student_log_kernels(&self, d_ij: f64, d_lk: f64) -> (f64, f64) {
        let alpha = self.alpha;
        let e = -0.5 * (alpha + 1.0);
        (e * (d_ij / alpha).ln_1p(), e * (d_lk / alpha).ln_1p())
    }
}

fn default_alpha(d: usize) -> f64 {
    (d.saturating_sub(1)).max(1) as f64
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient of one comparison loss, supported on at most four distinct rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    d: usize,
    rows: Vec<usize>,
    blocks: Vec<f64>,
}

impl SparseGradient {
    fn empty(d: usize) -> Self {
        Self { d, rows: Vec::with_capacity(4), blocks: Vec::with_capacity(4 * d) }
    }

    /// Adds `block` to `row`, merging with an existing entry for the same row.
    fn add(&mut self, row: usize, block: impl Iterator<Item = f64>) {
        let d = self.d;
        let start = match self.rows.iter().position(|&r| r == row) {
            Some(pos) => pos * d,
            None => {
                self.rows.push(row);
                self.blocks.resize(self.blocks.len() + d, 0.0);
                self.blocks.len() - d
            }
        };
        for (dst, v) in self.blocks[start..start + d].iter_mut().zip(block) {
            *dst += v;
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Partial derivatives for `row`, or `None` when the row is outside the support.
    pub fn block(&self, row: usize) -> Option<&[f64]> {
        self.rows.iter().position(|&r| r == row).map(|p| &self.blocks[p * self.d..(p + 1) * self.d])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().copied().zip(self.blocks.chunks(self.d))
    }

    /// `out += scale * self`
    pub fn scatter_into(&self, out: &mut EmbeddingMatrix, scale: f64) {
        for (row, block) in self.iter() {
            for (dst, g) in out.row_mut(row).iter_mut().zip(block) {
                *dst += scale * g;
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> EmbeddingMatrix {
        let mut out = EmbeddingMatrix::zeros(n, self.d);
        self.scatter_into(&mut out, 1.0);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|v| v.is_finite())
    }
}

/// Gradient with respect to the stacked rows `(x_i, x_j, x_l, x_k)` in slot
/// order, before rows shared between slots are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGradient {
    pub comparison: Comparison,
    /// `[slot_i, slot_j, slot_l, slot_k]`, each of length `d`.
    pub slots: [Vec<f64>; 4],
}

pub fn slot_gradient(model: &LossModel, x: &EmbeddingMatrix, p: &Comparison) -> SlotGradient {
    let d_ij = squared_distance(x, p.i, p.j);
    let d_lk = squared_distance(x, p.l, p.k);
    let (c_ij, c_lk) = model.distance_coefficients(d_ij, d_lk);
    let pair = |a: usize, b: usize, c: f64| -> (Vec<f64>, Vec<f64>) {
        let plus: Vec<f64> = x.row(a).iter().zip(x.row(b)).map(|(u, v)| 2.0 * c * (u - v)).collect();
        let minus = plus.iter().map(|v| -v).collect();
        (plus, minus)
    };
    let (gi, gj) = pair(p.i, p.j, c_ij);
    let (gl, gk) = pair(p.l, p.k, c_lk);
    SlotGradient { comparison: *p, slots: [gi, gj, gl, gk] }
}

fn check_inputs(model: &LossModel, x: &EmbeddingMatrix, p: &Comparison) -> Result<()> {
    model.validate()?;
    p.validate(x.n())?;
    let finite = p.indices().iter().all(|&r| x.row(r).iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(())
}

/// Loss of comparison `p` under `model`.
pub fn loss_value(model: &LossModel, x: &EmbeddingMatrix, p: &Comparison) -> Result<f64> {
    check_inputs(model, x, p)?;
    Ok(value_unchecked(model, x, p))
}

#[inline]
fn value_unchecked(model: &LossModel, x: &EmbeddingMatrix, p: &Comparison) -> f64 {
    model.value_from_distances(squared_distance(x, p.i, p.j), squared_distance(x, p.l, p.k))
}

/// Gradient of the loss of `p`, supported on rows `{i, j, l, k}`.
pub fn loss_gradient(model: &LossModel, x: &EmbeddingMatrix, p: &Comparison) -> Result<SparseGradient> {
    check_inputs(model, x, p)?;
    Ok(gradient_unchecked(model, x, p))
}

pub(crate) fn gradient_unchecked(model: &LossModel, x: &EmbeddingMatrix, p: &Comparison) -> SparseGradient {
    let d_ij = squared_distance(x, p.i, p.j);
    let d_lk = squared_distance(x, p.l, p.k);
    let (c_ij, c_lk) = model.distance_coefficients(d_ij, d_lk);
    let mut g = SparseGradient::empty(x.d());
    for (a, b, c) in [(p.i, p.j, c_ij), (p.l, p.k, c_lk)] {
        let (xa, xb) = (x.row(a), x.row(b));
        g.add(a, xa.iter().zip(xb).map(|(u, v)| 2.0 * c * (u - v)));
        g.add(b, xa.iter().zip(xb).map(|(u, v)| -2.0 * c * (u - v)));
    }
    g
}

/// Triplet gradient obtained by applying the merge matrix `A` to the
/// quadruplet gradient of `(i, j, i, k)`: the `i` and `l` slots are summed,
/// the `j` and `k` slots pass through.
pub fn triplet_gradient_via_chain_rule(
    model: &LossModel,
    x: &EmbeddingMatrix,
    i: usize,
    j: usize,
    k: usize,
) -> Result<SparseGradient> {
    let p = Comparison::triplet(i, j, k);
    check_inputs(model, x, &p)?;
    let slots = slot_gradient(model, x, &p).slots;
    let d = x.d();
    let mut rows = vec![i, j, k];
    let mut blocks = Vec::with_capacity(3 * d);
    blocks.extend(slots[0].iter().zip(&slots[2]).map(|(a, b)| a + b));
    blocks.extend_from_slice(&slots[1]);
    blocks.extend_from_slice(&slots[3]);
    // j == k is a legal (if uninformative) triplet; keep one block per row
    if j == k {
        rows.pop();
        let tail = blocks.split_off(2 * d);
        for (dst, v) in blocks[d..].iter_mut().zip(tail) {
            *dst += v;
        }
    }
    Ok(SparseGradient { d, rows, blocks })
}

/// Mean loss over `set`.
pub fn full_objective(model: &LossModel, x: &EmbeddingMatrix, set: &ComparisonSet) -> Result<f64> {
    model.validate()?;
    set.ensure_non_empty("full_objective")?;
    set.check_against(x)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("embedding".into()));
    }
    let sum: f64 = set.iter().map(|p| value_unchecked(model, x, p)).sum();
    Ok(sum / set.len() as f64)
}

/// Mean gradient over `set`, scattered into a dense `n x d` matrix.
/// Summation runs in comparison order, so results are bit-reproducible.
pub fn full_gradient(model: &LossModel, x: &EmbeddingMatrix, set: &ComparisonSet) -> Result<EmbeddingMatrix> {
    model.validate()?;
    set.ensure_non_empty("full_gradient")?;
    set.check_against(x)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(full_gradient_unchecked(model, x, set))
}

pub(crate) fn full_gradient_unchecked(model: &LossModel, x: &EmbeddingMatrix, set: &ComparisonSet) -> EmbeddingMatrix {
    let mut out = EmbeddingMatrix::zeros(x.n(), x.d());
    for p in set {
        accumulate_gradient(model, x, p, 1.0, &mut out);
    }
    out.scale(1.0 / set.len() as f64);
    out
}

/// `out += scale * grad f_p(x)` without allocating.
#[inline]
pub(crate) fn accumulate_gradient(
    model: &LossModel,
    x: &EmbeddingMatrix,
    p: &Comparison,
    scale: f64,
    out: &mut EmbeddingMatrix,
) {
    let d_ij = squared_distance(x, p.i, p.j);
    let d_lk = squared_distance(x, p.l, p.k);
    let (c_ij, c_lk) = model.distance_coefficients(d_ij, d_lk);
    let d = x.d();
    for (a, b, c) in [(p.i, p.j, c_ij), (p.l, p.k, c_lk)] {
        if c == 0.0 {
            continue;
        }
        let w = 2.0 * c * scale;
        for t in 0..d {
            let diff = w * (x.get(a, t) - x.get(b, t));
            let out = out.as_mut_slice();
            out[a * d + t] += diff;
            out[b * d + t] -= diff;
        }
    }
}
