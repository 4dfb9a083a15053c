//! SVRG with the stabilized Barzilai-Borwein step size, plus the SGD,
//! fixed-step SVRG and batch gradient descent baselines.
//!
//! Every method reports one [`EpochTrace`] per epoch. An SVRG epoch costs
//! `N + 2m` per-comparison gradient evaluations (one full pass for the
//! snapshot gradient, two stochastic gradients per inner step). The
//! baselines are given the same per-epoch budget so traces line up on
//! `grad_evals`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{ComparisonSet, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::losses::{accumulate_gradient, full_gradient_unchecked, gradient_unchecked, LossModel};
use crate::metrics::violation_fraction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SvrgSbb,
    SvrgFixed,
    Sgd,
    Batch,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SvrgSbb, Method::SvrgFixed, Method::Sgd, Method::Batch];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SvrgSbb => "svrg-sbb",
            Method::SvrgFixed => "svrg-fixed",
            Method::Sgd => "sgd",
            Method::Batch => "batch",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::usage(format!("unknown method {s:?}; expected svrg-sbb, svrg-fixed, sgd or batch")))
    }
}

/// Which iterate `run` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    #[default]
    LastIterate,
    /// Uniform draw over every inner iterate of every epoch (reservoir sampled).
    UniformRandomIterate,
}

impl FromStr for OutputRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last-iterate" => Ok(OutputRule::LastIterate),
            "uniform-random-iterate" => Ok(OutputRule::UniformRandomIterate),
            other => Err(Error::usage(format!(
                "unknown output rule {other:?}; expected last-iterate or uniform-random-iterate"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Inner-loop length; `None` means one pass, `m = N`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Number of epochs.
    #[serde(rename = "S", alias = "epochs")]
    pub epochs: usize,
    pub epsilon: f64,
    pub eta0: f64,
    pub seed: u64,
    #[serde(default)]
    pub output_rule: OutputRule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::SvrgSbb,
            m: None,
            epochs: 20,
            epsilon: 0.005,
            eta0: 0.1,
            seed: 0,
            output_rule: OutputRule::LastIterate,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::usage(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::usage(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        if self.m == Some(0) {
            return Err(Error::usage("m must be >= 1"));
        }
        Ok(())
    }

    pub fn inner_length(&self, n_comparisons: usize) -> usize {
        self.m.unwrap_or(n_comparisons)
    }
}

/// Per-epoch record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Step size used during this epoch (for SGD the epoch's decayed step).
    pub step_size: f64,
    /// `||grad F||_F` at the start of the epoch.
    pub full_gradient_norm: f64,
    /// Violation fraction on the training comparisons at the end of the epoch.
    pub train_error: f64,
    pub test_error: Option<f64>,
    /// Cumulative per-comparison gradient evaluations.
    pub grad_evals: u64,
    pub elapsed_ms: f64,
    /// Signed plain BB step for the same outer iterates (diagnostic only).
    pub bb_step: Option<f64>,
    /// `||X~^s - X~^{s-1}||_F^2` used for the step.
    pub diff_sq_norm: Option<f64>,
    /// `vec(X~^s - X~^{s-1})^T vec(g^s - g^{s-1})`.
    pub curvature: Option<f64>,
    /// Previous step reused because consecutive outer iterates coincided.
    pub step_reused: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub embedding: EmbeddingMatrix,
    pub traces: Vec<EpochTrace>,
}

/// Stabilized BB step from the two scalar ingredients.
pub fn sbb_from_parts(diff_sq_norm: f64, curvature: f64, m: usize, epsilon: f64) -> Result<f64> {
    if diff_sq_norm == 0.0 {
        return Err(Error::DegenerateStep);
    }
    let denom = m as f64 * (curvature.abs() + epsilon * diff_sq_norm);
    if denom == 0.0 {
        return Err(Error::UnstableStep);
    }
    Ok(diff_sq_norm / denom)
}

fn differences(
    x_cur: &EmbeddingMatrix,
    x_prev: &EmbeddingMatrix,
    g_cur: &EmbeddingMatrix,
    g_prev: &EmbeddingMatrix,
) -> Result<(f64, f64)> {
    if !(x_cur.same_shape(x_prev) && x_cur.same_shape(g_cur) && x_cur.same_shape(g_prev)) {
        return Err(Error::Shape("step-size inputs must share one shape".into()));
    }
    let dx = x_cur.sub(x_prev);
    let dg = g_cur.sub(g_prev);
    Ok((dx.frobenius_sq(), dx.dot(&dg)))
}

/// Stabilized BB step size
/// `||dX||^2 / (m (|<dX, dg>| + epsilon ||dX||^2))`, bounded above by `1/(m epsilon)`.
pub fn sbb_step_size(
    x_cur: &EmbeddingMatrix,
    x_prev: &EmbeddingMatrix,
    g_cur: &EmbeddingMatrix,
    g_prev: &EmbeddingMatrix,
    m: usize,
    epsilon: f64,
) -> Result<f64> {
    let (dx_sq, curvature) = differences(x_cur, x_prev, g_cur, g_prev)?;
    sbb_from_parts(dx_sq, curvature, m, epsilon)
}

/// Plain BB step size `||dX||^2 / (m <dX, dg>)`, signed. Can be negative
/// or blow up on non-convex problems; returned for diagnostics.
pub fn bb_step_size(
    x_cur: &EmbeddingMatrix,
    x_prev: &EmbeddingMatrix,
    g_cur: &EmbeddingMatrix,
    g_prev: &EmbeddingMatrix,
    m: usize,
) -> Result<f64> {
    let (dx_sq, curvature) = differences(x_cur, x_prev, g_cur, g_prev)?;
    bb_from_parts(dx_sq, curvature, m)
}

fn bb_from_parts(diff_sq_norm: f64, curvature: f64, m: usize) -> Result<f64> {
    let denom = m as f64 * curvature;
    if denom == 0.0 {
        return Err(Error::UnstableStep);
    }
    Ok(diff_sq_norm / denom)
}

/// Smallest inner-loop length strictly above the convergence condition
/// `max{ L^2/eps (1 + 2L/eps), 1 + sqrt(1 + 8 L^3 / eps) } / eps`.
///
/// For the `epsilon = 0` variant pass the Hessian eigenvalue bound `mu` as
/// `epsilon`.
pub fn min_inner_length(lipschitz: f64, epsilon: f64) -> Result<u64> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::usage(format!("Lipschitz constant must be > 0, got {lipschitz}")));
    }
    if epsilon == 0.0 {
        return Err(Error::usage("epsilon = 0: pass the curvature lower bound mu as epsilon instead"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::usage(format!("epsilon must be > 0, got {epsilon}")));
    }
    let l = lipschitz;
    let first = l * l / epsilon * (1.0 + 2.0 * l / epsilon);
    let second = 1.0 + (1.0 + 8.0 * l.powi(3) / epsilon).sqrt();
    let bound = first.max(second) / epsilon;
    if bound >= u64::MAX as f64 {
        return Err(Error::usage("inner-length bound overflows u64"));
    }
    Ok(bound.floor() as u64 + 1)
}

/// SVRG inner direction `grad f_p(X_t) - grad f_p(X~) + g`, dense.
///
/// At `X_t == X~` the correction cancels and the result is exactly `g`.
pub fn variance_reduced_direction(
    model: &LossModel,
    x_t: &EmbeddingMatrix,
    snapshot: &EmbeddingMatrix,
    snapshot_grad: &EmbeddingMatrix,
    p: &crate::embedding::Comparison,
) -> EmbeddingMatrix {
    let mut dir = EmbeddingMatrix::zeros(x_t.n(), x_t.d());
    let at_t = gradient_unchecked(model, x_t, p);
    let at_snap = gradient_unchecked(model, snapshot, p);
    for r in 0..x_t.n() {
        let (a, b) = (at_t.block(r), at_snap.block(r));
        for (c, out) in dir.row_mut(r).iter_mut().enumerate() {
            let correction = a.map_or(0.0, |v| v[c]) - b.map_or(0.0, |v| v[c]);
            *out = correction + snapshot_grad.get(r, c);
        }
    }
    dir
}

struct Evaluator<'a> {
    train: &'a ComparisonSet,
    test: Option<&'a ComparisonSet>,
    start: Instant,
}

impl Evaluator<'_> {
    fn errors(&self, x: &EmbeddingMatrix) -> (f64, Option<f64>) {
        let train = violation_fraction(x, self.train);
        let test = self.test.filter(|t| !t.is_empty()).map(|t| violation_fraction(x, t));
        (train, test)
    }

    fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }
}

/// Reservoir sampler for the uniform-iterate output rule.
struct Reservoir {
    seen: u64,
    chosen: Option<EmbeddingMatrix>,
    rng: ChaCha8Rng,
}

impl Reservoir {
    fn new(seed: u64) -> Self {
        // separate stream so the output rule does not perturb index picks
        Self { seen: 0, chosen: None, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15) }
    }

    fn offer(&mut self, x: &EmbeddingMatrix) {
        self.seen += 1;
        if self.rng.random_range(0..self.seen) == 0 {
            match &mut self.chosen {
                Some(c) => c.as_mut_slice().copy_from_slice(x.as_slice()),
                None => self.chosen = Some(x.clone()),
            }
        }
    }
}

/// Runs `cfg.method` from `x0` on `train`, evaluating on `test` after every epoch.
pub fn run(
    model: &LossModel,
    train: &ComparisonSet,
    test: Option<&ComparisonSet>,
    x0: &EmbeddingMatrix,
    cfg: &OptimizerConfig,
) -> Result<RunOutput> {
    model.validate()?;
    cfg.validate()?;
    train.ensure_non_empty("training set")?;
    train.check_against(x0)?;
    if let Some(t) = test {
        t.check_against(x0)?;
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial embedding".into()));
    }
    if cfg.method == Method::SvrgSbb && cfg.epsilon == 0.0 {
        warn!("svrg-sbb with epsilon = 0 assumes curvature bounded away from zero");
    }

    let eval = Evaluator { train, test, start: Instant::now() };
    match cfg.method {
        Method::SvrgSbb | Method::SvrgFixed => run_svrg(model, train, x0, cfg, &eval),
        Method::Sgd => run_sgd(model, train, x0, cfg, &eval),
        Method::Batch => run_batch(model, train, x0, cfg, &eval),
    }
}

fn run_svrg(
    model: &LossModel,
    train: &ComparisonSet,
    x0: &EmbeddingMatrix,
    cfg: &OptimizerConfig,
    eval: &Evaluator<'_>,
) -> Result<RunOutput> {
    let n_cmp = train.len();
    let m = cfg.inner_length(n_cmp);
    let comparisons = train.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reservoir = Reservoir::new(cfg.seed);

    let mut snapshot = x0.clone();
    let mut prev: Option<(EmbeddingMatrix, EmbeddingMatrix)> = None;
    let mut eta = cfg.eta0;
    let mut grad_evals = 0u64;
    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut x = x0.clone();

    for epoch in 0..cfg.epochs {
        let g = full_gradient_unchecked(model, &snapshot, train);
        grad_evals += n_cmp as u64;
        let grad_norm = g.frobenius();

        let mut bb_step = None;
        let mut diff_sq_norm = None;
        let mut curvature = None;
        let mut step_reused = false;
        if let Some((prev_x, prev_g)) = &prev {
            let (dx_sq, inner) = differences(&snapshot, prev_x, &g, prev_g)?;
            bb_step = bb_from_parts(dx_sq, inner, m).ok();
            diff_sq_norm = Some(dx_sq);
            curvature = Some(inner);
            if cfg.method == Method::SvrgSbb {
                match sbb_from_parts(dx_sq, inner, m, cfg.epsilon) {
                    Ok(step) => eta = step,
                    Err(Error::DegenerateStep) => {
                        warn!("epoch {epoch}: outer iterates coincide, reusing step {eta}");
                        step_reused = true;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if !eta.is_finite() {
            return Err(Error::Divergence { epoch });
        }

        x.as_mut_slice().copy_from_slice(snapshot.as_slice());
        for _ in 0..m {
            let p = &comparisons[rng.random_range(0..n_cmp)];
            let at_t = gradient_unchecked(model, &x, p);
            let at_snap = gradient_unchecked(model, &snapshot, p);
            x.axpy(-eta, &g);
            for ((row, a), (_, b)) in at_t.iter().zip(at_snap.iter()) {
                for ((dst, u), v) in x.row_mut(row).iter_mut().zip(a).zip(b) {
                    *dst -= eta * (u - v);
                }
            }
            if cfg.output_rule == OutputRule::UniformRandomIterate {
                reservoir.offer(&x);
            }
        }
        grad_evals += 2 * m as u64;

        if !x.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (train_error, test_error) = eval.errors(&x);
        traces.push(EpochTrace {
            epoch,
            step_size: eta,
            full_gradient_norm: grad_norm,
            train_error,
            test_error,
            grad_evals,
            elapsed_ms: eval.elapsed_ms(),
            bb_step,
            diff_sq_norm,
            curvature,
            step_reused,
        });

        let old_snapshot = std::mem::replace(&mut snapshot, x.clone());
        prev = Some((old_snapshot, g));
    }

    let embedding = match (cfg.output_rule, reservoir.chosen) {
        (OutputRule::UniformRandomIterate, Some(chosen)) => chosen,
        _ => snapshot,
    };
    Ok(RunOutput { embedding, traces })
}

/// Plain SGD with `eta0 / (1 + s)` decay; each epoch takes `N + 2m` single-comparison steps.
fn run_sgd(
    model: &LossModel,
    train: &ComparisonSet,
    x0: &EmbeddingMatrix,
    cfg: &OptimizerConfig,
    eval: &Evaluator<'_>,
) -> Result<RunOutput> {
    let n_cmp = train.len();
    let steps = n_cmp + 2 * cfg.inner_length(n_cmp);
    let comparisons = train.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reservoir = Reservoir::new(cfg.seed);
    let mut x = x0.clone();
    let mut grad_evals = 0u64;
    let mut traces = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let eta = cfg.eta0 / (1.0 + epoch as f64);
        // diagnostic only, not counted in grad_evals
        let grad_norm = full_gradient_unchecked(model, &x, train).frobenius();
        for _ in 0..steps {
            let p = &comparisons[rng.random_range(0..n_cmp)];
            let g = gradient_unchecked(model, &x, p);
            g.scatter_into(&mut x, -eta);
            if cfg.output_rule == OutputRule::UniformRandomIterate {
                reservoir.offer(&x);
            }
        }
        grad_evals += steps as u64;
        if !x.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (train_error, test_error) = eval.errors(&x);
        traces.push(EpochTrace {
            epoch,
            step_size: eta,
            full_gradient_norm: grad_norm,
            train_error,
            test_error,
            grad_evals,
            elapsed_ms: eval.elapsed_ms(),
            bb_step: None,
            diff_sq_norm: None,
            curvature: None,
            step_reused: false,
        });
    }

    let embedding = match (cfg.output_rule, reservoir.chosen) {
        (OutputRule::UniformRandomIterate, Some(chosen)) => chosen,
        _ => x,
    };
    Ok(RunOutput { embedding, traces })
}

/// Batch gradient descent `X <- X - eta0 grad F(X)`; an epoch is the
/// smallest number of full passes covering the SVRG budget `N + 2m`.
fn run_batch(
    model: &LossModel,
    train: &ComparisonSet,
    x0: &EmbeddingMatrix,
    cfg: &OptimizerConfig,
    eval: &Evaluator<'_>,
) -> Result<RunOutput> {
    let n_cmp = train.len();
    let budget = n_cmp + 2 * cfg.inner_length(n_cmp);
    let iters = budget.div_ceil(n_cmp);
    let mut x = x0.clone();
    let mut grad_evals = 0u64;
    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut grad = EmbeddingMatrix::zeros(x.n(), x.d());

    for epoch in 0..cfg.epochs {
        let mut grad_norm = 0.0;
        for it in 0..iters {
            grad.as_mut_slice().fill(0.0);
            for p in train {
                accumulate_gradient(model, &x, p, 1.0, &mut grad);
            }
            grad.scale(1.0 / n_cmp as f64);
            if it == 0 {
                grad_norm = grad.frobenius();
            }
            x.axpy(-cfg.eta0, &grad);
        }
        grad_evals += (iters * n_cmp) as u64;
        if !x.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (train_error, test_error) = eval.errors(&x);
        traces.push(EpochTrace {
            epoch,
            step_size: cfg.eta0,
            full_gradient_norm: grad_norm,
            train_error,
            test_error,
            grad_evals,
            elapsed_ms: eval.elapsed_ms(),
            bb_step: None,
            diff_sq_norm: None,
            curvature: None,
            step_reused: false,
        });
    }
    Ok(RunOutput { embedding: x, traces })
}
