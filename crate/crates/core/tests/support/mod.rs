//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the code paths it checks: gradients are checked
//! against central differences of loss values, step sizes against a direct
//! evaluation on raw slices, and retrieval metrics against rank counting.

#![allow(dead_code)]

use ordemb_core::{Comparison, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, half_width: f64) -> EmbeddingMatrix {
    let v = (0..n * d).map(|_| rng.random_range(-half_width..half_width)).collect();
    EmbeddingMatrix::from_vec(n, d, v).unwrap()
}

/// Random comparison whose two sides are different pairs (otherwise the
/// loss is constant); triplet with probability 1/2.
pub fn random_comparison(rng: &mut ChaCha8Rng, n: usize) -> Comparison {
    let pair = |rng: &mut ChaCha8Rng| {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    };
    let same_pair = |c: &Comparison| (c.i, c.j) == (c.l, c.k) || (c.i, c.j) == (c.k, c.l);
    loop {
        let (i, j) = pair(rng);
        let c = if rng.random_bool(0.5) {
            let mut k = rng.random_range(0..n - 1);
            if k >= i {
                k += 1;
            }
            Comparison::triplet(i, j, k)
        } else {
            let (l, k) = pair(rng);
            Comparison::quadruplet(i, j, l, k)
        };
        if !same_pair(&c) {
            return c;
        }
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(x: &EmbeddingMatrix, h: f64, mut f: impl FnMut(&EmbeddingMatrix) -> f64) -> Vec<f64> {
    let mut y = x.clone();
    (0..x.as_slice().len())
        .map(|idx| {
            let orig = y.as_slice()[idx];
            y.as_mut_slice()[idx] = orig + h;
            let up = f(&y);
            y.as_mut_slice()[idx] = orig - h;
            let down = f(&y);
            y.as_mut_slice()[idx] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Stabilized BB step evaluated directly on raw entries.
pub fn sbb_reference(x_cur: &[f64], x_prev: &[f64], g_cur: &[f64], g_prev: &[f64], m: usize, eps: f64) -> f64 {
    let mut num = 0.0;
    let mut cross = 0.0;
    for t in 0..x_cur.len() {
        let dx = x_cur[t] - x_prev[t];
        num += dx * dx;
        cross += dx * (g_cur[t] - g_prev[t]);
    }
    (1.0 / m as f64) * num / (cross.abs() + eps * num)
}

/// Smallest integer `m` with `m > bound`, found by counting up.
pub fn min_inner_length_reference(l: f64, eps: f64) -> u64 {
    let a = (l * l / eps) * (1.0 + 2.0 * l / eps);
    let b = 1.0 + (1.0 + 8.0 * l * l * l / eps).sqrt();
    let bound = if a > b { a } else { b } * (1.0 / eps);
    let mut m = 0u64;
    while (m as f64) <= bound {
        m += 1;
    }
    m
}

/// Rank (1-based) of every non-query item for `query`; ties broken by index.
fn ranks(x: &EmbeddingMatrix, query: usize) -> Vec<Option<usize>> {
    let dist = |a: usize| -> f64 { (0..x.d()).map(|c| (x.get(a, c) - x.get(query, c)).powi(2)).sum() };
    (0..x.n())
        .map(|i| {
            if i == query {
                return None;
            }
            let di = dist(i);
            let ahead = (0..x.n()).filter(|&o| o != query && o != i && (dist(o) < di || (dist(o) == di && o < i))).count();
            Some(ahead + 1)
        })
        .collect()
}

/// `(precision, recall)` at `k` averaged over queries, by counting ranks.
pub fn brute_precision_recall(x: &EmbeddingMatrix, labels: &[usize], k: usize) -> (f64, f64) {
    let n = x.n();
    let (mut p, mut r) = (0.0, 0.0);
    for q in 0..n {
        let rk = ranks(x, q);
        let relevant: Vec<usize> = (0..n).filter(|&i| i != q && labels[i] == labels[q]).collect();
        let tp = relevant.iter().filter(|&&i| rk[i].unwrap() <= k).count();
        p += tp as f64 / k as f64;
        r += if relevant.is_empty() { 0.0 } else { tp as f64 / relevant.len() as f64 };
    }
    (p / n as f64, r / n as f64)
}

/// MAP truncated at `k_max`, by counting ranks.
pub fn brute_map(x: &EmbeddingMatrix, labels: &[usize], k_max: usize) -> f64 {
    let n = x.n();
    let mut total = 0.0;
    for q in 0..n {
        let rk = ranks(x, q);
        let relevant: Vec<usize> = (0..n).filter(|&i| i != q && labels[i] == labels[q]).collect();
        if relevant.is_empty() {
            continue;
        }
        // p(q) * dr(q) summed over relevant hits in rank order, dr = 1/|relevant|
        let mut hit_ranks: Vec<usize> = relevant.iter().map(|&i| rk[i].unwrap()).filter(|&r| r <= k_max).collect();
        hit_ranks.sort_unstable();
        let dr = 1.0 / relevant.len() as f64;
        let mut ap = 0.0;
        for &r in &hit_ranks {
            let hits_up_to_r = relevant.iter().filter(|&&o| rk[o].unwrap() <= r).count();
            ap += (hits_up_to_r as f64 / r as f64) * dr;
        }
        total += ap;
    }
    total / n as f64
}
