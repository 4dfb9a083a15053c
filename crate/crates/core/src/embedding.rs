//! Embedding matrix, comparisons, and the distance/margin primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `n x d` matrix; row `i` is the embedding of object `i`.
///
/// The same type doubles as a dense gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major values, rejecting non-finite entries.
    pub fn from_vec(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 1 {
            return Err(Error::Shape(format!("embedding needs n >= 2 and d >= 1, got {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(Error::Shape(format!("expected {} values for {n}x{d}, got {}", n * d, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("rows have differing lengths".into()));
        }
        Self::from_vec(rows.len(), d, rows.concat())
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        assert!(n >= 2 && d >= 1, "embedding needs n >= 2 and d >= 1");
        Self { n, d, values: vec![0.0; n * d] }
    }

    /// Number of objects.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Embedding dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.d + c]
    }

    pub fn set(&mut self, i: usize, c: usize, v: f64) {
        self.values[i * self.d + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// Frobenius inner product `vec(self)^T vec(other)`.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// `self - other`
    pub fn sub(&self, other: &Self) -> Self {
        debug_assert!(self.same_shape(other));
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self { n: self.n, d: self.d, values }
    }

    /// Adds `v` to every row.
    pub fn translate(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.d);
        for row in self.values.chunks_mut(self.d) {
            for (x, t) in row.iter_mut().zip(v) {
                *x += t;
            }
        }
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, n: self.n })
        }
    }
}

/// Quadruplet `(i, j, l, k)` asserting `d2(i,j) < d2(l,k)`.
///
/// A triplet `(i, j, k)` is stored with `l == i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Comparison {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub k: usize,
}

impl Comparison {
    pub fn quadruplet(i: usize, j: usize, l: usize, k: usize) -> Self {
        Self { i, j, l, k }
    }

    pub fn triplet(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, l: i, k }
    }

    pub fn is_triplet(&self) -> bool {
        self.i == self.l
    }

    /// The comparison with its two sides exchanged.
    pub fn reversed(&self) -> Self {
        Self { i: self.l, j: self.k, l: self.i, k: self.j }
    }

    pub fn indices(&self) -> [usize; 4] {
        [self.i, self.j, self.l, self.k]
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(&index) = self.indices().iter().find(|&&x| x >= n) {
            return Err(Error::IndexOutOfRange { index, n });
        }
        if self.i == self.j || self.l == self.k {
            return Err(Error::DegenerateComparison { i: self.i, j: self.j, l: self.l, k: self.k });
        }
        Ok(())
    }
}

/// Ordered list of comparisons over `n` objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSet {
    n: usize,
    comparisons: Vec<Comparison>,
}

impl ComparisonSet {
    /// Validates every comparison against `n`. May be empty (e.g. an empty test split).
    pub fn new(n: usize, comparisons: Vec<Comparison>) -> Result<Self> {
        for c in &comparisons {
            c.validate(n)?;
        }
        Ok(Self { n, comparisons })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    pub fn as_slice(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Comparison> {
        self.comparisons.iter()
    }

    pub fn into_vec(self) -> Vec<Comparison> {
        self.comparisons
    }

    pub(crate) fn from_trusted(n: usize, comparisons: Vec<Comparison>) -> Self {
        Self { n, comparisons }
    }

    pub fn ensure_non_empty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            Err(Error::usage(format!("{what}: comparison set is empty")))
        } else {
            Ok(())
        }
    }

    pub fn check_against(&self, x: &EmbeddingMatrix) -> Result<()> {
        if self.n != x.n() {
            return Err(Error::Shape(format!(
                "comparisons index {} objects but embedding has {} rows",
                self.n,
                x.n()
            )));
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a ComparisonSet {
    type Item = &'a Comparison;
    type IntoIter = std::slice::Iter<'a, Comparison>;

    fn into_iter(self) -> Self::IntoIter {
        self.comparisons.iter()
    }
}

/// `||x_a - x_b||^2`. Panics on out-of-range indices; use
/// [`try_squared_distance`] for checked access.
#[inline]
pub fn squared_distance(x: &EmbeddingMatrix, a: usize, b: usize) -> f64 {
    x.row(a).iter().zip(x.row(b)).map(|(p, q)| (p - q) * (p - q)).sum()
}

pub fn try_squared_distance(x: &EmbeddingMatrix, a: usize, b: usize) -> Result<f64> {
    x.check_index(a)?;
    x.check_index(b)?;
    Ok(squared_distance(x, a, b))
}

/// `d2(i,j) - d2(l,k)`; negative iff the comparison holds strictly.
#[inline]
pub fn margin(x: &EmbeddingMatrix, p: &Comparison) -> f64 {
    squared_distance(x, p.i, p.j) - squared_distance(x, p.l, p.k)
}

pub fn try_margin(x: &EmbeddingMatrix, p: &Comparison) -> Result<f64> {
    p.validate(x.n())?;
    Ok(margin(x, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 0.0], &[3.0, 4.0], &[1.0, 0.0]]);
        assert_eq!(squared_distance(&x, 0, 3), 0.0);
        assert_eq!(squared_distance(&x, 0, 1), 1.0);
        assert_eq!(squared_distance(&x, 2, 1), 25.0);
        assert!(matches!(try_squared_distance(&x, 0, 4), Err(Error::IndexOutOfRange { index: 4, n: 4 })));
    }

    #[test]
    fn margin_examples() {
        // d2(0,1) = 1, d2(0,2) = 4
        let x = pts(&[&[0.0], &[1.0], &[2.0]]);
        assert_eq!(margin(&x, &Comparison::triplet(0, 1, 2)), -3.0);
        assert_eq!(margin(&x, &Comparison::quadruplet(0, 1, 1, 2)), 0.0);
        let p = Comparison::triplet(0, 1, 2);
        assert_eq!(margin(&x, &p.reversed()), 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(EmbeddingMatrix::from_vec(1, 2, vec![0.0, 0.0]).is_err());
        assert!(EmbeddingMatrix::from_vec(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(EmbeddingMatrix::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            ComparisonSet::new(3, vec![Comparison::triplet(1, 1, 2)]),
            Err(Error::DegenerateComparison { .. })
        ));
        assert!(matches!(
            ComparisonSet::new(3, vec![Comparison::quadruplet(0, 1, 2, 2)]),
            Err(Error::DegenerateComparison { .. })
        ));
        assert!(matches!(
            ComparisonSet::new(3, vec![Comparison::triplet(0, 1, 3)]),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
    }

    fn arb_matrix() -> impl Strategy<Value = EmbeddingMatrix> {
        (2usize..7, 1usize..5).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-10.0f64..10.0, n * d)
                .prop_map(move |v| EmbeddingMatrix::from_vec(n, d, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn distance_symmetry_and_zero(x in arb_matrix(), a in 0usize..7, b in 0usize..7) {
            let (a, b) = (a % x.n(), b % x.n());
            prop_assert_eq!(squared_distance(&x, a, b), squared_distance(&x, b, a));
            prop_assert_eq!(squared_distance(&x, a, a), 0.0);
            prop_assert!(squared_distance(&x, a, b) >= 0.0);
        }

        #[test]
        fn margin_antisymmetric(x in arb_matrix(), idx in proptest::array::uniform4(0usize..7)) {
            let n = x.n();
            let p = Comparison::quadruplet(idx[0] % n, idx[1] % n, idx[2] % n, idx[3] % n);
            prop_assert_eq!(margin(&x, &p), -margin(&x, &p.reversed()));
        }

        #[test]
        fn translation_invariance(
            n in 2usize..7,
            d in 1usize..5,
            grid in proptest::collection::vec(-80i32..80, 24),
            shift in proptest::collection::vec(-40i32..40, 4),
            idx in proptest::array::uniform4(0usize..7),
        ) {
            // dyadic coordinates keep every operation exact, isolating the algebra
            let x = EmbeddingMatrix::from_vec(n, d, grid[..n * d].iter().map(|&v| v as f64 / 8.0).collect()).unwrap();
            let mut y = x.clone();
            y.translate(&shift[..d].iter().map(|&v| v as f64 / 4.0).collect::<Vec<_>>());
            let p = Comparison::quadruplet(idx[0] % n, idx[1] % n, idx[2] % n, idx[3] % n);
            for (a, b) in [(p.i, p.j), (p.l, p.k)] {
                let (before, after) = (squared_distance(&x, a, b), squared_distance(&y, a, b));
                prop_assert!((before - after).abs() <= 1e-12 * before);
            }
            prop_assert!((margin(&x, &p) - margin(&y, &p)).abs() <= 1e-12 * margin(&x, &p).abs());
        }
    }
}
