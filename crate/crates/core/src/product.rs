//! Time-indexed matrix sequences and backward products
//! `Phi(s,k) = A(k) ... A(s+1) A(s)`.

use alloc::vec::Vec;

use crate::matrix::{MatrixError, StochasticMatrix};

/// Index-addressed access to a sequence `{A(t)}` of stochastic matrices of a
/// fixed order. Implementations must be deterministic in `t`.
pub trait MatrixSequence {
    fn order(&self) -> usize;

    fn matrix(&self, t: usize) -> StochasticMatrix;

    /// Empirical per-step lower bounds: `min_positive_entry` of each factor
    /// for `t < horizon`.
    fn beta_trace(&self, horizon: usize) -> Vec<f64> {
        (0..horizon)
            .map(|t| self.matrix(t).min_positive_entry().unwrap_or(f64::NAN))
            .collect()
    }
}

impl<S: MatrixSequence + ?Sized> MatrixSequence for &S {
    fn order(&self) -> usize {
        (**self).order()
    }
    fn matrix(&self, t: usize) -> StochasticMatrix {
        (**self).matrix(t)
    }
}

/// The same matrix at every index.
#[derive(Debug, Clone)]
pub struct ConstantSequence {
    matrix: StochasticMatrix,
}

impl ConstantSequence {
    pub fn new(matrix: StochasticMatrix) -> Self {
        ConstantSequence { matrix }
    }
}

impl MatrixSequence for ConstantSequence {
    fn order(&self) -> usize {
        self.matrix.order()
    }
    fn matrix(&self, _t: usize) -> StochasticMatrix {
        self.matrix.clone()
    }
}

/// Eagerly generated prefix of another sequence; indices past the prefix
/// fall back to the inner sequence. Avoids regenerating matrices in sweeps
/// that revisit the same indices many times.
pub struct MaterializedSequence<S: MatrixSequence> {
    inner: S,
    prefix: Vec<StochasticMatrix>,
}

impl<S: MatrixSequence> MaterializedSequence<S> {
    pub fn new(inner: S, horizon: usize) -> Self {
        let prefix = (0..horizon).map(|t| inner.matrix(t)).collect();
        MaterializedSequence { inner, prefix }
    }
}

impl<S: MatrixSequence> MatrixSequence for MaterializedSequence<S> {
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn matrix(&self, t: usize) -> StochasticMatrix {
        if t < self.prefix.len() {
            self.prefix[t].clone()
        } else {
            self.inner.matrix(t)
        }
    }
}

/// A realized backward product together with the product of the empirical
/// per-factor lower bounds.
///
/// `k = s - 1` encodes the empty product `Phi(s, s-1) = I`.
#[derive(Debug, Clone)]
pub struct BackwardProduct {
    pub s: usize,
    pub k: i64,
    pub value: StochasticMatrix,
    pub beta_product: f64,
}

/// Accumulates `A(k) * ... * A(s)` by left-multiplying factors in increasing
/// `t`, in a fixed association order so reruns are bit-identical.
pub fn backward_product<S: MatrixSequence>(seq: &S, s: usize, k: i64) -> BackwardProduct {
    debug_assert!(k >= s as i64 - 1, "backward product requires k >= s - 1");
    let mut value = StochasticMatrix::identity(seq.order());
    let mut beta_product = 1.0;
    let mut t = s as i64;
    while t <= k {
        let factor = seq.matrix(t as usize);
        value = factor.multiply(&value);
        beta_product *= factor.min_positive_entry().unwrap_or(0.0);
        t += 1;
    }
    BackwardProduct { s, k, value, beta_product }
}

/// Extends an existing product by one factor on the left: `Phi(s, k+1)`.
pub fn extend_backward_product<S: MatrixSequence>(seq: &S, prod: &mut BackwardProduct) {
    let t = (prod.k + 1) as usize;
    let factor = seq.matrix(t);
    prod.value = factor.multiply(&prod.value);
    prod.beta_product *= factor.min_positive_entry().unwrap_or(0.0);
    prod.k += 1;
}

impl BackwardProduct {
    /// Row-stochasticity check with a looser tolerance for long chains.
    pub fn validate(&self, tol: f64) -> Result<(), MatrixError> {
        let n = self.value.order();
        for i in 0..n {
            let sum: f64 = self.value.row(i).iter().sum();
            if libm::fabs(sum - 1.0) > tol {
                return Err(MatrixError::NotStochastic { row: i, sum });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> StochasticMatrix {
        StochasticMatrix::from_rows(rows).unwrap()
    }

    // Test-side multiply, independent of StochasticMatrix::multiply.
    fn naive_mul(a: &StochasticMatrix, b: &StochasticMatrix) -> Vec<f64> {
        let n = a.order();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += a.get(i, l) * b.get(l, j);
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn empty_product_is_identity() {
        let seq = ConstantSequence::new(m(&[&[0.5, 0.5], &[0.5, 0.5]]));
        let p = backward_product(&seq, 3, 2);
        assert_eq!(p.value, StochasticMatrix::identity(2));
        assert_eq!(p.beta_product, 1.0);
    }

    #[test]
    fn idempotent_matrix_product() {
        let seq = ConstantSequence::new(m(&[&[0.5, 0.5], &[0.5, 0.5]]));
        let p = backward_product(&seq, 0, 1);
        for (e, want) in p.value.entries().iter().zip([0.5, 0.5, 0.5, 0.5]) {
            assert_abs_diff_eq!(*e, want, epsilon = 1e-15);
        }
    }

    struct TwoStep {
        a0: StochasticMatrix,
        a1: StochasticMatrix,
    }
    impl MatrixSequence for TwoStep {
        fn order(&self) -> usize {
            2
        }
        fn matrix(&self, t: usize) -> StochasticMatrix {
            if t == 0 {
                self.a0.clone()
            } else {
                self.a1.clone()
            }
        }
    }

    #[test]
    fn ordered_two_factor_product() {
        let seq = TwoStep {
            a0: m(&[&[1.0, 0.0], &[0.5, 0.5]]),
            a1: m(&[&[0.5, 0.5], &[0.0, 1.0]]),
        };
        let p = backward_product(&seq, 0, 1);
        // A(1) * A(0), cross-checked against an independent multiply.
        let expect = naive_mul(&seq.a1, &seq.a0);
        assert_eq!(expect, vec![0.75, 0.25, 0.5, 0.5]);
        for (e, w) in p.value.entries().iter().zip(expect) {
            assert_abs_diff_eq!(*e, w, epsilon = 1e-15);
        }
        // Empirical betas: 0.5 for each factor.
        assert_abs_diff_eq!(p.beta_product, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn long_chain_stays_stochastic() {
        let seq = ConstantSequence::new(m(&[
            &[0.7, 0.2, 0.1],
            &[0.05, 0.9, 0.05],
            &[0.3, 0.3, 0.4],
        ]));
        let p = backward_product(&seq, 0, 9_999);
        p.validate(1e-10).unwrap();
    }

    #[test]
    fn extend_matches_fresh_product() {
        let seq = ConstantSequence::new(m(&[&[0.8, 0.2], &[0.4, 0.6]]));
        let mut p = backward_product(&seq, 2, 4);
        extend_backward_product(&seq, &mut p);
        let fresh = backward_product(&seq, 2, 5);
        assert_eq!(p.value.entries(), fresh.value.entries());
        assert_eq!(p.k, 5);
    }
}
