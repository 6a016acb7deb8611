//! Seeded generator of time-varying row-stochastic matrix sequences over
//! random strongly connected digraphs, in a standard mode and an
//! identity-approaching mode.
//!
//! Every index `t` gets its own ChaCha8 stream keyed by `(seed, t)`:
//! the 32-byte key is the little-endian seed in bytes 0..8, the
//! little-endian index in bytes 8..16, and zeros elsewhere. Draw order per
//! index: Fisher-Yates permutation for the cycle skeleton, then one uniform
//! per ordered off-diagonal pair for extra edges, then one weight per
//! present entry in row-major order. Regenerating an index is bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ergodicity::{beta_schedule_violation, AssumptionParams, ErgodicityError};
use crate::matrix::StochasticMatrix;
use crate::product::MatrixSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopologyMode {
    Standard,
    /// `(1 - eps_t) I + eps_t M(t)` with `eps_t = min((t+1)^-exponent, 1/2)`.
    IdentityApproaching,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TopologyConfig {
    pub n: usize,
    pub seed: u64,
    pub extra_edge_prob: f64,
    pub mode: TopologyMode,
    pub epsilon_exponent: f64,
    pub assumption_params: AssumptionParams,
}

impl TopologyConfig {
    /// Standard mode with the default extra-edge probability 0.3 and
    /// schedule parameters delta = 0.5, lambda = 0.5.
    pub fn new(n: usize, seed: u64) -> Result<Self, ErgodicityError> {
        Ok(TopologyConfig {
            n,
            seed,
            extra_edge_prob: 0.3,
            mode: TopologyMode::Standard,
            epsilon_exponent: 1.5,
            assumption_params: AssumptionParams::new(n, 0.5, 0.5)?,
        })
    }

    pub fn validate(&self) -> Result<(), ErgodicityError> {
        if self.n < 2 {
            return Err(ErgodicityError::InvalidParams { reason: "n must be at least 2" });
        }
        if !(self.extra_edge_prob >= 0.0 && self.extra_edge_prob <= 1.0) {
            return Err(ErgodicityError::InvalidParams {
                reason: "extra_edge_prob must be in [0, 1]",
            });
        }
        if !(self.epsilon_exponent > 1.0) {
            return Err(ErgodicityError::InvalidParams {
                reason: "epsilon_exponent must exceed 1",
            });
        }
        if self.assumption_params.n != self.n {
            return Err(ErgodicityError::InvalidParams {
                reason: "assumption_params order differs from n",
            });
        }
        Ok(())
    }

    /// Off-diagonal mass at index `t` in identity-approaching mode, clamped
    /// to 1/2 so the diagonal never vanishes (relevant only at tiny t).
    pub fn epsilon(&self, t: usize) -> f64 {
        libm::pow((t + 1) as f64, -self.epsilon_exponent).min(0.5)
    }
}

/// A random Hamiltonian cycle on a uniformly random vertex permutation —
/// the minimal strongly connected spanning structure.
pub fn random_strongly_connected_skeleton(n: usize, rng: &mut impl RngCore) -> Vec<(usize, usize)> {
    debug_assert!(n >= 2);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    (0..n).map(|i| (perm[i], perm[(i + 1) % n])).collect()
}

/// The seeded sequence `{A(t)}`. Index-addressed and pure given
/// `(config.seed, t)`; wrap in a `MaterializedSequence` when many sweeps
/// revisit the same prefix.
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    config: TopologyConfig,
}

impl GeneratedSequence {
    pub fn new(config: TopologyConfig) -> Result<Self, ErgodicityError> {
        config.validate()?;
        Ok(GeneratedSequence { config })
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    fn stream(&self, t: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.config.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(t as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    fn standard_matrix(&self, rng: &mut ChaCha8Rng) -> StochasticMatrix {
        let n = self.config.n;
        let mut present = vec![false; n * n];
        for (i, j) in random_strongly_connected_skeleton(n, rng) {
            present[i * n + j] = true;
        }
        // One draw per ordered pair regardless of prior presence, so the
        // stream layout does not depend on the sampled cycle.
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < self.config.extra_edge_prob {
                    present[i * n + j] = true;
                }
            }
        }
        for i in 0..n {
            present[i * n + i] = true;
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if present[i * n + j] {
                    // Uniform on (0, 1]: never an exact zero on a present edge.
                    entries[i * n + j] = 1.0 - rng.random::<f64>();
                }
            }
        }
        StochasticMatrix::normalize_rows(n, entries, crate::matrix::DEFAULT_ZERO_TOL)
            .expect("generated rows have positive mass by construction")
    }
}

impl MatrixSequence for GeneratedSequence {
    fn order(&self) -> usize {
        self.config.n
    }

    fn matrix(&self, t: usize) -> StochasticMatrix {
        let mut rng = self.stream(t);
        let m = self.standard_matrix(&mut rng);
        match self.config.mode {
            TopologyMode::Standard => m,
            TopologyMode::IdentityApproaching => {
                let eps = self.config.epsilon(t);
                let n = self.config.n;
                let mut entries = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let id = if i == j { 1.0 } else { 0.0 };
                        entries.push((1.0 - eps) * id + eps * m.get(i, j));
                    }
                }
                StochasticMatrix::normalize_rows(n, entries, crate::matrix::DEFAULT_ZERO_TOL)
                    .expect("convex combination of stochastic rows")
            }
        }
    }
}

/// Per-block comparison of realized minimum positive entries against the
/// lower-bound schedule, plus a separate connectivity scan of the factors.
#[derive(Debug, Clone, Serialize)]
pub struct BetaScheduleReport {
    pub horizon: usize,
    pub b: usize,
    /// `(block, min beta over the block)` for each complete block.
    pub block_minima: Vec<(usize, f64)>,
    pub first_violation_block: Option<usize>,
    /// First index whose factor fails the connectivity condition, if any.
    pub first_connectivity_failure: Option<usize>,
}

pub fn beta_schedule_check<S: MatrixSequence>(
    seq: &S,
    params: &AssumptionParams,
    horizon: usize,
) -> Result<BetaScheduleReport, ErgodicityError> {
    let b = params.b();
    if horizon < b {
        return Err(ErgodicityError::InvalidHorizon { s: b, horizon: horizon as i64 });
    }
    let trace = seq.beta_trace(horizon);
    let mut block_minima = Vec::new();
    let mut block = 1;
    while block * b <= trace.len() {
        let min = trace[(block - 1) * b..block * b]
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min);
        block_minima.push((block, min));
        block += 1;
    }
    let first_violation_block = beta_schedule_violation(&trace, params);
    let mut first_connectivity_failure = None;
    for t in 0..horizon {
        let a = seq.matrix(t);
        let ok = if a.order() <= 14 {
            a.satisfies_connectivity_condition().unwrap_or(false)
        } else {
            a.support_strongly_connected()
        };
        if !ok {
            first_connectivity_failure = Some(t);
            break;
        }
    }
    Ok(BetaScheduleReport {
        horizon,
        b,
        block_minima,
        first_violation_block,
        first_connectivity_failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::ConstantSequence;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn seq(n: usize, seed: u64) -> GeneratedSequence {
        GeneratedSequence::new(TopologyConfig::new(n, seed).unwrap()).unwrap()
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let s = seq(6, 7);
        assert_eq!(s.matrix(3).entries(), s.matrix(3).entries());

        let mut probe = ChaCha8Rng::from_seed([9; 32]);
        for _ in 0..100 {
            let n = 2 + (probe.next_u32() as usize) % 7;
            let seed = probe.next_u64();
            let t = (probe.next_u32() as usize) % 10_000;
            let s = seq(n, seed);
            assert_eq!(s.matrix(t).entries(), s.matrix(t).entries());
        }
    }

    #[test]
    fn two_node_cycle_is_forced() {
        for t in 0..20 {
            let a = seq(2, 11).matrix(t);
            assert!(a.get(0, 1) > 0.0 && a.get(1, 0) > 0.0);
        }
    }

    #[test]
    fn generated_matrices_satisfy_structural_requirements() {
        for n in 2..=8 {
            let s = seq(n, 42 + n as u64);
            for t in 0..10 {
                let a = s.matrix(t);
                for i in 0..n {
                    let sum: f64 = a.row(i).iter().sum();
                    assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
                    assert!(a.get(i, i) > 0.0, "zero diagonal at n={n} t={t} i={i}");
                }
                assert!(a.satisfies_connectivity_condition().unwrap());
                assert!(a.is_sarymsakov().unwrap());
            }
        }
    }

    #[test]
    fn skeleton_is_a_cycle() {
        let mut rng = ChaCha8Rng::from_seed([1; 32]);
        for n in 2..=9 {
            let edges = random_strongly_connected_skeleton(n, &mut rng);
            assert_eq!(edges.len(), n);
            let mut outdeg = vec![0usize; n];
            let mut indeg = vec![0usize; n];
            for &(i, j) in &edges {
                assert_ne!(i, j);
                outdeg[i] += 1;
                indeg[j] += 1;
            }
            assert!(outdeg.iter().all(|&d| d == 1));
            assert!(indeg.iter().all(|&d| d == 1));
            // A 1-regular digraph whose edges trace one walk is a single cycle.
            let mut seen = vec![false; n];
            let mut v = edges[0].0;
            for _ in 0..n {
                assert!(!seen[v]);
                seen[v] = true;
                v = edges.iter().find(|&&(i, _)| i == v).unwrap().1;
            }
            assert_eq!(v, edges[0].0);
        }
    }

    #[test]
    fn epsilon_schedule_and_clamp() {
        let cfg = TopologyConfig::new(6, 0).unwrap();
        assert_eq!(cfg.epsilon(0), 0.5); // (0+1)^-1.5 = 1 clamped
        assert_abs_diff_eq!(cfg.epsilon(3), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn identity_approaching_stays_near_identity() {
        let mut cfg = TopologyConfig::new(6, 5).unwrap();
        cfg.mode = TopologyMode::IdentityApproaching;
        let s = GeneratedSequence::new(cfg).unwrap();
        for t in 1..200 {
            let a = s.matrix(t);
            let eps = cfg.epsilon(t);
            assert!(
                a.max_norm_from_identity() <= eps + 1e-12,
                "t={t}: gap {} > eps {eps}",
                a.max_norm_from_identity()
            );
            for i in 0..6 {
                assert!(a.get(i, i) >= 1.0 - eps - 1e-12);
            }
        }
    }

    #[test]
    fn schedule_check_with_negligible_delta_passes() {
        let s = seq(6, 3);
        let tiny = AssumptionParams::from_log10_delta(6, -64.0 * 6.0 * 2.584962500721156, 0.5)
            .unwrap();
        let rep = beta_schedule_check(&s, &tiny, 1000).unwrap();
        assert_eq!(rep.first_violation_block, None);
        assert_eq!(rep.first_connectivity_failure, None);
        assert_eq!(rep.b, 15);
    }

    #[test]
    fn schedule_check_flags_aggressive_delta() {
        let s = seq(6, 3);
        let hot = AssumptionParams::new(6, 0.9, 0.5).unwrap();
        let rep = beta_schedule_check(&s, &hot, 150).unwrap();
        assert_eq!(rep.first_violation_block, Some(1));
    }

    #[test]
    fn schedule_check_identity_sequence_marks_connectivity() {
        let s = ConstantSequence::new(StochasticMatrix::identity(6));
        let p = AssumptionParams::new(6, 0.9, 0.5).unwrap();
        let rep = beta_schedule_check(&s, &p, 30).unwrap();
        // The diagonal beta of 1 passes the schedule; the failure is
        // structural and reported separately.
        assert_eq!(rep.first_violation_block, None);
        assert_eq!(rep.first_connectivity_failure, Some(0));
    }

    #[test]
    fn schedule_check_rejects_short_horizon() {
        let s = seq(6, 0);
        let p = AssumptionParams::new(6, 0.5, 0.5).unwrap();
        assert!(beta_schedule_check(&s, &p, 14).is_err());
    }
}
