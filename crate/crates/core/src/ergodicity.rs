//! Convergence machinery for backward products: the per-block rates
//! `gamma_t^s`, the explicit bound `Gamma(s,k)` with a certified truncation
//! tail, absolute-probability-sequence estimation, and numeric diagnostics
//! for the identity-approaching regime.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::matrix::StochasticMatrix;
use crate::product::{backward_product, MatrixSequence};

/// Term cap for the truncated infinite sum inside `gamma_bound`.
pub const GAMMA_TERM_CAP: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ErgodicityError {
    InvalidParams { reason: &'static str },
    /// The certified tail could not be brought under the tolerance within
    /// the term cap (typically a vanishingly small delta).
    NonConvergent { terms: usize },
    InvalidHorizon { s: usize, horizon: i64 },
    /// A sequence value fell outside (0, 1).
    Domain { index: usize, value: f64 },
}

impl fmt::Display for ErgodicityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErgodicityError::InvalidParams { reason } => write!(f, "invalid parameters: {reason}"),
            ErgodicityError::NonConvergent { terms } => {
                write!(f, "series tail not certified below tolerance after {terms} terms")
            }
            ErgodicityError::InvalidHorizon { s, horizon } => {
                write!(f, "horizon {horizon} is below start index {s}")
            }
            ErgodicityError::Domain { index, value } => {
                write!(f, "sequence value {value} at index {index} outside (0, 1)")
            }
        }
    }
}

/// The free parameters of the block-wise lower-bound schedule: order `n`,
/// scale `delta` in (0, 1], exponent `lambda` in (0, 1). The shortest
/// communication interval `B = (n-1) * ceil(log2 n)` is always recomputed.
///
/// `delta` is carried in log space so that astronomically small schedule
/// scales (which underflow f64) remain usable in schedule checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionParams {
    pub n: usize,
    pub lambda: f64,
    ln_delta: f64,
}

fn ceil_log2(n: usize) -> usize {
    debug_assert!(n >= 1);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

impl AssumptionParams {
    pub fn new(n: usize, delta: f64, lambda: f64) -> Result<Self, ErgodicityError> {
        if n < 2 {
            return Err(ErgodicityError::InvalidParams { reason: "n must be at least 2" });
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(ErgodicityError::InvalidParams { reason: "delta must be in (0, 1]" });
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ErgodicityError::InvalidParams { reason: "lambda must be in (0, 1)" });
        }
        Ok(AssumptionParams { n, lambda, ln_delta: libm::log(delta) })
    }

    /// For schedule scales like 10^-992 that are not representable as f64.
    pub fn from_log10_delta(n: usize, log10_delta: f64, lambda: f64) -> Result<Self, ErgodicityError> {
        if n < 2 {
            return Err(ErgodicityError::InvalidParams { reason: "n must be at least 2" });
        }
        if log10_delta > 0.0 {
            return Err(ErgodicityError::InvalidParams { reason: "delta must be in (0, 1]" });
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ErgodicityError::InvalidParams { reason: "lambda must be in (0, 1)" });
        }
        Ok(AssumptionParams { n, lambda, ln_delta: log10_delta * core::f64::consts::LN_10 })
    }

    pub fn delta(&self) -> f64 {
        libm::exp(self.ln_delta)
    }

    pub fn ln_delta(&self) -> f64 {
        self.ln_delta
    }

    /// Shortest communication interval `B = (n-1) * ceil(log2 n)`.
    pub fn b(&self) -> usize {
        (self.n - 1) * ceil_log2(self.n)
    }

    /// Block schedule threshold `(delta / (block+1)^lambda)^(1/B)` for the
    /// per-step lower bounds inside block `block >= 1`, in log space.
    pub fn beta_schedule(&self, block: usize) -> f64 {
        let b = self.b() as f64;
        libm::exp((self.ln_delta - self.lambda * libm::log((block + 1) as f64)) / b)
    }
}

/// `gamma_t^s = delta / (floor(s/B) + t + 1)^lambda`, always in (0, 1].
pub fn gamma_ts(params: &AssumptionParams, s: usize, t: usize) -> f64 {
    let a = s / params.b();
    gamma_at(params, a, t)
}

fn gamma_at(params: &AssumptionParams, a: usize, t: usize) -> f64 {
    let x = (a + t + 1) as f64;
    libm::exp(params.ln_delta - params.lambda * libm::log(x))
}

/// `Gamma(s,k)` evaluated by truncation, with a certified remainder bound.
///
/// `value` is the truncated (lower) estimate; `value + tail_error` is a
/// valid upper bound on the exact quantity.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceBound {
    pub s: usize,
    pub k: usize,
    pub value: f64,
    pub tail_error: f64,
    pub terms_used: usize,
}

impl ConvergenceBound {
    /// Certified upper bound on the exact Gamma(s,k).
    pub fn upper(&self) -> f64 {
        self.value + self.tail_error
    }
}

/// Bound on the remaining series `sum_{t > t0} prod_{r=0}^{t} (1-gamma_r)`
/// given `p = prod_{r=0}^{t0} (1-gamma_r)`.
///
/// Blocks of doubling length are bounded geometrically: within a block
/// ending at t1 every rate is at least gamma(t1), so the block contributes
/// at most p * (1-g)/g, and the carried product shrinks by at least
/// exp(-g * len). Once 6 * exp(-g * len) < 1/2 the remaining blocks are
/// dominated by a geometric series (the factor 6 covers the rate ratio and
/// the (1-g') / (1-g) growth between consecutive blocks; the exponent
/// g * len is non-decreasing past the start threshold, so the ratio bound
/// only improves).
fn certified_tail(params: &AssumptionParams, a: usize, t0: usize, p: f64) -> Option<f64> {
    let start_threshold =
        4.0_f64.max((4.0 * params.lambda - 3.0) / (2.0 * (1.0 - params.lambda)));
    if (t0 as f64) < start_threshold {
        return None;
    }
    if p == 0.0 {
        return Some(0.0);
    }
    let mut t0 = t0;
    let mut p = p;
    let mut total = 0.0;
    for _ in 0..300 {
        let t1 = 2 * t0 + 2;
        let g = gamma_at(params, a, t1);
        if g <= 0.0 {
            return None;
        }
        if g >= 1.0 {
            return Some(total);
        }
        let len = (t1 - t0) as f64;
        let chunk = p * (1.0 - g) / g;
        let decay = libm::exp(-g * len);
        let q = 6.0 * decay;
        if g <= 0.5 && q < 0.5 {
            return Some(total + chunk / (1.0 - q));
        }
        total += chunk;
        p *= decay;
        t0 = t1;
    }
    None
}

/// Evaluates `Gamma(s,k) = prod_{t=0}^{m} (1-gamma_t^s)
/// + sum_{t=m}^{inf} prod_{r=0}^{t} (1-gamma_r^s)` with `m = (k-s)/B`,
/// truncating the sum once the certified remainder drops under `tol`.
/// The convention `Gamma(l,k) = Gamma(k,k)` applies for `l > k`.
pub fn gamma_bound(
    params: &AssumptionParams,
    s: usize,
    k: usize,
    tol: f64,
) -> Result<ConvergenceBound, ErgodicityError> {
    if !(tol > 0.0) {
        return Err(ErgodicityError::InvalidParams { reason: "tol must be positive" });
    }
    let b = params.b();
    let s_eff = s.min(k);
    let a = s_eff / b;
    let m = (k - s_eff) / b;

    let mut prod = 1.0;
    for t in 0..=m {
        prod *= (1.0 - gamma_at(params, a, t)).max(0.0);
    }
    let head = prod;

    let mut sum = prod; // the t = m term
    let mut terms_used = 1;
    let mut t = m;
    let tail;
    loop {
        if prod == 0.0 {
            tail = 0.0;
            break;
        }
        if terms_used % 32 == 0 || terms_used == 1 {
            if let Some(bound) = certified_tail(params, a, t, prod) {
                if bound <= tol {
                    tail = bound;
                    break;
                }
            }
        }
        if terms_used >= GAMMA_TERM_CAP {
            return Err(ErgodicityError::NonConvergent { terms: terms_used });
        }
        t += 1;
        prod *= (1.0 - gamma_at(params, a, t)).max(0.0);
        sum += prod;
        terms_used += 1;
    }

    Ok(ConvergenceBound { s, k, value: head + sum, tail_error: tail, terms_used })
}

/// Row-averaged estimate of the absolute probability vector `pi(s)` from a
/// finite backward product `Phi(s, K)`.
///
/// Both the true `pi(s)` and the estimate are convex combinations of the
/// rows of `Phi(s, K)`, so `spread_at_horizon` bounds the component-wise
/// estimation error a posteriori.
#[derive(Debug, Clone, Serialize)]
pub struct AbsoluteProbabilityEstimate {
    pub s: usize,
    pub pi_hat: Vec<f64>,
    pub horizon: usize,
    pub spread_at_horizon: f64,
}

pub fn estimate_pi<S: MatrixSequence>(
    seq: &S,
    s: usize,
    horizon: usize,
) -> Result<AbsoluteProbabilityEstimate, ErgodicityError> {
    if horizon < s {
        return Err(ErgodicityError::InvalidHorizon { s, horizon: horizon as i64 });
    }
    let phi = backward_product(seq, s, horizon as i64);
    Ok(AbsoluteProbabilityEstimate {
        s,
        pi_hat: phi.value.row_average(),
        horizon,
        spread_at_horizon: phi.value.row_spread(),
    })
}

/// `max_j |pi_hat_j - 1/n|`.
pub fn pi_uniform_gap(est: &AbsoluteProbabilityEstimate) -> f64 {
    let n = est.pi_hat.len() as f64;
    est.pi_hat.iter().map(|p| libm::fabs(p - 1.0 / n)).fold(0.0, f64::max)
}

/// First block (1-based) whose realized per-step minimum positive entry
/// falls below the schedule threshold; `None` if no complete block violates.
/// NaN entries (factors with no positive entry) are skipped.
pub fn beta_schedule_violation(trace: &[f64], params: &AssumptionParams) -> Option<usize> {
    let b = params.b();
    let mut block = 1;
    while block * b <= trace.len() {
        let threshold = params.beta_schedule(block);
        let lo = (block - 1) * b;
        let min = trace[lo..block * b]
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min);
        if min < threshold {
            return Some(block);
        }
        block += 1;
    }
    None
}

/// One comparison of a realized backward product against the explicit bound.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationBoundReport {
    pub s: usize,
    pub k: usize,
    pub horizon: usize,
    /// `max_{i,j} |Phi_ij(s,k) - pi_hat_j(s)|`.
    pub deviation: f64,
    pub gamma: ConvergenceBound,
    pub spread_at_horizon: f64,
    /// Whether deviation <= Gamma + spread + 1e-9.
    pub holds: bool,
    /// First block violating the lower-bound schedule, if any; when set the
    /// bound is vacuous for the realized sequence and `holds` is informational.
    pub schedule_violation_block: Option<usize>,
}

pub fn verify_deviation_bound<S: MatrixSequence>(
    seq: &S,
    params: &AssumptionParams,
    s: usize,
    k: usize,
    horizon: usize,
) -> Result<DeviationBoundReport, ErgodicityError> {
    if k < s || horizon < k {
        return Err(ErgodicityError::InvalidHorizon { s, horizon: horizon as i64 });
    }
    let phi = backward_product(seq, s, k as i64);
    let est = estimate_pi(seq, s, horizon)?;
    let gamma = gamma_bound(params, s, k, 1e-10)?;
    let n = seq.order();
    let mut deviation: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            deviation = deviation.max(libm::fabs(phi.value.get(i, j) - est.pi_hat[j]));
        }
    }
    let holds = deviation <= gamma.upper() + est.spread_at_horizon + 1e-9;
    let trace = seq.beta_trace(k + 1);
    let schedule_violation_block = beta_schedule_violation(&trace, params);
    Ok(DeviationBoundReport {
        s,
        k,
        horizon,
        deviation,
        gamma,
        spread_at_horizon: est.spread_at_horizon,
        holds,
        schedule_violation_block,
    })
}

/// Heuristic classification of a partial-sum trend: the increment over the
/// last decade of the horizon is compared with the preceding decade's.
/// Finite evidence only, never a proof; a harmonic-like series keeps
/// constant decade increments while a convergent one decays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrendVerdict {
    Summable,
    Divergent,
}

fn trend_verdict(partial: impl Fn(usize) -> f64, horizon: usize) -> TrendVerdict {
    let h = horizon.max(4);
    let last = partial(h) - partial(h / 10);
    let prev = partial(h / 10) - partial(h / 100);
    if last > 0.5 * prev + 1e-300 {
        TrendVerdict::Divergent
    } else {
        TrendVerdict::Summable
    }
}

/// Numeric probes for products and series built from `(1 - x_t)` factors,
/// indexed from t = 1.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesDiagnostics {
    /// `(k, prod_{t=1}^{k} (1 - x_t))` at checkpoints.
    pub partial_products: Vec<(usize, f64)>,
    /// `(k, sum_{j=1}^{k} prod_{t=1}^{j} (1 - x_t))` at checkpoints.
    pub partial_sums: Vec<(usize, f64)>,
    /// `(k, mu, k^mu * sum_{r=k}^{horizon} prod_{t=1}^{r} (1 - x_t))`.
    pub tail_probes: Vec<(usize, f64, f64)>,
    /// Partial values of the shifted double sum
    /// `sum_k y_k * sum_{r>=k} prod_{t=1}^{r} (1 - x_{t+k})`, cumulative in k.
    pub double_sum_partials: Vec<(usize, f64)>,
    pub final_product: f64,
    pub final_sum: f64,
    pub sum_verdict: TrendVerdict,
}

fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut pts = Vec::new();
    let mut base = 1usize;
    loop {
        for mult in [1usize, 2, 5] {
            let Some(v) = base.checked_mul(mult) else { break };
            if v > horizon {
                break;
            }
            pts.push(v);
        }
        let Some(next) = base.checked_mul(10) else { break };
        if next > horizon {
            break;
        }
        base = next;
    }
    if pts.last() != Some(&horizon) {
        pts.push(horizon);
    }
    pts
}

pub fn series_diagnostics<F, G>(
    x: F,
    y: Option<G>,
    horizon: usize,
    mus: &[f64],
) -> Result<SeriesDiagnostics, ErgodicityError>
where
    F: Fn(usize) -> f64,
    G: Fn(usize) -> f64,
{
    if horizon == 0 {
        return Err(ErgodicityError::InvalidParams { reason: "horizon must be positive" });
    }
    // q[k] = prod_{t=1}^{k} (1 - x_t), q[0] = 1.
    let mut q = vec![1.0; horizon + 1];
    for t in 1..=horizon {
        let xt = x(t);
        if !(xt > 0.0 && xt < 1.0) {
            return Err(ErgodicityError::Domain { index: t, value: xt });
        }
        q[t] = q[t - 1] * (1.0 - xt);
    }
    // prefix[k] = sum_{j=1}^{k} q[j].
    let mut prefix = vec![0.0; horizon + 1];
    for k in 1..=horizon {
        prefix[k] = prefix[k - 1] + q[k];
    }

    let pts = checkpoints(horizon);
    let partial_products: Vec<(usize, f64)> = pts.iter().map(|&k| (k, q[k])).collect();
    let partial_sums: Vec<(usize, f64)> = pts.iter().map(|&k| (k, prefix[k])).collect();

    let mut tail_probes = Vec::new();
    let mut k = 10usize;
    while k <= horizon {
        let tail = prefix[horizon] - prefix[k - 1];
        for &mu in mus {
            tail_probes.push((k, mu, libm::pow(k as f64, mu) * tail));
        }
        k *= 10;
    }

    // Shifted product: prod_{t=1}^{r} (1 - x_{t+k}) = q[k+r] / q[k];
    // its sum over r >= k telescopes through the prefix sums.
    let mut double_sum_partials = Vec::new();
    if let Some(y) = y {
        let mut acc = 0.0;
        let mut next_pt = 0usize;
        for k in 1..=horizon / 2 {
            if q[k] > 0.0 {
                let inner = (prefix[horizon] - prefix[2 * k - 1]).max(0.0) / q[k];
                acc += y(k) * inner;
            }
            while next_pt < pts.len() && pts[next_pt] <= k {
                if pts[next_pt] == k {
                    double_sum_partials.push((k, acc));
                }
                next_pt += 1;
            }
        }
        double_sum_partials.push((horizon / 2, acc));
    }

    let sum_verdict = trend_verdict(|k| prefix[k.min(horizon)], horizon);
    Ok(SeriesDiagnostics {
        partial_products,
        partial_sums,
        tail_probes,
        double_sum_partials,
        final_product: q[horizon],
        final_sum: prefix[horizon],
        sum_verdict,
    })
}

/// Diagnostics for the identity-approaching regime: how fast `A(k)` tends
/// to the identity, the window coefficients `omega_k`, and the diagonal
/// mass bound `chi`.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityApproachReport {
    pub window: usize,
    pub horizon: usize,
    /// `(k, sum_{t=1}^{k} (1/t) * ||I - A(t)||_max)` at checkpoints.
    pub identity_gap_partial_sums: Vec<(usize, f64)>,
    /// `(k, sum_{t=1}^{k} omega_t * ln t)` at checkpoints (ln 1 taken as 0).
    pub omega_lnk_partial_sums: Vec<(usize, f64)>,
    /// `(k, omega_k)` samples at checkpoints.
    pub omega_samples: Vec<(usize, f64)>,
    /// `max_k sum_i 1 / A_ii(k)`.
    pub chi_estimate: f64,
    pub identity_gap_verdict: TrendVerdict,
    pub omega_lnk_verdict: TrendVerdict,
}

pub fn identity_approach_diagnostics<S: MatrixSequence>(
    seq: &S,
    window: usize,
    horizon: usize,
) -> Result<IdentityApproachReport, ErgodicityError> {
    if window < 2 {
        return Err(ErgodicityError::InvalidParams { reason: "window must be at least 2" });
    }
    if horizon < window {
        return Err(ErgodicityError::InvalidHorizon { s: window, horizon: horizon as i64 });
    }
    let n = seq.order();
    let pts = checkpoints(horizon);

    // Sliding cache of A(k), ..., A(k + window - 1).
    let mut cache: Vec<StochasticMatrix> = (1..=window).map(|t| seq.matrix(t)).collect();

    let mut gap_sum = 0.0;
    let mut omega_sum = 0.0;
    let mut gap_partials = Vec::with_capacity(pts.len());
    let mut omega_partials = Vec::with_capacity(pts.len());
    let mut omega_samples = Vec::with_capacity(pts.len());
    let mut chi: f64 = 0.0;
    let mut next_pt = 0usize;

    for k in 1..=horizon {
        let a_k = &cache[0];
        gap_sum += a_k.max_norm_from_identity() / k as f64;
        chi = chi.max((0..n).map(|i| 1.0 / a_k.get(i, i)).sum());

        // Phi(k, k + window - 1): the window product.
        let mut phi = cache[0].clone();
        for a in &cache[1..] {
            phi = a.multiply(&phi);
        }
        let omega = (0..n).map(|i| 1.0 - phi.get(i, i)).fold(0.0, f64::max);
        omega_sum += omega * libm::log(k as f64);

        while next_pt < pts.len() && pts[next_pt] == k {
            gap_partials.push((k, gap_sum));
            omega_partials.push((k, omega_sum));
            omega_samples.push((k, omega));
            next_pt += 1;
        }

        cache.remove(0);
        cache.push(seq.matrix(k + window));
    }

    let gap_at = |k: usize| -> f64 {
        gap_partials
            .iter()
            .rev()
            .find(|(p, _)| *p <= k)
            .map(|(_, v)| *v)
            .unwrap_or(0.0)
    };
    let omega_at = |k: usize| -> f64 {
        omega_partials
            .iter()
            .rev()
            .find(|(p, _)| *p <= k)
            .map(|(_, v)| *v)
            .unwrap_or(0.0)
    };

    Ok(IdentityApproachReport {
        window,
        horizon,
        identity_gap_verdict: trend_verdict(gap_at, horizon),
        omega_lnk_verdict: trend_verdict(omega_at, horizon),
        identity_gap_partial_sums: gap_partials,
        omega_lnk_partial_sums: omega_partials,
        omega_samples,
        chi_estimate: chi,
    })
}
