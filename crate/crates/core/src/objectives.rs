//! The six per-agent objective families with value and subgradient oracles,
//! seeded dataset sampling, derivative verification, and aggregation with
//! known minima where an independent oracle exists.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveError {
    UnknownFamily { name: String },
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for ObjectiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveError::UnknownFamily { name } => write!(f, "unknown objective family: {name}"),
            ObjectiveError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SquaredError,
    Softmax,
    AbsoluteError,
    Invex,
    LogSin,
    LinearExp,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::SquaredError,
        Family::Softmax,
        Family::AbsoluteError,
        Family::Invex,
        Family::LogSin,
        Family::LinearExp,
    ];

    pub fn parse(name: &str) -> Result<Self, ObjectiveError> {
        match name {
            "squared_error" => Ok(Family::SquaredError),
            "softmax" => Ok(Family::Softmax),
            "absolute_error" => Ok(Family::AbsoluteError),
            "invex" => Ok(Family::Invex),
            "log_sin" => Ok(Family::LogSin),
            "linear_exp" => Ok(Family::LinearExp),
            other => Err(ObjectiveError::UnknownFamily { name: String::from(other) }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::SquaredError => "squared_error",
            Family::Softmax => "softmax",
            Family::AbsoluteError => "absolute_error",
            Family::Invex => "invex",
            Family::LogSin => "log_sin",
            Family::LinearExp => "linear_exp",
        }
    }

    /// The three bivariate families have a fixed domain dimension.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Family::Invex | Family::LogSin | Family::LinearExp => Some(2),
            _ => None,
        }
    }

    /// Length of the coefficient vector `a` for domain dimension `dim`.
    fn a_len(&self, dim: usize) -> usize {
        match self {
            Family::SquaredError | Family::AbsoluteError => dim,
            // Scalar coefficient for softmax and the bivariate families.
            _ => 1,
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self, Family::SquaredError | Family::Softmax | Family::AbsoluteError)
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Family::AbsoluteError | Family::Invex)
    }
}

/// One agent's data pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Per-agent pairs sampled from a seeded stream: `a` entries uniform on
/// [-1,1] excluding [-0.1,0.1] (keeps designs away from degeneracy), `b`
/// uniform on [-1,1]. Softmax coefficients take the magnitude so the
/// objective stays convex.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub family: Family,
    pub dim: usize,
    pub seed: u64,
    pub entries: Vec<DatasetEntry>,
}

fn sample_coefficient(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = rng.random::<f64>() * 2.0 - 1.0;
        if libm::fabs(v) > 0.1 {
            return v;
        }
    }
}

impl Dataset {
    pub fn sample(
        family: Family,
        dim: usize,
        agents: usize,
        seed: u64,
    ) -> Result<Self, ObjectiveError> {
        if let Some(d) = family.fixed_dim() {
            if dim != d {
                return Err(ObjectiveError::DimensionMismatch { expected: d, got: dim });
            }
        }
        if dim == 0 {
            return Err(ObjectiveError::DimensionMismatch { expected: 1, got: 0 });
        }
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        let a_len = family.a_len(dim);
        let entries = (0..agents)
            .map(|_| {
                let mut a: Vec<f64> = (0..a_len).map(|_| sample_coefficient(&mut rng)).collect();
                if family == Family::Softmax {
                    for v in &mut a {
                        *v = libm::fabs(*v);
                    }
                }
                let b = rng.random::<f64>() * 2.0 - 1.0;
                DatasetEntry { a, b }
            })
            .collect();
        Ok(Dataset { family, dim, seed, entries })
    }
}

/// One agent's objective: value and subgradient oracles plus declared
/// structure flags and a per-instance subgradient bound on [-1,1]^dim.
#[derive(Debug, Clone, Serialize)]
pub struct Objective {
    pub family: Family,
    pub dim: usize,
    pub a: Vec<f64>,
    pub b: f64,
    pub convex: bool,
    pub smooth: bool,
    /// Bound on the subgradient Euclidean norm over [-1,1]^dim.
    pub l_bound: f64,
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(u, v)| u * v).sum()
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|u| u * u).sum())
}

pub fn make_objective(
    family: Family,
    entry: &DatasetEntry,
    dim: usize,
) -> Result<Objective, ObjectiveError> {
    if let Some(d) = family.fixed_dim() {
        if dim != d {
            return Err(ObjectiveError::DimensionMismatch { expected: d, got: dim });
        }
    }
    let want = family.a_len(dim);
    if entry.a.len() != want {
        return Err(ObjectiveError::DimensionMismatch { expected: want, got: entry.a.len() });
    }
    let a = entry.a.clone();
    let b = entry.b;
    let ca = libm::fabs(a[0]);
    let cb = libm::fabs(b);
    let l_bound = match family {
        Family::SquaredError => {
            let a1: f64 = a.iter().map(|v| libm::fabs(*v)).sum();
            2.0 * (a1 + cb) * norm(&a)
        }
        // Gradient is a * softmax(x), a probability vector of 2-norm <= 1.
        Family::Softmax => ca,
        Family::AbsoluteError => norm(&a),
        Family::Invex => {
            // |df/dx| <= 4|b||a|(|b|+1), |df/dy| <= |a|(|b|+1)^2 on the box.
            let gx = 4.0 * cb * ca * (cb + 1.0);
            let gy = ca * (cb + 1.0) * (cb + 1.0);
            libm::sqrt(gx * gx + gy * gy)
        }
        Family::LogSin => {
            // |2ax/(1+x^2+y^2)| <= |a| and |sin(2(x+b))| <= 1.
            let gx = ca + 1.0;
            let gy = ca;
            libm::sqrt(gx * gx + gy * gy)
        }
        Family::LinearExp => {
            let e = libm::exp((1.0 + cb) * (1.0 + cb));
            let amp = (ca + 0.5) * (ca + 0.5);
            let gx = amp * e * 2.0 * (1.0 + cb);
            let gy = 2.0 * ca * (ca + 0.5) * e;
            libm::sqrt(gx * gx + gy * gy)
        }
    };
    Ok(Objective {
        family,
        dim,
        a,
        b,
        convex: family.is_convex(),
        smooth: family.is_smooth(),
        l_bound,
    })
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match self.family {
            Family::SquaredError => {
                let r = dot(&self.a, x) - self.b;
                r * r
            }
            Family::Softmax => {
                // log-sum-exp with max shift for stability.
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = x.iter().map(|v| libm::exp(v - m)).sum();
                self.a[0] * (m + libm::log(s))
            }
            Family::AbsoluteError => libm::fabs(dot(&self.a, x) - self.b),
            Family::Invex => {
                let (xv, yv) = (x[0], x[1]);
                let w = self.b * xv * xv - 1.0;
                libm::fabs(self.a[0] * yv) * w * w
            }
            Family::LogSin => {
                let (xv, yv) = (x[0], x[1]);
                let s = libm::sin(xv + self.b);
                self.a[0] * libm::log(1.0 + xv * xv + yv * yv) + s * s
            }
            Family::LinearExp => {
                let (xv, yv) = (x[0], x[1]);
                let r = self.a[0] * yv - 0.5;
                r * r * libm::exp((xv - self.b) * (xv - self.b))
            }
        }
    }

    /// A valid subgradient; the zero element of the subdifferential at the
    /// nondifferentiable loci (zero residual for absolute error, y = 0 for
    /// the invex family).
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        match self.family {
            Family::SquaredError => {
                let r = dot(&self.a, x) - self.b;
                self.a.iter().map(|ai| 2.0 * r * ai).collect()
            }
            Family::Softmax => {
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|v| libm::exp(v - m)).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| self.a[0] * v / s).collect()
            }
            Family::AbsoluteError => {
                let r = dot(&self.a, x) - self.b;
                if r == 0.0 {
                    vec![0.0; self.dim]
                } else {
                    let sign = if r > 0.0 { 1.0 } else { -1.0 };
                    self.a.iter().map(|ai| sign * ai).collect()
                }
            }
            Family::Invex => {
                let (xv, yv) = (x[0], x[1]);
                let a = self.a[0];
                let w = self.b * xv * xv - 1.0;
                let gx = libm::fabs(a * yv) * 2.0 * w * 2.0 * self.b * xv;
                let gy = if a * yv == 0.0 {
                    0.0
                } else {
                    let sign = if a * yv > 0.0 { 1.0 } else { -1.0 };
                    sign * a * w * w
                };
                vec![gx, gy]
            }
            Family::LogSin => {
                let (xv, yv) = (x[0], x[1]);
                let s = 1.0 + xv * xv + yv * yv;
                let gx = 2.0 * self.a[0] * xv / s + libm::sin(2.0 * (xv + self.b));
                let gy = 2.0 * self.a[0] * yv / s;
                vec![gx, gy]
            }
            Family::LinearExp => {
                let (xv, yv) = (x[0], x[1]);
                let r = self.a[0] * yv - 0.5;
                let e = libm::exp((xv - self.b) * (xv - self.b));
                vec![r * r * e * 2.0 * (xv - self.b), 2.0 * self.a[0] * r * e]
            }
        }
    }
}

/// Max over points of `||g - central_difference|| / (1 + ||g||)`.
/// Callers must keep points at distance >= 10h from any nonsmooth locus.
pub fn finite_difference_check(obj: &Objective, points: &[Vec<f64>], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = obj.subgradient(x);
        let mut diff_sq = 0.0;
        let mut xp = x.clone();
        for j in 0..obj.dim {
            let orig = xp[j];
            xp[j] = orig + h;
            let fp = obj.value(&xp);
            xp[j] = orig - h;
            let fm = obj.value(&xp);
            xp[j] = orig;
            let cd = (fp - fm) / (2.0 * h);
            diff_sq += (g[j] - cd) * (g[j] - cd);
        }
        worst = worst.max(libm::sqrt(diff_sq) / (1.0 + norm(&g)));
    }
    worst
}

/// The global objective `f(x) = sum_i f_i(x)`.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateObjective {
    pub components: Vec<Objective>,
    pub dim: usize,
    /// Box-feasible minimizer when an independent oracle derives one.
    pub minimizer: Option<Vec<f64>>,
    pub known_minimum: Option<f64>,
    /// Quadratic-growth constant for PL-flagged (squared-error) aggregates.
    pub pl_mu: Option<f64>,
}

impl AggregateObjective {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum()
    }

    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for c in &self.components {
            for (gi, ci) in g.iter_mut().zip(c.subgradient(x)) {
                *gi += ci;
            }
        }
        g
    }
}

/// Gaussian elimination with partial pivoting; `None` on (near-)singular
/// systems. Small dense systems only.
fn solve_linear(mut m: Vec<f64>, mut rhs: Vec<f64>, d: usize) -> Option<Vec<f64>> {
    for col in 0..d {
        let mut piv = col;
        for r in col + 1..d {
            if libm::fabs(m[r * d + col]) > libm::fabs(m[piv * d + col]) {
                piv = r;
            }
        }
        if libm::fabs(m[piv * d + col]) < 1e-12 {
            return None;
        }
        if piv != col {
            for c in 0..d {
                m.swap(col * d + c, piv * d + c);
            }
            rhs.swap(col, piv);
        }
        for r in col + 1..d {
            let f = m[r * d + col] / m[col * d + col];
            for c in col..d {
                m[r * d + c] -= f * m[col * d + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let mut acc = rhs[row];
        for c in row + 1..d {
            acc -= m[row * d + c] * x[c];
        }
        x[row] = acc / m[row * d + row];
    }
    Some(x)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(mut m: Vec<f64>, d: usize) -> Vec<f64> {
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += m[p * d + q] * m[p * d + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if libm::fabs(apq) < 1e-300 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).collect()
}

/// Sums the agents' oracles. For an all-squared-error ensemble the
/// least-squares minimizer is derived from the normal equations and kept
/// only when it lies inside [-1,1]^dim (the experimental feasible box);
/// `pl_mu` is twice the smallest positive Gram eigenvalue. An all-invex
/// ensemble gets its known minimum 0 (attained on the y = 0 axis).
pub fn aggregate(components: Vec<Objective>) -> Result<AggregateObjective, ObjectiveError> {
    let dim = components
        .first()
        .map(|c| c.dim)
        .ok_or(ObjectiveError::DimensionMismatch { expected: 1, got: 0 })?;
    for c in &components {
        if c.dim != dim {
            return Err(ObjectiveError::DimensionMismatch { expected: dim, got: c.dim });
        }
    }
    let mut minimizer = None;
    let mut known_minimum = None;
    let mut pl_mu = None;
    if components.iter().all(|c| c.family == Family::SquaredError) {
        // Normal equations: (sum a a^T) x = sum b a.
        let mut gram = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for c in &components {
            for i in 0..dim {
                for j in 0..dim {
                    gram[i * dim + j] += c.a[i] * c.a[j];
                }
                rhs[i] += c.b * c.a[i];
            }
        }
        let eigs = symmetric_eigenvalues(gram.clone(), dim);
        let min_pos = eigs.iter().copied().filter(|&e| e > 1e-10).fold(f64::INFINITY, f64::min);
        if min_pos.is_finite() {
            pl_mu = Some(2.0 * min_pos);
        }
        if let Some(x) = solve_linear(gram, rhs, dim) {
            if x.iter().all(|v| libm::fabs(*v) <= 1.0 + 1e-9) {
                let mut f = 0.0;
                for c in &components {
                    let r = dot(&c.a, &x) - c.b;
                    f += r * r;
                }
                known_minimum = Some(f);
                minimizer = Some(x);
            }
        }
    } else if components.iter().all(|c| c.family == Family::Invex) {
        known_minimum = Some(0.0);
    }
    Ok(AggregateObjective { components, dim, minimizer, known_minimum, pl_mu })
}
