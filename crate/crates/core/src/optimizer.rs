//! Decentralized projected subgradient methods over a time-varying matrix
//! sequence: the diagonally-stretched projected method and three baselines,
//! plus the auxiliary weighted-average sequence and per-iteration metrics.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ergodicity::{estimate_pi, AssumptionParams, ErgodicityError};
use crate::matrix::StochasticMatrix;
use crate::objectives::AggregateObjective;
use crate::product::{MatrixSequence, MaterializedSequence};

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerError {
    /// A diagonally-stretched method hit a (near-)zero diagonal entry.
    ZeroDiagonal { agent: usize, iteration: usize },
    Mismatch { reason: &'static str },
    Ergodicity(ErgodicityError),
}

impl fmt::Display for OptimizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerError::ZeroDiagonal { agent, iteration } => {
                write!(f, "zero diagonal for agent {agent} at iteration {iteration}")
            }
            OptimizerError::Mismatch { reason } => write!(f, "inconsistent inputs: {reason}"),
            OptimizerError::Ergodicity(e) => write!(f, "{e}"),
        }
    }
}

impl From<ErgodicityError> for OptimizerError {
    fn from(e: ErgodicityError) -> Self {
        OptimizerError::Ergodicity(e)
    }
}

/// Axis-aligned feasible set with componentwise bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FeasibleBox {
    /// The experimental default `[-1, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        FeasibleBox { lower: vec![-1.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(OptimizerError::Mismatch { reason: "box bounds length mismatch" });
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return Err(OptimizerError::Mismatch { reason: "box requires lower < upper" });
        }
        Ok(())
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        libm::sqrt(self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l) * (u - l)).sum())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }
}

/// Componentwise clamp onto the box.
pub fn project_box(fbox: &FeasibleBox, x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(fbox.lower.iter().zip(&fbox.upper))
        .map(|(v, (l, u))| v.max(*l).min(*u))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// Mix, stretch the subgradient by the inverse diagonal, step, project.
    Udpsg,
    /// Same without projection.
    Udsg,
    /// Plain mix-and-step with projection.
    Spsg,
    /// Plain mix-and-step without projection.
    Sdsg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Udpsg, Method::Udsg, Method::Spsg, Method::Sdsg];

    pub fn parse(name: &str) -> Option<Method> {
        match name {
            "UDPSG" | "udpsg" => Some(Method::Udpsg),
            "UDSG" | "udsg" => Some(Method::Udsg),
            "SPSG" | "spsg" => Some(Method::Spsg),
            "SDSG" | "sdsg" => Some(Method::Sdsg),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Udpsg => "UDPSG",
            Method::Udsg => "UDSG",
            Method::Spsg => "SPSG",
            Method::Sdsg => "SDSG",
        }
    }

    pub fn stretched(&self) -> bool {
        matches!(self, Method::Udpsg | Method::Udsg)
    }

    pub fn projected(&self) -> bool {
        matches!(self, Method::Udpsg | Method::Spsg)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Number of update steps K; the trajectory holds K + 1 records.
    pub iterations: usize,
    /// Step rule alpha_k = step_scale / k, k counted from 1.
    pub step_scale: f64,
    /// Seed for the initial states, uniform over the box.
    pub state_seed: u64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.step_scale > 0.0) {
            return Err(OptimizerError::Mismatch { reason: "step_scale must be positive" });
        }
        Ok(())
    }
}

/// One synchronous update across all agents.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next: Vec<Vec<f64>>,
    /// Pre-projection points `v_i = mix_i - alpha * stretched gradient`.
    pub v: Vec<Vec<f64>>,
    /// Projection errors `xi_i = x_{i,k+1} - v_i` (zero for unprojected methods).
    pub xi: Vec<Vec<f64>>,
    /// Innovations `u_i = x_{i,k+1} - mix_i`, the auxiliary-sequence input.
    pub u: Vec<Vec<f64>>,
}

pub fn step(
    method: Method,
    states: &[Vec<f64>],
    a: &StochasticMatrix,
    objectives: &[crate::objectives::Objective],
    alpha: f64,
    fbox: &FeasibleBox,
    iteration: usize,
) -> Result<StepResult, OptimizerError> {
    let n = states.len();
    if a.order() != n || objectives.len() != n {
        return Err(OptimizerError::Mismatch { reason: "agent count mismatch" });
    }
    let dim = fbox.dim();
    let mixed = a.mix_states(states);
    let mut next = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut xis = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    for i in 0..n {
        let g = objectives[i].subgradient(&states[i]);
        let stretch = if method.stretched() {
            let d = a.get(i, i);
            if d <= a.zero_tol() {
                return Err(OptimizerError::ZeroDiagonal { agent: i, iteration });
            }
            1.0 / d
        } else {
            1.0
        };
        let v: Vec<f64> =
            (0..dim).map(|j| mixed[i][j] - alpha * stretch * g[j]).collect();
        let x_next = if method.projected() { project_box(fbox, &v) } else { v.clone() };
        let xi: Vec<f64> = x_next.iter().zip(&v).map(|(x, vj)| x - vj).collect();
        let u: Vec<f64> = x_next.iter().zip(&mixed[i]).map(|(x, m)| x - m).collect();
        next.push(x_next);
        vs.push(v);
        xis.push(xi);
        us.push(u);
    }
    Ok(StepResult { next, v: vs, xi: xis, u: us })
}

/// `y_{k+1} = y_k + sum_i pi_hat_i * u_i`.
pub fn auxiliary_update(y: &mut [f64], pi_hat: &[f64], u: &[Vec<f64>]) {
    for (i, ui) in u.iter().enumerate() {
        for (yj, uj) in y.iter_mut().zip(ui) {
            *yj += pi_hat[i] * uj;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|u| u * u).sum())
}

/// `(1/n) * sum_i ||x_i - mean||`.
pub fn consensus_error(states: &[Vec<f64>]) -> f64 {
    let n = states.len();
    if n == 0 {
        return 0.0;
    }
    let dim = states[0].len();
    let mut mean = vec![0.0; dim];
    for x in states {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    states
        .iter()
        .map(|x| {
            let d: Vec<f64> = x.iter().zip(&mean).map(|(v, m)| v - m).collect();
            norm(&d)
        })
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub consensus_error: f64,
    /// Global objective at the agent average.
    pub f_mean: f64,
    /// Global objective at the auxiliary point.
    pub f_y: f64,
    /// Mean over agents of the step-to-step displacement (0 at k = 0).
    pub movement: f64,
    /// Row spread of the product behind the weight estimate in force.
    pub pi_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub method: Method,
    pub state_seed: u64,
    pub records: Vec<TrajectoryRecord>,
    pub final_states: Vec<Vec<f64>>,
    pub final_y: Vec<f64>,
}

impl Trajectory {
    pub fn terminal(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory holds at least the initial record")
    }
}

/// Per-index weight estimates for one block `[s0, s0 + b]`: an anchor
/// estimate at the block end (product over the next `40 B` factors) is
/// pulled back through `pi(t) = pi(t+1) A(t)`, which holds exactly for the
/// row-averaged estimates at a fixed horizon. The auxiliary sequence then
/// telescopes exactly within the block; crossing blocks re-anchors with a
/// jump bounded by the logged product spread.
struct PiTable {
    s0: usize,
    /// `values[i]` estimates the weight vector at index `s0 + i`, i <= b.
    values: Vec<Vec<f64>>,
    spread: f64,
}

fn build_pi_table<S: MatrixSequence>(
    seq: &S,
    s0: usize,
    b: usize,
    horizon_pad: usize,
) -> Result<PiTable, ErgodicityError> {
    let anchor = estimate_pi(seq, s0 + b, s0 + b + horizon_pad)?;
    let mut values = vec![Vec::new(); b + 1];
    values[b] = anchor.pi_hat;
    for i in (0..b).rev() {
        values[i] = seq.matrix(s0 + i).left_apply(&values[i + 1]);
    }
    Ok(PiTable { s0, values, spread: anchor.spread_at_horizon })
}

/// Runs `config.iterations` synchronous steps over the sequence.
///
/// The auxiliary point is steered by per-index weight estimates refreshed
/// every `B` iterations (see `PiTable`); the estimation spread is logged so
/// y-based metrics carry their honest error bar.
pub fn run<S: MatrixSequence>(
    config: &OptimizerConfig,
    seq: &S,
    aggregate: &AggregateObjective,
    fbox: &FeasibleBox,
    params: &AssumptionParams,
) -> Result<Trajectory, OptimizerError> {
    config.validate()?;
    fbox.validate()?;
    let n = seq.order();
    if aggregate.components.len() != n {
        return Err(OptimizerError::Mismatch { reason: "one objective per agent required" });
    }
    let dim = fbox.dim();
    if aggregate.dim != dim {
        return Err(OptimizerError::Mismatch { reason: "objective/box dimension mismatch" });
    }
    let big_k = config.iterations;
    let b = params.b();
    let horizon_pad = 40 * b;
    let seq = MaterializedSequence::new(seq, big_k + horizon_pad + 1);

    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&config.state_seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut states: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|j| {
                    fbox.lower[j] + rng.random::<f64>() * (fbox.upper[j] - fbox.lower[j])
                })
                .collect()
        })
        .collect();

    let mut pi = build_pi_table(&seq, 0, b, horizon_pad)?;
    let mut y = vec![0.0; dim];
    for (i, x) in states.iter().enumerate() {
        for (yj, xj) in y.iter_mut().zip(x) {
            *yj += pi.values[0][i] * xj;
        }
    }

    let mean_of = |states: &[Vec<f64>]| -> Vec<f64> {
        let mut mean = vec![0.0; dim];
        for x in states {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n as f64;
            }
        }
        mean
    };

    let mut records = Vec::with_capacity(big_k + 1);
    records.push(TrajectoryRecord {
        k: 0,
        consensus_error: consensus_error(&states),
        f_mean: aggregate.value(&mean_of(&states)),
        f_y: aggregate.value(&y),
        movement: 0.0,
        pi_spread: pi.spread,
    });

    for k in 0..big_k {
        let a = seq.matrix(k);
        let alpha = config.step_scale / (k + 1) as f64;
        let result = step(config.method, &states, &a, &aggregate.components, alpha, fbox, k)?;
        if config.method.projected() {
            for x in &result.next {
                debug_assert!(fbox.contains(x, 1e-12));
            }
        }
        // Weight estimate for index k+1, re-anchored once per block.
        while k + 1 > pi.s0 + b {
            pi = build_pi_table(&seq, pi.s0 + b, b, horizon_pad)?;
        }
        auxiliary_update(&mut y, &pi.values[k + 1 - pi.s0], &result.u);
        let movement = result
            .next
            .iter()
            .zip(&states)
            .map(|(xn, xo)| {
                let d: Vec<f64> = xn.iter().zip(xo).map(|(a, b)| a - b).collect();
                norm(&d)
            })
            .sum::<f64>()
            / n as f64;
        states = result.next;
        records.push(TrajectoryRecord {
            k: k + 1,
            consensus_error: consensus_error(&states),
            f_mean: aggregate.value(&mean_of(&states)),
            f_y: aggregate.value(&y),
            movement,
            pi_spread: pi.spread,
        });
    }

    Ok(Trajectory {
        method: config.method,
        state_seed: config.state_seed,
        records,
        final_states: states,
        final_y: y,
    })
}
