//! End-to-end acceptance suite. Each numbered test checks one release
//! criterion and prints a single pass/fail line with the measured figures.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use tvconsensus_core::ergodicity::{
    estimate_pi, gamma_bound, pi_uniform_gap, AssumptionParams,
};
use tvconsensus_core::objectives::{
    aggregate, finite_difference_check, make_objective, AggregateObjective, Dataset, Family,
};
use tvconsensus_core::optimizer::{run, FeasibleBox, Method, OptimizerConfig, Trajectory};
use tvconsensus_core::product::{backward_product, extend_backward_product};
use tvconsensus_core::topology::{GeneratedSequence, TopologyConfig, TopologyMode};
use tvconsensus_core::StochasticMatrix;

fn report(n: usize, label: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("criterion {n}: PASS - {label} ({detail})"),
        Err(msg) => {
            println!("criterion {n}: FAIL - {label}: {msg}");
            panic!("criterion {n} failed: {msg}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> StochasticMatrix {
    let density = 0.15 + 0.7 * rng.random::<f64>();
    let mut raw = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < density {
                raw[i * n + j] = 1.0 - rng.random::<f64>();
            }
        }
        if raw[i * n..(i + 1) * n].iter().all(|&v| v == 0.0) {
            let j = rng.random_range(0..n);
            raw[i * n + j] = 1.0 - rng.random::<f64>();
        }
    }
    StochasticMatrix::normalize_rows(n, raw, 1e-15).unwrap()
}

/// Indices reachable in one step from `set` through positive entries.
fn consequent_oracle(m: &StochasticMatrix, set: &[usize]) -> Vec<usize> {
    (0..m.order())
        .filter(|&j| set.iter().any(|&i| m.get(i, j) > m.zero_tol()))
        .collect()
}

/// Literal enumeration over all pairs of disjoint nonempty index sets:
/// consequents must intersect or their union must exceed the combined
/// source cardinality.
fn sarymsakov_oracle(m: &StochasticMatrix) -> bool {
    let n = m.order();
    for s in 1usize..(1 << n) {
        for sp in 1usize..(1 << n) {
            if s & sp != 0 {
                continue;
            }
            let set_s: Vec<usize> = (0..n).filter(|i| s >> i & 1 == 1).collect();
            let set_sp: Vec<usize> = (0..n).filter(|i| sp >> i & 1 == 1).collect();
            let fs = consequent_oracle(m, &set_s);
            let fsp = consequent_oracle(m, &set_sp);
            if fs.iter().any(|j| fsp.contains(j)) {
                continue;
            }
            let mut union = fs.clone();
            for j in &fsp {
                if !union.contains(j) {
                    union.push(*j);
                }
            }
            if union.len() <= set_s.len() + set_sp.len() {
                return false;
            }
        }
    }
    true
}

/// Every proper nonempty set must have a positive entry leaving it.
fn connectivity_oracle(m: &StochasticMatrix) -> bool {
    let n = m.order();
    for s in 1usize..((1 << n) - 1) {
        let escapes = (0..n).any(|i| {
            s >> i & 1 == 1
                && (0..n).any(|j| s >> j & 1 == 0 && m.get(i, j) > m.zero_tol())
        });
        if !escapes {
            return false;
        }
    }
    true
}

fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

fn build_aggregate(family: Family, dim: usize, agents: usize, seed: u64) -> AggregateObjective {
    let ds = Dataset::sample(family, dim, agents, seed).unwrap();
    let objs: Vec<_> = ds
        .entries
        .iter()
        .map(|e| make_objective(family, e, dim).unwrap())
        .collect();
    aggregate(objs).unwrap()
}

fn run_method(
    method: Method,
    topology_seed: u64,
    agg: &AggregateObjective,
    iterations: usize,
) -> Trajectory {
    let seq = GeneratedSequence::new(TopologyConfig::new(6, topology_seed).unwrap()).unwrap();
    let params = AssumptionParams::new(6, 0.5, 0.5).unwrap();
    let cfg = OptimizerConfig { method, iterations, step_scale: 1.0, state_seed: 0 };
    run(&cfg, &seq, agg, &FeasibleBox::unit(agg.dim), &params).unwrap()
}

fn last_decade_movement(t: &Trajectory) -> f64 {
    let k = t.records.len() - 1;
    let tail = &t.records[(k - k / 10).max(1)..];
    tail.iter().map(|r| r.movement).sum::<f64>() / tail.len() as f64
}

fn cli_bin() -> &'static str {
    env!("CARGO_BIN_EXE_tvconsensus")
}

#[test]
fn criterion_01_classifier_oracle_equivalence() {
    report(1, "classifiers agree with brute-force enumeration", (|| {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::from_seed([1; 32]);
        let mut checked = 0;
        for n in 2..=8usize {
            for _ in 0..200 {
                let m = random_stochastic(n, &mut rng);
                let (got_s, want_s) = (m.is_sarymsakov().unwrap(), sarymsakov_oracle(&m));
                ensure!(got_s == want_s, "sarymsakov mismatch at n={n}: {:?}", m.entries());
                let got_c = m.satisfies_connectivity_condition().unwrap();
                let want_c = connectivity_oracle(&m);
                ensure!(got_c == want_c, "connectivity mismatch at n={n}: {:?}", m.entries());
                checked += 1;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 60.0, "took {secs:.1}s, budget 60s");
        Ok(format!("{checked} matrices, {secs:.2}s"))
    })());
}

#[test]
fn criterion_02_product_chain_scrambling_then_positive_column() {
    report(2, "n-1 factors scramble, B factors give a positive column", (|| {
        let mut checked = 0;
        for n in 3..=8usize {
            let b = (n - 1) * ceil_log2(n);
            for seed in 0..200u64 {
                let seq =
                    GeneratedSequence::new(TopologyConfig::new(n, seed).unwrap()).unwrap();
                let scram = backward_product(&seq, 0, n as i64 - 2);
                ensure!(
                    scram.value.is_scrambling(),
                    "product of {} factors not scrambling (n={n}, seed={seed})",
                    n - 1
                );
                let pc = backward_product(&seq, 0, b as i64 - 1);
                ensure!(
                    pc.value.positive_column_index().is_some(),
                    "no positive column after {b} factors (n={n}, seed={seed})"
                );
                checked += 1;
            }
        }
        Ok(format!("{checked} sequences, zero counterexamples"))
    })());
}

#[test]
fn criterion_03_product_entry_lower_bound() {
    report(3, "positive product entries dominate the per-factor minimum product", (|| {
        let mut rng = ChaCha8Rng::from_seed([3; 32]);
        let mut entries = 0;
        for seed in 0..100u64 {
            let seq = GeneratedSequence::new(TopologyConfig::new(6, seed).unwrap()).unwrap();
            let s = rng.random_range(0..40usize);
            let k = s + rng.random_range(0..=30usize);
            let p = backward_product(&seq, s, k as i64);
            for i in 0..6 {
                for j in 0..6 {
                    let v = p.value.get(i, j);
                    if v > p.value.zero_tol() {
                        ensure!(
                            v >= p.beta_product - 1e-12,
                            "Phi[{i}][{j}]={v:e} < {:e} (seed={seed}, s={s}, k={k})",
                            p.beta_product
                        );
                        entries += 1;
                    }
                }
            }
        }
        Ok(format!("{entries} positive entries over 100 sequences"))
    })());
}

#[test]
fn criterion_04_deviation_dominated_by_gamma() {
    report(4, "product-to-weight deviation under the certified bound", (|| {
        let start = Instant::now();
        let params = AssumptionParams::new(6, 0.5, 0.5).unwrap();
        let b = params.b();
        let (k, horizon) = (10 * b, 60 * b);
        let gamma = gamma_bound(&params, 0, k, 1e-10).map_err(|e| format!("{e:?}"))?;
        let mut worst_margin = f64::INFINITY;
        for seed in 0..50u64 {
            let seq = GeneratedSequence::new(TopologyConfig::new(6, seed).unwrap()).unwrap();
            let phi = backward_product(&seq, 0, k as i64);
            let pi = estimate_pi(&seq, 0, horizon).map_err(|e| format!("{e:?}"))?;
            let mut dev: f64 = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    dev = dev.max((phi.value.get(i, j) - pi.pi_hat[j]).abs());
                }
            }
            let bound = gamma.upper() + pi.spread_at_horizon + 1e-9;
            ensure!(dev <= bound, "seed {seed}: deviation {dev:e} exceeds bound {bound:e}");
            worst_margin = worst_margin.min(bound - dev);
        }
        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 300.0, "took {secs:.1}s, budget 300s");
        Ok(format!("50 seeds, k={k}, min slack {worst_margin:.3e}, {secs:.2}s"))
    })());
}

#[test]
fn criterion_05_row_spread_decay() {
    report(5, "backward-product row spread falls below 1e-6", (|| {
        let mut worst_blocks = 0;
        for n in 2..=8usize {
            let b = (n - 1) * ceil_log2(n);
            for seed in 0..20u64 {
                let seq =
                    GeneratedSequence::new(TopologyConfig::new(n, seed).unwrap()).unwrap();
                let mut prod = backward_product(&seq, 0, -1);
                let mut converged = None;
                for m in 1..=200usize {
                    while prod.k < (m * b) as i64 - 1 {
                        extend_backward_product(&seq, &mut prod);
                    }
                    if prod.value.row_spread() < 1e-6 {
                        converged = Some(m);
                        break;
                    }
                }
                match converged {
                    Some(m) => worst_blocks = worst_blocks.max(m),
                    None => {
                        return Err(format!("spread stayed >= 1e-6 (n={n}, seed={seed})"))
                    }
                }
            }
        }
        Ok(format!("n in 2..=8, 20 seeds each, worst case {worst_blocks} blocks"))
    })());
}

#[test]
fn criterion_06_identity_approaching_weights_tend_uniform() {
    report(6, "weight estimates approach uniform as start time grows", (|| {
        let mut last_gaps = Vec::new();
        for seed in 0..10u64 {
            let mut cfg = TopologyConfig::new(6, seed).unwrap();
            cfg.mode = TopologyMode::IdentityApproaching;
            cfg.epsilon_exponent = 1.5;
            let seq = GeneratedSequence::new(cfg).unwrap();
            let mut gaps = Vec::new();
            for s in [100usize, 1_000, 10_000] {
                let est = estimate_pi(&seq, s, s + 3_000).map_err(|e| format!("{e:?}"))?;
                gaps.push(pi_uniform_gap(&est));
            }
            ensure!(
                gaps[0] > gaps[1] && gaps[1] > gaps[2],
                "seed {seed}: gaps not decreasing: {gaps:?}"
            );
            ensure!(gaps[2] < 0.02, "seed {seed}: gap at s=1e4 is {:e}", gaps[2]);
            last_gaps.push(gaps[2]);
        }
        let max = last_gaps.iter().copied().fold(0.0, f64::max);
        Ok(format!("10 seeds, max gap at s=1e4: {max:.2e}"))
    })());
}

#[test]
fn criterion_07_scalar_series_identities() {
    report(7, "telescoping, summable products, and bound-decay probes", (|| {
        // Product of (1 - 1/(k+1)) for k = 1..=K telescopes to 1/(K+1).
        let big_k = 10_000usize;
        let mut prod = 1.0;
        for k in 1..=big_k {
            prod *= 1.0 - 1.0 / (k + 1) as f64;
        }
        let exact = 1.0 / (big_k + 1) as f64;
        let rel = ((prod - exact) / exact).abs();
        ensure!(rel <= 1e-12, "telescoping relative error {rel:e}");

        // Summable terms leave a positive product limit.
        let mut sp = 1.0;
        for k in 1..=1_000_000usize {
            sp *= 1.0 - 1.0 / ((k + 1) as f64 * (k + 1) as f64);
        }
        ensure!(sp > 0.4, "summable product collapsed to {sp:e}");

        // The convergence bound is non-increasing along the block grid.
        let params = AssumptionParams::new(6, 0.5, 0.5).unwrap();
        let b = params.b();
        let mut prev = f64::INFINITY;
        for m in 0..=50usize {
            let g = gamma_bound(&params, 0, m * b, 1e-10).map_err(|e| format!("{e:?}"))?;
            ensure!(g.value <= prev + 1e-12, "bound grew at block {m}");
            prev = g.value;
        }

        // k^mu * bound decreasing across sampled decades, mu in {1, 2}.
        for mu in [1.0f64, 2.0] {
            let probes: Vec<f64> = [10usize, 100, 1_000]
                .iter()
                .map(|&d| {
                    let k = d * b;
                    Ok((k as f64).powf(mu)
                        * gamma_bound(&params, 0, k, 1e-12)
                            .map_err(|e| format!("{e:?}"))?
                            .upper())
                })
                .collect::<Result<_, String>>()?;
            ensure!(
                probes[0] > probes[1] && probes[1] > probes[2],
                "k^{mu} * bound not decreasing: {probes:?}"
            );
        }
        Ok(format!("telescoping rel err {rel:.1e}, summable limit {sp:.3}"))
    })());
}

#[test]
fn criterion_08_subgradients_match_finite_differences() {
    report(8, "subgradient oracles match central differences", (|| {
        let mut rng = ChaCha8Rng::from_seed([8; 32]);
        let mut worst: f64 = 0.0;
        for family in Family::ALL {
            let dim = family.fixed_dim().unwrap_or(3);
            let ds = Dataset::sample(family, dim, 6, 5).unwrap();
            for entry in &ds.entries {
                let obj = make_objective(family, entry, dim).unwrap();
                let mut points = Vec::new();
                while points.len() < 25 {
                    let x: Vec<f64> =
                        (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    // Keep clear of the nonsmooth loci (criterion samples
                    // only qualifying points).
                    let qualifies = match family {
                        Family::AbsoluteError => {
                            let r: f64 =
                                obj.a.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() - obj.b;
                            r.abs() > 1e-3
                        }
                        Family::Invex => x[1].abs() > 1e-3,
                        _ => true,
                    };
                    if qualifies {
                        points.push(x);
                    }
                }
                let err = finite_difference_check(&obj, &points, 1e-6);
                ensure!(err < 1e-5, "{} error {err:e}", family.name());
                worst = worst.max(err);
            }
        }
        Ok(format!("six families, 25 points per instance, worst {worst:.1e}"))
    })());
}

#[test]
fn criterion_09_convex_convergence() {
    report(9, "stretched projected method reaches consensus and the optimum", (|| {
        let start = Instant::now();
        let agg = build_aggregate(Family::SquaredError, 6, 6, 8);
        let fstar = agg.known_minimum.ok_or("expected a least-squares oracle minimum")?;
        let t = run_method(Method::Udpsg, 0, &agg, 20_000);
        let term = t.terminal();
        let gap = term.f_y - fstar;
        ensure!(
            term.consensus_error < 1e-3,
            "terminal consensus error {:e}",
            term.consensus_error
        );
        ensure!(gap < 1e-3, "optimality gap {gap:e}");
        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 120.0, "took {secs:.1}s, budget 120s");
        Ok(format!(
            "consensus {:.1e}, gap {:.1e}, {secs:.1}s",
            term.consensus_error, gap
        ))
    })());
}

#[test]
fn criterion_10_nonconvex_families_settle() {
    report(10, "invex run reaches zero; nonsmooth runs stop moving", (|| {
        let iterations = 400_000;
        let invex = run_method(Method::Udpsg, 0, &build_aggregate(Family::Invex, 2, 6, 1), iterations);
        let terminal_value = invex.terminal().f_mean;
        ensure!(terminal_value < 1e-3, "invex terminal value {terminal_value:e}");

        let mut movements = vec![("invex", last_decade_movement(&invex))];
        for family in [Family::LogSin, Family::LinearExp] {
            let t = run_method(Method::Udpsg, 0, &build_aggregate(family, 2, 6, 1), iterations);
            movements.push((family.name(), last_decade_movement(&t)));
        }
        for (name, m) in &movements {
            ensure!(*m < 1e-4, "{name} last-decade movement {m:e}");
        }
        Ok(format!(
            "invex value {terminal_value:.1e}; movements {:?}",
            movements
                .iter()
                .map(|(n, m)| format!("{n}={m:.1e}"))
                .collect::<Vec<_>>()
        ))
    })());
}

#[test]
fn criterion_11_method_comparison() {
    report(11, "paired-seed comparison across all four methods", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg_path = dir.path().join("config.json");
        std::fs::write(
            &cfg_path,
            r#"{
  "topology": {"n": 6, "seed": 0},
  "objective": {"family": "squared_error", "dim": 6, "dataset_seed": 8},
  "optimizer": {
    "methods": ["UDPSG", "UDSG", "SPSG", "SDSG"],
    "iterations": 30000,
    "step_scale": 0.25,
    "state_seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
  }
}"#,
        )
        .map_err(|e| e.to_string())?;
        let out = dir.path().join("out");
        let status = Command::new(cli_bin())
            .args(["compare", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .args(["--threads", "4"])
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "compare exited with {status}");
        let summary: Value = serde_json::from_str(
            &std::fs::read_to_string(out.join("summary.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            summary["udpsg_consensus_not_worse_than_spsg"] == Value::Bool(true),
            "median UDPSG terminal consensus error exceeds SPSG"
        );
        let mut min_factor = f64::INFINITY;
        for method in summary["methods"].as_array().ok_or("methods missing")? {
            for f in method["consensus_decrease_factors"]
                .as_array()
                .ok_or("factors missing")?
            {
                let v = f.as_f64().unwrap_or(f64::INFINITY);
                ensure!(
                    v >= 100.0,
                    "{} consensus decreased only {v:.1}x from k=10",
                    method["method"]
                );
                min_factor = min_factor.min(v);
            }
        }
        Ok(format!("10 paired seeds, minimum consensus decrease {min_factor:.0}x"))
    })());
}

fn dir_snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().into_string().map_err(|_| "non-utf8 name")?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.push((name, bytes));
    }
    files.sort();
    Ok(files)
}

#[test]
fn criterion_12_byte_reproducibility() {
    report(12, "re-running a config byte-reproduces every output file", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let configs = [
            (
                "ergodicity",
                r#"{"topology": {"n": 6, "seed": 3},
                    "ergodicity": {"s_list": [0, 5], "k_list": [150], "horizon": 900,
                                   "snapshots": [0, 1]}}"#,
            ),
            (
                "optimize",
                r#"{"topology": {"n": 6, "seed": 3},
                    "objective": {"family": "squared_error", "dim": 2, "dataset_seed": 2},
                    "optimizer": {"methods": ["UDPSG"], "iterations": 500}}"#,
            ),
            (
                "compare",
                r#"{"topology": {"n": 6, "seed": 3},
                    "objective": {"family": "absolute_error", "dim": 2, "dataset_seed": 2},
                    "optimizer": {"methods": ["UDPSG", "SPSG"], "iterations": 300,
                                  "state_seeds": [0, 1]}}"#,
            ),
        ];
        let mut total = 0;
        for (cmd, cfg) in configs {
            let cfg_path = dir.path().join(format!("{cmd}.json"));
            std::fs::write(&cfg_path, cfg).map_err(|e| e.to_string())?;
            let mut outs = Vec::new();
            for rep in 0..2 {
                let out = dir.path().join(format!("{cmd}_{rep}"));
                let status = Command::new(cli_bin())
                    .arg(cmd)
                    .arg("--config")
                    .arg(&cfg_path)
                    .arg("--out")
                    .arg(&out)
                    .args(["--threads", if rep == 0 { "1" } else { "3" }])
                    .arg("--validate")
                    .status()
                    .map_err(|e| e.to_string())?;
                ensure!(status.success(), "{cmd} run {rep} exited with {status}");
                outs.push(dir_snapshot(&out)?);
            }
            let names: Vec<&String> = outs[0].iter().map(|(n, _)| n).collect();
            ensure!(
                outs[0] == outs[1],
                "{cmd} reruns differ across {names:?}"
            );
            total += outs[0].len();
        }
        Ok(format!("3 subcommands, {total} files byte-identical across reruns"))
    })());
}
