//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. The desk-scale training runs take several minutes.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{gradient_check, lagrangian_identity_gap, queue_oracle_check, updates_to_zero};
use lifenet::agents::ExplorationSchedule;
use lifenet::harness::{run_baseline, run_training, ExperimentConfig, PolicyKind};
use lifenet::lagrangian::DualState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if took > limit {
        o.pass = false;
    }
    o.detail = format!("{} ({:.2}s, limit {}s)", o.detail, took.as_secs_f64(), limit.as_secs());
    o
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn queue_oracle() -> Outcome {
    timed(Duration::from_secs(10), || match queue_oracle_check(1000, 20, 7) {
        Ok(()) => outcome(true, "1000 sequences x 20 slots match the oracle, conservation exact"),
        Err(e) => outcome(false, e),
    })
}

fn gradients() -> Outcome {
    timed(Duration::from_secs(30), || match gradient_check(20, 11) {
        Ok(worst) => outcome(true, format!("20 nets, worst relative error {worst:.2e}")),
        Err(e) => outcome(false, e),
    })
}

fn lagrangian_identity() -> Outcome {
    timed(Duration::from_secs(10), || {
        let gap = lagrangian_identity_gap(100, 3);
        outcome(gap <= 1e-9, format!("100 trajectories, max gap {gap:.2e}"))
    })
}

fn dual(training_lambdas: &[f64]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min_lambda = f64::INFINITY;
    for _ in 0..1000 {
        let nc = rng.random_range(1..4);
        let lambda0 = (0..nc).map(|_| rng.random_range(0.0..5.0)).collect();
        let eta = rng.random_range(0.0..0.5);
        let mut d = DualState::new(lambda0, vec![eta; nc], 10, 0.05);
        for _ in 0..200 {
            let m: Vec<f64> = (0..nc).map(|_| rng.random_range(-50.0..50.0)).collect();
            d.dual_update(&m).unwrap();
            min_lambda = d.lambda.iter().copied().fold(min_lambda, f64::min);
        }
    }
    min_lambda = training_lambdas.iter().copied().fold(min_lambda, f64::min);
    let (n, exact) = updates_to_zero(2.5617, 0.005);
    let expect = (2.5617f64 / 0.005).ceil() as u64;
    outcome(
        min_lambda >= 0.0 && exact && n == expect,
        format!(
            "min λ {min_lambda} over random and training runs; λ0=2.5617 hits 0 after {n} updates (expected {expect})"
        ),
    )
}

fn epsilon() -> Outcome {
    let s = ExplorationSchedule::default();
    let oracle = |k: i32| 0.99f64.powi(k).max(0.01);
    let at0 = s.epsilon(0);
    let at459 = s.epsilon(459);
    let mut monotone = true;
    let mut matches = true;
    for k in 0..5000u64 {
        monotone &= s.epsilon(k + 1) <= s.epsilon(k);
        matches &= s.epsilon(k) == oracle(k as i32);
    }
    outcome(
        at0 == 1.0 && at459 == 0.01 && monotone && matches,
        format!("ε(0)={at0}, ε(459)={at459}, non-increasing={monotone}"),
    )
}

/// Trains one seed and compares against UMW on the same seed. Returns the
/// verdict, a description and the multipliers seen in metrics.csv.
fn train_seed(seed: u64) -> (bool, String, Vec<f64>) {
    let mut config = ExperimentConfig::edge();
    config.seed = seed;
    let out = scratch(&format!("train_seed{seed}"));
    let report = match run_training(&config, &out) {
        Ok(r) => r,
        Err(e) => return (false, format!("seed {seed}: training failed: {e}"), Vec::new()),
    };
    let umw = match run_baseline(&config, PolicyKind::Umw, None) {
        Ok(s) => s,
        Err(e) => return (false, format!("seed {seed}: umw failed: {e}"), Vec::new()),
    };
    let s = &report.summary;
    let pass = s.meets_targets(0.02) && s.cost_per_episode <= umw.cost_per_episode;
    let lambdas = fs::read_to_string(out.join("metrics.csv"))
        .map(|csv| lambda_columns(&csv))
        .unwrap_or_default();
    let detail = format!(
        "seed {seed}: {} checkpoint (iteration {}), reliability {:.3}/{:.3}, cost {:.2} vs umw {:.2}",
        format!("{:?}", report.checkpoint.kind).to_lowercase(),
        report.checkpoint.iteration,
        s.reliability[0],
        s.reliability[1],
        s.cost_per_episode,
        umw.cost_per_episode
    );
    (pass, detail, lambdas)
}

fn lambda_columns(csv: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return Vec::new() };
    let idx: Vec<usize> =
        header.split(',').enumerate().filter(|(_, h)| h.starts_with("lambda_")).map(|(i, _)| i).collect();
    lines
        .flat_map(|l| {
            let fields: Vec<&str> = l.split(',').collect();
            idx.iter().filter_map(|&i| fields.get(i).and_then(|v| v.parse().ok())).collect::<Vec<f64>>()
        })
        .collect()
}

fn desk_scale() -> (Outcome, Vec<f64>) {
    let start = Instant::now();
    let results: Vec<(bool, String, Vec<f64>)> = std::thread::scope(|s| {
        let handles: Vec<_> = [1u64, 2, 3].into_iter().map(|seed| s.spawn(move || train_seed(seed))).collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let passed = results.iter().filter(|r| r.0).count();
    let mut detail = format!("{passed}/3 seeds meet targets at no more than UMW cost");
    for (ok, d, _) in &results {
        detail.push_str(&format!("\n      [{}] {d}", if *ok { "ok" } else { "no" }));
    }
    detail.push_str(&format!("\n      wall clock {:.0}s", start.elapsed().as_secs_f64()));
    let lambdas = results.into_iter().flat_map(|r| r.2).collect();
    (outcome(passed >= 2, detail), lambdas)
}

fn baselines() -> (Outcome, String) {
    let config = ExperimentConfig::edge();
    let mut pass = true;
    let mut parts = Vec::new();
    for policy in [PolicyKind::Bp, PolicyKind::Umw] {
        match run_baseline(&config, policy, None) {
            Ok(s) => {
                pass &= s.meets_targets(0.0);
                parts.push(format!("{policy} {:.3}/{:.3}", s.reliability[0], s.reliability[1]));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{policy} failed: {e}"));
            }
        }
    }
    let info = match run_baseline(&config.clone().with_rate(10.0), PolicyKind::Bp, None) {
        Ok(s) => format!(
            "bp at rate 10: commodity 1 reliability {:.3} vs target {} ({})",
            s.reliability[0],
            s.deltas[0],
            if s.reliability[0] < s.deltas[0] { "misses" } else { "meets" }
        ),
        Err(e) => format!("bp at rate 10 failed: {e}"),
    };
    (outcome(pass, format!("rate 6: {}", parts.join(", "))), info)
}

fn determinism() -> Outcome {
    let mut config = ExperimentConfig::edge();
    config.episodes.train = 200;
    config.episodes.improve = 50;
    config.episodes.test = 10;
    config.seed = 42;
    let a = scratch("determinism_a");
    let b = scratch("determinism_b");
    if let Err(e) = run_training(&config, &a).and_then(|_| run_training(&config, &b)) {
        return outcome(false, format!("training failed: {e}"));
    }
    match (fs::read(a.join("metrics.csv")), fs::read(b.join("metrics.csv"))) {
        (Ok(x), Ok(y)) => outcome(x == y, format!("{} bytes, identical={}", x.len(), x == y)),
        _ => outcome(false, "metrics.csv missing"),
    }
}

fn report(name: &str, o: &Outcome) {
    println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut all = true;
    let mut check = |name: &str, o: Outcome| {
        report(name, &o);
        all &= o.pass;
    };
    check("queue dynamics oracle", queue_oracle());
    check("gradient correctness", gradients());
    check("lagrangian identity", lagrangian_identity());
    check("epsilon schedule", epsilon());
    let (desk, lambdas) = desk_scale();
    check("dual properties", dual(&lambdas));
    check("desk-scale training", desk);
    let (base, info) = baselines();
    check("baseline sanity", base);
    println!("INFO {info}");
    check("determinism", determinism());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
