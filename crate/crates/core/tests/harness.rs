use std::fs;
use std::path::Path;

use lifenet::baselines::{umw_route, VirtualQueues};
use lifenet::env::ArrivalBatch;
use lifenet::harness::{
    run_baseline, run_eval, run_sweep, run_training, summary_header, CheckpointKind, ConfigError, ExperimentConfig,
    PolicyKind, EDGE_CONFIG,
};

fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::edge();
    c.episodes.train = 100;
    c.episodes.improve = 0;
    c.episodes.test = 5;
    c.agents.hidden = vec![16, 16];
    c.agents.batch_size = 32;
    c.agents.updates_per_iteration = 2;
    c.dual.window = 5;
    c
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn shipped_config_loads_from_disk() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/edge.toml");
    let c = ExperimentConfig::load(&path).unwrap();
    assert_eq!(c, ExperimentConfig::edge());
    assert_eq!((c.episodes.train, c.episodes.improve, c.episodes.test), (3000, 1000, 200));
    assert_eq!(c.episodes.length, 20);
}

#[test]
fn invalid_configs_are_rejected() {
    let negative = EDGE_CONFIG.replace("length = 20", "length = -5");
    assert!(matches!(ExperimentConfig::from_toml(&negative), Err(ConfigError::Validation(_))));

    let missing = EDGE_CONFIG.replacen("destination = \"core\"\n", "", 1);
    let err = ExperimentConfig::from_toml(&missing).unwrap_err().to_string();
    assert!(err.contains("destination"), "{err}");

    let several = EDGE_CONFIG.replace("length = 20", "length = 0").replace("test = 200", "test = -1");
    match ExperimentConfig::from_toml(&several) {
        Err(ConfigError::Validation(v)) => assert_eq!(v.len(), 2, "{v:?}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(ExperimentConfig::load(Path::new("/nonexistent.toml")), Err(ConfigError::Io { .. })));
}

#[test]
fn training_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny();
    let report = run_training(&config, dir.path()).unwrap();
    assert_eq!(report.iterations, 10);
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let phases = column(&metrics, "phase");
    assert_eq!(phases.iter().filter(|p| *p == "train").count(), 100);
    assert_eq!(phases.iter().filter(|p| *p == "improve").count(), 0);
    assert_eq!(phases.iter().filter(|p| *p == "test").count(), 5);
    for c in ["lambda_c1", "lambda_c2"] {
        assert!(column(&metrics, c).iter().all(|v| v.parse::<f64>().unwrap() >= 0.0));
    }
    // one m̂ per iteration, on its last episode
    assert_eq!(column(&metrics, "mhat_c1").iter().filter(|v| !v.is_empty()).count(), 10);

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), summary_header(2));
    assert_eq!(summary.lines().count(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], config.hash());
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(report.checkpoint_dir.join("agents.json").exists());
    assert!(report.checkpoint_dir.join("checkpoint.json").exists());
    let saved = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(saved, config);
}

#[test]
fn same_seed_gives_identical_metrics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run_training(&tiny(), a.path()).unwrap();
    run_training(&tiny(), b.path()).unwrap();
    let mut other = tiny();
    other.seed = 2;
    run_training(&other, c.path()).unwrap();
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn eval_reproduces_the_training_test_phase() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny();
    let report = run_training(&config, dir.path()).unwrap();
    let again = run_eval(&config, &report.checkpoint_dir, None).unwrap();
    assert_eq!(again, report.summary);
}

#[test]
fn corrupted_checkpoint_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny();
    let report = run_training(&config, dir.path()).unwrap();
    let file = report.checkpoint_dir.join("routing.mlp");
    let mut bytes = fs::read(&file).unwrap();
    let last = bytes.len() - 9;
    bytes[last] ^= 0xff;
    fs::write(&file, bytes).unwrap();
    assert!(run_eval(&config, &report.checkpoint_dir, None).is_err());
    assert!(run_eval(&config, &dir.path().join("missing"), None).is_err());
}

#[test]
fn checkpoint_shape_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_training(&tiny(), dir.path()).unwrap();
    let mut wider = tiny();
    wider.agents.hidden = vec![32, 16];
    assert!(run_eval(&wider, &report.checkpoint_dir, None).is_err());
}

#[test]
fn empty_system_is_reliable_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny().with_rate(0.0);
    config.dual.lambda_init = lifenet::lagrangian::LambdaInit::Fixed(vec![0.0, 0.0]);
    let report = run_training(&config, dir.path()).unwrap();
    assert_eq!(report.summary.reliability, vec![1.0, 1.0]);
    assert_eq!(report.summary.cost_per_episode, 0.0);
    for policy in [PolicyKind::Bp, PolicyKind::Umw] {
        let s = run_baseline(&config, policy, None).unwrap();
        assert_eq!((s.reliability.clone(), s.cost_per_episode), (vec![1.0, 1.0], 0.0));
    }
}

#[test]
fn sweep_covers_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::edge();
    config.episodes.test = 20;
    let rows = run_sweep(&config, &[6.0, 8.0, 10.0], &[PolicyKind::Bp, PolicyKind::Umw], dir.path()).unwrap();
    assert_eq!(rows.len(), 6);
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(column(&csv, "policy"), ["bp", "umw", "bp", "umw", "bp", "umw"]);
    assert_eq!(column(&csv, "rate"), ["6", "6", "8", "8", "10", "10"]);
    for line in csv.lines().skip(1) {
        for field in line.split(',').filter(|f| *f != "bp" && *f != "umw") {
            field.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn baselines_meet_targets_at_low_load() {
    let config = ExperimentConfig::edge();
    for policy in [PolicyKind::Bp, PolicyKind::Umw] {
        let s = run_baseline(&config, policy, None).unwrap();
        assert_eq!(s.episodes, 200);
        assert!(s.meets_targets(0.0), "{policy}: {:?}", s.reliability);
    }
}

#[test]
fn baseline_rejects_the_learned_policy() {
    assert!(run_baseline(&ExperimentConfig::edge(), PolicyKind::Cdrl, None).is_err());
}

#[test]
fn baseline_outputs_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::edge();
    config.episodes.test = 10;
    run_baseline(&config, PolicyKind::Bp, Some(dir.path())).unwrap();
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 11);
    // backpressure never drops proactively
    assert!(column(&metrics, "dropped_c1").iter().chain(&column(&metrics, "dropped_c2")).all(|v| v == "0"));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn umw_splits_symmetric_load_evenly() {
    let net = ExperimentConfig::edge().network().unwrap();
    let mut vq = VirtualQueues::new(&net);
    let mut env = lifenet::Env::new(std::sync::Arc::new(net.clone()), 3);
    let mut per_path = vec![0u64; net.num_paths()];
    for _ in 0..10_000 {
        let b: ArrivalBatch = env.sample_arrivals();
        for (p, n) in umw_route(&net, &b, &mut vq).into_iter().enumerate() {
            per_path[p] += n as u64;
        }
        assert!(vq.values.iter().all(|&v| v >= 0.0));
        vq.drain(&net);
        assert!(vq.values.iter().all(|&v| v >= 0.0));
    }
    for c in 0..net.num_commodities() {
        let ids = net.paths.of_commodity(c);
        let total: u64 = ids.iter().map(|&p| per_path[p]).sum();
        let share = per_path[ids[0]] as f64 / total as f64;
        assert!((share - 0.5).abs() <= 0.05, "commodity {c}: share {share}");
    }
}

#[test]
fn checkpoint_kind_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_training(&tiny(), dir.path()).unwrap();
    let expected = if report.checkpoint.kind == CheckpointKind::Best { "best" } else { "final" };
    assert!(report.checkpoint_dir.ends_with(expected));
}

fn doc(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name)).unwrap()
}

#[test]
fn documented_config_example_parses() {
    let text = doc("config.md");
    let start = text.find("```toml\n").unwrap() + 8;
    let end = start + text[start..].find("```").unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text[start..end]).unwrap(), ExperimentConfig::edge());
}

#[test]
fn documented_csv_columns_match_headers() {
    let text = doc("metrics.md");
    let documented = |section: &str| -> Vec<String> {
        let body = &text[text.find(section).unwrap()..];
        let body = &body[..body[3..].find("\n## ").map_or(body.len(), |i| i + 3)];
        body.lines()
            .filter_map(|l| l.strip_prefix("| `"))
            .filter_map(|l| l.split('`').next())
            .map(|c| c.replace("N", "1"))
            .collect()
    };
    let strip = |h: String| -> Vec<String> {
        h.split(',').map(str::to_string).collect()
    };
    assert_eq!(documented("## metrics.csv"), strip(lifenet::harness::metrics_header(1)));
    assert_eq!(documented("## summary.csv"), strip(lifenet::harness::summary_header(1)));
}
