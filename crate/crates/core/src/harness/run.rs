use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, PolicyKind};
use super::metrics::{write_summary, EpisodeRecord, MetricsRow, MetricsWriter, Phase, Summary};
use super::rng::{stream, stream_seed, Stream};
use crate::agents::{AgentError, CdrlAgents, Decision, Layout, ReplayBuffer, Transition};
use crate::baselines::{bp_step, umw_step, VirtualQueues};
use crate::env::{ArrivalBatch, Env, EnvError, NetAction, QueueState};
use crate::graph::{Network, NetworkError};
use crate::lagrangian::{estimate_mhat, reward, DualError, DualState};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Who decides each slot's action.
pub enum Controller<'a> {
    Bp,
    Umw(VirtualQueues),
    Cdrl { agents: &'a CdrlAgents, epsilon: f64, rng: &'a mut ChaCha8Rng },
}

type Learnable = (Vec<u16>, Vec<f64>, Vec<f64>);

impl Controller<'_> {
    pub fn for_baseline(net: &Network, kind: PolicyKind) -> Controller<'static> {
        match kind {
            PolicyKind::Bp => Controller::Bp,
            PolicyKind::Umw => Controller::Umw(VirtualQueues::new(net)),
            PolicyKind::Cdrl => panic!("the learned controller needs trained agents"),
        }
    }

    fn reset(&mut self, net: &Network) {
        if let Controller::Umw(vq) = self {
            *vq = VirtualQueues::new(net);
        }
    }

    fn layout(&self) -> Option<&Layout> {
        match self {
            Controller::Cdrl { agents, .. } => Some(agents.layout()),
            _ => None,
        }
    }

    fn decide(&mut self, net: &Network, q: &QueueState, arrivals: &ArrivalBatch) -> (NetAction, Option<Learnable>) {
        match self {
            Controller::Bp => (bp_step(net, q, arrivals), None),
            Controller::Umw(vq) => (umw_step(net, q, arrivals, vq), None),
            Controller::Cdrl { agents, epsilon, rng } => {
                let Decision { action, state, actions, local_obs } = agents.act(q, arrivals, *epsilon, *rng);
                (action, Some((state, actions, local_obs)))
            }
        }
    }
}

/// Run one episode from empty queues, continuing the environment's arrival
/// stream. With `lambda` set, rewards are computed and, if a buffer is given,
/// every learned-controller step is stored. Episodes end by truncation, so
/// stored transitions are never terminal.
pub fn run_episode(
    env: &mut Env,
    ctrl: &mut Controller<'_>,
    length: usize,
    lambda: Option<&[f64]>,
    gamma: f64,
    mut buffer: Option<&mut ReplayBuffer>,
) -> Result<EpisodeRecord, HarnessError> {
    let net = env.network().clone();
    env.clear();
    ctrl.reset(&net);
    let mut rec = EpisodeRecord::new(net.num_commodities());
    let mut ret = 0.0;
    let mut dret = 0.0;
    let mut weight = 1.0;
    let mut arrivals = env.sample_arrivals();
    for _ in 0..length {
        let (action, learn) = ctrl.decide(&net, env.state(), &arrivals);
        let out = env.step(&action, &arrivals)?;
        let next_arrivals = env.sample_arrivals();
        for c in 0..net.num_commodities() {
            rec.arrivals[c] += arrivals.counts[c] as u64;
            rec.delivered[c] += out.delivered[c] as u64;
            rec.expired[c] += out.expired[c] as u64;
            rec.dropped[c] += out.dropped[c] as u64;
        }
        rec.cost += out.cost.raw;
        if let Some(lambda) = lambda {
            let r = reward(out.cost.normalized, &out.throughput, lambda);
            ret += r;
            dret += weight * r;
            weight *= gamma;
            if let (Some(buf), Some((state, actions, obs)), Some(layout)) = (buffer.as_deref_mut(), learn, ctrl.layout()) {
                buf.push(Transition {
                    state,
                    actions: actions.iter().map(|&a| a as f32).collect(),
                    local_obs: obs.iter().map(|&o| o as f32).collect(),
                    reward: r as f32,
                    next_state: layout.raw_state(&out.next, &next_arrivals),
                    done: false,
                });
            }
        }
        rec.throughput.push(out.throughput);
        arrivals = next_arrivals;
    }
    if lambda.is_some() {
        rec.reward = Some(ret);
        rec.discounted_reward = Some(dret);
    }
    Ok(rec)
}

/// Test-phase episodes on the evaluation arrival stream. Every policy
/// evaluated with the same seed sees the same arrivals.
pub fn evaluate(
    config: &ExperimentConfig,
    net: &Arc<Network>,
    ctrl: &mut Controller<'_>,
    lambda: Option<&[f64]>,
) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut env = Env::new(net.clone(), stream_seed(config.seed, Stream::Evaluation));
    (0..config.episodes.test)
        .map(|_| run_episode(&mut env, ctrl, config.episodes.length(), lambda, config.agents.gamma, None))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    /// Passed the feasibility, stability and improvement test.
    Best,
    /// No iteration passed; the policy at the end of training.
    Final,
}

/// Stored next to the networks of a saved controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: CheckpointKind,
    /// Completed policy iterations when saved.
    pub iteration: u64,
    pub lambda: Vec<f64>,
    pub mhat: Option<Vec<f64>>,
    pub window_reward: Option<f64>,
}

pub const CHECKPOINT_META: &str = "checkpoint.json";

fn save_checkpoint(agents: &CdrlAgents, meta: &CheckpointMeta, dir: &Path) -> Result<(), HarnessError> {
    agents.save(dir)?;
    let path = dir.join(CHECKPOINT_META);
    fs::write(&path, serde_json::to_string_pretty(meta)? + "\n").map_err(io_at(&path))
}

pub fn checkpoint_dir(out: &Path, kind: CheckpointKind) -> PathBuf {
    out.join("checkpoints").join(match kind {
        CheckpointKind::Best => "best",
        CheckpointKind::Final => "final",
    })
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    package: &'static str,
    version: &'static str,
    checkpoint_format: u32,
    policy: String,
    seed: u64,
    config_sha256: String,
    episodes: EpisodeCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<&'a CheckpointMeta>,
    wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct EpisodeCounts {
    train: i64,
    improve: i64,
    test: i64,
}

fn write_run_files(
    out: &Path,
    command: &str,
    config: &ExperimentConfig,
    policy: PolicyKind,
    checkpoint: Option<&CheckpointMeta>,
    started: Instant,
) -> Result<(), HarnessError> {
    let manifest = Manifest {
        command,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        checkpoint_format: crate::nn::checkpoint::FORMAT_VERSION,
        policy: policy.to_string(),
        seed: config.seed,
        config_sha256: config.hash(),
        episodes: EpisodeCounts {
            train: config.episodes.train,
            improve: config.episodes.improve,
            test: config.episodes.test,
        },
        checkpoint,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_at(&path))?;
    let path = out.join("config.toml");
    fs::write(&path, config.to_toml()).map_err(io_at(&path))
}

fn create_out(out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_at(out))
}

fn summary_of(config: &ExperimentConfig, policy: PolicyKind, records: &[EpisodeRecord]) -> Summary {
    Summary::from_records(
        &policy.to_string(),
        config.seed,
        config.commodities.iter().map(|c| c.mean_rate).collect(),
        config.commodities.iter().map(|c| c.reliability).collect(),
        records,
    )
}

fn write_test_rows(
    metrics: &mut MetricsWriter,
    first_episode: u64,
    records: &[EpisodeRecord],
    lambda: Option<&[f64]>,
    path: &Path,
) -> Result<(), HarnessError> {
    for (i, r) in records.iter().enumerate() {
        metrics
            .write(&MetricsRow {
                episode: first_episode + i as u64,
                phase: Phase::Test,
                iteration: None,
                epsilon: 0.0,
                record: r,
                lambda,
                mhat: None,
            })
            .map_err(io_at(path))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    /// Test-phase performance of the selected checkpoint.
    pub summary: Summary,
    pub checkpoint: CheckpointMeta,
    pub checkpoint_dir: PathBuf,
    pub iterations: u64,
    pub final_lambda: Vec<f64>,
}

/// Train and improve the learned controller, then test the selected
/// checkpoint. Writes metrics.csv, summary.csv, manifest.json, config.toml
/// and checkpoints/ under `out`.
pub fn run_training(config: &ExperimentConfig, out: &Path) -> Result<TrainingReport, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let net = Arc::new(config.network()?);
    create_out(out)?;
    let seed = config.seed;
    let gamma = config.agents.gamma;
    let length = config.episodes.length();
    let per_iteration = config.episodes.per_iteration();

    let mut env = Env::new(net.clone(), stream_seed(seed, Stream::Arrivals));
    let mut agents = CdrlAgents::new(net.clone(), config.agents.clone(), stream_seed(seed, Stream::Init))?;
    let mut explore = stream(seed, Stream::Exploration);
    let mut replay_rng = stream(seed, Stream::Replay);
    let mut buffer = ReplayBuffer::new(config.agents.buffer_capacity);
    let mut dual = DualState::init(&net.commodities, &config.dual);

    let metrics_path = out.join("metrics.csv");
    let mut metrics = MetricsWriter::create(&metrics_path, net.num_commodities()).map_err(io_at(&metrics_path))?;
    let mut episode = 0u64;
    let mut best: Option<(CdrlAgents, CheckpointMeta)> = None;

    for (phase, count) in [(Phase::Train, config.episodes.train), (Phase::Improve, config.episodes.improve)] {
        let mut remaining = count as usize;
        // exploration restarts with every phase
        let mut k = 0u64;
        while remaining > 0 {
            let n = remaining.min(per_iteration);
            remaining -= n;
            let epsilon = config.exploration.epsilon(k);
            let lambda = dual.lambda.clone();
            let mut records = Vec::with_capacity(n);
            {
                let mut ctrl = Controller::Cdrl { agents: &agents, epsilon, rng: &mut explore };
                for _ in 0..n {
                    records.push(run_episode(&mut env, &mut ctrl, length, Some(&lambda), gamma, Some(&mut buffer))?);
                }
            }
            let trajectories: Vec<Vec<Vec<f64>>> = records.iter().map(|r| r.throughput.clone()).collect();
            let mhat = estimate_mhat(&trajectories, gamma)?;
            let mean_return = records.iter().filter_map(|r| r.discounted_reward).sum::<f64>() / n as f64;
            dual.record_reward(mean_return);
            let iteration = dual.iteration;
            dual.dual_update(&mhat)?;

            if dual.iteration.is_multiple_of(dual.window() as u64) && dual.checkpoint_ok(&mhat) {
                let meta = CheckpointMeta {
                    kind: CheckpointKind::Best,
                    iteration: dual.iteration,
                    lambda: lambda.clone(),
                    mhat: Some(mhat.clone()),
                    window_reward: Some(dual.best_window_mean()),
                };
                save_checkpoint(&agents, &meta, &checkpoint_dir(out, CheckpointKind::Best))?;
                best = Some((agents.clone(), meta));
            }

            for (i, r) in records.iter().enumerate() {
                metrics
                    .write(&MetricsRow {
                        episode,
                        phase,
                        iteration: Some(iteration),
                        epsilon,
                        record: r,
                        lambda: Some(&lambda),
                        mhat: (i + 1 == n).then_some(&mhat[..]),
                    })
                    .map_err(io_at(&metrics_path))?;
                episode += 1;
            }

            if buffer.len() >= config.agents.batch_size {
                for _ in 0..config.agents.updates_per_iteration {
                    agents.update(&buffer, &mut replay_rng)?;
                }
            }
            k += 1;
        }
    }

    let (selected, meta, dir) = match best {
        Some((a, meta)) => (a, meta, checkpoint_dir(out, CheckpointKind::Best)),
        None => {
            let meta = CheckpointMeta {
                kind: CheckpointKind::Final,
                iteration: dual.iteration,
                lambda: dual.lambda.clone(),
                mhat: None,
                window_reward: dual.reward_window_mean(),
            };
            let dir = checkpoint_dir(out, CheckpointKind::Final);
            save_checkpoint(&agents, &meta, &dir)?;
            (agents, meta, dir)
        }
    };

    let mut no_explore = stream(seed, Stream::Exploration);
    let mut ctrl = Controller::Cdrl { agents: &selected, epsilon: 0.0, rng: &mut no_explore };
    let records = evaluate(config, &net, &mut ctrl, Some(&dual.lambda))?;
    write_test_rows(&mut metrics, episode, &records, Some(&dual.lambda), &metrics_path)?;
    metrics.finish().map_err(io_at(&metrics_path))?;

    let summary = summary_of(config, PolicyKind::Cdrl, &records);
    let path = out.join("summary.csv");
    write_summary(&path, std::slice::from_ref(&summary)).map_err(io_at(&path))?;
    write_run_files(out, "train", config, PolicyKind::Cdrl, Some(&meta), started)?;
    Ok(TrainingReport {
        summary,
        checkpoint: meta,
        checkpoint_dir: dir,
        iterations: dual.iteration,
        final_lambda: dual.lambda,
    })
}

/// Evaluate a saved controller with exploration off and no learning.
pub fn run_eval(config: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<Summary, HarnessError> {
    let started = Instant::now();
    let net = Arc::new(config.network()?);
    let agents = CdrlAgents::load(net.clone(), config.agents.clone(), checkpoint)?;
    let meta_path = checkpoint.join(CHECKPOINT_META);
    let meta: Option<CheckpointMeta> = match fs::read(&meta_path) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_at(&meta_path)(e)),
    };
    let lambda = meta.as_ref().map(|m| m.lambda.clone());
    let mut rng = stream(config.seed, Stream::Exploration);
    let mut ctrl = Controller::Cdrl { agents: &agents, epsilon: 0.0, rng: &mut rng };
    let records = evaluate(config, &net, &mut ctrl, lambda.as_deref())?;
    let summary = summary_of(config, PolicyKind::Cdrl, &records);
    if let Some(out) = out {
        write_eval_outputs(out, "eval", config, PolicyKind::Cdrl, &records, lambda.as_deref(), &summary, meta.as_ref(), started)?;
    }
    Ok(summary)
}

/// Evaluate a non-learning policy over the test episodes.
pub fn run_baseline(config: &ExperimentConfig, policy: PolicyKind, out: Option<&Path>) -> Result<Summary, HarnessError> {
    if policy == PolicyKind::Cdrl {
        return Err(HarnessError::Usage("baseline expects --policy bp or umw".into()));
    }
    let started = Instant::now();
    let net = Arc::new(config.network()?);
    let mut ctrl = Controller::for_baseline(&net, policy);
    let records = evaluate(config, &net, &mut ctrl, None)?;
    let summary = summary_of(config, policy, &records);
    if let Some(out) = out {
        write_eval_outputs(out, "baseline", config, policy, &records, None, &summary, None, started)?;
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn write_eval_outputs(
    out: &Path,
    command: &str,
    config: &ExperimentConfig,
    policy: PolicyKind,
    records: &[EpisodeRecord],
    lambda: Option<&[f64]>,
    summary: &Summary,
    meta: Option<&CheckpointMeta>,
    started: Instant,
) -> Result<(), HarnessError> {
    create_out(out)?;
    let path = out.join("metrics.csv");
    let mut metrics = MetricsWriter::create(&path, config.commodities.len()).map_err(io_at(&path))?;
    write_test_rows(&mut metrics, 0, records, lambda, &path)?;
    metrics.finish().map_err(io_at(&path))?;
    let path = out.join("summary.csv");
    write_summary(&path, std::slice::from_ref(summary)).map_err(io_at(&path))?;
    write_run_files(out, command, config, policy, meta, started)
}

/// Every (rate, policy) pair, all commodities at the same rate. Learned
/// points are trained from scratch in `out/rate_<r>_cdrl/`.
pub fn run_sweep(
    config: &ExperimentConfig,
    rates: &[f64],
    policies: &[PolicyKind],
    out: &Path,
) -> Result<Vec<Summary>, HarnessError> {
    let started = Instant::now();
    create_out(out)?;
    let mut rows = Vec::with_capacity(rates.len() * policies.len());
    for &rate in rates {
        let point = config.clone().with_rate(rate);
        point.validate()?;
        for &policy in policies {
            let summary = match policy {
                PolicyKind::Cdrl => run_training(&point, &out.join(format!("rate_{rate}_cdrl")))?.summary,
                other => run_baseline(&point, other, None)?,
            };
            rows.push(summary);
        }
    }
    let path = out.join("summary.csv");
    write_summary(&path, &rows).map_err(io_at(&path))?;
    write_run_files(out, "sweep", config, config.policy, None, started)?;
    Ok(rows)
}
