use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lifenet::harness::{
    checkpoint_dir, run_baseline, run_eval, run_sweep, run_training, CheckpointKind, ExperimentConfig, HarnessError,
    PolicyKind, Summary,
};

#[derive(Parser)]
#[command(name = "lifenet", version, about = "Lifetime-aware network control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults to the built-in edge network.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Defaults to the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy to run.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Use the long train/improve/test schedule.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the learned controller and test its selected checkpoint.
    Train(Common),
    /// Evaluate a saved controller.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory. Defaults to <out>/checkpoints/best, then final.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a non-learning policy (bp or umw).
    Baseline(Common),
    /// Evaluate policies over a range of arrival rates.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated mean arrival rates applied to every commodity.
        #[arg(long, value_delimiter = ',', default_values_t = [6.0, 8.0, 10.0])]
        rates: Vec<f64>,
        /// Comma-separated policies. Defaults to --policy, or all three.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
    },
}

fn resolve(common: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::edge(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(policy) = common.policy {
        config.policy = policy;
    }
    if common.paper_scale {
        config = config.paper_scale();
    }
    let out = common.out.clone().unwrap_or_else(|| config.out_dir.clone());
    Ok((config, out))
}

fn print_summary(s: &Summary) {
    let rel: Vec<String> = s
        .reliability
        .iter()
        .zip(&s.deltas)
        .enumerate()
        .map(|(c, (r, d))| format!("c{}={r:.3} (target {d})", c + 1))
        .collect();
    println!(
        "{:>4} rate {:<5} episodes {:<5} cost/episode {:.2}  reliability {}",
        s.policy,
        s.rates.first().copied().unwrap_or(0.0),
        s.episodes,
        s.cost_per_episode,
        rel.join(", ")
    );
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(common) => {
            let (config, out) = resolve(&common)?;
            if config.policy != PolicyKind::Cdrl {
                return Err(HarnessError::Usage(format!(
                    "train runs the learned controller; use `baseline --policy {}`",
                    config.policy
                )));
            }
            let report = run_training(&config, &out)?;
            println!(
                "{} iterations, checkpoint {:?} at iteration {} -> {}",
                report.iterations,
                report.checkpoint.kind,
                report.checkpoint.iteration,
                report.checkpoint_dir.display()
            );
            print_summary(&report.summary);
        }
        Command::Eval { common, checkpoint } => {
            let (config, out) = resolve(&common)?;
            let dir = checkpoint.unwrap_or_else(|| {
                let best = checkpoint_dir(&out, CheckpointKind::Best);
                if best.exists() {
                    best
                } else {
                    checkpoint_dir(&out, CheckpointKind::Final)
                }
            });
            let summary = run_eval(&config, &dir, Some(&out.join("eval")))?;
            print_summary(&summary);
        }
        Command::Baseline(common) => {
            let (config, out) = resolve(&common)?;
            let summary = run_baseline(&config, config.policy, Some(&out))?;
            print_summary(&summary);
        }
        Command::Sweep { common, rates, policies } => {
            let (config, out) = resolve(&common)?;
            let policies = match (policies.is_empty(), common.policy) {
                (false, _) => policies,
                (true, Some(p)) => vec![p],
                (true, None) => vec![PolicyKind::Bp, PolicyKind::Umw, PolicyKind::Cdrl],
            };
            for s in run_sweep(&config, &rates, &policies, &out)? {
                print_summary(&s);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
