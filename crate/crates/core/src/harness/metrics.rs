//! Per-episode records and the two CSV files built from them.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! identical runs produce identical bytes. Columns that do not apply to a row
//! are left empty. The column contract is documented in `docs/metrics.md`.

use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Improve,
    Test,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Improve => "improve",
            Phase::Test => "test",
        })
    }
}

/// Totals of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub arrivals: Vec<u64>,
    pub delivered: Vec<u64>,
    pub expired: Vec<u64>,
    pub dropped: Vec<u64>,
    /// `Σ_t m0(t)` in cost units.
    pub cost: f64,
    /// Undiscounted `Σ_t r(t)`; absent when no multipliers are in play.
    pub reward: Option<f64>,
    /// `Σ_t γ^t r(t)`.
    pub discounted_reward: Option<f64>,
    /// `m^c(t)` for every step, `[t][c]`.
    pub throughput: Vec<Vec<f64>>,
}

impl EpisodeRecord {
    pub fn new(commodities: usize) -> Self {
        Self {
            arrivals: vec![0; commodities],
            delivered: vec![0; commodities],
            expired: vec![0; commodities],
            dropped: vec![0; commodities],
            cost: 0.0,
            reward: None,
            discounted_reward: None,
            throughput: Vec::new(),
        }
    }

    /// Delivered over arrived, 1.0 for a commodity that saw no packets.
    pub fn reliability(&self, c: usize) -> f64 {
        if self.arrivals[c] == 0 {
            1.0
        } else {
            self.delivered[c] as f64 / self.arrivals[c] as f64
        }
    }
}

/// One metrics.csv row.
#[derive(Debug, Clone)]
pub struct MetricsRow<'a> {
    pub episode: u64,
    pub phase: Phase,
    pub iteration: Option<u64>,
    pub epsilon: f64,
    pub record: &'a EpisodeRecord,
    pub lambda: Option<&'a [f64]>,
    pub mhat: Option<&'a [f64]>,
}

pub fn metrics_header(commodities: usize) -> String {
    let mut h = String::from("episode,phase,iteration,epsilon,cost,reward");
    for c in 1..=commodities {
        for col in ["arrivals", "delivered", "expired", "dropped", "reliability", "lambda", "mhat"] {
            write!(h, ",{col}_c{c}").unwrap();
        }
    }
    h
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    commodities: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, commodities: usize) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", metrics_header(commodities))?;
        Ok(Self { out, commodities })
    }

    pub fn write(&mut self, row: &MetricsRow<'_>) -> io::Result<()> {
        let r = row.record;
        let mut line = format!(
            "{},{},{},{},{},{}",
            row.episode,
            row.phase,
            opt(row.iteration),
            row.epsilon,
            r.cost,
            opt(r.reward)
        );
        for c in 0..self.commodities {
            write!(
                line,
                ",{},{},{},{},{},{},{}",
                r.arrivals[c],
                r.delivered[c],
                r.expired[c],
                r.dropped[c],
                r.reliability(c),
                opt(row.lambda.map(|l| l[c])),
                opt(row.mhat.map(|m| m[c]))
            )
            .unwrap();
        }
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Aggregate over a set of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub policy: String,
    pub seed: u64,
    pub episodes: usize,
    /// Mean arrival rate of each commodity.
    pub rates: Vec<f64>,
    pub deltas: Vec<f64>,
    pub cost_per_episode: f64,
    /// Mean of the per-episode reliabilities.
    pub reliability: Vec<f64>,
    pub delivered: Vec<u64>,
    pub arrivals: Vec<u64>,
}

impl Summary {
    pub fn from_records(policy: &str, seed: u64, rates: Vec<f64>, deltas: Vec<f64>, records: &[EpisodeRecord]) -> Self {
        let nc = rates.len();
        let n = records.len();
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            policy: policy.to_string(),
            seed,
            episodes: n,
            cost_per_episode: mean(&|r| r.cost),
            reliability: (0..nc).map(|c| if n == 0 { 1.0 } else { mean(&|r| r.reliability(c)) }).collect(),
            delivered: (0..nc).map(|c| records.iter().map(|r| r.delivered[c]).sum()).collect(),
            arrivals: (0..nc).map(|c| records.iter().map(|r| r.arrivals[c]).sum()).collect(),
            rates,
            deltas,
        }
    }

    /// Every commodity at or above its target minus `slack`.
    pub fn meets_targets(&self, slack: f64) -> bool {
        self.reliability.iter().zip(&self.deltas).all(|(r, d)| *r >= d - slack)
    }
}

pub fn summary_header(commodities: usize) -> String {
    let mut h = String::from("rate,policy,seed,episodes,cost_per_episode");
    for c in 1..=commodities {
        for col in ["rate", "reliability", "delta", "delivered", "arrivals"] {
            write!(h, ",{col}_c{c}").unwrap();
        }
    }
    h
}

/// Write `summary.csv`. The leading `rate` column is the first commodity's
/// rate, which is the swept value when all commodities share one.
pub fn write_summary(path: &Path, rows: &[Summary]) -> io::Result<()> {
    let nc = rows.first().map_or(0, |r| r.rates.len());
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", summary_header(nc))?;
    for s in rows {
        let mut line = format!(
            "{},{},{},{},{}",
            s.rates.first().copied().unwrap_or(0.0),
            s.policy,
            s.seed,
            s.episodes,
            s.cost_per_episode
        );
        for c in 0..nc {
            write!(line, ",{},{},{},{},{}", s.rates[c], s.reliability[c], s.deltas[c], s.delivered[c], s.arrivals[c])
                .unwrap();
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}
