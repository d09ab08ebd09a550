//! Slotted lifetime-queue environment.
//!
//! Packets are counted per (node, path, remaining lifetime). Within a slot the
//! order is: arrivals are drawn and routed onto paths at their source with the
//! commodity's initial lifetime, then the action sends and drops packets, then
//! every packet ages by one slot. A packet sent over a link at slot `t` shows
//! up at the far end at `t + 1` one lifetime unit older; packets whose lifetime
//! reaches zero expire, and packets reaching their destination with positive
//! lifetime are consumed as on-time deliveries.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::graph::{Commodity, LinkId, Network, NodeId, PathId};

/// Backlog `q[node][path][lifetime]` for lifetimes `1..=L_max`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueueState {
    pub t: u64,
    num_paths: usize,
    max_lifetime: usize,
    backlog: Vec<u32>,
}

impl QueueState {
    pub fn empty(net: &Network) -> Self {
        let num_paths = net.num_paths();
        let max_lifetime = net.max_lifetime() as usize;
        Self { t: 0, num_paths, max_lifetime, backlog: vec![0; net.num_nodes() * num_paths * max_lifetime] }
    }

    #[inline]
    fn idx(&self, node: NodeId, path: PathId, lifetime: u32) -> usize {
        debug_assert!(lifetime >= 1 && lifetime as usize <= self.max_lifetime);
        (node * self.num_paths + path) * self.max_lifetime + lifetime as usize - 1
    }

    pub fn max_lifetime(&self) -> u32 {
        self.max_lifetime as u32
    }

    /// Backlog at one lifetime; zero outside `1..=L_max`.
    pub fn get(&self, node: NodeId, path: PathId, lifetime: u32) -> u32 {
        if lifetime == 0 || lifetime as usize > self.max_lifetime {
            return 0;
        }
        self.backlog[self.idx(node, path, lifetime)]
    }

    pub fn set(&mut self, node: NodeId, path: PathId, lifetime: u32, value: u32) {
        let i = self.idx(node, path, lifetime);
        self.backlog[i] = value;
    }

    pub fn add(&mut self, node: NodeId, path: PathId, lifetime: u32, value: u32) {
        let i = self.idx(node, path, lifetime);
        self.backlog[i] += value;
    }

    /// Backlog of one (node, path) cell indexed by `lifetime - 1`.
    pub fn lifetimes(&self, node: NodeId, path: PathId) -> &[u32] {
        let start = (node * self.num_paths + path) * self.max_lifetime;
        &self.backlog[start..start + self.max_lifetime]
    }

    /// Aggregate `Σ_ℓ q[node][path][ℓ]`.
    pub fn path_backlog(&self, node: NodeId, path: PathId) -> u32 {
        self.lifetimes(node, path).iter().sum()
    }

    /// Lifetime- and path-aggregated backlog of commodity `c` at `node`.
    pub fn commodity_backlog(&self, net: &Network, node: NodeId, c: usize) -> u32 {
        net.paths.of_commodity(c).iter().map(|&p| self.path_backlog(node, p)).sum()
    }

    pub fn total(&self) -> u64 {
        self.backlog.iter().map(|&v| v as u64).sum()
    }

    /// Flat backlog in `[node][path][lifetime]` order.
    pub fn as_slice(&self) -> &[u32] {
        &self.backlog
    }

    /// Copy of the state with routed arrivals added at their sources.
    pub fn with_arrivals(&self, net: &Network, assignment: &[u32]) -> QueueState {
        let mut out = self.clone();
        for (p, &n) in assignment.iter().enumerate() {
            if n > 0 {
                let c = net.paths.get(p).commodity;
                out.add(net.source(c), p, net.commodities[c].initial_lifetime, n);
            }
        }
        out
    }
}

/// Exogenous arrivals `b^c(t)` per commodity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArrivalBatch {
    pub counts: Vec<u32>,
}

impl ArrivalBatch {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&v| v as u64).sum()
    }
}

/// Packets of `path` with remaining `lifetime` moved over `link`. They continue
/// on `next_path` at the far end (equal to `path` unless the policy re-routes
/// hop by hop).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub link: LinkId,
    pub path: PathId,
    pub next_path: PathId,
    pub lifetime: u32,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discard {
    pub node: NodeId,
    pub path: PathId,
    pub lifetime: u32,
    pub count: u32,
}

/// One slot of control: arrival routing, block allocation, lifetime-resolved
/// flows and proactive drops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetAction {
    /// Arrivals placed on each path this slot, indexed by global path id.
    pub assignment: Vec<u32>,
    /// Resource blocks per link.
    pub blocks: Vec<u32>,
    pub transfers: Vec<Transfer>,
    pub drops: Vec<Discard>,
}

impl NetAction {
    /// Route every arrival onto its commodity's first path and do nothing else.
    pub fn idle(net: &Network, arrivals: &ArrivalBatch) -> Self {
        let mut assignment = vec![0; net.num_paths()];
        for (c, &n) in arrivals.counts.iter().enumerate() {
            assignment[net.paths.of_commodity(c)[0]] += n;
        }
        Self { assignment, blocks: vec![0; net.num_links()], ..Default::default() }
    }

    /// Total packets sent over `link`.
    pub fn link_load(&self, link: LinkId) -> u32 {
        self.transfers.iter().filter(|t| t.link == link).map(|t| t.count).sum()
    }

    /// Per-(node, path) send and drop totals `(S, D)`.
    pub fn node_path_totals(&self, net: &Network, node: NodeId, path: PathId) -> (u32, u32) {
        let sent = self
            .transfers
            .iter()
            .filter(|t| t.path == path && net.graph.endpoints(t.link).0 == node)
            .map(|t| t.count)
            .sum();
        let dropped =
            self.drops.iter().filter(|d| d.node == node && d.path == path).map(|d| d.count).sum();
        (sent, dropped)
    }

    pub fn total_dropped(&self) -> u64 {
        self.drops.iter().map(|d| d.count as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Infeasibility {
    #[error("action shape mismatch: {0}")]
    Shape(&'static str),
    #[error("commodity {commodity}: {assigned} arrivals routed but {arrived} arrived")]
    Routing { commodity: usize, assigned: u32, arrived: u32 },
    #[error("link {link}: {blocks} blocks exceed the maximum {max}")]
    Blocks { link: LinkId, blocks: u32, max: u32 },
    #[error("node {node} path {path} lifetime {lifetime}: {requested} packets requested, {available} queued")]
    Availability { node: NodeId, path: PathId, lifetime: u32, requested: u32, available: u32 },
    #[error("link {link}: load {load} exceeds allocated capacity {allowed}")]
    Capacity { link: LinkId, load: u32, allowed: u32 },
    #[error("transfer on link {link} from path {path} to path {next_path} is not a valid continuation")]
    Continuation { link: LinkId, path: PathId, next_path: PathId },
    #[error("lifetime {0} outside 1..=L_max")]
    Lifetime(u32),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("infeasible action: {0}")]
    InfeasibleAction(#[from] Infeasibility),
}

/// Per-slot cost `m0 = Σ x_ij e_ij` and its value normalized by the
/// largest possible per-slot cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotCost {
    pub raw: f64,
    pub normalized: f64,
}

pub fn cost_m0(net: &Network, blocks: &[u32]) -> SlotCost {
    let raw: f64 =
        net.graph.links().iter().zip(blocks).map(|(l, &x)| x as f64 * l.block_cost).sum();
    let max = net.max_slot_cost();
    SlotCost { raw, normalized: if max > 0.0 { raw / max } else { 0.0 } }
}

/// Per-step constraint signal `m^c(t) = delivered / b̄ − δ` (zero when the
/// commodity has no traffic).
pub fn throughput_mc(delivered: u32, commodity: &Commodity) -> f64 {
    if commodity.mean_rate <= 0.0 {
        return 0.0;
    }
    delivered as f64 / commodity.mean_rate - commodity.reliability
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: QueueState,
    /// On-time deliveries per commodity.
    pub delivered: Vec<u32>,
    /// Packets whose lifetime ran out, per commodity.
    pub expired: Vec<u32>,
    /// Proactively dropped packets, per commodity.
    pub dropped: Vec<u32>,
    pub cost: SlotCost,
    /// `m^c(t)` per commodity.
    pub throughput: Vec<f64>,
}

/// Check `action` against the backlog `state` (which must not yet contain the
/// slot's arrivals).
pub fn validate_action(
    net: &Network,
    state: &QueueState,
    action: &NetAction,
    arrivals: &ArrivalBatch,
) -> Result<QueueState, Infeasibility> {
    if action.assignment.len() != net.num_paths() {
        return Err(Infeasibility::Shape("assignment length"));
    }
    if action.blocks.len() != net.num_links() {
        return Err(Infeasibility::Shape("blocks length"));
    }
    if arrivals.counts.len() != net.num_commodities() {
        return Err(Infeasibility::Shape("arrival length"));
    }
    for (c, &arrived) in arrivals.counts.iter().enumerate() {
        let assigned: u32 = net.paths.of_commodity(c).iter().map(|&p| action.assignment[p]).sum();
        if assigned != arrived {
            return Err(Infeasibility::Routing { commodity: c, assigned, arrived });
        }
    }
    for (link, (l, &x)) in net.graph.links().iter().zip(&action.blocks).enumerate() {
        if x > l.max_blocks {
            return Err(Infeasibility::Blocks { link, blocks: x, max: l.max_blocks });
        }
    }

    let queued = state.with_arrivals(net, &action.assignment);
    let mut used = QueueState { backlog: vec![0; queued.backlog.len()], ..queued.clone() };
    let max_l = state.max_lifetime();
    let mut loads = vec![0u32; net.num_links()];

    for tr in &action.transfers {
        if tr.link >= net.num_links() || tr.path >= net.num_paths() || tr.next_path >= net.num_paths() {
            return Err(Infeasibility::Shape("transfer index"));
        }
        if tr.lifetime == 0 || tr.lifetime > max_l {
            return Err(Infeasibility::Lifetime(tr.lifetime));
        }
        let (from, _) = net.graph.endpoints(tr.link);
        let here = net.paths.get(tr.path);
        let next = net.paths.get(tr.next_path);
        if here.commodity != next.commodity || next.next_link(from) != Some(tr.link) {
            return Err(Infeasibility::Continuation {
                link: tr.link,
                path: tr.path,
                next_path: tr.next_path,
            });
        }
        used.add(from, tr.path, tr.lifetime, tr.count);
        loads[tr.link] += tr.count;
    }
    for d in &action.drops {
        if d.node >= net.num_nodes() || d.path >= net.num_paths() {
            return Err(Infeasibility::Shape("drop index"));
        }
        if d.lifetime == 0 || d.lifetime > max_l {
            return Err(Infeasibility::Lifetime(d.lifetime));
        }
        used.add(d.node, d.path, d.lifetime, d.count);
    }

    for (i, (&u, &q)) in used.backlog.iter().zip(&queued.backlog).enumerate() {
        if u > q {
            let lifetime = (i % queued.max_lifetime) as u32 + 1;
            let np = i / queued.max_lifetime;
            return Err(Infeasibility::Availability {
                node: np / queued.num_paths,
                path: np % queued.num_paths,
                lifetime,
                requested: u,
                available: q,
            });
        }
    }
    for (link, (l, &load)) in net.graph.links().iter().zip(&loads).enumerate() {
        let allowed = l.block_capacity * action.blocks[link];
        if load > allowed {
            return Err(Infeasibility::Capacity { link, load, allowed });
        }
    }
    Ok(queued)
}

/// Apply one slot of queue dynamics. Pure function of its inputs.
pub fn transition(
    net: &Network,
    state: &QueueState,
    action: &NetAction,
    arrivals: &ArrivalBatch,
) -> Result<StepOutcome, EnvError> {
    let mut remaining = validate_action(net, state, action, arrivals)?;
    let nc = net.num_commodities();
    let mut delivered = vec![0u32; nc];
    let mut expired = vec![0u32; nc];
    let mut dropped = vec![0u32; nc];
    let mut next = QueueState { t: state.t + 1, backlog: vec![0; remaining.backlog.len()], ..state.clone() };

    for d in &action.drops {
        let i = remaining.idx(d.node, d.path, d.lifetime);
        remaining.backlog[i] -= d.count;
        dropped[net.paths.get(d.path).commodity] += d.count;
    }
    for tr in &action.transfers {
        let (from, to) = net.graph.endpoints(tr.link);
        let i = remaining.idx(from, tr.path, tr.lifetime);
        remaining.backlog[i] -= tr.count;
        let c = net.paths.get(tr.path).commodity;
        let aged = tr.lifetime - 1;
        if aged == 0 {
            expired[c] += tr.count;
        } else if to == net.destination(c) {
            delivered[c] += tr.count;
        } else {
            next.add(to, tr.next_path, aged, tr.count);
        }
    }
    // Held packets age in place; the lifetime-1 bucket expires.
    let ml = remaining.max_lifetime;
    for (cell, chunk) in remaining.backlog.chunks(ml).enumerate() {
        let path = cell % remaining.num_paths;
        let c = net.paths.get(path).commodity;
        expired[c] += chunk[0];
        for l in 1..ml {
            next.backlog[cell * ml + l - 1] += chunk[l];
        }
    }

    let throughput =
        delivered.iter().zip(&net.commodities).map(|(&d, c)| throughput_mc(d, c)).collect();
    Ok(StepOutcome { next, delivered, expired, dropped, cost: cost_m0(net, &action.blocks), throughput })
}

/// A stateful environment instance with its own arrival stream.
#[derive(Debug, Clone)]
pub struct Env {
    net: Arc<Network>,
    state: QueueState,
    rng: ChaCha8Rng,
    arrivals: Vec<Option<Poisson<f64>>>,
}

impl Env {
    pub fn new(net: Arc<Network>, seed: u64) -> Self {
        let arrivals = net
            .commodities
            .iter()
            .map(|c| (c.mean_rate > 0.0).then(|| Poisson::new(c.mean_rate).expect("validated rate")))
            .collect();
        let state = QueueState::empty(&net);
        Self { net, state, rng: ChaCha8Rng::seed_from_u64(seed), arrivals }
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn state(&self) -> &QueueState {
        &self.state
    }

    /// Empty all queues, rewind time and reseed the arrival stream.
    pub fn reset(&mut self, seed: u64) -> &QueueState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.clear()
    }

    /// Empty queues and rewind time, continuing the current arrival stream.
    pub fn clear(&mut self) -> &QueueState {
        self.state = QueueState::empty(&self.net);
        &self.state
    }

    /// Independent Poisson draws, one per commodity.
    pub fn sample_arrivals(&mut self) -> ArrivalBatch {
        let counts = self
            .arrivals
            .iter()
            .map(|d| d.as_ref().map_or(0, |d| d.sample(&mut self.rng) as u32))
            .collect();
        ArrivalBatch { counts }
    }

    pub fn step(&mut self, action: &NetAction, arrivals: &ArrivalBatch) -> Result<StepOutcome, EnvError> {
        let outcome = transition(&self.net, &self.state, action, arrivals)?;
        self.state = outcome.next.clone();
        Ok(outcome)
    }
}
