//! Turning actor probability outputs into an executable [`NetAction`].

use crate::env::{ArrivalBatch, Discard, NetAction, QueueState, Transfer};
use crate::graph::{LinkId, Network, NodeId, PathId};

use super::AgentError;

/// Guards floors against probabilities a hair below an exact multiple.
const FLOOR_SLACK: f64 = 1e-9;

fn floor_count(p: f64, n: u32) -> u32 {
    ((p * n as f64 + FLOOR_SLACK).floor().max(0.0) as u32).min(n)
}

/// Split `arrivals` packets over a commodity's paths: `⌊b·P{p}⌋` per path, and
/// whatever the floors leave over goes to the most probable path (lowest index
/// on ties).
pub fn split_arrivals(arrivals: u32, probs: &[f64]) -> Vec<u32> {
    let mut counts: Vec<u32> = probs.iter().map(|&p| floor_count(p, arrivals)).collect();
    let assigned: u32 = counts.iter().sum();
    if assigned < arrivals {
        let best = probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
        counts[best] += arrivals - assigned;
    } else if assigned > arrivals {
        // Only reachable through the floor slack; trim from the back.
        let mut excess = assigned - arrivals;
        for c in counts.iter_mut().rev() {
            let cut = excess.min(*c);
            *c -= cut;
            excess -= cut;
        }
    }
    counts
}

/// Per-path arrival assignment for all commodities. `route_probs` is indexed by
/// global path id (commodity groups are contiguous).
pub fn route(net: &Network, route_probs: &[f64], arrivals: &ArrivalBatch) -> Vec<u32> {
    let mut assignment = vec![0; net.num_paths()];
    for (c, &b) in arrivals.counts.iter().enumerate() {
        let ids = net.paths.of_commodity(c);
        let probs: Vec<f64> = ids.iter().map(|&p| route_probs[p]).collect();
        for (&p, n) in ids.iter().zip(split_arrivals(b, &probs)) {
            assignment[p] = n;
        }
    }
    assignment
}

/// Send/drop decision for one (node, path) queue, resolved over lifetimes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPlan {
    /// `send[ℓ-1]` packets of lifetime `ℓ` to forward.
    pub send: Vec<u32>,
    /// `drop[ℓ-1]` packets of lifetime `ℓ` to discard.
    pub drop: Vec<u32>,
}

impl CellPlan {
    pub fn sent(&self) -> u32 {
        self.send.iter().sum()
    }

    pub fn dropped(&self) -> u32 {
        self.drop.iter().sum()
    }
}

/// `S = ⌊P(send)·q⌋`, `D = ⌊P(drop)·q⌋`; drops are taken from the lowest
/// lifetimes first, then sends from the lowest remaining lifetimes.
/// `probs` is `[send, drop, hold]`, `backlog[ℓ-1]` the queue at lifetime `ℓ`.
pub fn schedule(probs: &[f64], backlog: &[u32]) -> CellPlan {
    let total: u32 = backlog.iter().sum();
    let sends = floor_count(probs[0], total);
    let drops = floor_count(probs[1], total).min(total - sends);
    let mut plan = CellPlan { send: vec![0; backlog.len()], drop: vec![0; backlog.len()] };
    let mut to_drop = drops;
    let mut to_send = sends;
    for (l, &q) in backlog.iter().enumerate() {
        let mut left = q;
        let d = to_drop.min(left);
        plan.drop[l] = d;
        to_drop -= d;
        left -= d;
        let s = to_send.min(left);
        plan.send[l] = s;
        to_send -= s;
    }
    plan
}

/// `x_ij = ⌈S_ij / C^b_ij⌉`; fails if a link would need more than `X^max_ij` blocks.
pub fn allocate_blocks(net: &Network, loads: &[u32]) -> Result<Vec<u32>, AgentError> {
    net.graph
        .links()
        .iter()
        .zip(loads)
        .enumerate()
        .map(|(link, (l, &s))| {
            let x = s.div_ceil(l.block_capacity);
            if x > l.max_blocks {
                Err(AgentError::CapacityOverflow { link, load: s, capacity: l.capacity() })
            } else {
                Ok(x)
            }
        })
        .collect()
}

/// Scheduling output for one node: `probs` holds one `[send, drop, hold]`
/// triple per entry of `paths`.
pub struct NodeSchedule<'a> {
    pub node: NodeId,
    pub paths: &'a [PathId],
    pub probs: &'a [f64],
}

/// Build a feasible action from routed arrivals and per-node schedules.
/// `queued` must already contain the routed arrivals. Where the planned sends
/// on a link exceed its capacity, the highest-lifetime sends are held back.
pub fn compose(
    net: &Network,
    queued: &QueueState,
    assignment: Vec<u32>,
    schedules: &[NodeSchedule<'_>],
) -> NetAction {
    let mut drops = Vec::new();
    // (link, lifetime, path, count) candidates
    let mut planned: Vec<(LinkId, u32, PathId, u32)> = Vec::new();
    for sched in schedules {
        for (k, &p) in sched.paths.iter().enumerate() {
            let backlog = queued.lifetimes(sched.node, p);
            if backlog.iter().all(|&q| q == 0) {
                continue;
            }
            let plan = schedule(&sched.probs[3 * k..3 * k + 3], backlog);
            let link = net.paths.get(p).next_link(sched.node).expect("local path continues");
            for (l, (&s, &d)) in plan.send.iter().zip(&plan.drop).enumerate() {
                let lifetime = l as u32 + 1;
                if d > 0 {
                    drops.push(Discard { node: sched.node, path: p, lifetime, count: d });
                }
                if s > 0 {
                    planned.push((link, lifetime, p, s));
                }
            }
        }
    }
    planned.sort_unstable();

    let mut loads = vec![0u32; net.num_links()];
    let mut transfers = Vec::with_capacity(planned.len());
    for (link, lifetime, path, count) in planned {
        let room = net.graph.links()[link].capacity() - loads[link];
        let n = count.min(room);
        if n > 0 {
            loads[link] += n;
            transfers.push(Transfer { link, path, next_path: path, lifetime, count: n });
        }
    }
    let blocks = allocate_blocks(net, &loads).expect("loads truncated to capacity");
    NetAction { assignment, blocks, transfers, drops }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_floors_and_remainder() {
        assert_eq!(split_arrivals(6, &[0.5, 0.5]), vec![3, 3]);
        assert_eq!(split_arrivals(0, &[0.5, 0.5]), vec![0, 0]);
        assert_eq!(split_arrivals(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(split_arrivals(7, &[0.2, 0.8]), vec![1, 6]);
        assert_eq!(split_arrivals(5, &[1.0]), vec![5]);
    }

    #[test]
    fn scheduling_floors() {
        let plan = schedule(&[0.6, 0.2, 0.2], &[5, 0, 0]);
        assert_eq!((plan.sent(), plan.dropped()), (3, 1));
        let plan = schedule(&[0.6, 0.2, 0.2], &[0, 0, 0]);
        assert_eq!((plan.sent(), plan.dropped()), (0, 0));
    }

    #[test]
    fn lowest_lifetime_first() {
        // lifetimes {1: 2, 3: 3}, D = 2, S = 3
        let plan = schedule(&[0.6, 0.4, 0.0], &[2, 0, 3]);
        assert_eq!(plan.drop, vec![2, 0, 0]);
        assert_eq!(plan.send, vec![0, 0, 3]);
    }

    #[test]
    fn never_overcommits() {
        let plan = schedule(&[0.7, 0.7, 0.0], &[1, 1, 1]);
        assert!(plan.sent() + plan.dropped() <= 3);
    }
}
