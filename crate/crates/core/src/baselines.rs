//! Non-learning comparison policies adapted to lifetime queues.
//!
//! Both serve packets lowest-lifetime-first and allocate blocks on demand
//! (`⌈sent / C^b⌉`), so their costs are accounted exactly like the learned
//! controller's. Neither drops packets proactively.

use crate::env::{ArrivalBatch, NetAction, QueueState, Transfer};
use crate::graph::{LinkId, Network, PathId};

fn blocks_for(net: &Network, loads: &[u32]) -> Vec<u32> {
    net.graph.links().iter().zip(loads).map(|(l, &s)| s.div_ceil(l.block_capacity)).collect()
}

/// Lowest path id of commodity `c` that leaves `node` over `link`.
fn continuation(net: &Network, c: usize, link: LinkId) -> Option<PathId> {
    let (from, _) = net.graph.endpoints(link);
    net.paths.of_commodity(c).iter().copied().find(|&p| net.paths.get(p).next_link(from) == Some(link))
}

/// Backpressure: on every link serve the commodity with the largest positive
/// differential backlog `Q_i^c − Q_j^c`, up to the link capacity.
///
/// Arrivals are tagged with their commodity's first path; packets are
/// re-tagged to a path continuing over whichever link they are sent on, so
/// forwarding is decided hop by hop. The links of a node are served in
/// decreasing weight order (then link id) against a shared remaining backlog.
pub fn bp_step(net: &Network, q: &QueueState, arrivals: &ArrivalBatch) -> NetAction {
    let mut action = NetAction::idle(net, arrivals);
    let queued = q.with_arrivals(net, &action.assignment);
    let mut remaining = queued.clone();
    let nc = net.num_commodities();
    let backlog: Vec<Vec<u32>> = (0..net.num_nodes())
        .map(|i| (0..nc).map(|c| queued.commodity_backlog(net, i, c)).collect())
        .collect();
    let mut loads = vec![0u32; net.num_links()];

    for node in 0..net.num_nodes() {
        let mut served: Vec<(i64, LinkId, usize)> = Vec::new();
        for (to, link) in net.graph.successors(node) {
            let best = (0..nc)
                .filter(|&c| continuation(net, c, link).is_some())
                .map(|c| {
                    let downstream = if to == net.destination(c) { 0 } else { backlog[to][c] };
                    (backlog[node][c] as i64 - downstream as i64, c)
                })
                .fold(None, |acc: Option<(i64, usize)>, (w, c)| match acc {
                    Some((bw, _)) if bw >= w => acc,
                    _ => Some((w, c)),
                });
            if let Some((w, c)) = best.filter(|(w, _)| *w > 0) {
                served.push((w, link, c));
            }
        }
        served.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        for (_, link, c) in served {
            let next_path = continuation(net, c, link).unwrap();
            let mut room = net.graph.links()[link].capacity();
            for lifetime in 1..=q.max_lifetime() {
                for &p in net.paths.of_commodity(c) {
                    if room == 0 {
                        break;
                    }
                    let have = remaining.get(node, p, lifetime);
                    let n = have.min(room);
                    if n > 0 {
                        remaining.set(node, p, lifetime, have - n);
                        room -= n;
                        loads[link] += n;
                        action.transfers.push(Transfer { link, path: p, next_path, lifetime, count: n });
                    }
                }
            }
        }
    }
    action.blocks = blocks_for(net, &loads);
    action
}

/// Per-link virtual backlogs used by the UMW-style source router.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueues {
    pub values: Vec<f64>,
}

impl VirtualQueues {
    pub fn new(net: &Network) -> Self {
        Self { values: vec![0.0; net.num_links()] }
    }

    fn path_weight(&self, net: &Network, p: PathId) -> f64 {
        net.paths.get(p).links.iter().map(|&l| self.values[l]).sum()
    }

    /// Serve every virtual queue at its link capacity, floored at zero.
    pub fn drain(&mut self, net: &Network) {
        for (v, l) in self.values.iter_mut().zip(net.graph.links()) {
            *v = (*v - l.capacity() as f64).max(0.0);
        }
    }
}

/// Assign each arriving packet to the path with the smallest virtual backlog
/// (lowest id on ties), charging one unit to every link of the chosen path.
pub fn umw_route(net: &Network, arrivals: &ArrivalBatch, vq: &mut VirtualQueues) -> Vec<u32> {
    let mut assignment = vec![0; net.num_paths()];
    for (c, &b) in arrivals.counts.iter().enumerate() {
        let ids = net.paths.of_commodity(c);
        for _ in 0..b {
            let mut best = ids[0];
            let mut best_w = vq.path_weight(net, best);
            for &p in &ids[1..] {
                let w = vq.path_weight(net, p);
                if w < best_w {
                    best = p;
                    best_w = w;
                }
            }
            assignment[best] += 1;
            for &l in &net.paths.get(best).links {
                vq.values[l] += 1.0;
            }
        }
    }
    assignment
}

/// Max-weight style scheduling on source routes: at every link, path queues
/// are served in decreasing backlog order (path id on ties) up to the link
/// capacity, lowest lifetime first within a path.
pub fn umw_schedule(net: &Network, queued: &QueueState) -> (Vec<Transfer>, Vec<u32>) {
    let mut transfers = Vec::new();
    let mut loads = vec![0u32; net.num_links()];
    for link in 0..net.num_links() {
        let (from, _) = net.graph.endpoints(link);
        let mut queues: Vec<(u32, PathId)> = net
            .paths
            .all()
            .iter()
            .filter(|p| p.next_link(from) == Some(link))
            .map(|p| (queued.path_backlog(from, p.id), p.id))
            .filter(|&(b, _)| b > 0)
            .collect();
        queues.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut room = net.graph.links()[link].capacity();
        for (_, p) in queues {
            for (l, &have) in queued.lifetimes(from, p).iter().enumerate() {
                let n = have.min(room);
                if n > 0 {
                    room -= n;
                    loads[link] += n;
                    transfers.push(Transfer { link, path: p, next_path: p, lifetime: l as u32 + 1, count: n });
                }
            }
        }
    }
    (transfers, blocks_for(net, &loads))
}

/// Route arrivals, schedule, then drain the virtual queues.
pub fn umw_step(net: &Network, q: &QueueState, arrivals: &ArrivalBatch, vq: &mut VirtualQueues) -> NetAction {
    let assignment = umw_route(net, arrivals, vq);
    let queued = q.with_arrivals(net, &assignment);
    let (transfers, blocks) = umw_schedule(net, &queued);
    vq.drain(net);
    NetAction { assignment, blocks, transfers, drops: Vec::new() }
}
