//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls into the code paths it checks.
#![allow(dead_code)]

use lifenet::env::{ArrivalBatch, Discard, Env, NetAction, QueueState, Transfer};
use lifenet::graph::{Commodity, Link, Network, NetworkGraph};
use lifenet::lagrangian::{discounted_sum, reward, DualState};
use lifenet::nn::{Activation, Head, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// `a -> b -> c` with three commodities: a→c (L=3), b→c (L=2) and a→b (L=1,
/// never deliverable).
pub fn line_network() -> Network {
    let link = |f: &str, t: &str| Link { from: f.into(), to: t.into(), block_capacity: 3, max_blocks: 2, block_cost: 1.5 };
    let c = |s: &str, d: &str, l| Commodity {
        source: s.into(),
        destination: d.into(),
        initial_lifetime: l,
        reliability: 0.5,
        mean_rate: 2.0,
    };
    Network::new(
        NetworkGraph::new(vec!["a".into(), "b".into(), "c".into()], vec![link("a", "b"), link("b", "c")]),
        vec![c("a", "c", 3), c("b", "c", 2), c("a", "b", 1)],
    )
    .unwrap()
}

/// Per-packet model of the lifetime queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Packet {
    node: usize,
    path: usize,
    lifetime: u32,
}

#[derive(Debug, Clone, Default)]
pub struct OracleState {
    packets: Vec<Packet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleStep {
    pub delivered: Vec<u32>,
    pub expired: Vec<u32>,
    pub dropped: Vec<u32>,
}

impl OracleState {
    pub fn count(&self, node: usize, path: usize, lifetime: u32) -> u32 {
        self.packets.iter().filter(|p| **p == Packet { node, path, lifetime }).count() as u32
    }

    pub fn total(&self) -> u64 {
        self.packets.len() as u64
    }

    /// Inject, move, drop and age packets one by one.
    pub fn step(&mut self, net: &Network, action: &NetAction) -> OracleStep {
        let nc = net.num_commodities();
        let mut out = OracleStep { delivered: vec![0; nc], expired: vec![0; nc], dropped: vec![0; nc] };
        for (p, &n) in action.assignment.iter().enumerate() {
            let path = net.paths.get(p);
            let lifetime = net.commodities[path.commodity].initial_lifetime;
            for _ in 0..n {
                self.packets.push(Packet { node: path.nodes[0], path: p, lifetime });
            }
        }
        let mut handled = vec![false; self.packets.len()];
        let take = |packets: &[Packet], handled: &mut Vec<bool>, want: Packet, n: u32| -> Vec<usize> {
            let idx: Vec<usize> =
                (0..packets.len()).filter(|&i| !handled[i] && packets[i] == want).take(n as usize).collect();
            assert_eq!(idx.len(), n as usize, "oracle: not enough packets for {want:?}");
            for &i in &idx {
                handled[i] = true;
            }
            idx
        };
        let mut moved = Vec::new();
        for t in &action.transfers {
            let (from, to) = net.graph.endpoints(t.link);
            for _ in take(&self.packets, &mut handled, Packet { node: from, path: t.path, lifetime: t.lifetime }, t.count) {
                moved.push(Packet { node: to, path: t.next_path, lifetime: t.lifetime - 1 });
            }
        }
        for d in &action.drops {
            let c = net.paths.get(d.path).commodity;
            let n = take(&self.packets, &mut handled, Packet { node: d.node, path: d.path, lifetime: d.lifetime }, d.count).len();
            out.dropped[c] += n as u32;
        }
        let mut next = Vec::new();
        let held = self.packets.iter().zip(&handled).filter(|(_, h)| !**h).map(|(p, _)| *p);
        for p in held.map(|p| Packet { lifetime: p.lifetime - 1, ..p }).chain(moved) {
            let c = net.paths.get(p.path).commodity;
            if p.lifetime == 0 {
                out.expired[c] += 1;
            } else if p.node == net.destination(c) {
                out.delivered[c] += 1;
            } else {
                next.push(p);
            }
        }
        self.packets = next;
        out
    }
}

/// A random action that respects availability, capacity and block limits,
/// built from the queued packets (backlog plus this slot's arrivals).
pub fn random_feasible_action<R: Rng>(net: &Network, q: &QueueState, rng: &mut R) -> (ArrivalBatch, NetAction) {
    let arrivals = ArrivalBatch { counts: (0..net.num_commodities()).map(|_| rng.random_range(0..5)).collect() };
    let mut assignment = vec![0u32; net.num_paths()];
    for (c, &b) in arrivals.counts.iter().enumerate() {
        let ids = net.paths.of_commodity(c);
        for _ in 0..b {
            assignment[ids[rng.random_range(0..ids.len())]] += 1;
        }
    }
    let blocks: Vec<u32> = net.graph.links().iter().map(|l| rng.random_range(0..=l.max_blocks)).collect();
    let mut room: Vec<u32> = net.graph.links().iter().zip(&blocks).map(|(l, &x)| x * l.block_capacity).collect();
    let mut transfers = Vec::new();
    let mut drops = Vec::new();
    for node in 0..net.num_nodes() {
        for p in net.local_paths(node) {
            let path = net.paths.get(p);
            let link = path.next_link(node).unwrap();
            for lifetime in 1..=net.max_lifetime() {
                let mut have = q.get(node, p, lifetime);
                if node == path.nodes[0] && lifetime == net.commodities[path.commodity].initial_lifetime {
                    have += assignment[p];
                }
                if have == 0 {
                    continue;
                }
                let send = rng.random_range(0..=have.min(room[link]));
                room[link] -= send;
                let drop = rng.random_range(0..=have - send);
                if send > 0 {
                    transfers.push(Transfer { link, path: p, next_path: p, lifetime, count: send });
                }
                if drop > 0 {
                    drops.push(Discard { node, path: p, lifetime, count: drop });
                }
            }
        }
    }
    (arrivals, NetAction { assignment, blocks, transfers, drops })
}

/// Drive the environment and the per-packet oracle side by side over
/// `sequences` random trajectories of `steps` slots.
pub fn queue_oracle_check(sequences: usize, steps: usize, seed: u64) -> Result<(), String> {
    let net = Arc::new(line_network());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..sequences {
        let mut env = Env::new(net.clone(), s as u64);
        let mut oracle = OracleState::default();
        for t in 0..steps {
            let (arrivals, action) = random_feasible_action(&net, env.state(), &mut rng);
            let before = env.state().total();
            let out = env.step(&action, &arrivals).map_err(|e| format!("seq {s} step {t}: {e}"))?;
            let expect = oracle.step(&net, &action);
            if (out.delivered.clone(), out.expired.clone(), out.dropped.clone())
                != (expect.delivered.clone(), expect.expired.clone(), expect.dropped.clone())
            {
                return Err(format!("seq {s} step {t}: outcome {out:?} vs oracle {expect:?}"));
            }
            for node in 0..net.num_nodes() {
                for p in 0..net.num_paths() {
                    for l in 1..=net.max_lifetime() {
                        if out.next.get(node, p, l) != oracle.count(node, p, l) {
                            return Err(format!("seq {s} step {t}: q[{node}][{p}][{l}] differs"));
                        }
                    }
                }
            }
            let sum = |v: &[u32]| v.iter().map(|&x| x as u64).sum::<u64>();
            let lhs = arrivals.total() + before;
            let rhs = out.next.total() + sum(&out.delivered) + sum(&out.expired) + sum(&out.dropped);
            if lhs != rhs {
                return Err(format!("seq {s} step {t}: conservation {lhs} != {rhs}"));
            }
        }
    }
    Ok(())
}

/// Worst relative error between analytic and central-difference gradients
/// of `L = w · y` over parameters and inputs.
pub fn gradient_error(net: &mut Mlp, input: &[f64], weights: &[f64], h: f64) -> f64 {
    let loss = |net: &Mlp, x: &[f64]| net.predict(x).unwrap().iter().zip(weights).map(|(y, w)| y * w).sum::<f64>();
    let cache = net.forward(input).unwrap();
    let grads = net.backward(&cache, weights).unwrap();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(net, input);
        net.params_mut()[i] = orig - h;
        let down = loss(net, input);
        net.params_mut()[i] = orig;
        worst = worst.max(rel(grads.params[i], (up - down) / (2.0 * h)));
    }
    let mut x = input.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(net, &x);
        x[i] = orig - h;
        let down = loss(net, &x);
        x[i] = orig;
        worst = worst.max(rel(grads.input[i], (up - down) / (2.0 * h)));
    }
    worst
}

/// Random network with every dimension at most 16. Even indices get a linear
/// head, odd ones a grouped softmax head; hidden activations alternate too.
pub fn random_mlp<R: Rng>(rng: &mut R, index: usize) -> Mlp {
    let depth = rng.random_range(2..=4);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=16)).collect();
    let out = *dims.last().unwrap();
    let head = if index.is_multiple_of(2) {
        Head::Linear
    } else {
        let mut groups = Vec::new();
        let mut left = out;
        while left > 0 {
            let g = rng.random_range(1..=left.min(4));
            groups.push(g);
            left -= g;
        }
        Head::Softmax { groups }
    };
    let hidden = if index % 4 < 2 { Activation::Relu } else { Activation::Tanh };
    Mlp::init(&dims, hidden, head, rng.random()).unwrap()
}

pub fn gradient_check(nets: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..nets {
        let mut net = random_mlp(&mut rng, k);
        let input: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = gradient_error(&mut net, &input, &weights, 1e-5);
        if err > 1e-4 {
            return Err(format!("network {k} dims {:?}: relative error {err:e}", net.dims()));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

fn disc(values: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    values.enumerate().map(|(t, v)| gamma.powi(t as i32) * v).sum()
}

/// Largest gap between the discounted return and its Lagrangian form over
/// `trajectories` random fixed-λ environment trajectories.
pub fn lagrangian_identity_gap(trajectories: usize, seed: u64) -> f64 {
    let net = Arc::new(line_network());
    let nc = net.num_commodities();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..trajectories {
        let steps = rng.random_range(1..60);
        let gamma: f64 = rng.random_range(0.0..1.0);
        let lambda: Vec<f64> = (0..nc).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut env = Env::new(net.clone(), k as u64);
        let mut cost = Vec::new();
        let mut m = Vec::new();
        let mut rewards = Vec::new();
        for _ in 0..steps {
            let (arrivals, action) = random_feasible_action(&net, env.state(), &mut rng);
            let out = env.step(&action, &arrivals).unwrap();
            rewards.push(reward(out.cost.normalized, &out.throughput, &lambda));
            cost.push(out.cost.normalized);
            m.push(out.throughput);
        }
        let lhs = discounted_sum(rewards, gamma);
        let rhs = -disc(cost.into_iter(), gamma)
            + (0..nc).map(|c| lambda[c] * disc(m.iter().map(|s| s[c]), gamma)).sum::<f64>();
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Updates needed to drive λ₀ to zero with m̂ pinned at +1.
pub fn updates_to_zero(lambda0: f64, eta: f64) -> (u64, bool) {
    let mut d = DualState::new(vec![lambda0], vec![eta], 100, 0.05);
    let mut n = 0;
    while d.lambda[0] > 0.0 && n < 100_000 {
        d.dual_update(&[1.0]).unwrap();
        n += 1;
    }
    let mut stays = true;
    for _ in 0..100 {
        d.dual_update(&[1.0]).unwrap();
        stays &= d.lambda[0] == 0.0;
    }
    (n, stays)
}

