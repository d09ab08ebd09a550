//! Centralized routing actor, per-node scheduling actors and a shared critic,
//! trained with deterministic policy gradients through the critic.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::exploration::randomize_groups;
use super::policy::{compose, route, NodeSchedule};
use super::replay::{ReplayBuffer, Transition};
use super::AgentError;
use crate::env::{ArrivalBatch, QueueState};
use crate::graph::{Network, NodeId, PathId};
use crate::nn::{checkpoint, Activation, AdamConfig, AdamState, Head, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Target-network tracking rate τ.
    pub soft_update: f64,
    /// Minibatch gradient steps per policy iteration.
    pub updates_per_iteration: usize,
    /// Queue counts are divided by this before entering a network. Defaults
    /// to the largest per-block link capacity.
    pub obs_scale: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            actor_optimizer: AdamConfig::default(),
            critic_optimizer: AdamConfig::default(),
            gamma: 0.97,
            batch_size: 256,
            buffer_capacity: 100_000,
            soft_update: 0.01,
            updates_per_iteration: 20,
            obs_scale: None,
        }
    }
}

/// Index bookkeeping shared by the actors, critic and replay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `|V|·|P|·L_max` backlog entries followed by `|C|` arrival counts.
    pub state_dim: usize,
    pub backlog_dim: usize,
    pub route_groups: Vec<usize>,
    /// (node, local paths) for every node that can hold packets.
    pub schedulers: Vec<(NodeId, Vec<PathId>)>,
    /// Start of each scheduler's triples inside the joint action vector.
    pub action_offsets: Vec<usize>,
    pub joint_dim: usize,
    pub obs_offsets: Vec<usize>,
    pub obs_dim: usize,
    pub scale: f64,
    max_lifetime: usize,
    num_paths: usize,
}

impl Layout {
    pub fn new(net: &Network, scale: Option<f64>) -> Self {
        let max_lifetime = net.max_lifetime() as usize;
        let backlog_dim = net.num_nodes() * net.num_paths() * max_lifetime;
        let route_groups = (0..net.num_commodities()).map(|c| net.paths.of_commodity(c).len()).collect();
        let schedulers: Vec<_> = (0..net.num_nodes())
            .map(|i| (i, net.local_paths(i)))
            .filter(|(_, p)| !p.is_empty())
            .collect();
        let mut action_offsets = Vec::new();
        let mut obs_offsets = Vec::new();
        let mut joint = net.num_paths();
        let mut obs = 0;
        for (_, paths) in &schedulers {
            action_offsets.push(joint);
            obs_offsets.push(obs);
            joint += 3 * paths.len();
            obs += paths.len();
        }
        let scale = scale.unwrap_or_else(|| {
            net.graph.links().iter().map(|l| l.block_capacity).max().unwrap_or(1) as f64
        });
        Self {
            state_dim: backlog_dim + net.num_commodities(),
            backlog_dim,
            route_groups,
            schedulers,
            action_offsets,
            joint_dim: joint,
            obs_offsets,
            obs_dim: obs,
            scale,
            max_lifetime,
            num_paths: net.num_paths(),
        }
    }

    pub fn critic_input_dim(&self) -> usize {
        self.state_dim + self.joint_dim
    }

    pub fn raw_state(&self, q: &QueueState, arrivals: &ArrivalBatch) -> Vec<u16> {
        q.as_slice()
            .iter()
            .chain(&arrivals.counts)
            .map(|&v| v.min(u16::MAX as u32) as u16)
            .collect()
    }

    pub fn normalize(&self, raw: &[u16]) -> Vec<f64> {
        raw.iter().map(|&v| v as f64 / self.scale).collect()
    }

    fn arrivals_of(&self, raw: &[u16]) -> ArrivalBatch {
        ArrivalBatch { counts: raw[self.backlog_dim..].iter().map(|&v| v as u32).collect() }
    }

    /// Aggregate per-path backlog seen by scheduler `k` once the routed
    /// arrivals have been added at their sources.
    fn local_obs(&self, net: &Network, raw: &[u16], assignment: &[u32], k: usize) -> Vec<f64> {
        let (node, paths) = &self.schedulers[k];
        paths
            .iter()
            .map(|&p| {
                let start = (node * self.num_paths + p) * self.max_lifetime;
                let held: u32 = raw[start..start + self.max_lifetime].iter().map(|&v| v as u32).sum();
                let fresh = if net.source(net.paths.get(p).commodity) == *node { assignment[p] } else { 0 };
                (held + fresh) as f64 / self.scale
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Trainable {
    net: Mlp,
    target: Mlp,
    opt: AdamState,
}

impl Trainable {
    fn new(net: Mlp, config: AdamConfig) -> Self {
        let opt = AdamState::new(net.num_params(), config);
        Self { target: net.clone(), net, opt }
    }
}

/// Output of [`CdrlAgents::act`].
#[derive(Debug, Clone)]
pub struct Decision {
    pub action: crate::env::NetAction,
    pub state: Vec<u16>,
    /// Executed actor outputs in joint layout.
    pub actions: Vec<f64>,
    pub local_obs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone)]
pub struct CdrlAgents {
    net: Arc<Network>,
    layout: Layout,
    config: AgentConfig,
    routing: Trainable,
    schedulers: Vec<Trainable>,
    critic: Trainable,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

impl CdrlAgents {
    pub fn new(net: Arc<Network>, config: AgentConfig, seed: u64) -> Result<Self, AgentError> {
        let layout = Layout::new(&net, config.obs_scale);
        let h = &config.hidden;
        let routing = Mlp::init(
            &dims(layout.state_dim, h, net.num_paths()),
            Activation::Relu,
            Head::Softmax { groups: layout.route_groups.clone() },
            seed,
        )?;
        let mut schedulers = Vec::with_capacity(layout.schedulers.len());
        for (k, (_, paths)) in layout.schedulers.iter().enumerate() {
            let m = Mlp::init(
                &dims(paths.len(), h, 3 * paths.len()),
                Activation::Relu,
                Head::Softmax { groups: vec![3; paths.len()] },
                seed.wrapping_add(1 + k as u64),
            )?;
            schedulers.push(Trainable::new(m, config.actor_optimizer));
        }
        let critic = Mlp::init(
            &dims(layout.critic_input_dim(), h, 1),
            Activation::Relu,
            Head::Linear,
            seed.wrapping_add(1000),
        )?;
        Ok(Self {
            routing: Trainable::new(routing, config.actor_optimizer),
            critic: Trainable::new(critic, config.critic_optimizer),
            schedulers,
            layout,
            config,
            net,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn routing_actor(&self) -> &Mlp {
        &self.routing.net
    }

    pub fn scheduling_actor(&self, k: usize) -> &Mlp {
        &self.schedulers[k].net
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic.net
    }

    /// Observe `(q, b)` and emit a feasible action. Each agent independently
    /// replaces its outputs with a uniform simplex draw with probability ε.
    pub fn act<R: Rng + ?Sized>(
        &self,
        q: &QueueState,
        arrivals: &ArrivalBatch,
        epsilon: f64,
        rng: &mut R,
    ) -> Decision {
        let net = &*self.net;
        let lay = &self.layout;
        let raw = lay.raw_state(q, arrivals);
        let state = lay.normalize(&raw);
        let mut actions = Vec::with_capacity(lay.joint_dim);

        let mut route_probs = self.routing.net.predict(&state).expect("layout matches routing actor");
        if rng.random::<f64>() < epsilon {
            randomize_groups(rng, &mut route_probs, &lay.route_groups);
        }
        let assignment = route(net, &route_probs, arrivals);
        actions.extend_from_slice(&route_probs);

        let mut local_obs = Vec::with_capacity(lay.obs_dim);
        for (k, (_, paths)) in lay.schedulers.iter().enumerate() {
            let obs = lay.local_obs(net, &raw, &assignment, k);
            let mut probs = self.schedulers[k].net.predict(&obs).expect("layout matches scheduler");
            if rng.random::<f64>() < epsilon {
                randomize_groups(rng, &mut probs, &vec![3; paths.len()]);
            }
            local_obs.extend_from_slice(&obs);
            actions.extend_from_slice(&probs);
        }

        let queued = q.with_arrivals(net, &assignment);
        let schedules: Vec<NodeSchedule<'_>> = lay
            .schedulers
            .iter()
            .zip(&lay.action_offsets)
            .map(|((node, paths), &off)| NodeSchedule {
                node: *node,
                paths,
                probs: &actions[off..off + 3 * paths.len()],
            })
            .collect();
        let action = compose(net, &queued, assignment, &schedules);
        Decision { action, state: raw, actions, local_obs }
    }

    /// Target-network joint action at a stored next state.
    fn target_actions(&self, raw: &[u16], state: &[f64]) -> Vec<f64> {
        let lay = &self.layout;
        let mut joint = self.routing.target.predict(state).expect("routing target");
        let assignment = route(&self.net, &joint, &lay.arrivals_of(raw));
        for (k, trainable) in self.schedulers.iter().enumerate() {
            let obs = lay.local_obs(&self.net, raw, &assignment, k);
            joint.extend(trainable.target.predict(&obs).expect("scheduler target"));
        }
        joint
    }

    /// One minibatch critic regression step followed by one policy-gradient
    /// step for every actor and a soft target update.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateStats, AgentError> {
        let batch = self.config.batch_size;
        if buffer.len() < batch || batch == 0 {
            return Err(AgentError::UnderfullBuffer { have: buffer.len(), need: batch.max(1) });
        }
        let idx = buffer.sample_indices(rng, batch);
        let samples: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
        let inv = 1.0 / batch as f64;
        let gamma = self.config.gamma;

        // Critic
        let mut grad = vec![0.0; self.critic.net.num_params()];
        let mut loss = 0.0;
        let mut mean_q = 0.0;
        for t in &samples {
            let mut y = t.reward as f64;
            if !t.done {
                let next = self.layout.normalize(&t.next_state);
                let mut input = next.clone();
                input.extend(self.target_actions(&t.next_state, &next));
                y += gamma * self.critic.target.predict(&input)?[0];
            }
            let mut input = self.layout.normalize(&t.state);
            input.extend(t.actions.iter().map(|&a| a as f64));
            let cache = self.critic.net.forward(&input)?;
            let err = cache.output()[0] - y;
            loss += err * err * inv;
            mean_q += cache.output()[0] * inv;
            self.critic.net.backward_into(&cache, &[2.0 * err * inv], Some(&mut grad))?;
        }
        self.critic.opt.step(self.critic.net.params_mut(), &grad);

        // Actors: ascend Q along each agent's own action slots.
        let lay = &self.layout;
        let mut route_grad = vec![0.0; self.routing.net.num_params()];
        let mut sched_grads: Vec<Vec<f64>> =
            self.schedulers.iter().map(|s| vec![0.0; s.net.num_params()]).collect();
        for t in &samples {
            let state = lay.normalize(&t.state);
            let route_cache = self.routing.net.forward(&state)?;
            let mut input = state;
            input.extend_from_slice(route_cache.output());
            let mut sched_caches = Vec::with_capacity(self.schedulers.len());
            for (k, s) in self.schedulers.iter().enumerate() {
                let n = lay.schedulers[k].1.len();
                let off = lay.obs_offsets[k];
                let obs: Vec<f64> = t.local_obs[off..off + n].iter().map(|&v| v as f64).collect();
                let c = s.net.forward(&obs)?;
                input.extend_from_slice(c.output());
                sched_caches.push(c);
            }
            let q_cache = self.critic.net.forward(&input)?;
            let dq = self.critic.net.backward_into(&q_cache, &[1.0], None)?;
            let da = &dq[lay.state_dim..];
            let scaled = |g: &[f64]| g.iter().map(|v| -v * inv).collect::<Vec<_>>();
            self.routing.net.backward_into(&route_cache, &scaled(&da[..lay.num_paths]), Some(&mut route_grad))?;
            for (k, c) in sched_caches.iter().enumerate() {
                let off = lay.action_offsets[k] - lay.num_paths;
                let n = 3 * lay.schedulers[k].1.len();
                let g = scaled(&da[lay.num_paths + off..lay.num_paths + off + n]);
                self.schedulers[k].net.backward_into(c, &g, Some(&mut sched_grads[k]))?;
            }
        }
        self.routing.opt.step(self.routing.net.params_mut(), &route_grad);
        for (s, g) in self.schedulers.iter_mut().zip(&sched_grads) {
            s.opt.step(s.net.params_mut(), g);
        }

        let tau = self.config.soft_update;
        for t in std::iter::once(&mut self.routing)
            .chain(self.schedulers.iter_mut())
            .chain(std::iter::once(&mut self.critic))
        {
            t.target.soft_update_from(&t.net, tau);
        }
        Ok(UpdateStats { critic_loss: loss, mean_q })
    }

    /// Critic estimate for a raw state and joint action.
    pub fn q_value(&self, raw_state: &[u16], actions: &[f64]) -> f64 {
        let mut input = self.layout.normalize(raw_state);
        input.extend_from_slice(actions);
        self.critic.net.predict(&input).expect("critic input")[0]
    }

    /// Gradient of the critic with respect to the joint action.
    pub fn action_gradient(&self, raw_state: &[u16], actions: &[f64]) -> Vec<f64> {
        let mut input = self.layout.normalize(raw_state);
        input.extend_from_slice(actions);
        let cache = self.critic.net.forward(&input).expect("critic input");
        let g = self.critic.net.backward_into(&cache, &[1.0], None).expect("critic cache");
        g[self.layout.state_dim..].to_vec()
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        fs::create_dir_all(dir)?;
        let mut roles = Vec::new();
        let mut write = |role: &str, node: Option<&str>, file: String, m: &Mlp, layout: String| {
            checkpoint::save(m, &dir.join(&file))?;
            roles.push(RoleEntry {
                role: role.into(),
                node: node.map(str::to_string),
                file,
                dims: m.dims().to_vec(),
                input_layout: layout,
            });
            Ok::<_, AgentError>(())
        };
        write(
            "routing",
            None,
            "routing.mlp".into(),
            &self.routing.net,
            "backlog[node][path][lifetime] / scale, arrivals[commodity] / scale".into(),
        )?;
        for ((node, paths), s) in self.layout.schedulers.iter().zip(&self.schedulers) {
            let name = self.net.graph.node_name(*node);
            write(
                "scheduling",
                Some(name),
                format!("sched_{name}.mlp"),
                &s.net,
                format!("aggregate backlog / scale for paths {paths:?}"),
            )?;
        }
        write("critic", None, "critic.mlp".into(), &self.critic.net, "state ++ joint actor outputs".into())?;
        let manifest = AgentManifest { format_version: checkpoint::FORMAT_VERSION, scale: self.layout.scale, roles };
        fs::write(dir.join("agents.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    /// Load actors and critic saved by [`CdrlAgents::save`]. Shapes must match
    /// the layout implied by `net`.
    pub fn load(net: Arc<Network>, config: AgentConfig, dir: &Path) -> Result<Self, AgentError> {
        let manifest: AgentManifest = serde_json::from_slice(&fs::read(dir.join("agents.json"))?)?;
        let mut agents = Self::new(net, config, 0)?;
        let find = |role: &str, node: Option<&str>| {
            manifest
                .roles
                .iter()
                .find(|r| r.role == role && r.node.as_deref() == node)
                .ok_or_else(|| AgentError::Checkpoint(format!("manifest lacks {role} {node:?}")))
        };
        let load_into = |slot: &mut Trainable, entry: &RoleEntry| {
            let m = checkpoint::load(&dir.join(&entry.file))?;
            if m.dims() != slot.net.dims() || m.head() != slot.net.head() {
                return Err(AgentError::Checkpoint(format!(
                    "{} has dims {:?}, configuration expects {:?}",
                    entry.file,
                    m.dims(),
                    slot.net.dims()
                )));
            }
            *slot = Trainable::new(m, slot.opt.config);
            Ok(())
        };
        load_into(&mut agents.routing, find("routing", None)?)?;
        load_into(&mut agents.critic, find("critic", None)?)?;
        for k in 0..agents.schedulers.len() {
            let name = agents.net.graph.node_name(agents.layout.schedulers[k].0).to_string();
            let entry = find("scheduling", Some(&name))?;
            load_into(&mut agents.schedulers[k], entry)?;
        }
        Ok(agents)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RoleEntry {
    role: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    node: Option<String>,
    file: String,
    dims: Vec<usize>,
    input_layout: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentManifest {
    format_version: u32,
    scale: f64,
    roles: Vec<RoleEntry>,
}
