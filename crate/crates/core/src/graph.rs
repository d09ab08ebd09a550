//! Static network description: nodes, block-based links, commodities and
//! their feasible paths.
//!
//! A [`NetworkGraph`] can be built with arbitrary (even invalid) contents so
//! that [`NetworkGraph::validate`] can report every violation at once. The
//! simulator only ever works on a [`Network`], which is the validated graph
//! together with its commodities and enumerated path sets.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in [`NetworkGraph::nodes`].
pub type NodeId = usize;
/// Index of a link in [`NetworkGraph::links`].
pub type LinkId = usize;
/// Global path index inside a [`PathSet`].
pub type PathId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub from: String,
    pub to: String,
    /// Packets per slot carried by one resource block.
    pub block_capacity: u32,
    /// Maximum number of blocks that can be allocated in one slot.
    pub max_blocks: u32,
    /// Cost of operating one block for one slot.
    pub block_cost: f64,
}

impl Link {
    /// Full link capacity in packets per slot.
    pub fn capacity(&self) -> u32 {
        self.block_capacity * self.max_blocks
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("link {link}: unknown node `{node}`")]
    UnknownNode { link: LinkId, node: String },
    #[error("link {link}: self-loop on `{node}`")]
    SelfLoop { link: LinkId, node: String },
    #[error("link {link}: duplicate link {from}->{to}")]
    DuplicateLink { link: LinkId, from: String, to: String },
    #[error("link {link}: block capacity must be positive")]
    NonPositiveCapacity { link: LinkId },
    #[error("link {link}: block cost must be finite and non-negative")]
    InvalidCost { link: LinkId },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<String>,
    links: Vec<Link>,
    index: HashMap<String, NodeId>,
}

impl NetworkGraph {
    pub fn new(nodes: Vec<String>, links: Vec<Link>) -> Self {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, name) in nodes.iter().enumerate() {
            index.entry(name.clone()).or_insert(i);
        }
        Self { nodes, links, index }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id]
    }

    /// Resolved endpoints of a link. Only meaningful on a validated graph.
    pub fn endpoints(&self, link: LinkId) -> (NodeId, NodeId) {
        let l = &self.links[link];
        (self.index[&l.from], self.index[&l.to])
    }

    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        (0..self.links.len()).find(|&l| self.endpoints(l) == (from, to))
    }

    /// Outgoing neighbours of `node`, sorted by node id.
    pub fn successors(&self, node: NodeId) -> Vec<(NodeId, LinkId)> {
        let mut out: Vec<_> = (0..self.links.len())
            .filter_map(|l| {
                let (a, b) = self.endpoints(l);
                (a == node).then_some((b, l))
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Every invariant violation in the graph, or `Ok(())`.
    pub fn validate(&self) -> Result<(), Vec<GraphError>> {
        let mut errors = Vec::new();
        let mut seen = HashMap::new();
        for name in &self.nodes {
            if seen.insert(name.as_str(), ()).is_some() {
                errors.push(GraphError::DuplicateNode(name.clone()));
            }
        }
        let mut pairs = HashMap::new();
        for (id, link) in self.links.iter().enumerate() {
            let mut endpoints_known = true;
            for node in [&link.from, &link.to] {
                if !self.index.contains_key(node) {
                    endpoints_known = false;
                    errors.push(GraphError::UnknownNode { link: id, node: node.clone() });
                }
            }
            if link.from == link.to {
                errors.push(GraphError::SelfLoop { link: id, node: link.from.clone() });
            } else if endpoints_known
                && pairs.insert((link.from.as_str(), link.to.as_str()), id).is_some()
            {
                errors.push(GraphError::DuplicateLink {
                    link: id,
                    from: link.from.clone(),
                    to: link.to.clone(),
                });
            }
            if link.block_capacity == 0 {
                errors.push(GraphError::NonPositiveCapacity { link: id });
            }
            if !(link.block_cost.is_finite() && link.block_cost >= 0.0) {
                errors.push(GraphError::InvalidCost { link: id });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// A source/destination service flow with a lifetime and a reliability target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Commodity {
    pub source: String,
    pub destination: String,
    /// Lifetime (in slots) assigned to every packet on arrival.
    pub initial_lifetime: u32,
    /// Required ratio of on-time deliveries to the mean arrival rate.
    pub reliability: f64,
    /// Mean Poisson arrival rate in packets per slot.
    pub mean_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommodityError {
    #[error("commodity {0}: unknown source `{1}`")]
    UnknownSource(usize, String),
    #[error("commodity {0}: unknown destination `{1}`")]
    UnknownDestination(usize, String),
    #[error("commodity {0}: source equals destination")]
    SourceIsDestination(usize),
    #[error("commodity {0}: initial lifetime must be at least 1")]
    ZeroLifetime(usize),
    #[error("commodity {0}: reliability must lie in [0, 1]")]
    Reliability(usize),
    #[error("commodity {0}: mean rate must be finite and non-negative")]
    Rate(usize),
}

impl Commodity {
    pub fn validate(&self, idx: usize, graph: &NetworkGraph) -> Vec<CommodityError> {
        let mut errors = Vec::new();
        if graph.node_id(&self.source).is_none() {
            errors.push(CommodityError::UnknownSource(idx, self.source.clone()));
        }
        if graph.node_id(&self.destination).is_none() {
            errors.push(CommodityError::UnknownDestination(idx, self.destination.clone()));
        }
        if self.source == self.destination {
            errors.push(CommodityError::SourceIsDestination(idx));
        }
        if self.initial_lifetime == 0 {
            errors.push(CommodityError::ZeroLifetime(idx));
        }
        if !(0.0..=1.0).contains(&self.reliability) {
            errors.push(CommodityError::Reliability(idx));
        }
        if !(self.mean_rate.is_finite() && self.mean_rate >= 0.0) {
            errors.push(CommodityError::Rate(idx));
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub id: PathId,
    pub commodity: usize,
    pub nodes: Vec<NodeId>,
    /// `links[h]` joins `nodes[h]` and `nodes[h + 1]`.
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn contains_link(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }

    /// Position of `node` on the path, if visited.
    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    /// Outgoing link used at `node`, or `None` at the last node / off-path.
    pub fn next_link(&self, node: NodeId) -> Option<LinkId> {
        self.position(node).and_then(|h| self.links.get(h).copied())
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seq: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        write!(f, "p{}[{}]", self.id, seq.join("->"))
    }
}

/// All simple `source -> destination` node sequences with at most
/// `initial_lifetime` hops, in lexicographic order of node ids.
///
/// The graph must be valid and the commodity's endpoints must exist.
pub fn enumerate_paths(graph: &NetworkGraph, commodity: &Commodity) -> Vec<Vec<NodeId>> {
    let (Some(src), Some(dst)) = (graph.node_id(&commodity.source), graph.node_id(&commodity.destination))
    else {
        return Vec::new();
    };
    let max_hops = commodity.initial_lifetime as usize;
    let mut found = Vec::new();
    let mut stack = vec![src];
    let mut on_path = vec![false; graph.nodes().len()];
    on_path[src] = true;
    extend_paths(graph, dst, max_hops, &mut stack, &mut on_path, &mut found);
    found.sort();
    found
}

fn extend_paths(
    graph: &NetworkGraph,
    dst: NodeId,
    max_hops: usize,
    stack: &mut Vec<NodeId>,
    on_path: &mut [bool],
    found: &mut Vec<Vec<NodeId>>,
) {
    let here = *stack.last().expect("stack starts non-empty");
    if here == dst {
        found.push(stack.clone());
        return;
    }
    if stack.len() > max_hops {
        return;
    }
    for (next, _) in graph.successors(here) {
        if on_path[next] {
            continue;
        }
        on_path[next] = true;
        stack.push(next);
        extend_paths(graph, dst, max_hops, stack, on_path, found);
        stack.pop();
        on_path[next] = false;
    }
}

/// Paths whose consecutive node pairs include `link`.
pub fn paths_through_link(paths: &[Path], link: LinkId) -> Vec<&Path> {
    paths.iter().filter(|p| p.contains_link(link)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathSet {
    paths: Vec<Path>,
    by_commodity: Vec<Vec<PathId>>,
}

impl PathSet {
    pub fn all(&self) -> &[Path] {
        &self.paths
    }

    pub fn get(&self, id: PathId) -> &Path {
        &self.paths[id]
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Global ids of the paths serving commodity `c`, in lexicographic order.
    pub fn of_commodity(&self, c: usize) -> &[PathId] {
        &self.by_commodity[c]
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid graph: {}", join(.0))]
    Graph(Vec<GraphError>),
    #[error("invalid commodities: {}", join(.0))]
    Commodity(Vec<CommodityError>),
    #[error("commodity {commodity} ({source_node} -> {destination}) has no feasible path")]
    Unreachable { commodity: usize, source_node: String, destination: String },
    #[error("no commodities declared")]
    NoCommodities,
}

fn join<E: fmt::Display>(errors: &[E]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// A validated graph together with its commodities and path sets.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: NetworkGraph,
    pub commodities: Vec<Commodity>,
    pub paths: PathSet,
    sources: Vec<NodeId>,
    destinations: Vec<NodeId>,
    max_lifetime: u32,
}

impl Network {
    pub fn new(graph: NetworkGraph, commodities: Vec<Commodity>) -> Result<Self, NetworkError> {
        graph.validate().map_err(NetworkError::Graph)?;
        if commodities.is_empty() {
            return Err(NetworkError::NoCommodities);
        }
        let errors: Vec<_> =
            commodities.iter().enumerate().flat_map(|(i, c)| c.validate(i, &graph)).collect();
        if !errors.is_empty() {
            return Err(NetworkError::Commodity(errors));
        }

        let mut paths = Vec::new();
        let mut by_commodity = Vec::with_capacity(commodities.len());
        for (c, commodity) in commodities.iter().enumerate() {
            let sequences = enumerate_paths(&graph, commodity);
            if sequences.is_empty() {
                return Err(NetworkError::Unreachable {
                    commodity: c,
                    source_node: commodity.source.clone(),
                    destination: commodity.destination.clone(),
                });
            }
            let mut ids = Vec::with_capacity(sequences.len());
            for nodes in sequences {
                let links = nodes
                    .windows(2)
                    .map(|w| graph.link_between(w[0], w[1]).expect("path follows declared links"))
                    .collect();
                ids.push(paths.len());
                paths.push(Path { id: paths.len(), commodity: c, nodes, links });
            }
            by_commodity.push(ids);
        }

        let sources = commodities.iter().map(|c| graph.node_id(&c.source).unwrap()).collect();
        let destinations =
            commodities.iter().map(|c| graph.node_id(&c.destination).unwrap()).collect();
        let max_lifetime = commodities.iter().map(|c| c.initial_lifetime).max().unwrap_or(1);
        Ok(Self {
            graph,
            commodities,
            paths: PathSet { paths, by_commodity },
            sources,
            destinations,
            max_lifetime,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.nodes().len()
    }

    pub fn num_links(&self) -> usize {
        self.graph.links().len()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn num_commodities(&self) -> usize {
        self.commodities.len()
    }

    /// Largest initial lifetime over all commodities (`L_max`).
    pub fn max_lifetime(&self) -> u32 {
        self.max_lifetime
    }

    pub fn source(&self, c: usize) -> NodeId {
        self.sources[c]
    }

    pub fn destination(&self, c: usize) -> NodeId {
        self.destinations[c]
    }

    /// Destination of the commodity carried on `path`.
    pub fn path_destination(&self, path: PathId) -> NodeId {
        self.destinations[self.paths.get(path).commodity]
    }

    /// Paths along which `node` may hold packets: the node is visited and is
    /// not the path's destination.
    pub fn local_paths(&self, node: NodeId) -> Vec<PathId> {
        self.paths
            .all()
            .iter()
            .filter(|p| p.next_link(node).is_some())
            .map(|p| p.id)
            .collect()
    }

    /// Σ over links of `max_blocks * block_cost`, the largest per-slot cost.
    pub fn max_slot_cost(&self) -> f64 {
        self.graph.links().iter().map(|l| l.max_blocks as f64 * l.block_cost).sum()
    }
}
