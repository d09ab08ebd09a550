//! The learning controller: a centralized routing actor, one scheduling actor
//! per packet-holding node and a centralized critic.

mod exploration;
mod maddpg;
mod policy;
mod replay;

use thiserror::Error;

pub use exploration::{randomize_groups, ExplorationSchedule};
pub use maddpg::{AgentConfig, CdrlAgents, Decision, Layout, UpdateStats};
pub use policy::{allocate_blocks, compose, route, schedule, split_arrivals, CellPlan, NodeSchedule};
pub use replay::{ReplayBuffer, Transition};

use crate::graph::LinkId;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("link {link}: load {load} exceeds capacity {capacity}")]
    CapacityOverflow { link: LinkId, load: u32, capacity: u32 },
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    UnderfullBuffer { have: usize, need: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
