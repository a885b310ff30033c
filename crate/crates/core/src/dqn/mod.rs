//! Deep Q-learning from scratch.

mod agent;
pub mod checkpoint;
mod exploration;
mod network;
mod replay;

pub use agent::{DqnAgent, DqnConfig};
pub use checkpoint::AgentCheckpoint;
pub use exploration::{deploy_policy, select_action, ExplorationSchedule};
pub use network::{argmax, td_loss_and_gradient, train_step, Adam, Dense, Gradients, QNetwork, Transition};
pub use replay::ReplayBuffer;
