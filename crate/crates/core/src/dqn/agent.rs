use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::AgentCheckpoint;
use super::exploration::{deploy_policy, select_action, ExplorationSchedule};
use super::network::{train_step, Adam, Gradients, QNetwork, Transition};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};

/// Learner hyperparameters shared by every agent of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Target network copy interval, in training steps.
    pub sync_interval: u64,
    /// Environment steps between training steps.
    pub train_every: u64,
    pub exploration: ExplorationSchedule,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            learning_rate: 0.001,
            buffer_capacity: 10_000,
            batch_size: 32,
            sync_interval: 100,
            train_every: 1,
            exploration: ExplorationSchedule::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.iter().any(|&h| h == 0 || h > 4096) || self.hidden_layers.len() > 14 {
            return Err(Error::config("hidden layer widths must lie in 1..=4096, at most 14 layers"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::config("need 0 < batch size <= buffer capacity"));
        }
        if self.sync_interval == 0 || self.train_every == 0 {
            return Err(Error::config("sync interval and train_every must be at least 1"));
        }
        self.exploration.validate()
    }

    fn sizes(&self, inputs: usize, actions: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(&self.hidden_layers);
        s.push(actions);
        s
    }
}

/// One independent deep Q-learner: online and target networks, replay
/// buffer, optimizer and its own random stream.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    config: DqnConfig,
    online: QNetwork,
    target: QNetwork,
    optimizer: Adam,
    grads: Gradients,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    master_seed: u64,
    stream: u64,
    observed: u64,
    train_steps: u64,
    syncs: u64,
    episodes: u64,
}

impl DqnAgent {
    /// Fresh agent; stream `stream` of `master_seed` drives initialisation,
    /// exploration and replay sampling.
    pub fn new(config: &DqnConfig, inputs: usize, actions: usize, master_seed: u64, stream: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        let online = QNetwork::glorot(&config.sizes(inputs, actions), &mut rng)?;
        Ok(Self::assemble(config, online.clone(), online, rng, master_seed, stream))
    }

    fn assemble(config: &DqnConfig, online: QNetwork, target: QNetwork, rng: ChaCha8Rng, master_seed: u64, stream: u64) -> Self {
        Self {
            config: config.clone(),
            optimizer: Adam::new(config.learning_rate, online.num_params()),
            grads: Gradients::zeros_like(&online),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            online,
            target,
            rng,
            master_seed,
            stream,
            observed: 0,
            train_steps: 0,
            syncs: 0,
            episodes: 0,
        }
    }

    /// Agent for greedy evaluation; the optimizer and buffer start empty.
    pub fn from_checkpoint(config: &DqnConfig, ck: AgentCheckpoint) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(ck.master_seed);
        rng.set_stream(ck.stream);
        let mut agent = Self::assemble(config, ck.online, ck.target, rng, ck.master_seed, ck.stream);
        agent.train_steps = ck.train_steps;
        agent.syncs = ck.syncs;
        agent.episodes = ck.episodes;
        Ok(agent)
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            master_seed: self.master_seed,
            stream: self.stream,
            train_steps: self.train_steps,
            syncs: self.syncs,
            episodes: self.episodes,
            online: self.online.clone(),
            target: self.target.clone(),
        }
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn epsilon(&self) -> f64 {
        self.config.exploration.epsilon(self.episodes)
    }

    pub fn end_episode(&mut self) {
        self.episodes += 1;
    }

    pub fn act(&mut self, obs: &[f64]) -> Result<usize> {
        let eps = self.epsilon();
        select_action(&self.online, obs, eps, &mut self.rng)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        deploy_policy(&self.online, obs)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(obs)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
        self.observed += 1;
    }

    /// Trains on one replayed batch when the buffer holds at least a batch
    /// and the `train_every` cadence is due. Returns the loss if it trained.
    pub fn learn(&mut self, gamma: f64) -> Result<Option<f64>> {
        if self.buffer.len() < self.config.batch_size || self.observed % self.config.train_every != 0 {
            return Ok(None);
        }
        let batch = self.buffer.sample(&mut self.rng, self.config.batch_size);
        let loss = train_step(&mut self.online, &self.target, &batch, gamma, &mut self.optimizer, &mut self.grads)?;
        self.train_steps += 1;
        if self.train_steps % self.config.sync_interval == 0 {
            self.target = self.online.clone();
            self.syncs += 1;
        }
        Ok(Some(loss))
    }
}
