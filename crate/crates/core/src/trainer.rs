//! Simultaneous independent learning of the aggregator and the participants,
//! greedy evaluation, the unmanaged reference and the full-knowledge myopic
//! baseline.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::metrics::{compute_metrics, spearman};
use crate::dqn::{AgentCheckpoint, DqnAgent, DqnConfig, Transition};
use crate::environment::{aggregator_reward, Environment, Episode, EpisodeTrace, HouseholdStep};
use crate::error::{Error, Result};

/// Random stream ids derived from the master seed. Household β draws use
/// streams `1..=H` inside [`Environment::new`].
const AGGREGATOR_STREAM: u64 = 1 << 32;
const PARTICIPANT_STREAM_BASE: u64 = (1 << 32) + 1;
const DAY_SAMPLER_STREAM: u64 = 1 << 33;

const AGGREGATOR_FILE: &str = "aggregator.ckpt";
const MANIFEST_FILE: &str = "manifest.json";

fn participant_file(id: &str) -> String {
    format!("participant_{id}.ckpt")
}

/// One aggregator and one learner per household.
#[derive(Debug, Clone)]
pub struct Agents {
    pub aggregator: DqnAgent,
    pub participants: Vec<DqnAgent>,
}

impl Agents {
    pub fn new(env: &Environment, config: &DqnConfig, seed: u64) -> Result<Self> {
        let actions = &env.config().actions;
        let aggregator = DqnAgent::new(
            config,
            env.aggregator_input_len(),
            actions.aggregator_incentives.len(),
            seed,
            AGGREGATOR_STREAM,
        )?;
        let participants = (0..env.num_households())
            .map(|h| {
                DqnAgent::new(
                    config,
                    env.participant_input_len(h),
                    actions.participant_rates.len(),
                    seed,
                    PARTICIPANT_STREAM_BASE + h as u64,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            aggregator,
            participants,
        })
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut DqnAgent)) {
        f(&mut self.aggregator);
        self.participants.iter_mut().for_each(f);
    }

    /// Writes one file per agent plus the manifest into `dir`.
    pub fn save(&self, dir: &Path, env: &Environment, manifest: &CheckpointManifest) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.aggregator.checkpoint().save(&dir.join(AGGREGATOR_FILE))?;
        for (agent, id) in self.participants.iter().zip(env.household_ids()) {
            agent.checkpoint().save(&dir.join(participant_file(&id)))?;
        }
        let tmp = dir.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(manifest)? + "\n")?;
        fs::rename(tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    /// Loads agents saved by [`Agents::save`]; the networks must fit `env`.
    pub fn load(dir: &Path, env: &Environment, config: &DqnConfig) -> Result<(Self, CheckpointManifest)> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| Error::config(format!("missing checkpoint manifest {}: {e}", manifest_path.display())))?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", manifest_path.display())))?;
        if manifest.households != env.household_ids() {
            return Err(Error::config("checkpoint households differ from the dataset"));
        }
        let actions = &env.config().actions;
        let load = |file: String, inputs: usize, outputs: usize| -> Result<DqnAgent> {
            let path = dir.join(file);
            let ck = AgentCheckpoint::load(&path).map_err(|e| Error::config(e.to_string()))?;
            let sizes = ck.online.sizes();
            let mut expected = vec![inputs];
            expected.extend(&config.hidden_layers);
            expected.push(outputs);
            if sizes != expected {
                return Err(Error::config(format!(
                    "{}: network shape {sizes:?} does not match configuration {expected:?}",
                    path.display()
                )));
            }
            DqnAgent::from_checkpoint(config, ck)
        };
        let aggregator = load(
            AGGREGATOR_FILE.to_string(),
            env.aggregator_input_len(),
            actions.aggregator_incentives.len(),
        )?;
        let participants = env
            .household_ids()
            .iter()
            .enumerate()
            .map(|(h, id)| load(participant_file(id), env.participant_input_len(h), actions.participant_rates.len()))
            .collect::<Result<_>>()?;
        Ok((
            Self {
                aggregator,
                participants,
            },
            manifest,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub episodes_completed: u64,
    pub dataset_fingerprint: String,
    pub households: Vec<String>,
    pub crate_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveRow {
    pub episode: u64,
    pub epsilon: f64,
    #[serde(rename = "mean_r_AA")]
    pub mean_r_aa: f64,
    #[serde(rename = "mean_r_PA")]
    pub mean_r_pa: f64,
    pub surplus_kwh: f64,
    pub incentive_cents: f64,
}

pub fn write_learning_curve<W: std::io::Write>(rows: &[LearningCurveRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        out.write_record(["episode", "epsilon", "mean_r_AA", "mean_r_PA", "surplus_kwh", "incentive_cents"])?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainingOptions {
    pub dqn: DqnConfig,
    pub episodes: u64,
    pub train_days: Range<usize>,
    pub seed: u64,
    pub max_steps: Option<u64>,
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub agents: Agents,
    pub curve: Vec<LearningCurveRow>,
}

struct Pending {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
}

fn push(agent: &mut DqnAgent, pending: Option<Pending>, next_obs: &[f64], terminal: bool, gamma: f64) -> Result<()> {
    if let Some(p) = pending {
        agent.remember(Transition {
            obs: p.obs,
            action: p.action,
            reward: p.reward,
            next_obs: next_obs.to_vec(),
            terminal,
        });
        agent.learn(gamma)?;
    }
    Ok(())
}

fn manifest(env: &Environment, opts: &TrainingOptions, episodes_completed: u64) -> CheckpointManifest {
    CheckpointManifest {
        format_version: crate::dqn::checkpoint::VERSION,
        config_hash: opts.config_hash.clone(),
        seed: opts.seed,
        episodes_completed,
        dataset_fingerprint: env.dataset().fingerprint(),
        households: env.household_ids(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Runs the training loop. Within each step the aggregator stores its
/// previous transition, learns and fixes the incentive; then every
/// participant does the same and picks its rate; then the environment
/// schedules all households and scores the aggregator.
pub fn run_training(env: &Environment, opts: &TrainingOptions) -> Result<TrainingOutcome> {
    let mut agents = Agents::new(env, &opts.dqn, opts.seed)?;
    let mut curve = Vec::new();
    if opts.episodes > 0 && opts.train_days.is_empty() {
        return Err(Error::config("empty training day range"));
    }
    if opts.train_days.end > env.dataset().num_days() {
        return Err(Error::data(format!(
            "training range ends at day {} but the dataset has {} days",
            opts.train_days.end,
            env.dataset().num_days()
        )));
    }
    let mut sampler = ChaCha8Rng::seed_from_u64(opts.seed);
    sampler.set_stream(DAY_SAMPLER_STREAM);
    let gamma = env.config().gamma;
    let incentives = &env.config().actions.aggregator_incentives;
    let households = env.num_households();
    let mut total_steps = 0u64;
    let hours = env.config().grid.hours_per_step();

    for episode in 0..opts.episodes {
        if opts.max_steps.is_some_and(|cap| total_steps >= cap) {
            log::warn!("step cap reached after {episode} episodes");
            break;
        }
        let day = sampler.random_range(opts.train_days.clone());
        let epsilon = agents.aggregator.epsilon();
        let result = (|| -> Result<LearningCurveRow> {
            let mut ep = env.episode(day)?;
            let mut aa_prev: Option<Pending> = None;
            let mut pa_prev: Vec<Option<Pending>> = (0..households).map(|_| None).collect();
            let (mut sum_aa, mut sum_pa, mut surplus, mut paid) = (0.0, 0.0, 0.0, 0.0);
            let mut last_aa_obs = Vec::new();
            let mut last_pa_obs = vec![Vec::new(); households];
            let mut steps = 0usize;
            while !ep.is_done() {
                let o_aa = env.aggregator_features(&ep.aggregator_observation());
                push(&mut agents.aggregator, aa_prev.take(), &o_aa, false, gamma)?;
                let p_idx = agents.aggregator.act(&o_aa)?;
                let p = incentives[p_idx];
                let mut rates = Vec::with_capacity(households);
                let mut obs = Vec::with_capacity(households);
                for (h, agent) in agents.participants.iter_mut().enumerate() {
                    let o = ep.participant_observation(h, p)?.features;
                    push(agent, pa_prev[h].take(), &o, false, gamma)?;
                    rates.push(agent.act(&o)?);
                    obs.push(o);
                }
                let out = ep.step(p_idx, &rates)?;
                total_steps += 1;
                steps += 1;
                sum_aa += out.aggregator_reward;
                sum_pa += out.participant_rewards.iter().sum::<f64>();
                surplus += out.surplus_kw * hours;
                paid += out.payouts_cents.iter().sum::<f64>();
                for (h, o) in obs.into_iter().enumerate() {
                    pa_prev[h] = Some(Pending {
                        obs: o.clone(),
                        action: rates[h],
                        reward: out.participant_rewards[h],
                    });
                    last_pa_obs[h] = o;
                }
                aa_prev = Some(Pending {
                    obs: o_aa.clone(),
                    action: p_idx,
                    reward: out.aggregator_reward,
                });
                last_aa_obs = o_aa;
            }
            push(&mut agents.aggregator, aa_prev, &last_aa_obs, true, gamma)?;
            for (h, agent) in agents.participants.iter_mut().enumerate() {
                push(agent, pa_prev[h].take(), &last_pa_obs[h], true, gamma)?;
            }
            let n = steps.max(1) as f64;
            Ok(LearningCurveRow {
                episode,
                epsilon,
                mean_r_aa: sum_aa / n,
                mean_r_pa: sum_pa / (n * households.max(1) as f64),
                surplus_kwh: surplus,
                incentive_cents: paid,
            })
        })();
        let row = match result {
            Ok(row) => row,
            Err(e) => {
                if let (Error::Numeric(_), Some(dir)) = (&e, &opts.checkpoint_dir) {
                    log::error!("aborting after numeric failure in episode {episode}; saving checkpoint");
                    agents.save(dir, env, &manifest(env, opts, episode))?;
                }
                return Err(e);
            }
        };
        log::debug!(
            "episode {episode}: day {day} eps {:.3} r_AA {:.3} r_PA {:.3}",
            row.epsilon,
            row.mean_r_aa,
            row.mean_r_pa
        );
        curve.push(row);
        agents.for_each_mut(DqnAgent::end_episode);
        if let Some(dir) = &opts.checkpoint_dir {
            if opts.checkpoint_every > 0 && (episode + 1) % opts.checkpoint_every == 0 {
                agents.save(dir, env, &manifest(env, opts, episode + 1))?;
            }
        }
    }
    if let Some(dir) = &opts.checkpoint_dir {
        agents.save(dir, env, &manifest(env, opts, curve.len() as u64))?;
    }
    Ok(TrainingOutcome { agents, curve })
}

/// Greedy deployment of trained agents over `days`; no learning.
pub fn run_policy_eval(env: &Environment, agents: &Agents, days: Range<usize>) -> Result<Vec<EpisodeTrace>> {
    if agents.participants.len() != env.num_households() {
        return Err(Error::config("agent count does not match the households"));
    }
    let incentives = &env.config().actions.aggregator_incentives;
    days.map(|day| {
        let mut ep = env.episode(day)?;
        while !ep.is_done() {
            let o_aa = env.aggregator_features(&ep.aggregator_observation());
            let p_idx = agents.aggregator.greedy(&o_aa)?;
            let rates = agents
                .participants
                .iter()
                .enumerate()
                .map(|(h, agent)| agent.greedy(&ep.participant_observation(h, incentives[p_idx])?.features))
                .collect::<Result<Vec<_>>>()?;
            ep.step(p_idx, &rates)?;
        }
        Ok(ep.into_trace())
    })
    .collect()
}

fn index_of(values: &[f64], wanted: f64, what: &str) -> Result<usize> {
    values
        .iter()
        .position(|&v| v == wanted)
        .ok_or_else(|| Error::config(format!("{what} {wanted} is not in the action space")))
}

/// Every household at rate 1.0 and no incentive: the unmanaged reference.
pub fn run_nodr(env: &Environment, day: usize) -> Result<EpisodeTrace> {
    let actions = &env.config().actions;
    let p0 = index_of(&actions.aggregator_incentives, 0.0, "incentive")?;
    let full = index_of(&actions.participant_rates, 1.0, "rate")?;
    let mut ep = env.episode(day)?;
    let rates = vec![full; env.num_households()];
    while !ep.is_done() {
        ep.step(p0, &rates)?;
    }
    Ok(ep.into_trace())
}

/// The myopic choice at the current step: for each incentive every household
/// best-responds on its one-step reward (ties to the highest rate), and the
/// aggregator keeps the incentive with the best one-step reward (ties to the
/// lowest incentive). Returns `(incentive index, rate indices, r_AA)`.
pub fn myopic_decision(env: &Environment, ep: &Episode<'_>) -> Result<(usize, Vec<usize>, f64)> {
    let actions = &env.config().actions;
    // Consumption and dissatisfaction do not depend on the incentive, only
    // the payout does; one preview per rate suffices.
    let previews: Vec<Vec<HouseholdStep>> = (0..env.num_households())
        .map(|h| {
            (0..actions.participant_rates.len())
                .map(|a| ep.preview(h, 0, a))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for (p_idx, &p) in actions.aggregator_incentives.iter().enumerate() {
        let mut rates = Vec::with_capacity(previews.len());
        let mut payouts = Vec::with_capacity(previews.len());
        let mut aggregate = 0.0;
        for (h, options) in previews.iter().enumerate() {
            let cbl = ep.cbl(h);
            let mut pick = 0;
            let mut pick_reward = f64::NEG_INFINITY;
            for (a, o) in options.iter().enumerate() {
                let u = crate::environment::participant_payout(p, cbl, o.consumption_kw);
                let r = u - o.dissatisfaction;
                if r >= pick_reward {
                    pick = a;
                    pick_reward = r;
                }
            }
            rates.push(pick);
            payouts.push(crate::environment::participant_payout(p, cbl, options[pick].consumption_kw));
            aggregate += options[pick].consumption_kw;
        }
        let r_aa = aggregator_reward(aggregate, ep.target(), &payouts, env.config().rho);
        if best.as_ref().is_none_or(|b| r_aa > b.2) {
            best = Some((p_idx, rates, r_aa));
        }
    }
    best.ok_or_else(|| Error::config("empty incentive space"))
}

/// Full-knowledge myopic baseline over one day.
pub fn run_myopic(env: &Environment, day: usize) -> Result<EpisodeTrace> {
    let mut ep = env.episode(day)?;
    while !ep.is_done() {
        let (p_idx, rates, _) = myopic_decision(env, &ep)?;
        ep.step(p_idx, &rates)?;
    }
    Ok(ep.into_trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub incentive_cents: f64,
    pub surplus_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub spearman_rho_surplus: Option<f64>,
    pub spearman_rho_incentive: Option<f64>,
}

/// One training and greedy evaluation per weighting value. `build` creates
/// the environment for a given ρ.
pub fn rho_sweep(
    rhos: &[f64],
    build: impl Fn(f64) -> Result<Environment>,
    opts: &TrainingOptions,
    eval_days: Range<usize>,
) -> Result<SweepReport> {
    if rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::config("rho values must lie in [0, 1]"));
    }
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let env = build(rho)?;
        let trained = run_training(&env, opts)?;
        let traces = run_policy_eval(&env, &trained.agents, eval_days.clone())?;
        let m = compute_metrics(&traces)?;
        log::info!("rho {rho}: incentive {:.2} surplus {:.3}", m.total_incentive_cents, m.surplus_kwh);
        rows.push(SweepRow {
            rho,
            incentive_cents: m.total_incentive_cents,
            surplus_kwh: m.surplus_kwh,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.surplus_kwh).collect();
    let i: Vec<f64> = rows.iter().map(|r| r.incentive_cents).collect();
    Ok(SweepReport {
        spearman_rho_surplus: spearman(&x, &s),
        spearman_rho_incentive: spearman(&x, &i),
        rows,
    })
}
