//! Day-long demand-response episodes.
//!
//! An [`Environment`] binds a dataset to a population of households whose
//! dissatisfaction coefficients are drawn once per run. An [`Episode`] plays
//! one day of it: each step the aggregator fixes an incentive, every household
//! schedules its appliances under its chosen power rate, and the aggregator is
//! scored on the combined result.

mod cbl;
mod household;
pub mod reward;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cbl::CblEstimator;
pub use household::{Appliance, ApplianceOutcome, HouseholdState, HouseholdStep};
pub use reward::{aggregator_reward, participant_payout, participant_reward, surplus};
pub use trace::{EpisodeTrace, HouseholdRecord, StepOrder, StepRecord, AGGREGATE_ID, TOTAL_APPLIANCE};

use crate::data::dataset::{DayProfile, LoadDataset};
use crate::domain::{
    encode_participant_observation, ActionSpaces, AggregatorObservation, ApplianceClass, ApplianceSpec,
    ApplianceTemplate, ObservationLayout, ParticipantObservation, TimeGrid,
};
use crate::error::{Error, Result};

/// Programme parameters shared by every episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub grid: TimeGrid,
    pub actions: ActionSpaces,
    /// Target as a fraction of the peak aggregate baseline of the day.
    pub target_fraction: f64,
    /// Weight of the surplus penalty against incentive spending.
    pub rho: f64,
    pub gamma: f64,
    pub cbl_window: usize,
    /// kW scale for observation features.
    pub power_scale: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            grid: TimeGrid::default(),
            actions: ActionSpaces::default(),
            target_fraction: 0.8,
            rho: 0.5,
            gamma: 0.9,
            cbl_window: 10,
            power_scale: 10.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.actions.validate()?;
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config(format!("rho = {} must lie in [0, 1]", self.rho)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma = {} must lie in (0, 1]", self.gamma)));
        }
        if !(self.target_fraction > 0.0 && self.target_fraction.is_finite()) {
            return Err(Error::config("target fraction must be positive"));
        }
        if self.cbl_window == 0 {
            return Err(Error::config("CBL window must be at least one day"));
        }
        if !(self.power_scale > 0.0 && self.power_scale.is_finite()) {
            return Err(Error::config("power scale must be positive"));
        }
        Ok(())
    }
}

/// Consumption of one household-day when every request is served at once
/// and nothing is curtailed. Summation order matches the scheduler's
/// accounting (non-shiftable + (curtailable..., shiftable...)).
pub fn unmanaged_load(day: &DayProfile, specs: &[ApplianceSpec], steps: usize) -> Vec<f64> {
    let mut sorted: Vec<&ApplianceSpec> = specs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut running = vec![vec![false; steps]; sorted.len()];
    for (j, spec) in sorted.iter().enumerate() {
        if !spec.class.is_time_shiftable() {
            continue;
        }
        let mut busy_until = 0;
        for r in day.requests.iter().filter(|r| r.appliance == spec.name) {
            if r.step < busy_until {
                continue;
            }
            let end = (r.step + spec.duration_steps).min(steps);
            running[j][r.step..end].iter_mut().for_each(|x| *x = true);
            busy_until = r.step + spec.duration_steps;
        }
    }
    (0..steps)
        .map(|t| {
            let mut scheduled = 0.0;
            for spec in sorted.iter().filter(|s| s.class == ApplianceClass::PowerCurtailable) {
                scheduled += day.curtailable.get(&spec.name).map_or(0.0, |s| s[t]);
            }
            for (j, spec) in sorted.iter().enumerate() {
                if running[j][t] {
                    scheduled += spec.rated_power;
                }
            }
            day.non_shiftable[t] + scheduled
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Environment {
    config: EpisodeConfig,
    dataset: LoadDataset,
    households: Vec<(String, Vec<ApplianceSpec>)>,
    /// `unmanaged[h][day][t]`
    unmanaged: Vec<Vec<Vec<f64>>>,
    layouts: Vec<ObservationLayout>,
    cbl: CblEstimator,
}

impl Environment {
    /// Builds the household population. Each household's dissatisfaction
    /// coefficients come from its own random stream derived from `seed`.
    pub fn new(config: EpisodeConfig, table: &[ApplianceTemplate], dataset: LoadDataset, seed: u64) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        if dataset.grid != config.grid {
            return Err(Error::config("dataset resolution differs from the configured time grid"));
        }
        for t in table {
            t.validate()?;
        }
        let ns_count = table.iter().filter(|a| a.class == ApplianceClass::NonShiftable).count();
        if ns_count != 1 {
            return Err(Error::config(format!("appliance table needs exactly one non-shiftable entry, found {ns_count}")));
        }
        let mut names: Vec<&str> = table.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("appliance names must be unique"));
        }
        dataset.check_against(table)?;

        let steps = config.grid.steps_per_episode;
        let mut households = Vec::with_capacity(dataset.households.len());
        let mut unmanaged = Vec::with_capacity(dataset.households.len());
        let mut layouts = Vec::with_capacity(dataset.households.len());
        for (h, series) in dataset.households.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(h as u64 + 1);
            let specs: Vec<ApplianceSpec> = table.iter().map(|t| t.sample(&mut rng)).collect();
            unmanaged.push(series.days.iter().map(|d| unmanaged_load(d, &specs, steps)).collect());
            layouts.push(ObservationLayout::new(
                &specs,
                steps,
                config.power_scale,
                config.actions.max_incentive(),
            ));
            households.push((series.id.clone(), specs));
        }
        Ok(Self {
            cbl: CblEstimator::new(config.cbl_window),
            config,
            dataset,
            households,
            unmanaged,
            layouts,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn dataset(&self) -> &LoadDataset {
        &self.dataset
    }

    pub fn num_households(&self) -> usize {
        self.households.len()
    }

    pub fn household_ids(&self) -> Vec<String> {
        self.households.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn household_specs(&self, h: usize) -> &[ApplianceSpec] {
        &self.households[h].1
    }

    pub fn participant_input_len(&self, h: usize) -> usize {
        self.layouts[h].len()
    }

    pub fn aggregator_input_len(&self) -> usize {
        2
    }

    /// Aggregator features: forecast and target in units of
    /// `power_scale` per household.
    pub fn aggregator_features(&self, obs: &AggregatorObservation) -> Vec<f64> {
        obs.features(self.config.power_scale * self.households.len().max(1) as f64)
    }

    /// Unmanaged consumption of household `h` on `day`.
    pub fn unmanaged_load(&self, h: usize, day: usize) -> &[f64] {
        &self.unmanaged[h][day]
    }

    pub fn episode(&self, day: usize) -> Result<Episode<'_>> {
        Episode::new(self, day)
    }
}

/// Aggregate quantities of one completed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub consumption_kw: Vec<f64>,
    pub payouts_cents: Vec<f64>,
    pub dissatisfaction: Vec<f64>,
    pub participant_rewards: Vec<f64>,
    pub aggregate_kw: f64,
    pub surplus_kw: f64,
    pub aggregator_reward: f64,
}

/// One day of the programme in progress.
#[derive(Debug, Clone)]
pub struct Episode<'e> {
    env: &'e Environment,
    day: usize,
    t: usize,
    households: Vec<HouseholdState>,
    cbl: Vec<Vec<f64>>,
    cbl_fallback: bool,
    forecast: Vec<f64>,
    target: f64,
    records: Vec<StepRecord>,
    clock: u64,
}

impl<'e> Episode<'e> {
    fn new(env: &'e Environment, day: usize) -> Result<Self> {
        if day >= env.dataset.num_days() {
            return Err(Error::data(format!(
                "day {day} ({}) is outside the dataset",
                env.dataset.date(day)
            )));
        }
        let steps = env.config.grid.steps_per_episode;
        let mut cbl_fallback = false;
        let cbl: Vec<Vec<f64>> = env
            .unmanaged
            .iter()
            .map(|history| {
                (0..steps)
                    .map(|t| {
                        env.cbl.estimate(history, day, t).unwrap_or_else(|| {
                            cbl_fallback = true;
                            history[day][t]
                        })
                    })
                    .collect()
            })
            .collect();
        if cbl_fallback {
            log::warn!("no history before day {day}: baseline falls back to requested demand");
        }
        let forecast: Vec<f64> = (0..steps).map(|t| cbl.iter().map(|c| c[t]).sum()).collect();
        let peak = forecast.iter().copied().fold(0.0, f64::max);
        let target = (env.config.target_fraction * peak).max(f64::MIN_POSITIVE);

        let households = env
            .households
            .iter()
            .map(|(id, specs)| HouseholdState::new(id.clone(), specs.clone()))
            .collect();
        let mut episode = Self {
            env,
            day,
            t: 0,
            households,
            cbl,
            cbl_fallback,
            forecast,
            target,
            records: Vec::with_capacity(steps),
            clock: 0,
        };
        episode.load_step_data()?;
        Ok(episode)
    }

    fn load_step_data(&mut self) -> Result<()> {
        let t = self.t;
        for (hh, series) in self.households.iter_mut().zip(&self.env.dataset.households) {
            let profile = &series.days[self.day];
            hh.step = t;
            for a in hh.appliances.iter_mut() {
                match a.spec.class {
                    ApplianceClass::NonShiftable => a.state.current_demand = profile.non_shiftable[t],
                    ApplianceClass::PowerCurtailable => {
                        a.state.current_demand = profile.curtailable.get(&a.spec.name).map_or(0.0, |s| s[t])
                    }
                    _ => {}
                }
            }
            for r in profile.requests.iter().filter(|r| r.step == t) {
                hh.request(&r.appliance, t)?;
            }
        }
        Ok(())
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.env.config.grid.steps_per_episode
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn households(&self) -> &[HouseholdState] {
        &self.households
    }

    pub fn cbl(&self, h: usize) -> f64 {
        self.cbl[h][self.t]
    }

    pub fn used_cbl_fallback(&self) -> bool {
        self.cbl_fallback
    }

    pub fn aggregator_observation(&self) -> AggregatorObservation {
        AggregatorObservation {
            aggregate_demand: self.forecast[self.t],
            target: self.target,
        }
    }

    pub fn participant_observation(&self, h: usize, incentive: f64) -> Result<ParticipantObservation> {
        encode_participant_observation(&self.env.layouts[h], &self.households[h], self.cbl(h), incentive)
    }

    fn incentive(&self, index: usize) -> Result<f64> {
        self.env
            .config
            .actions
            .aggregator_incentives
            .get(index)
            .copied()
            .ok_or_else(|| Error::Argument(format!("incentive index {index} out of range")))
    }

    fn rate(&self, index: usize) -> Result<f64> {
        self.env
            .config
            .actions
            .participant_rates
            .get(index)
            .copied()
            .ok_or_else(|| Error::Argument(format!("rate index {index} out of range")))
    }

    /// What household `h` would do this step under the given actions, without
    /// advancing the episode.
    pub fn preview(&self, h: usize, incentive_index: usize, rate_index: usize) -> Result<HouseholdStep> {
        let final_step = self.t + 1 == self.env.config.grid.steps_per_episode;
        let (step, _) = self.households[h].schedule(
            self.rate(rate_index)?,
            self.incentive(incentive_index)?,
            self.cbl(h),
            final_step,
        )?;
        Ok(step)
    }

    /// Advances one step with incentive `incentive_index` and one rate index
    /// per household.
    pub fn step(&mut self, incentive_index: usize, rate_indices: &[usize]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Argument("episode already finished".into()));
        }
        if rate_indices.len() != self.households.len() {
            return Err(Error::Argument(format!(
                "{} actions for {} households",
                rate_indices.len(),
                self.households.len()
            )));
        }
        let incentive = self.incentive(incentive_index)?;
        let rates = rate_indices.iter().map(|&i| self.rate(i)).collect::<Result<Vec<_>>>()?;
        let t = self.t;
        let final_step = t + 1 == self.env.config.grid.steps_per_episode;

        self.clock += 1;
        let incentive_fixed = self.clock;

        let cbl = &self.cbl;
        let results: Vec<(HouseholdStep, HouseholdState)> = self
            .households
            .par_iter()
            .enumerate()
            .map(|(h, hh)| hh.schedule(rates[h], incentive, cbl[h][t], final_step))
            .collect::<Result<_>>()?;

        let mut participants_done = Vec::with_capacity(results.len());
        let mut records = Vec::with_capacity(results.len());
        let mut next_states = Vec::with_capacity(results.len());
        for (h, (out, next)) in results.into_iter().enumerate() {
            self.clock += 1;
            participants_done.push(self.clock);
            records.push(HouseholdRecord {
                id: next.id.clone(),
                cbl_kw: cbl[h][t],
                cbl_fallback: self.cbl_fallback,
                rate_index: rate_indices[h],
                rate: rates[h],
                demand_kw: out.demand_kw,
                limit_kw: out.limit_kw,
                consumption_kw: out.consumption_kw,
                payout_cents: out.payout_cents,
                dissatisfaction: out.dissatisfaction,
                reward: out.reward,
                infeasible: out.infeasible,
                appliances: out.appliances,
            });
            next_states.push(next);
        }

        let mut aggregate = 0.0;
        for r in &records {
            aggregate += r.consumption_kw;
        }
        let payouts: Vec<f64> = records.iter().map(|r| r.payout_cents).collect();
        let aggregator_reward = aggregator_reward(aggregate, self.target, &payouts, self.env.config.rho);
        self.clock += 1;
        let aggregator_scored = self.clock;

        if !aggregate.is_finite() || !aggregator_reward.is_finite() {
            return Err(Error::Numeric(format!("non-finite aggregate at step {t}")));
        }

        let outcome = StepOutcome {
            consumption_kw: records.iter().map(|r| r.consumption_kw).collect(),
            payouts_cents: payouts,
            dissatisfaction: records.iter().map(|r| r.dissatisfaction).collect(),
            participant_rewards: records.iter().map(|r| r.reward).collect(),
            aggregate_kw: aggregate,
            surplus_kw: surplus(aggregate, self.target),
            aggregator_reward,
        };
        self.records.push(StepRecord {
            step: t,
            incentive_index,
            incentive,
            forecast_kw: self.forecast[t],
            consumption_kw: aggregate,
            surplus_kw: outcome.surplus_kw,
            aggregator_reward,
            households: records,
            order: StepOrder {
                incentive_fixed,
                participants_done,
                aggregator_scored,
            },
        });

        self.households = next_states;
        self.t += 1;
        if !self.is_done() {
            self.load_step_data()?;
        }
        Ok(outcome)
    }

    pub fn into_trace(self) -> EpisodeTrace {
        EpisodeTrace {
            day: self.day,
            date: self.env.dataset.date(self.day).to_string(),
            target_kw: self.target,
            hours_per_step: self.env.config.grid.hours_per_step(),
            steps: self.records,
        }
    }
}
