//! Vocabulary shared by the scheduler, the environment and the learners.

use serde::{Deserialize, Serialize};

use crate::environment::HouseholdState;
use crate::error::{Error, Result};

/// Discretisation of one episode (one day).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub steps_per_episode: usize,
    pub step_minutes: u32,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            steps_per_episode: 96,
            step_minutes: 15,
        }
    }
}

impl TimeGrid {
    pub fn new(steps_per_episode: usize, step_minutes: u32) -> Result<Self> {
        let grid = Self {
            steps_per_episode,
            step_minutes,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_episode == 0 {
            return Err(Error::config("time grid needs at least one step per episode"));
        }
        if self.step_minutes == 0 {
            return Err(Error::config("step length must be positive"));
        }
        Ok(())
    }

    /// Hours represented by one step; multiplies kW into kWh.
    pub fn hours_per_step(&self) -> f64 {
        f64::from(self.step_minutes) / 60.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ApplianceClass {
    /// Fixed power, deferrable, must finish once started (washing machine).
    #[serde(rename = "ts_ni")]
    TimeShiftableNonInterruptible,
    /// Fixed power, deferrable, may pause between steps (EV charger).
    #[serde(rename = "ts_i")]
    TimeShiftableInterruptible,
    /// Variable demand served at one of `m` discrete levels (air conditioning).
    #[serde(rename = "pc")]
    PowerCurtailable,
    /// Must always be served.
    #[serde(rename = "ns")]
    NonShiftable,
}

impl ApplianceClass {
    pub fn is_time_shiftable(self) -> bool {
        matches!(
            self,
            ApplianceClass::TimeShiftableNonInterruptible | ApplianceClass::TimeShiftableInterruptible
        )
    }
}

/// Static parameters of one appliance in one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub name: String,
    pub class: ApplianceClass,
    /// kW. For curtailable and non-shiftable loads this is the upper bound of
    /// the time-varying demand.
    pub rated_power: f64,
    /// Cycle length; only meaningful for time-shiftable appliances.
    pub duration_steps: usize,
    /// Dissatisfaction coefficient.
    pub beta: f64,
    /// Number of consumption levels; only meaningful for curtailable loads.
    pub curtailment_levels: u32,
}

impl ApplianceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rated_power >= 0.0 && self.rated_power.is_finite()) {
            return Err(Error::config(format!("{}: rated power must be >= 0", self.name)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("{}: beta must be >= 0", self.name)));
        }
        if self.class.is_time_shiftable() && self.duration_steps == 0 {
            return Err(Error::config(format!("{}: duration must be >= 1 step", self.name)));
        }
        if self.class == ApplianceClass::PowerCurtailable && self.curtailment_levels == 0 {
            return Err(Error::config(format!("{}: needs at least one level", self.name)));
        }
        Ok(())
    }
}

/// Appliance row of the configuration table: like [`ApplianceSpec`] but with
/// the population distribution of the dissatisfaction coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplianceTemplate {
    pub name: String,
    pub class: ApplianceClass,
    pub rated_power: f64,
    #[serde(default)]
    pub duration_steps: usize,
    #[serde(default)]
    pub beta_mean: f64,
    #[serde(default)]
    pub beta_std: f64,
    #[serde(default = "default_levels")]
    pub curtailment_levels: u32,
}

fn default_levels() -> u32 {
    10
}

impl ApplianceTemplate {
    fn new(name: &str, class: ApplianceClass, rated_power: f64, duration_steps: usize, beta: (f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            class,
            rated_power,
            duration_steps,
            beta_mean: beta.0,
            beta_std: beta.1,
            curtailment_levels: default_levels(),
        }
    }

    /// Household-specific spec with `beta` drawn from a normal distribution
    /// truncated at zero (rejection sampling).
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ApplianceSpec {
        let beta = if self.beta_std > 0.0 {
            let normal = rand_distr::Normal::new(self.beta_mean, self.beta_std)
                .expect("validated standard deviation");
            (0..1000)
                .map(|_| rand_distr::Distribution::sample(&normal, rng))
                .find(|b: &f64| *b >= 0.0)
                .unwrap_or(0.0)
        } else {
            self.beta_mean.max(0.0)
        };
        ApplianceSpec {
            name: self.name.clone(),
            class: self.class,
            rated_power: self.rated_power,
            duration_steps: self.duration_steps,
            beta,
            curtailment_levels: self.curtailment_levels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_mean.is_finite() && self.beta_std.is_finite() && self.beta_std >= 0.0) {
            return Err(Error::config(format!("{}: invalid beta distribution", self.name)));
        }
        ApplianceSpec {
            name: self.name.clone(),
            class: self.class,
            rated_power: self.rated_power,
            duration_steps: self.duration_steps,
            beta: self.beta_mean.max(0.0),
            curtailment_levels: self.curtailment_levels,
        }
        .validate()
    }
}

/// Default household appliance set: dryer, washing machine, dishwasher, EV,
/// air conditioning and the non-shiftable remainder. Cycle lengths are
/// assumptions (1 to 3 hours at 15-minute resolution).
pub fn default_appliance_table() -> Vec<ApplianceTemplate> {
    use ApplianceClass::*;
    vec![
        ApplianceTemplate::new("dryer", TimeShiftableNonInterruptible, 2.0, 4, (0.2, 0.2)),
        ApplianceTemplate::new("wm", TimeShiftableNonInterruptible, 1.0, 6, (0.1, 0.1)),
        ApplianceTemplate::new("dw", TimeShiftableNonInterruptible, 2.0, 8, (0.06, 0.05)),
        ApplianceTemplate::new("ev", TimeShiftableInterruptible, 4.0, 12, (0.04, 0.05)),
        ApplianceTemplate::new("ac", PowerCurtailable, 4.0, 0, (3.0, 1.0)),
        ApplianceTemplate::new("ns", NonShiftable, 5.0, 0, (0.0, 0.0)),
    ]
}

/// Per-step dynamic state of one appliance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApplianceState {
    pub requested: bool,
    pub request_step: Option<usize>,
    pub remaining_steps: usize,
    /// A non-interruptible cycle that has started and must run to the end.
    pub running_locked: bool,
    /// kW demand this step for curtailable and non-shiftable loads.
    pub current_demand: f64,
}

/// Discrete action sets of the two agent kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpaces {
    /// Power-rate fractions available to every participant.
    pub participant_rates: Vec<f64>,
    /// Incentive rates (cents/kW) available to the aggregator.
    pub aggregator_incentives: Vec<f64>,
}

impl Default for ActionSpaces {
    fn default() -> Self {
        Self {
            participant_rates: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            aggregator_incentives: (0..=10).map(f64::from).collect(),
        }
    }
}

impl ActionSpaces {
    pub fn validate(&self) -> Result<()> {
        let rates = &self.participant_rates;
        if rates.is_empty() {
            return Err(Error::config("participant action space is empty"));
        }
        if rates.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::config("participant rates must lie in [0, 1]"));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("participant rates must be strictly increasing"));
        }
        let incentives = &self.aggregator_incentives;
        if incentives.is_empty() {
            return Err(Error::config("aggregator action space is empty"));
        }
        if incentives.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::config("incentives must be finite and >= 0"));
        }
        if incentives.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("incentives must be strictly increasing"));
        }
        Ok(())
    }

    pub fn max_incentive(&self) -> f64 {
        self.aggregator_incentives.last().copied().unwrap_or(0.0)
    }
}

/// Power limit handed to the household scheduler for rate `a` and total
/// demand `d`.
pub fn action_to_limit(rate: f64, total_demand: f64) -> f64 {
    rate * total_demand
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantObservation {
    pub appliance_state_vector: Vec<f64>,
    pub cbl: f64,
    pub incentive: f64,
    /// Network input: the appliance features followed by the scaled CBL and
    /// incentive.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorObservation {
    pub aggregate_demand: f64,
    pub target: f64,
}

impl AggregatorObservation {
    pub fn features(&self, power_scale: f64) -> Vec<f64> {
        vec![self.aggregate_demand / power_scale, self.target / power_scale]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    TimeShiftable,
    Curtailable,
}

/// Fixed input layout for one household configuration.
///
/// Per time-shiftable appliance (by name): pending flag, delay / T,
/// remaining / duration. Per curtailable appliance (by name): demand / scale.
/// Then one slot for the summed non-shiftable demand, the CBL and the
/// incentive.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLayout {
    entries: Vec<(String, Slot)>,
    steps_per_episode: usize,
    power_scale: f64,
    incentive_scale: f64,
}

impl ObservationLayout {
    pub fn new(
        specs: &[ApplianceSpec],
        steps_per_episode: usize,
        power_scale: f64,
        max_incentive: f64,
    ) -> Self {
        let mut ts: Vec<&ApplianceSpec> =
            specs.iter().filter(|s| s.class.is_time_shiftable()).collect();
        let mut pc: Vec<&ApplianceSpec> = specs
            .iter()
            .filter(|s| s.class == ApplianceClass::PowerCurtailable)
            .collect();
        ts.sort_by(|a, b| a.name.cmp(&b.name));
        pc.sort_by(|a, b| a.name.cmp(&b.name));
        let entries = ts
            .into_iter()
            .map(|s| (s.name.clone(), Slot::TimeShiftable))
            .chain(pc.into_iter().map(|s| (s.name.clone(), Slot::Curtailable)))
            .collect();
        Self {
            entries,
            steps_per_episode,
            power_scale,
            incentive_scale: if max_incentive > 0.0 { max_incentive } else { 1.0 },
        }
    }

    pub fn len(&self) -> usize {
        self.appliance_len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn appliance_len(&self) -> usize {
        self.entries
            .iter()
            .map(|(_, slot)| match slot {
                Slot::TimeShiftable => 3,
                Slot::Curtailable => 1,
            })
            .sum::<usize>()
            + 1
    }
}

/// Encodes a household's state, its CBL `b` and incentive `p` into the
/// layout registered for that household configuration.
pub fn encode_participant_observation(
    layout: &ObservationLayout,
    household: &HouseholdState,
    cbl: f64,
    incentive: f64,
) -> Result<ParticipantObservation> {
    let t = household.step;
    let horizon = layout.steps_per_episode as f64;
    let mut features = Vec::with_capacity(layout.len());

    let expected = household
        .appliances
        .iter()
        .filter(|a| a.spec.class != ApplianceClass::NonShiftable)
        .count();
    if expected != layout.entries.len() {
        return Err(Error::config(format!(
            "household {} has {} controllable appliances, layout expects {}",
            household.id,
            expected,
            layout.entries.len()
        )));
    }

    for (name, slot) in &layout.entries {
        let appliance = household
            .appliance(name)
            .ok_or_else(|| Error::config(format!("household {} lacks appliance {name}", household.id)))?;
        match (slot, appliance.spec.class.is_time_shiftable()) {
            (Slot::TimeShiftable, true) => {
                let state = &appliance.state;
                if state.requested {
                    let delay = state
                        .request_step
                        .map(|tr| t.saturating_sub(tr))
                        .unwrap_or(0);
                    features.push(1.0);
                    features.push(delay as f64 / horizon);
                    features.push(state.remaining_steps as f64 / appliance.spec.duration_steps as f64);
                } else {
                    features.extend_from_slice(&[0.0, 0.0, 0.0]);
                }
            }
            (Slot::Curtailable, false) if appliance.spec.class == ApplianceClass::PowerCurtailable => {
                features.push(appliance.state.current_demand / layout.power_scale);
            }
            _ => {
                return Err(Error::config(format!(
                    "appliance {name} of household {} does not match the layout",
                    household.id
                )))
            }
        }
    }
    features.push(household.non_shiftable_demand() / layout.power_scale);
    let appliance_state_vector = features.clone();
    features.push(cbl / layout.power_scale);
    features.push(incentive / layout.incentive_scale);

    Ok(ParticipantObservation {
        appliance_state_vector,
        cbl,
        incentive,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::HouseholdState;

    fn table_specs() -> Vec<ApplianceSpec> {
        let mk = |name: &str, class, power, dur, beta| ApplianceSpec {
            name: name.into(),
            class,
            rated_power: power,
            duration_steps: dur,
            beta,
            curtailment_levels: 10,
        };
        vec![
            mk("dryer", ApplianceClass::TimeShiftableNonInterruptible, 2.0, 4, 0.2),
            mk("wm", ApplianceClass::TimeShiftableNonInterruptible, 1.0, 6, 0.1),
            mk("dw", ApplianceClass::TimeShiftableNonInterruptible, 2.0, 8, 0.06),
            mk("ev", ApplianceClass::TimeShiftableInterruptible, 4.0, 12, 0.04),
            mk("ac", ApplianceClass::PowerCurtailable, 4.0, 0, 3.0),
            mk("ns", ApplianceClass::NonShiftable, 5.0, 0, 0.0),
        ]
    }

    fn layout() -> ObservationLayout {
        ObservationLayout::new(&table_specs(), 96, 10.0, 10.0)
    }

    #[test]
    fn idle_household_encodes_to_zeros() {
        let hh = HouseholdState::new("h0", table_specs());
        let obs = encode_participant_observation(&layout(), &hh, 0.0, 0.0).unwrap();
        assert_eq!(obs.features.len(), layout().len());
        assert_eq!(obs.features.len(), 4 * 3 + 1 + 1 + 2);
        assert!(obs.features.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoding_is_deterministic() {
        let mut hh = HouseholdState::new("h0", table_specs());
        hh.step = 50;
        hh.request("wm", 45).unwrap();
        hh.set_demand("ac", 2.5).unwrap();
        let a = encode_participant_observation(&layout(), &hh, 3.1, 4.0).unwrap();
        let b = encode_participant_observation(&layout(), &hh, 3.1, 4.0).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
    }

    #[test]
    fn ev_delay_and_incentive_slots() {
        let mut hh = HouseholdState::new("h0", table_specs());
        hh.step = 70;
        hh.request("ev", 70).unwrap();
        hh.step = 72;
        let obs = encode_participant_observation(&layout(), &hh, 0.0, 5.0).unwrap();
        // layout order: dryer, dw, ev, wm (3 slots each), ac, ns, b, p
        let ev = 2 * 3;
        assert_eq!(obs.features[ev], 1.0);
        assert_eq!(obs.features[ev + 1], 2.0 / 96.0);
        assert_eq!(obs.features[ev + 2], 1.0);
        assert_eq!(*obs.features.last().unwrap(), 5.0 / 10.0);
    }

    #[test]
    fn layout_mismatch_is_config_error() {
        let mut specs = table_specs();
        specs.retain(|s| s.name != "ev");
        let hh = HouseholdState::new("h0", specs);
        let err = encode_participant_observation(&layout(), &hh, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn action_limit_examples() {
        assert_eq!(action_to_limit(0.0, 7.0), 0.0);
        assert_eq!(action_to_limit(1.0, 7.0), 7.0);
        assert!((action_to_limit(0.3, 10.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn default_action_spaces() {
        let spaces = ActionSpaces::default();
        spaces.validate().unwrap();
        assert_eq!(spaces.participant_rates.len(), 11);
        assert_eq!(spaces.aggregator_incentives, (0..=10).map(f64::from).collect::<Vec<_>>());
        let bad = ActionSpaces {
            participant_rates: vec![0.0, 0.5, 0.5],
            ..ActionSpaces::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_rejects_degenerate_values() {
        assert!(TimeGrid::new(0, 15).is_err());
        assert!(TimeGrid::new(96, 0).is_err());
        assert_eq!(TimeGrid::default().hours_per_step(), 0.25);
    }

    proptest::proptest! {
        #[test]
        fn limit_is_monotone_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0, d in 0.0f64..50.0, e in 0.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(action_to_limit(lo, d) <= action_to_limit(hi, d));
            let (dlo, dhi) = if d <= e { (d, e) } else { (e, d) };
            proptest::prop_assert!(action_to_limit(a, dlo) <= action_to_limit(a, dhi));
            let l = action_to_limit(a, d);
            proptest::prop_assert!((0.0..=d).contains(&l));
        }
    }
}
