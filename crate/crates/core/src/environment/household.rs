use serde::{Deserialize, Serialize};

use crate::domain::{action_to_limit, ApplianceClass, ApplianceSpec, ApplianceState};
use crate::environment::reward::{participant_payout, participant_reward};
use crate::error::{Error, Result};
use crate::scheduler::{self, delay_cost_unchecked, DckpInstance, PcItem, ScheduleSolution, SolveError, TsItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub spec: ApplianceSpec,
    pub state: ApplianceState,
}

impl Appliance {
    /// Time-shiftable request with work left.
    pub fn is_pending(&self) -> bool {
        self.spec.class.is_time_shiftable() && self.state.requested && self.state.remaining_steps > 0
    }
}

/// One participant household: its appliances (sorted by name) and the
/// current step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdState {
    pub id: String,
    pub step: usize,
    pub appliances: Vec<Appliance>,
}

/// Per-appliance result of one scheduling decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceOutcome {
    pub name: String,
    pub demand_kw: f64,
    pub consumed_kw: f64,
    pub dissatisfaction: f64,
}

/// Result of one household step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdStep {
    pub demand_kw: f64,
    pub limit_kw: f64,
    pub consumption_kw: f64,
    pub payout_cents: f64,
    pub dissatisfaction: f64,
    pub reward: f64,
    /// Mandatory demand alone broke the limit; mandatory loads ran and
    /// everything else was switched off or fully curtailed.
    pub infeasible: bool,
    pub appliances: Vec<ApplianceOutcome>,
}

impl HouseholdState {
    pub fn new(id: impl Into<String>, mut specs: Vec<ApplianceSpec>) -> Self {
        specs.sort_by(|a, b| a.name.cmp(&b.name));
        Self {
            id: id.into(),
            step: 0,
            appliances: specs
                .into_iter()
                .map(|spec| Appliance {
                    spec,
                    state: ApplianceState::default(),
                })
                .collect(),
        }
    }

    pub fn appliance(&self, name: &str) -> Option<&Appliance> {
        self.appliances.iter().find(|a| a.spec.name == name)
    }

    fn appliance_mut(&mut self, name: &str) -> Result<&mut Appliance> {
        let id = &self.id;
        self.appliances
            .iter_mut()
            .find(|a| a.spec.name == name)
            .ok_or_else(|| Error::data(format!("household {id} has no appliance {name}")))
    }

    /// Registers a request for a time-shiftable appliance at `step`. Returns
    /// `false` (and changes nothing) if a previous request is still pending.
    pub fn request(&mut self, name: &str, step: usize) -> Result<bool> {
        let appliance = self.appliance_mut(name)?;
        if !appliance.spec.class.is_time_shiftable() {
            return Err(Error::data(format!("{name} is not time-shiftable")));
        }
        if appliance.state.requested {
            return Ok(false);
        }
        appliance.state = ApplianceState {
            requested: true,
            request_step: Some(step),
            remaining_steps: appliance.spec.duration_steps,
            running_locked: false,
            current_demand: 0.0,
        };
        Ok(true)
    }

    /// Sets this step's demand of a curtailable or non-shiftable load.
    pub fn set_demand(&mut self, name: &str, kw: f64) -> Result<()> {
        let appliance = self.appliance_mut(name)?;
        if appliance.spec.class.is_time_shiftable() {
            return Err(Error::data(format!("{name} has a fixed rated power")));
        }
        appliance.state.current_demand = kw;
        Ok(())
    }

    pub fn non_shiftable_demand(&self) -> f64 {
        self.appliances
            .iter()
            .filter(|a| a.spec.class == ApplianceClass::NonShiftable)
            .map(|a| a.state.current_demand)
            .sum()
    }

    /// Requested demand this step: pending time-shiftable loads at rated
    /// power, curtailable loads at full level, and the non-shiftable load.
    pub fn total_demand(&self) -> f64 {
        let mut scheduled = 0.0;
        for a in self.appliances.iter().filter(|a| a.spec.class == ApplianceClass::PowerCurtailable) {
            scheduled += a.state.current_demand;
        }
        for a in self.appliances.iter().filter(|a| a.is_pending()) {
            scheduled += a.spec.rated_power;
        }
        self.non_shiftable_demand() + scheduled
    }

    /// Scheduling problem for this step under limit `limit` (whole household,
    /// including the non-shiftable load).
    pub fn instance(&self, limit: f64) -> DckpInstance {
        let t = self.step;
        let ts_items = self
            .appliances
            .iter()
            .filter(|a| a.is_pending())
            .map(|a| TsItem {
                demand: a.spec.rated_power,
                delay_cost: if a.state.running_locked {
                    0.0
                } else {
                    delay_cost_unchecked(a.spec.beta, t, a.state.request_step.unwrap_or(t).min(t))
                },
                mandatory: a.state.running_locked,
            })
            .collect();
        let pc_items = self
            .appliances
            .iter()
            .filter(|a| a.spec.class == ApplianceClass::PowerCurtailable)
            .map(|a| PcItem {
                demand: a.state.current_demand,
                beta: a.spec.beta,
                levels: a.spec.curtailment_levels,
            })
            .collect();
        DckpInstance {
            ts_items,
            pc_items,
            limit: (limit - self.non_shiftable_demand()).max(0.0),
        }
    }

    /// Schedules this step for power rate `rate`, pays `incentive` against
    /// baseline `cbl` and returns the outcome with the successor state.
    /// `final_step` adds the terminal cost of requests still unserved.
    pub fn schedule(&self, rate: f64, incentive: f64, cbl: f64, final_step: bool) -> Result<(HouseholdStep, HouseholdState)> {
        let demand = self.total_demand();
        let limit = action_to_limit(rate, demand);
        let instance = self.instance(limit);
        let (solution, infeasible) = match scheduler::solve(&instance) {
            Ok(sol) => (sol, false),
            Err(SolveError::Infeasible { .. }) => {
                let ts_on: Vec<bool> = instance.ts_items.iter().map(|i| i.mandatory).collect();
                let pc_levels = vec![0; instance.pc_items.len()];
                let sol = ScheduleSolution {
                    objective: instance.objective(&ts_on, &pc_levels),
                    consumption: instance.consumption(&ts_on, &pc_levels),
                    ts_on,
                    pc_levels,
                };
                (sol, true)
            }
            Err(e) => return Err(Error::Numeric(format!("household {}: {e}", self.id))),
        };

        let mut next = self.clone();
        let mut outcomes = Vec::with_capacity(self.appliances.len());
        let mut costs = Vec::with_capacity(self.appliances.len());
        let (mut ts_idx, mut pc_idx) = (0, 0);
        for appliance in next.appliances.iter_mut() {
            let spec = &appliance.spec;
            let (demand_kw, consumed_kw, cost) = match spec.class {
                ApplianceClass::NonShiftable => {
                    let d = appliance.state.current_demand;
                    (d, d, 0.0)
                }
                ApplianceClass::PowerCurtailable => {
                    let item = instance.pc_items[pc_idx];
                    let level = solution.pc_levels[pc_idx];
                    pc_idx += 1;
                    let consumed = f64::from(level) / f64::from(item.levels) * item.demand;
                    let cost = scheduler::curtailment_cost(item.beta, item.demand, level, item.levels)
                        .map_err(|e| Error::Numeric(e.to_string()))?;
                    (item.demand, consumed, cost)
                }
                _ if appliance.is_pending() => {
                    let item = instance.ts_items[ts_idx];
                    let on = solution.ts_on[ts_idx];
                    ts_idx += 1;
                    let state = &mut appliance.state;
                    let mut cost = if on { 0.0 } else { item.delay_cost };
                    if on {
                        state.remaining_steps -= 1;
                        if spec.class == ApplianceClass::TimeShiftableNonInterruptible {
                            state.running_locked = true;
                        }
                        if state.remaining_steps == 0 {
                            *state = ApplianceState::default();
                        }
                    }
                    if final_step && state.requested && !state.running_locked {
                        cost += delay_cost_unchecked(spec.beta, self.step, state.request_step.unwrap_or(self.step).min(self.step));
                    }
                    (item.demand, if on { item.demand } else { 0.0 }, cost)
                }
                _ => (0.0, 0.0, 0.0),
            };
            costs.push(cost);
            outcomes.push(ApplianceOutcome {
                name: spec.name.clone(),
                demand_kw,
                consumed_kw,
                dissatisfaction: cost,
            });
        }
        next.step = self.step + 1;

        let consumption = self.non_shiftable_demand() + solution.consumption;
        let payout = participant_payout(incentive, cbl, consumption);
        let reward = participant_reward(payout, &costs);
        let dissatisfaction = costs.iter().sum();
        Ok((
            HouseholdStep {
                demand_kw: demand,
                limit_kw: limit,
                consumption_kw: consumption,
                payout_cents: payout,
                dissatisfaction,
                reward,
                infeasible,
                appliances: outcomes,
            },
            next,
        ))
    }
}
