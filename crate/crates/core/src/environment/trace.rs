use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::household::ApplianceOutcome;
use crate::error::Result;

/// Logical clock readings for one step. Within a step the incentive is fixed
/// first, then every participant finishes, then the aggregator is scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOrder {
    pub incentive_fixed: u64,
    pub participants_done: Vec<u64>,
    pub aggregator_scored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub id: String,
    pub cbl_kw: f64,
    /// No earlier day was available; the baseline is the requested demand.
    pub cbl_fallback: bool,
    pub rate_index: usize,
    pub rate: f64,
    pub demand_kw: f64,
    pub limit_kw: f64,
    pub consumption_kw: f64,
    pub payout_cents: f64,
    pub dissatisfaction: f64,
    pub reward: f64,
    pub infeasible: bool,
    pub appliances: Vec<ApplianceOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub incentive_index: usize,
    pub incentive: f64,
    /// Aggregate baseline the aggregator acted on.
    pub forecast_kw: f64,
    pub consumption_kw: f64,
    pub surplus_kw: f64,
    pub aggregator_reward: f64,
    pub households: Vec<HouseholdRecord>,
    pub order: StepOrder,
}

impl StepRecord {
    pub fn total_payout(&self) -> f64 {
        self.households.iter().map(|h| h.payout_cents).sum()
    }

    pub fn total_dissatisfaction(&self) -> f64 {
        self.households.iter().map(|h| h.dissatisfaction).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.households.iter().map(|h| h.demand_kw).sum()
    }
}

/// Everything that happened during one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub day: usize,
    pub date: String,
    pub target_kw: f64,
    pub hours_per_step: f64,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    step: usize,
    household_id: &'a str,
    appliance: &'a str,
    demand_kw: f64,
    consumed_kw: f64,
    action: Option<f64>,
    incentive: f64,
    payout_cents: Option<f64>,
    dissatisfaction: f64,
    reward: Option<f64>,
}

pub const AGGREGATE_ID: &str = "AGG";
pub const TOTAL_APPLIANCE: &str = "TOTAL";

impl EpisodeTrace {
    pub fn aggregate_consumption(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.consumption_kw).collect()
    }

    pub fn incentives(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.incentive).collect()
    }

    /// Long-format CSV: one row per appliance, one per household total and
    /// one aggregate row per step.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for step in &self.steps {
            for hh in &step.households {
                for a in &hh.appliances {
                    out.serialize(TraceRow {
                        step: step.step,
                        household_id: &hh.id,
                        appliance: &a.name,
                        demand_kw: a.demand_kw,
                        consumed_kw: a.consumed_kw,
                        action: Some(hh.rate),
                        incentive: step.incentive,
                        payout_cents: None,
                        dissatisfaction: a.dissatisfaction,
                        reward: None,
                    })?;
                }
                out.serialize(TraceRow {
                    step: step.step,
                    household_id: &hh.id,
                    appliance: TOTAL_APPLIANCE,
                    demand_kw: hh.demand_kw,
                    consumed_kw: hh.consumption_kw,
                    action: Some(hh.rate),
                    incentive: step.incentive,
                    payout_cents: Some(hh.payout_cents),
                    dissatisfaction: hh.dissatisfaction,
                    reward: Some(hh.reward),
                })?;
            }
            out.serialize(TraceRow {
                step: step.step,
                household_id: AGGREGATE_ID,
                appliance: TOTAL_APPLIANCE,
                demand_kw: step.total_demand(),
                consumed_kw: step.consumption_kw,
                action: None,
                incentive: step.incentive,
                payout_cents: Some(step.total_payout()),
                dissatisfaction: step.total_dissatisfaction(),
                reward: Some(step.aggregator_reward),
            })?;
        }
        out.flush()?;
        Ok(())
    }
}
