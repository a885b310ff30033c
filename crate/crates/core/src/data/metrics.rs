//! Daily load metrics, rebound detection and rank correlation.

use serde::{Deserialize, Serialize};

use crate::environment::EpisodeTrace;
use crate::error::{Error, Result};

/// Summary of a policy over one or more days; each field is the mean of the
/// per-day values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub peak_load_kw: f64,
    pub mean_load_kw: f64,
    pub par: f64,
    pub surplus_kwh: f64,
    pub total_incentive_cents: f64,
    /// Dissatisfaction per household per day.
    pub avg_dissatisfaction: f64,
    /// Incentive income per household per day.
    pub avg_incentive_income_cents: f64,
}

impl RunMetrics {
    /// Row labels used in reports, in order.
    pub const ROW_NAMES: [&'static str; 7] = [
        "Peak load (kW)",
        "Mean load (kW)",
        "PAR",
        "Surplus consumption (kWh)",
        "Total incentive (¢)",
        "Average dissatisfaction cost",
        "Average incentive income (¢)",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.peak_load_kw,
            self.mean_load_kw,
            self.par,
            self.surplus_kwh,
            self.total_incentive_cents,
            self.avg_dissatisfaction,
            self.avg_incentive_income_cents,
        ]
    }
}

/// Sum that does not depend on the order of `values`.
fn sorted_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

pub fn peak_to_average(load: &[f64]) -> Result<f64> {
    let peak = load.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = load.iter().sum::<f64>() / load.len() as f64;
    if load.is_empty() || !(mean > 0.0) {
        return Err(Error::Numeric("PAR is undefined for a zero mean load".into()));
    }
    Ok(peak / mean)
}

/// Energy above `target`, kWh.
pub fn surplus_energy(load: &[f64], target: f64, hours_per_step: f64) -> f64 {
    load.iter().map(|&e| (e - target).max(0.0) * hours_per_step).sum()
}

fn day_metrics(trace: &EpisodeTrace) -> Result<RunMetrics> {
    let load = trace.aggregate_consumption();
    let peak = load.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = load.iter().sum::<f64>() / load.len() as f64;
    let par = peak_to_average(&load)?;
    let households = trace.steps.first().map_or(0, |s| s.households.len()).max(1) as f64;
    let payouts = sorted_sum(trace.steps.iter().flat_map(|s| s.households.iter().map(|h| h.payout_cents)));
    let dissatisfaction =
        sorted_sum(trace.steps.iter().flat_map(|s| s.households.iter().map(|h| h.dissatisfaction)));
    Ok(RunMetrics {
        peak_load_kw: peak,
        mean_load_kw: mean,
        par,
        surplus_kwh: surplus_energy(&load, trace.target_kw, trace.hours_per_step),
        total_incentive_cents: payouts,
        avg_dissatisfaction: dissatisfaction / households,
        avg_incentive_income_cents: payouts / households,
    })
}

/// Per-day metrics averaged over `traces`. Each trace's own target is used
/// for the surplus.
pub fn compute_metrics(traces: &[EpisodeTrace]) -> Result<RunMetrics> {
    if traces.is_empty() || traces.iter().any(|t| t.steps.is_empty()) {
        return Err(Error::Argument("metrics need at least one non-empty trace".into()));
    }
    let days = traces.iter().map(day_metrics).collect::<Result<Vec<_>>>()?;
    let n = days.len() as f64;
    let mean = |f: fn(&RunMetrics) -> f64| days.iter().map(f).sum::<f64>() / n;
    Ok(RunMetrics {
        peak_load_kw: mean(|m| m.peak_load_kw),
        mean_load_kw: mean(|m| m.mean_load_kw),
        par: mean(|m| m.par),
        surplus_kwh: mean(|m| m.surplus_kwh),
        total_incentive_cents: mean(|m| m.total_incentive_cents),
        avg_dissatisfaction: mean(|m| m.avg_dissatisfaction),
        avg_incentive_income_cents: mean(|m| m.avg_incentive_income_cents),
    })
}

/// A stretch of consumption above the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReboundInterval {
    pub start_step: usize,
    pub end_step: usize,
    pub peak_kw: f64,
    pub duration_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReboundReport {
    pub day: usize,
    pub date: String,
    pub target_kw: f64,
    pub last_incentive_step: Option<usize>,
    pub intervals: Vec<ReboundInterval>,
}

/// Intervals above `target` that start after the last step with a positive
/// incentive. A day without incentives has no rebound.
pub fn detect_rebound(trace: &EpisodeTrace, target: f64) -> ReboundReport {
    let last = trace.steps.iter().rposition(|s| s.incentive > 0.0);
    let mut intervals = Vec::new();
    if let Some(last) = last {
        let mut open: Option<ReboundInterval> = None;
        for s in &trace.steps[last + 1..] {
            if s.consumption_kw > target {
                let iv = open.get_or_insert(ReboundInterval {
                    start_step: s.step,
                    end_step: s.step,
                    peak_kw: s.consumption_kw,
                    duration_steps: 0,
                });
                iv.end_step = s.step;
                iv.peak_kw = iv.peak_kw.max(s.consumption_kw);
                iv.duration_steps += 1;
            } else if let Some(iv) = open.take() {
                intervals.push(iv);
            }
        }
        intervals.extend(open);
    }
    ReboundReport {
        day: trace.day,
        date: trace.date.clone(),
        target_kw: target,
        last_incentive_step: last,
        intervals,
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or fewer than two points are given.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{HouseholdRecord, StepOrder, StepRecord};

    fn record(id: &str, payout: f64, cost: f64) -> HouseholdRecord {
        HouseholdRecord {
            id: id.into(),
            cbl_kw: 0.0,
            cbl_fallback: false,
            rate_index: 0,
            rate: 1.0,
            demand_kw: 0.0,
            limit_kw: 0.0,
            consumption_kw: 0.0,
            payout_cents: payout,
            dissatisfaction: cost,
            reward: payout - cost,
            infeasible: false,
            appliances: vec![],
        }
    }

    fn trace(load: &[f64], incentives: &[f64], target: f64, households: Vec<HouseholdRecord>) -> EpisodeTrace {
        EpisodeTrace {
            day: 0,
            date: "2018-07-01".into(),
            target_kw: target,
            hours_per_step: 0.25,
            steps: load
                .iter()
                .zip(incentives)
                .enumerate()
                .map(|(t, (&e, &p))| StepRecord {
                    step: t,
                    incentive_index: 0,
                    incentive: p,
                    forecast_kw: e,
                    consumption_kw: e,
                    surplus_kw: (e - target).max(0.0),
                    aggregator_reward: 0.0,
                    households: households.clone(),
                    order: StepOrder {
                        incentive_fixed: 0,
                        participants_done: vec![],
                        aggregator_scored: 0,
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn table_par_examples() {
        assert!(((86.25f64 / 47.80) - 1.80).abs() < 0.005);
        // a two-step profile with that peak and mean
        let load = [86.25, 2.0 * 47.80 - 86.25];
        assert!((peak_to_average(&load).unwrap() - 1.80).abs() < 0.005);
        let load = [74.39, 2.0 * 45.37 - 74.39];
        assert!((peak_to_average(&load).unwrap() - 1.64).abs() < 0.005);
    }

    #[test]
    fn flat_profile() {
        let t = trace(&[5.0; 96], &[0.0; 96], 6.0, vec![record("a", 0.0, 0.0)]);
        let m = compute_metrics(&[t]).unwrap();
        assert_eq!(m.par, 1.0);
        assert_eq!(m.surplus_kwh, 0.0);
        assert_eq!(m.peak_load_kw, 5.0);
    }

    #[test]
    fn zero_load_is_error() {
        let t = trace(&[0.0; 4], &[0.0; 4], 1.0, vec![]);
        assert!(matches!(compute_metrics(&[t]), Err(Error::Numeric(_))));
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn surplus_recomputes_from_raw_load() {
        let load: Vec<f64> = (0..96).map(|t| 3.0 + (t as f64 / 10.0).sin() * 2.0).collect();
        let t = trace(&load, &vec![0.0; 96], 3.5, vec![record("a", 0.0, 0.0)]);
        let mut expected = 0.0;
        for &e in &load {
            if e > 3.5 {
                expected += (e - 3.5) * 0.25;
            }
        }
        assert_eq!(compute_metrics(&[t]).unwrap().surplus_kwh, expected);
    }

    #[test]
    fn averages_per_household_and_day() {
        let hh = vec![record("a", 2.0, 0.5), record("b", 4.0, 1.5)];
        let t = trace(&[1.0, 1.0], &[1.0, 1.0], 2.0, hh);
        let m = compute_metrics(&[t]).unwrap();
        assert_eq!(m.total_incentive_cents, 12.0);
        assert_eq!(m.avg_incentive_income_cents, 6.0);
        assert_eq!(m.avg_dissatisfaction, 2.0);
    }

    #[test]
    fn household_order_does_not_matter() {
        let a = vec![record("a", 0.1, 0.7), record("b", 1e-17, 3.3), record("c", 1.0, 1e16)];
        let mut b = a.clone();
        b.reverse();
        let ta = trace(&[2.0, 3.0], &[1.0, 0.0], 2.5, a);
        let tb = trace(&[2.0, 3.0], &[1.0, 0.0], 2.5, b);
        assert_eq!(compute_metrics(&[ta]).unwrap(), compute_metrics(&[tb]).unwrap());
    }

    #[test]
    fn no_rebound_below_target() {
        let t = trace(&[1.0; 96], &[1.0; 96], 2.0, vec![]);
        assert!(detect_rebound(&t, 2.0).intervals.is_empty());
    }

    #[test]
    fn rebound_after_incentives_end() {
        let k = 10.0;
        let mut load = vec![k - 1.0; 96];
        load[80..=83].iter_mut().for_each(|e| *e = k + 1.0);
        let mut incentives = vec![0.0; 96];
        incentives[60..80].iter_mut().for_each(|p| *p = 3.0);
        let report = detect_rebound(&trace(&load, &incentives, k, vec![]), k);
        assert_eq!(report.last_incentive_step, Some(79));
        assert_eq!(report.intervals.len(), 1);
        let iv = report.intervals[0];
        assert_eq!((iv.start_step, iv.end_step, iv.duration_steps), (80, 83, 4));
        assert_eq!(iv.peak_kw, k + 1.0);
    }

    #[test]
    fn second_evening_peak_is_reported() {
        // first peak suppressed under incentives, second one after 19:00
        let k = 50.0;
        let mut load = vec![30.0; 96];
        load[68..72].iter_mut().for_each(|e| *e = 49.0);
        load[77..82].iter_mut().for_each(|e| *e = 60.0);
        let mut incentives = vec![0.0; 96];
        incentives[66..74].iter_mut().for_each(|p| *p = 5.0);
        let report = detect_rebound(&trace(&load, &incentives, k, vec![]), k);
        assert_eq!(report.intervals.len(), 1);
        assert!(report.intervals[0].start_step >= 76);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }
}
