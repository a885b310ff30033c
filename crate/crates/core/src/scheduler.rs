//! Exact household scheduler.
//!
//! Each step a household must fit its requested appliances under a power
//! limit `l`. Time-shiftable items are either on (full rated power) or
//! deferred at a delay cost; curtailable items run at one of `m + 1`
//! consumption levels and pay a quadratic cost on the curtailed power. The
//! problem is a small disjunctively constrained knapsack:
//!
//! ```text
//! minimise   sum_pc beta_j ((m - k_j)/m * d_j)^2 + sum_ts (1 - x_j) c_j
//! subject to sum_pc (k_j/m) d_j + sum_ts x_j d_j <= l
//! ```
//!
//! [`solve`] enumerates time-shiftable subsets and runs a bounded
//! depth-first search over curtailment levels. [`solve_bruteforce`] is the
//! exhaustive reference used by the tests.

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsItem {
    /// kW drawn while on.
    pub demand: f64,
    /// Dissatisfaction paid if the item stays off this step.
    pub delay_cost: f64,
    /// Running non-interruptible cycle; must stay on.
    pub mandatory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcItem {
    /// Requested kW at full level.
    pub demand: f64,
    pub beta: f64,
    pub levels: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DckpInstance {
    pub ts_items: Vec<TsItem>,
    pub pc_items: Vec<PcItem>,
    /// kW available to the scheduled items.
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSolution {
    pub ts_on: Vec<bool>,
    /// Consumption level `0..=m` of each curtailable item; `m` means uncurtailed.
    pub pc_levels: Vec<u32>,
    pub objective: f64,
    /// kW consumed by the scheduled items.
    pub consumption: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("mandatory demand {mandatory_demand} kW exceeds limit {limit} kW")]
    Infeasible { mandatory_demand: f64, limit: f64 },
    #[error("malformed instance: {0}")]
    Invalid(String),
    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),
}

/// Size bounds accepted by [`solve_bruteforce`].
pub const BRUTEFORCE_MAX_TS: usize = 12;
pub const BRUTEFORCE_MAX_PC_COMBINATIONS: u64 = 1_000_000;

/// Exact solver limit on time-shiftable items (subset enumeration).
pub const SOLVE_MAX_TS: usize = 20;

/// Waiting cost of a deferred request: `beta * (t + 1 - t_request)^2`.
pub fn delay_cost(beta: f64, t: usize, t_request: usize) -> Result<f64, SolveError> {
    if t < t_request {
        return Err(SolveError::Invalid(format!(
            "step {t} precedes request step {t_request}"
        )));
    }
    Ok(delay_cost_unchecked(beta, t, t_request))
}

pub(crate) fn delay_cost_unchecked(beta: f64, t: usize, t_request: usize) -> f64 {
    let wait = (t + 1 - t_request) as f64;
    beta * wait * wait
}

/// Cost of serving a curtailable load at level `level` of `levels`:
/// `beta * ((levels - level)/levels * demand)^2`.
pub fn curtailment_cost(beta: f64, demand: f64, level: u32, levels: u32) -> Result<f64, SolveError> {
    if levels == 0 || level > levels {
        return Err(SolveError::Invalid(format!(
            "level {level} outside 0..={levels}"
        )));
    }
    Ok(pc_cost(beta, demand, level, levels))
}

fn pc_cost(beta: f64, demand: f64, level: u32, levels: u32) -> f64 {
    let curtailed = f64::from(levels - level) / f64::from(levels) * demand;
    beta * curtailed * curtailed
}

fn pc_power(demand: f64, level: u32, levels: u32) -> f64 {
    f64::from(level) / f64::from(levels) * demand
}

impl DckpInstance {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |v: f64| !(v >= 0.0 && v.is_finite());
        if bad(self.limit) {
            return Err(SolveError::Invalid(format!("limit {} must be finite and >= 0", self.limit)));
        }
        for (j, item) in self.ts_items.iter().enumerate() {
            if bad(item.demand) || bad(item.delay_cost) {
                return Err(SolveError::Invalid(format!("time-shiftable item {j} has a negative or non-finite field")));
            }
        }
        for (j, item) in self.pc_items.iter().enumerate() {
            if bad(item.demand) || bad(item.beta) {
                return Err(SolveError::Invalid(format!("curtailable item {j} has a negative or non-finite field")));
            }
            if item.levels == 0 {
                return Err(SolveError::Invalid(format!("curtailable item {j} has zero levels")));
            }
        }
        Ok(())
    }

    /// Consumed power of an assignment, curtailable items first.
    pub fn consumption(&self, ts_on: &[bool], pc_levels: &[u32]) -> f64 {
        let mut e = 0.0;
        for (item, &level) in self.pc_items.iter().zip(pc_levels) {
            e += pc_power(item.demand, level, item.levels);
        }
        for (item, &on) in self.ts_items.iter().zip(ts_on) {
            if on {
                e += item.demand;
            }
        }
        e
    }

    /// Total dissatisfaction of an assignment.
    pub fn objective(&self, ts_on: &[bool], pc_levels: &[u32]) -> f64 {
        let mut pc = 0.0;
        for (item, &level) in self.pc_items.iter().zip(pc_levels) {
            pc += pc_cost(item.beta, item.demand, level, item.levels);
        }
        let mut ts = 0.0;
        for (item, &on) in self.ts_items.iter().zip(ts_on) {
            if !on {
                ts += item.delay_cost;
            }
        }
        pc + ts
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.limit.max(1.0)
    }

    fn fits(&self, consumption: f64) -> bool {
        consumption <= self.limit + self.tolerance()
    }

    fn mandatory_demand(&self) -> f64 {
        self.ts_items
            .iter()
            .filter(|i| i.mandatory)
            .map(|i| i.demand)
            .sum()
    }

    fn check_mandatory(&self) -> Result<(), SolveError> {
        let mandatory_demand = self.mandatory_demand();
        if self.fits(mandatory_demand) {
            Ok(())
        } else {
            Err(SolveError::Infeasible {
                mandatory_demand,
                limit: self.limit,
            })
        }
    }

    fn candidate(&self, ts_on: Vec<bool>, pc_levels: Vec<u32>) -> ScheduleSolution {
        ScheduleSolution {
            objective: self.objective(&ts_on, &pc_levels),
            consumption: self.consumption(&ts_on, &pc_levels),
            ts_on,
            pc_levels,
        }
    }
}

/// Total order used for tie-breaking: lower objective, then higher
/// consumption, then lower-index time-shiftable items on, then higher
/// curtailable levels on lower-index items.
fn compare(a: &ScheduleSolution, b: &ScheduleSolution) -> Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then_with(|| b.consumption.total_cmp(&a.consumption))
        .then_with(|| b.ts_on.cmp(&a.ts_on))
        .then_with(|| b.pc_levels.cmp(&a.pc_levels))
}

fn keep_better(best: &mut Option<ScheduleSolution>, cand: ScheduleSolution) {
    match best {
        Some(b) if compare(&cand, b) != Ordering::Less => {}
        _ => *best = Some(cand),
    }
}

/// Greedy marginal allocation of curtailable levels under `capacity`.
///
/// Repeatedly raises the level whose next increment removes the most cost
/// per kW, skipping increments that no longer fit. Exact when all items
/// share one step size (in particular for a single item); with mixed step
/// sizes it is only a heuristic, and [`solve`] uses it as a starting bound.
pub fn greedy_pc_levels(items: &[PcItem], capacity: f64) -> Vec<u32> {
    let tol = 1e-9 * capacity.max(1.0);
    let mut levels = vec![0u32; items.len()];
    let mut used = 0.0;
    loop {
        let mut pick: Option<(usize, f64)> = None;
        for (j, item) in items.iter().enumerate() {
            if levels[j] >= item.levels {
                continue;
            }
            let step = item.demand / f64::from(item.levels);
            if used + step > capacity + tol {
                continue;
            }
            let gain = pc_cost(item.beta, item.demand, levels[j], item.levels)
                - pc_cost(item.beta, item.demand, levels[j] + 1, item.levels);
            let ratio = if step > 0.0 { gain / step } else { f64::INFINITY };
            if pick.is_none_or(|(_, r)| ratio > r) {
                pick = Some((j, ratio));
            }
        }
        match pick {
            Some((j, _)) => {
                used += items[j].demand / f64::from(items[j].levels);
                levels[j] += 1;
            }
            None => return levels,
        }
    }
}

struct Search<'a> {
    instance: &'a DckpInstance,
    best: Option<ScheduleSolution>,
    slack: f64,
}

impl Search<'_> {
    fn bound_exceeded(&self, lower_bound: f64) -> bool {
        match &self.best {
            Some(b) => lower_bound > b.objective + self.slack * b.objective.abs().max(1.0),
            None => false,
        }
    }

    /// Cost lower bound for items `from..`: each one alone at the highest
    /// level that fits `residual`.
    fn remaining_bound(&self, from: usize, residual: f64) -> f64 {
        let tol = self.instance.tolerance();
        self.instance.pc_items[from..]
            .iter()
            .map(|item| pc_cost(item.beta, item.demand, max_level(item, residual + tol), item.levels))
            .sum()
    }

    fn descend(&mut self, ts_on: &[bool], levels: &mut Vec<u32>, cost: f64, residual: f64) {
        let inst = self.instance;
        let j = levels.len();
        let tol = inst.tolerance();
        if j == inst.pc_items.len() {
            let cand = inst.candidate(ts_on.to_vec(), levels.clone());
            if inst.fits(cand.consumption) {
                keep_better(&mut self.best, cand);
            }
            return;
        }
        let item = inst.pc_items[j];
        if j + 1 == inst.pc_items.len() {
            // Cost is nonincreasing in the level, so the last item takes the
            // highest level that keeps the whole assignment feasible.
            let fits_at = |levels: &mut Vec<u32>, level: u32| {
                levels.push(level);
                let fits = inst.fits(inst.consumption(ts_on, levels));
                levels.pop();
                fits
            };
            let mut level = max_level(&item, residual + 2.0 * tol);
            while level > 0 && !fits_at(levels, level) {
                level -= 1;
            }
            while level < item.levels && fits_at(levels, level + 1) {
                level += 1;
            }
            levels.push(level);
            let cand = inst.candidate(ts_on.to_vec(), levels.clone());
            if inst.fits(cand.consumption) {
                keep_better(&mut self.best, cand);
            }
            levels.pop();
            return;
        }
        for level in (0..=item.levels).rev() {
            let power = pc_power(item.demand, level, item.levels);
            if power > residual + 2.0 * tol {
                continue;
            }
            let c = cost + pc_cost(item.beta, item.demand, level, item.levels);
            let rest = residual - power;
            if self.bound_exceeded(c + self.remaining_bound(j + 1, rest)) {
                continue;
            }
            levels.push(level);
            self.descend(ts_on, levels, c, rest);
            levels.pop();
        }
    }
}

fn max_level(item: &PcItem, capacity: f64) -> u32 {
    if item.demand <= 0.0 {
        return item.levels;
    }
    let step = item.demand / f64::from(item.levels);
    let k = (capacity.max(0.0) / step).floor();
    if k >= f64::from(item.levels) {
        item.levels
    } else {
        k as u32
    }
}

/// Optimal schedule for `instance` under the tie-breaking order described
/// on [`ScheduleSolution`] fields: lowest dissatisfaction, then highest
/// consumption, then lower-index time-shiftable items on.
pub fn solve(instance: &DckpInstance) -> Result<ScheduleSolution, SolveError> {
    instance.validate()?;
    let n = instance.ts_items.len();
    if n > SOLVE_MAX_TS {
        return Err(SolveError::TooLarge(format!("{n} time-shiftable items")));
    }
    instance.check_mandatory()?;
    let tol = instance.tolerance();

    let mut search = Search {
        instance,
        best: None,
        slack: 1e-9,
    };

    // Masks in descending order visit "more items on" first, which tends to
    // give a good incumbent early.
    for mask in (0u32..(1u32 << n)).rev() {
        let ts_on: Vec<bool> = (0..n).map(|j| mask & (1 << (n - 1 - j)) != 0).collect();
        if instance
            .ts_items
            .iter()
            .zip(&ts_on)
            .any(|(item, &on)| item.mandatory && !on)
        {
            continue;
        }
        let ts_load: f64 = instance
            .ts_items
            .iter()
            .zip(&ts_on)
            .filter(|(_, &on)| on)
            .map(|(i, _)| i.demand)
            .sum();
        if ts_load > instance.limit + 2.0 * tol {
            continue;
        }
        let ts_cost: f64 = instance
            .ts_items
            .iter()
            .zip(&ts_on)
            .filter(|(_, &on)| !on)
            .map(|(i, _)| i.delay_cost)
            .sum();
        let residual = instance.limit - ts_load;
        if search.bound_exceeded(ts_cost + search.remaining_bound(0, residual)) {
            continue;
        }
        if instance.pc_items.len() > 1 {
            let greedy = greedy_pc_levels(&instance.pc_items, residual);
            let cand = instance.candidate(ts_on.clone(), greedy);
            if instance.fits(cand.consumption) {
                keep_better(&mut search.best, cand);
            }
        }
        let mut levels = Vec::with_capacity(instance.pc_items.len());
        search.descend(&ts_on, &mut levels, ts_cost, residual);
    }

    search.best.ok_or(SolveError::Infeasible {
        mandatory_demand: instance.mandatory_demand(),
        limit: instance.limit,
    })
}

/// Exhaustive enumeration of every `(x, k)` assignment. Test oracle for
/// [`solve`]; shares only the objective/consumption evaluation and the
/// tie-breaking order.
pub fn solve_bruteforce(instance: &DckpInstance) -> Result<ScheduleSolution, SolveError> {
    instance.validate()?;
    let n = instance.ts_items.len();
    if n > BRUTEFORCE_MAX_TS {
        return Err(SolveError::TooLarge(format!(
            "{n} time-shiftable items (max {BRUTEFORCE_MAX_TS})"
        )));
    }
    let combos = instance
        .pc_items
        .iter()
        .try_fold(1u64, |acc, i| acc.checked_mul(u64::from(i.levels) + 1))
        .filter(|&c| c <= BRUTEFORCE_MAX_PC_COMBINATIONS)
        .ok_or_else(|| SolveError::TooLarge("curtailment level combinations exceed 10^6".into()))?;
    instance.check_mandatory()?;

    let mut best: Option<ScheduleSolution> = None;
    for mask in 0u32..(1u32 << n) {
        let ts_on: Vec<bool> = (0..n).map(|j| mask & (1 << j) != 0).collect();
        if instance
            .ts_items
            .iter()
            .zip(&ts_on)
            .any(|(item, &on)| item.mandatory && !on)
        {
            continue;
        }
        let mut levels = vec![0u32; instance.pc_items.len()];
        for _ in 0..combos {
            let e = instance.consumption(&ts_on, &levels);
            if instance.fits(e) {
                keep_better(&mut best, instance.candidate(ts_on.clone(), levels.clone()));
            }
            // odometer increment
            for (level, item) in levels.iter_mut().zip(&instance.pc_items) {
                if *level < item.levels {
                    *level += 1;
                    break;
                }
                *level = 0;
            }
        }
    }
    best.ok_or(SolveError::Infeasible {
        mandatory_demand: instance.mandatory_demand(),
        limit: instance.limit,
    })
}
