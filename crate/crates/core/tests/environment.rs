use std::collections::BTreeMap;

use chrono::NaiveDate;
use idr_core::data::{generate_synthetic, DayProfile, HouseholdSeries, LoadDataset, RequestEvent, SyntheticProfileConfig};
use idr_core::domain::{default_appliance_table, ApplianceClass, ApplianceTemplate, TimeGrid};
use idr_core::environment::{EpisodeConfig, Environment};
use idr_core::trainer::{myopic_decision, run_myopic, run_nodr};
use proptest::prelude::*;

fn template(name: &str, class: ApplianceClass, power: f64, duration: usize, beta: f64) -> ApplianceTemplate {
    ApplianceTemplate {
        name: name.into(),
        class,
        rated_power: power,
        duration_steps: duration,
        beta_mean: beta,
        beta_std: 0.0,
        curtailment_levels: 10,
    }
}

fn day(ns: f64, ac: Option<f64>, requests: &[(&str, usize)], steps: usize) -> DayProfile {
    DayProfile {
        non_shiftable: vec![ns; steps],
        curtailable: ac.map(|v| BTreeMap::from([("ac".to_string(), vec![v; steps])])).unwrap_or_default(),
        requests: requests
            .iter()
            .map(|&(a, s)| RequestEvent {
                appliance: a.into(),
                step: s,
            })
            .collect(),
    }
}

fn dataset(days: Vec<DayProfile>) -> LoadDataset {
    let steps = days[0].non_shiftable.len();
    LoadDataset {
        start_date: NaiveDate::from_ymd_opt(2018, 7, 1).unwrap(),
        grid: TimeGrid {
            steps_per_episode: steps,
            step_minutes: 15,
        },
        households: vec![HouseholdSeries {
            id: "h0".into(),
            days,
        }],
    }
}

fn config(steps: usize) -> EpisodeConfig {
    EpisodeConfig {
        grid: TimeGrid {
            steps_per_episode: steps,
            step_minutes: 15,
        },
        ..EpisodeConfig::default()
    }
}

fn synthetic(households: usize, days: usize, seed: u64) -> (Environment, EpisodeConfig) {
    let table = default_appliance_table();
    let data = generate_synthetic(
        &SyntheticProfileConfig {
            households,
            days,
            seed,
            ..SyntheticProfileConfig::default()
        },
        &table,
        TimeGrid::default(),
    )
    .unwrap();
    let cfg = EpisodeConfig::default();
    (Environment::new(cfg.clone(), &table, data, seed).unwrap(), cfg)
}

#[test]
fn full_rate_without_incentive_reproduces_unmanaged_load() {
    let (env, _) = synthetic(4, 12, 5);
    for d in [0, 11] {
        let trace = run_nodr(&env, d).unwrap();
        for step in &trace.steps {
            let mut raw = 0.0;
            for h in 0..env.num_households() {
                raw += env.unmanaged_load(h, d)[step.step];
            }
            assert_eq!(step.consumption_kw, raw);
            assert_eq!(step.total_payout(), 0.0);
            assert_eq!(step.total_dissatisfaction(), 0.0);
        }
    }
}

#[test]
fn washing_machine_deferred_for_payout() {
    let table = vec![
        template("wm", ApplianceClass::TimeShiftableNonInterruptible, 1.0, 3, 0.1),
        template("ns", ApplianceClass::NonShiftable, 5.0, 0, 0.0),
    ];
    // two earlier days with the machine running at step 0 give b = 1 + ns
    let history = day(0.5, None, &[("wm", 0)], 4);
    let today = day(0.5, None, &[("wm", 0)], 4);
    let env = Environment::new(config(4), &table, dataset(vec![history.clone(), history, today]), 0).unwrap();
    let mut ep = env.episode(2).unwrap();
    assert_eq!(ep.cbl(0), 1.5);
    // incentive index 5 = 5 cents/kW, rate index 0 = a 0.0
    let out = ep.step(5, &[0]).unwrap();
    assert_eq!(out.consumption_kw, vec![0.5]);
    assert_eq!(out.payouts_cents, vec![5.0]);
    assert!((out.dissatisfaction[0] - 0.1).abs() < 1e-15);
    assert!((out.participant_rewards[0] - 4.9).abs() < 1e-12);
}

#[test]
fn non_shiftable_only_household_is_never_cut() {
    let table = vec![template("ns", ApplianceClass::NonShiftable, 5.0, 0, 0.0)];
    let env = Environment::new(config(3), &table, dataset(vec![day(2.0, None, &[], 3)]), 0).unwrap();
    for a in [0, 4, 10] {
        let mut ep = env.episode(0).unwrap();
        let out = ep.step(3, &[a]).unwrap();
        assert_eq!(out.consumption_kw, vec![2.0]);
        assert_eq!(out.dissatisfaction, vec![0.0]);
    }
}

#[test]
fn step_ordering_is_recorded() {
    let (env, _) = synthetic(3, 2, 1);
    let mut ep = env.episode(1).unwrap();
    ep.step(4, &[3, 5, 7]).unwrap();
    ep.step(0, &[10, 10, 10]).unwrap();
    let trace = ep.into_trace();
    let mut last = 0;
    for s in &trace.steps {
        assert!(s.order.incentive_fixed > last);
        assert!(s.order.participants_done.iter().all(|&c| c > s.order.incentive_fixed));
        assert!(s.order.participants_done.iter().all(|&c| c < s.order.aggregator_scored));
        last = s.order.aggregator_scored;
    }
}

#[test]
fn first_day_baseline_is_flagged() {
    let (env, _) = synthetic(2, 3, 1);
    assert!(env.episode(0).unwrap().used_cbl_fallback());
    assert!(!env.episode(1).unwrap().used_cbl_fallback());
}

#[test]
fn baseline_ignores_the_current_day() {
    let table = vec![
        template("ac", ApplianceClass::PowerCurtailable, 4.0, 0, 1.0),
        template("ns", ApplianceClass::NonShiftable, 5.0, 0, 0.0),
    ];
    let mut days = vec![day(1.0, Some(1.0), &[], 4); 3];
    let env_a = Environment::new(config(4), &table, dataset(days.clone()), 0).unwrap();
    days[2] = day(3.0, Some(4.0), &[], 4);
    let env_b = Environment::new(config(4), &table, dataset(days), 0).unwrap();
    let (a, b) = (env_a.episode(2).unwrap(), env_b.episode(2).unwrap());
    assert_eq!(a.cbl(0), 2.0);
    assert_eq!(a.cbl(0), b.cbl(0));
    assert_eq!(a.target(), b.target());
}

#[test]
fn terminal_step_charges_unserved_requests() {
    let table = vec![
        template("ev", ApplianceClass::TimeShiftableInterruptible, 4.0, 2, 0.5),
        template("ns", ApplianceClass::NonShiftable, 5.0, 0, 0.0),
    ];
    let env = Environment::new(config(3), &table, dataset(vec![day(0.0, None, &[("ev", 1)], 3)]), 0).unwrap();
    let mut ep = env.episode(0).unwrap();
    let mut costs = vec![];
    while !ep.is_done() {
        costs.push(ep.step(0, &[0]).unwrap().dissatisfaction[0]);
    }
    // deferred at t=1 (0.5*1) and t=2 (0.5*4), plus the terminal repeat
    assert_eq!(costs, vec![0.0, 0.5, 4.0]);
}

#[test]
fn myopic_pays_nothing_when_nobody_responds() {
    let mut table = default_appliance_table();
    for t in &mut table {
        t.beta_mean = 1e12;
        t.beta_std = 0.0;
    }
    let data = generate_synthetic(
        &SyntheticProfileConfig {
            households: 3,
            days: 3,
            ..SyntheticProfileConfig::default()
        },
        &table,
        TimeGrid::default(),
    )
    .unwrap();
    let env = Environment::new(EpisodeConfig::default(), &table, data, 0).unwrap();
    let trace = run_myopic(&env, 2).unwrap();
    assert!(trace.steps.iter().all(|s| s.incentive == 0.0));
}

#[test]
fn myopic_pays_nothing_below_target() {
    let (env, _) = synthetic(3, 4, 2);
    let mut ep = env.episode(3).unwrap();
    while !ep.is_done() {
        let (p, _, r) = myopic_decision(&env, &ep).unwrap();
        let nodr_rates = vec![10; env.num_households()];
        let nodr = ep.clone().step(0, &nodr_rates).unwrap();
        if nodr.aggregate_kw <= ep.target() {
            assert_eq!(p, 0);
            assert_eq!(r, 0.0);
        }
        ep.step(p, &nodr_rates).unwrap();
    }
}

#[test]
fn myopic_incentive_is_best_under_best_responses() {
    let (env, cfg) = synthetic(2, 3, 3);
    let mut ep = env.episode(2).unwrap();
    for _ in 0..80 {
        ep.step(0, &[10, 10]).unwrap();
    }
    let (_, _, best) = myopic_decision(&env, &ep).unwrap();
    // brute force: every incentive, every household at its best rate
    for p_idx in 0..cfg.actions.aggregator_incentives.len() {
        let mut rates = vec![];
        for h in 0..2 {
            let mut pick = (0, f64::NEG_INFINITY);
            for a in 0..cfg.actions.participant_rates.len() {
                let r = ep.preview(h, p_idx, a).unwrap().reward;
                if r >= pick.1 {
                    pick = (a, r);
                }
            }
            rates.push(pick.0);
        }
        let mut probe = ep.clone();
        let out = probe.step(p_idx, &rates).unwrap();
        assert!(best >= out.aggregator_reward - 1e-12, "p {p_idx}: {best} < {}", out.aggregator_reward);
    }
}

#[test]
fn rejects_bad_actions_and_days() {
    let (env, _) = synthetic(2, 2, 0);
    let mut ep = env.episode(1).unwrap();
    assert!(ep.step(0, &[0]).is_err());
    assert!(ep.step(11, &[0, 0]).is_err());
    assert!(ep.step(0, &[0, 11]).is_err());
    assert!(env.episode(2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn non_interruptible_cycles_run_to_completion(seed in 0u64..1000, actions in proptest::collection::vec(0usize..11, 96)) {
        let (env, _) = synthetic(1, 2, seed);
        let mut ep = env.episode(1).unwrap();
        let mut p = 0;
        while !ep.is_done() {
            let t = ep.step_index();
            ep.step(p, &[actions[t]]).unwrap();
            p = (p + 3) % 11;
        }
        let trace = ep.into_trace();
        let specs = env.household_specs(0);
        for spec in specs.iter().filter(|s| s.class == ApplianceClass::TimeShiftableNonInterruptible) {
            let on: Vec<bool> = trace
                .steps
                .iter()
                .map(|s| s.households[0].appliances.iter().any(|a| a.name == spec.name && a.consumed_kw > 0.0))
                .collect();
            // every run is one contiguous block of exactly duration_steps,
            // unless cut off by the end of the day
            let mut t = 0;
            while t < on.len() {
                if on[t] {
                    let start = t;
                    while t < on.len() && on[t] {
                        t += 1;
                    }
                    let len = t - start;
                    prop_assert!(len == spec.duration_steps || t == on.len(), "{} ran {len} steps", spec.name);
                } else {
                    t += 1;
                }
            }
        }
    }

    #[test]
    fn payouts_nonnegative_and_aggregator_nonpositive(seed in 0u64..1000, p in 0usize..11, a in 0usize..11) {
        let (env, _) = synthetic(2, 2, seed);
        let mut ep = env.episode(1).unwrap();
        while !ep.is_done() {
            let out = ep.step(p, &[a, 10 - a]).unwrap();
            prop_assert!(out.payouts_cents.iter().all(|&u| u >= 0.0));
            prop_assert!(out.aggregator_reward <= 0.0);
            let total: f64 = out.consumption_kw.iter().sum();
            prop_assert_eq!(out.aggregate_kw, total);
        }
    }
}
