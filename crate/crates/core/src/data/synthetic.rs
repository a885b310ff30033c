//! Seeded synthetic household load profiles.
//!
//! Continuous loads follow diurnal templates: a non-shiftable base with a
//! morning and an evening bump, and an air-conditioning curve that tracks a
//! temperature proxy peaking late in the afternoon. Time-shiftable appliances
//! get at most one request per day, drawn around an evening start time.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{DayProfile, HouseholdSeries, LoadDataset, RequestEvent};
use crate::domain::{ApplianceClass, ApplianceTemplate, TimeGrid};
use crate::error::{Error, Result};

/// Daily request pattern of one time-shiftable appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestPattern {
    /// Chance of one request on a given day.
    pub probability: f64,
    /// Mean request time, hours after midnight.
    pub mean_hour: f64,
    pub std_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticProfileConfig {
    pub households: usize,
    pub days: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
    /// Relative spread of continuous loads; 0 reproduces the templates.
    pub noise_scale: f64,
    pub ns_base_kw: f64,
    pub ns_morning_kw: f64,
    pub ns_morning_hour: f64,
    pub ns_evening_kw: f64,
    pub ns_evening_hour: f64,
    /// Air-conditioning demand at the hottest time of day.
    pub ac_peak_kw: f64,
    pub ac_peak_hour: f64,
    pub requests: BTreeMap<String, RequestPattern>,
}

impl Default for SyntheticProfileConfig {
    fn default() -> Self {
        let pattern = |probability, mean_hour, std_hours| RequestPattern {
            probability,
            mean_hour,
            std_hours,
        };
        Self {
            households: 25,
            days: 61,
            start_date: NaiveDate::from_ymd_opt(2018, 6, 1).expect("valid date"),
            seed: 0,
            noise_scale: 0.15,
            ns_base_kw: 0.4,
            ns_morning_kw: 0.5,
            ns_morning_hour: 7.5,
            ns_evening_kw: 1.2,
            ns_evening_hour: 19.0,
            ac_peak_kw: 2.0,
            ac_peak_hour: 17.5,
            requests: BTreeMap::from([
                ("dryer".to_string(), pattern(0.35, 19.0, 1.5)),
                ("dw".to_string(), pattern(0.6, 19.5, 1.0)),
                ("ev".to_string(), pattern(0.7, 18.0, 1.0)),
                ("wm".to_string(), pattern(0.45, 18.5, 1.5)),
            ]),
        }
    }
}

/// Gaussian bump of height `height` centred at `hour` with width `width` h.
fn bump(hour: f64, centre: f64, width: f64, height: f64) -> f64 {
    let z = (hour - centre) / width;
    height * (-0.5 * z * z).exp()
}

impl SyntheticProfileConfig {
    pub fn validate(&self, table: &[ApplianceTemplate]) -> Result<()> {
        if self.households == 0 {
            return Err(Error::config("synthetic data needs at least one household"));
        }
        if self.days == 0 {
            return Err(Error::config("synthetic data needs at least one day"));
        }
        let nonneg = [
            self.noise_scale,
            self.ns_base_kw,
            self.ns_morning_kw,
            self.ns_evening_kw,
            self.ac_peak_kw,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("synthetic amplitudes and noise must be finite and >= 0"));
        }
        for (name, p) in &self.requests {
            let spec = table
                .iter()
                .find(|a| &a.name == name)
                .ok_or_else(|| Error::config(format!("request pattern for unknown appliance {name}")))?;
            if !spec.class.is_time_shiftable() {
                return Err(Error::config(format!("{name} is not time-shiftable")));
            }
            if !(0.0..=1.0).contains(&p.probability) || !(p.std_hours >= 0.0) || !p.mean_hour.is_finite() {
                return Err(Error::config(format!("invalid request pattern for {name}")));
            }
        }
        if table.iter().filter(|a| a.class == ApplianceClass::NonShiftable).count() != 1 {
            return Err(Error::config("appliance table needs exactly one non-shiftable entry"));
        }
        Ok(())
    }

    /// Noise-free non-shiftable demand per step.
    pub fn ns_template(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.steps_per_episode)
            .map(|t| {
                let h = (t as f64 + 0.5) * grid.hours_per_step();
                self.ns_base_kw
                    + bump(h, self.ns_morning_hour, 1.0, self.ns_morning_kw)
                    + bump(h, self.ns_evening_hour, 1.5, self.ns_evening_kw)
            })
            .collect()
    }

    /// Noise-free air-conditioning demand per step.
    pub fn ac_template(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.steps_per_episode)
            .map(|t| {
                let h = (t as f64 + 0.5) * grid.hours_per_step();
                // temperature proxy in [-1, 1], hottest at ac_peak_hour
                let temp = (2.0 * PI * (h - self.ac_peak_hour) / 24.0).cos();
                self.ac_peak_kw * ((temp - 0.2) / 0.8).max(0.0).powf(1.5)
            })
            .collect()
    }
}

/// Generates a reproducible dataset for the appliance table `table`.
pub fn generate_synthetic(
    config: &SyntheticProfileConfig,
    table: &[ApplianceTemplate],
    grid: TimeGrid,
) -> Result<LoadDataset> {
    config.validate(table)?;
    grid.validate()?;
    let steps = grid.steps_per_episode;
    let bound = |name_class: ApplianceClass| {
        table
            .iter()
            .find(|a| a.class == name_class)
            .map_or(f64::INFINITY, |a| a.rated_power)
    };
    let ns_max = bound(ApplianceClass::NonShiftable);
    let ns_template = config.ns_template(&grid);
    let ac_template = config.ac_template(&grid);
    let curtailable: Vec<&ApplianceTemplate> = table
        .iter()
        .filter(|a| a.class == ApplianceClass::PowerCurtailable)
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let width = config.households.to_string().len().max(2);
    let households = (0..config.households)
        .map(|h| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(h as u64);
            let days = (0..config.days)
                .map(|_| {
                    let noise = |rng: &mut ChaCha8Rng| config.noise_scale * normal.sample(rng);
                    let non_shiftable = ns_template
                        .iter()
                        .map(|&v| {
                            let n = noise(&mut rng);
                            if n == 0.0 { v } else { (v * (1.0 + n)).clamp(0.0, ns_max) }
                        })
                        .collect();
                    let mut pc = BTreeMap::new();
                    for spec in &curtailable {
                        let day_factor = 1.0 + noise(&mut rng);
                        let series = ac_template
                            .iter()
                            .map(|&v| {
                                let n = noise(&mut rng);
                                if day_factor == 1.0 && n == 0.0 {
                                    v
                                } else {
                                    (v * day_factor * (1.0 + n)).clamp(0.0, spec.rated_power)
                                }
                            })
                            .collect();
                        pc.insert(spec.name.clone(), series);
                    }
                    let mut requests = Vec::new();
                    for (name, pattern) in &config.requests {
                        let duration = table
                            .iter()
                            .find(|a| &a.name == name)
                            .map_or(1, |a| a.duration_steps.max(1));
                        let fires = rng.random::<f64>() < pattern.probability;
                        let hour = pattern.mean_hour + pattern.std_hours * normal.sample(&mut rng);
                        if fires {
                            let latest = steps.saturating_sub(duration);
                            let step = (hour / grid.hours_per_step()).round().clamp(0.0, latest as f64) as usize;
                            requests.push(RequestEvent {
                                appliance: name.clone(),
                                step,
                            });
                        }
                    }
                    requests.sort_by(|a, b| a.step.cmp(&b.step).then_with(|| a.appliance.cmp(&b.appliance)));
                    DayProfile {
                        non_shiftable,
                        curtailable: pc,
                        requests,
                    }
                })
                .collect();
            HouseholdSeries {
                id: format!("h{h:0width$}"),
                days,
            }
        })
        .collect();

    let dataset = LoadDataset {
        start_date: config.start_date,
        grid,
        households,
    };
    dataset.validate()?;
    dataset.check_against(table)?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_appliance_table;
    use crate::environment::unmanaged_load;

    fn generate(config: &SyntheticProfileConfig) -> LoadDataset {
        generate_synthetic(config, &default_appliance_table(), TimeGrid::default()).unwrap()
    }

    fn small(seed: u64) -> SyntheticProfileConfig {
        SyntheticProfileConfig {
            households: 5,
            days: 12,
            seed,
            ..SyntheticProfileConfig::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(generate(&small(3)), generate(&small(3)));
        assert_ne!(generate(&small(3)), generate(&small(4)));
    }

    #[test]
    fn zero_noise_reproduces_templates() {
        let config = SyntheticProfileConfig {
            noise_scale: 0.0,
            ..small(1)
        };
        let grid = TimeGrid::default();
        let data = generate(&config);
        let ns = config.ns_template(&grid);
        let ac = config.ac_template(&grid);
        for day in 0..config.days {
            for t in 0..grid.steps_per_episode {
                let mut got = 0.0;
                let mut want = 0.0;
                for hh in &data.households {
                    got += hh.days[day].non_shiftable[t] + hh.days[day].curtailable["ac"][t];
                    want += ns[t] + ac[t];
                }
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn demands_within_rated_bounds() {
        let data = generate(&SyntheticProfileConfig::default());
        assert_eq!(data.households.len(), 25);
        let table = default_appliance_table();
        let rated = |n: &str| table.iter().find(|a| a.name == n).unwrap().rated_power;
        for hh in &data.households {
            for day in &hh.days {
                assert!(day.non_shiftable.iter().all(|&v| (0.0..=5.0).contains(&v)));
                assert!(day.curtailable["ac"].iter().all(|&v| (0.0..=4.0).contains(&v)));
                for r in &day.requests {
                    assert!(rated(&r.appliance) <= 4.0);
                }
            }
        }
    }

    #[test]
    fn aggregate_has_an_evening_peak() {
        let config = SyntheticProfileConfig::default();
        let data = generate(&config);
        let table = default_appliance_table();
        let specs: Vec<_> = table.iter().map(|t| t.sample(&mut ChaCha8Rng::seed_from_u64(0))).collect();
        for day in 0..config.days {
            let mut agg = vec![0.0; 96];
            for hh in &data.households {
                for (a, v) in agg.iter_mut().zip(unmanaged_load(&hh.days[day], &specs, 96)) {
                    *a += v;
                }
            }
            let mean = agg.iter().sum::<f64>() / 96.0;
            let evening = agg[68..=84].iter().copied().fold(0.0, f64::max);
            assert!(evening >= 1.4 * mean, "day {day}: evening {evening}, mean {mean}");
        }
    }

    #[test]
    fn statistics_match_configuration() {
        let config = SyntheticProfileConfig {
            households: 10,
            days: 40,
            ..SyntheticProfileConfig::default()
        };
        let grid = TimeGrid::default();
        let data = generate(&config);
        let n = (config.households * config.days) as f64;
        for (name, pattern) in &config.requests {
            let count = data
                .households
                .iter()
                .flat_map(|h| &h.days)
                .filter(|d| d.requests.iter().any(|r| &r.appliance == name))
                .count() as f64;
            let p = pattern.probability;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((count / n - p).abs() < 4.0 * se, "{name}: {} vs {p}", count / n);
        }
        let template_mean = config.ns_template(&grid).iter().sum::<f64>() / 96.0;
        let observed: f64 = data
            .households
            .iter()
            .flat_map(|h| &h.days)
            .map(|d| d.non_shiftable.iter().sum::<f64>() / 96.0)
            .sum::<f64>()
            / n;
        assert!((observed / template_mean - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_households_rejected() {
        let config = SyntheticProfileConfig {
            households: 0,
            ..SyntheticProfileConfig::default()
        };
        assert!(generate_synthetic(&config, &default_appliance_table(), TimeGrid::default()).is_err());
    }
}
