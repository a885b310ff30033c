//! Household load data: in-memory representation, CSV ingestion and export.
//!
//! The CSV schema is one reading per row:
//!
//! ```text
//! timestamp,household_id,appliance,power_kw
//! 2018-07-01T00:00:00,h01,ns,0.42
//! ```
//!
//! Timestamps mark the start of a step and must be aligned to the grid.
//! Every household needs a non-shiftable reading for every step of every day
//! in the covered date range. Curtailable readings are optional (missing steps
//! read as zero). Time-shiftable appliances only need rows while running; each
//! run start becomes a request event.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{ApplianceClass, ApplianceTemplate, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub appliance: String,
    pub step: usize,
}

/// One household-day of demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    /// kW per step.
    pub non_shiftable: Vec<f64>,
    /// kW per step, keyed by appliance name.
    pub curtailable: BTreeMap<String, Vec<f64>>,
    /// Sorted by step.
    pub requests: Vec<RequestEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSeries {
    pub id: String,
    pub days: Vec<DayProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDataset {
    pub start_date: NaiveDate,
    pub grid: TimeGrid,
    /// Sorted by id; every household covers the same days.
    pub households: Vec<HouseholdSeries>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    timestamp: String,
    household_id: String,
    appliance: String,
    power_kw: f64,
}

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(ts) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(ts.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

/// How CSV appliance names map onto the appliance table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    /// CSV name -> appliance table name. Table names map to themselves unless
    /// overridden.
    #[serde(default)]
    pub appliance_map: BTreeMap<String, String>,
}

impl IngestSchema {
    fn resolve<'t>(&self, csv_name: &str, table: &'t [ApplianceTemplate]) -> Option<&'t ApplianceTemplate> {
        let target = self.appliance_map.get(csv_name).map(String::as_str).unwrap_or(csv_name);
        table.iter().find(|a| a.name == target)
    }
}

impl LoadDataset {
    pub fn num_days(&self) -> usize {
        self.households.first().map_or(0, |h| h.days.len())
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.num_days()).then_some(offset as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.households.is_empty() || self.num_days() == 0 {
            return Err(Error::data("dataset is empty"));
        }
        let steps = self.grid.steps_per_episode;
        let days = self.num_days();
        let mut seen = BTreeSet::new();
        for hh in &self.households {
            if !seen.insert(&hh.id) {
                return Err(Error::data(format!("duplicate household {}", hh.id)));
            }
            if hh.days.len() != days {
                return Err(Error::data(format!(
                    "household {} covers {} days, expected {days}",
                    hh.id,
                    hh.days.len()
                )));
            }
            for (d, day) in hh.days.iter().enumerate() {
                let series = std::iter::once(&day.non_shiftable).chain(day.curtailable.values());
                for s in series {
                    if s.len() != steps {
                        return Err(Error::data(format!(
                            "household {} day {} has {} steps, expected {steps}",
                            hh.id,
                            self.date(d),
                            s.len()
                        )));
                    }
                    if s.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                        return Err(Error::data(format!(
                            "household {} day {} has a negative or non-finite power",
                            hh.id,
                            self.date(d)
                        )));
                    }
                }
                if day.requests.iter().any(|r| r.step >= steps) {
                    return Err(Error::data(format!("household {} has a request outside the day", hh.id)));
                }
            }
        }
        Ok(())
    }

    /// Checks that every appliance referenced by the data exists in `table`
    /// with a compatible class.
    pub fn check_against(&self, table: &[ApplianceTemplate]) -> Result<()> {
        let class_of = |name: &str| table.iter().find(|a| a.name == name).map(|a| a.class);
        for hh in &self.households {
            for day in &hh.days {
                for name in day.curtailable.keys() {
                    if class_of(name) != Some(ApplianceClass::PowerCurtailable) {
                        return Err(Error::data(format!("{name} is not a curtailable appliance of the table")));
                    }
                }
                for r in &day.requests {
                    if !class_of(&r.appliance).is_some_and(ApplianceClass::is_time_shiftable) {
                        return Err(Error::data(format!("{} is not a time-shiftable appliance of the table", r.appliance)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Content hash, stable across runs and platforms.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Writes the dataset in the ingestion schema. Time-shiftable runs are
    /// expanded to rated power for their cycle length (clipped at midnight).
    pub fn write_csv<W: Write>(&self, writer: W, table: &[ApplianceTemplate]) -> Result<()> {
        let ns_name = table
            .iter()
            .find(|a| a.class == ApplianceClass::NonShiftable)
            .map(|a| a.name.clone())
            .ok_or_else(|| Error::config("appliance table has no non-shiftable entry"))?;
        let steps = self.grid.steps_per_episode;
        let minutes = i64::from(self.grid.step_minutes);
        let mut out = csv::Writer::from_writer(writer);
        for d in 0..self.num_days() {
            let midnight = self.date(d).and_hms_opt(0, 0, 0).expect("valid midnight");
            // per household: rows per step
            let mut running: Vec<BTreeMap<String, Vec<f64>>> = Vec::new();
            for hh in &self.households {
                let mut ts_rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for r in &hh.days[d].requests {
                    let spec = table
                        .iter()
                        .find(|a| a.name == r.appliance)
                        .ok_or_else(|| Error::data(format!("unknown appliance {}", r.appliance)))?;
                    let series = ts_rows.entry(r.appliance.clone()).or_insert_with(|| vec![0.0; steps]);
                    for s in r.step..(r.step + spec.duration_steps).min(steps) {
                        series[s] = spec.rated_power;
                    }
                }
                running.push(ts_rows);
            }
            for t in 0..steps {
                let timestamp = (midnight + Duration::minutes(minutes * t as i64))
                    .format(TIMESTAMP_FORMAT)
                    .to_string();
                for (hh, ts_rows) in self.households.iter().zip(&running) {
                    let day = &hh.days[d];
                    let mut rows: BTreeMap<&str, f64> = BTreeMap::new();
                    rows.insert(ns_name.as_str(), day.non_shiftable[t]);
                    for (name, series) in &day.curtailable {
                        rows.insert(name, series[t]);
                    }
                    for (name, series) in ts_rows {
                        if series[t] > 0.0 {
                            rows.insert(name, series[t]);
                        }
                    }
                    for (appliance, power) in rows {
                        out.serialize(CsvRow {
                            timestamp: timestamp.clone(),
                            household_id: hh.id.clone(),
                            appliance: appliance.to_string(),
                            power_kw: power,
                        })?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, table: &[ApplianceTemplate]) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, table)?;
        String::from_utf8(buf).map_err(|e| Error::data(e.to_string()))
    }
}

/// Reads a dataset CSV from `path`.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &IngestSchema,
    table: &[ApplianceTemplate],
    grid: TimeGrid,
) -> Result<LoadDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(file, schema, table, grid)
}

#[derive(Default)]
struct HouseholdRows {
    ns: BTreeMap<NaiveDate, Vec<Option<f64>>>,
    pc: BTreeMap<NaiveDate, BTreeMap<String, Vec<Option<f64>>>>,
    ts: BTreeMap<NaiveDate, BTreeMap<String, BTreeSet<usize>>>,
}

fn set_once(slots: &mut [Option<f64>], step: usize, value: f64) -> bool {
    slots[step].replace(value).is_none()
}

/// Parses the dataset CSV schema from any reader. Never panics on malformed
/// input.
pub fn parse_csv<R: Read>(
    reader: R,
    schema: &IngestSchema,
    table: &[ApplianceTemplate],
    grid: TimeGrid,
) -> Result<LoadDataset> {
    grid.validate()?;
    let steps = grid.steps_per_episode;
    let step_minutes = grid.step_minutes;
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut households: BTreeMap<String, HouseholdRows> = BTreeMap::new();
    let mut dates: BTreeSet<NaiveDate> = BTreeSet::new();

    for (line, record) in csv_reader.deserialize::<CsvRow>().enumerate() {
        let row = record.map_err(|e| Error::data(format!("row {}: {e}", line + 2)))?;
        let ts = parse_timestamp(&row.timestamp)
            .ok_or_else(|| Error::data(format!("row {}: bad timestamp {:?}", line + 2, row.timestamp)))?;
        let minute_of_day = ts.hour() * 60 + ts.minute();
        if ts.second() != 0 || ts.nanosecond() != 0 || minute_of_day % step_minutes != 0 {
            return Err(Error::data(format!("row {}: timestamp {ts} is off the {step_minutes}-minute grid", line + 2)));
        }
        let step = (minute_of_day / step_minutes) as usize;
        if step >= steps {
            return Err(Error::data(format!("row {}: timestamp {ts} beyond the last step of the day", line + 2)));
        }
        if !(row.power_kw >= 0.0 && row.power_kw.is_finite()) {
            return Err(Error::data(format!("row {}: power must be finite and >= 0", line + 2)));
        }
        let spec = schema.resolve(&row.appliance, table).ok_or_else(|| {
            Error::data(format!("row {}: unknown appliance {:?} (add it to the appliance map)", line + 2, row.appliance))
        })?;
        let date = ts.date();
        dates.insert(date);
        let hh = households.entry(row.household_id.clone()).or_default();
        let duplicate = match spec.class {
            ApplianceClass::NonShiftable => {
                let slots = hh.ns.entry(date).or_insert_with(|| vec![None; steps]);
                !set_once(slots, step, row.power_kw)
            }
            ApplianceClass::PowerCurtailable => {
                let slots = hh
                    .pc
                    .entry(date)
                    .or_default()
                    .entry(spec.name.clone())
                    .or_insert_with(|| vec![None; steps]);
                !set_once(slots, step, row.power_kw)
            }
            _ => {
                let running = row.power_kw > 0.0;
                let set = hh.ts.entry(date).or_default().entry(spec.name.clone()).or_default();
                running && !set.insert(step)
            }
        };
        if duplicate {
            return Err(Error::data(format!(
                "row {}: duplicate reading for {} {} at {ts}",
                line + 2,
                row.household_id,
                row.appliance
            )));
        }
    }

    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        return Err(Error::data("dataset is empty"));
    };
    let num_days = (last - first).num_days() as usize + 1;
    let step_ts = |date: NaiveDate, t: usize| {
        date.and_hms_opt(0, 0, 0).expect("valid midnight") + Duration::minutes(i64::from(step_minutes) * t as i64)
    };

    let mut gaps = Vec::new();
    let mut series = Vec::with_capacity(households.len());
    for (id, rows) in households {
        let mut days = Vec::with_capacity(num_days);
        for d in 0..num_days {
            let date = first + Duration::days(d as i64);
            let mut ns = vec![0.0; steps];
            let ns_rows = rows.ns.get(&date);
            for (t, slot) in ns.iter_mut().enumerate() {
                match ns_rows.and_then(|r| r[t]) {
                    Some(v) => *slot = v,
                    None => gaps.push(format!("{id}@{}", step_ts(date, t).format(TIMESTAMP_FORMAT))),
                }
            }
            let curtailable: BTreeMap<String, Vec<f64>> = rows
                .pc
                .get(&date)
                .map(|m| {
                    m.iter()
                        .map(|(name, slots)| (name.clone(), slots.iter().map(|v| v.unwrap_or(0.0)).collect()))
                        .collect()
                })
                .unwrap_or_default();
            let mut requests = Vec::new();
            for (name, running) in rows.ts.get(&date).into_iter().flatten() {
                for &t in running {
                    if t == 0 || !running.contains(&(t - 1)) {
                        requests.push(RequestEvent {
                            appliance: name.clone(),
                            step: t,
                        });
                    }
                }
            }
            requests.sort_by(|a, b| a.step.cmp(&b.step).then_with(|| a.appliance.cmp(&b.appliance)));
            days.push(DayProfile {
                non_shiftable: ns,
                curtailable,
                requests,
            });
        }
        series.push(HouseholdSeries { id, days });
    }
    if !gaps.is_empty() {
        let shown: Vec<_> = gaps.iter().take(20).cloned().collect();
        return Err(Error::data(format!(
            "{} missing non-shiftable readings: {}{}",
            gaps.len(),
            shown.join(", "),
            if gaps.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let dataset = LoadDataset {
        start_date: first,
        grid,
        households: series,
    };
    dataset.validate()?;
    Ok(dataset)
}
