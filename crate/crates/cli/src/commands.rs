use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use idr_core::config::{DayRange, RunConfig};
use idr_core::data::{compute_metrics, detect_rebound, generate_synthetic, ingest_csv, LoadDataset, ReboundReport, RunMetrics};
use idr_core::environment::{EpisodeTrace, Environment};
use idr_core::trainer::{self, Agents, TrainingOptions};
use idr_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::{Common, Policy};

/// Written next to every command's outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    config_hash: String,
    seed: u64,
    dataset_fingerprint: String,
    crate_version: String,
    checkpoint_format: u32,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    artifacts: Vec<String>,
}

struct Run {
    config: RunConfig,
    data: LoadDataset,
    out: PathBuf,
}

impl Run {
    fn env(&self) -> Result<Environment> {
        Environment::new(self.config.episode.clone(), &self.config.appliances, self.data.clone(), self.config.seed)
    }

    fn manifest(&self, command: &str, artifacts: Vec<String>) -> Result<()> {
        let manifest = RunManifest {
            command: command.into(),
            config_hash: self.config.hash(),
            seed: self.config.seed,
            dataset_fingerprint: self.data.fingerprint(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            checkpoint_format: idr_core::dqn::checkpoint::VERSION,
            artifacts,
        };
        write(&self.out.join("config.toml"), self.config.to_toml().as_bytes())?;
        write(
            &self.out.join("manifest.json"),
            (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes(),
        )
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

fn load_config(common: &Common, days_are_training: bool) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.synthetic.seed = seed;
    }
    if let Some(n) = common.households {
        config.synthetic.households = n;
    }
    if let Some(e) = common.episodes {
        config.training.episodes = e;
    }
    if let Some(days) = &common.days {
        let range = DayRange(days.clone());
        if days_are_training {
            config.training.train_days = range;
        } else {
            config.training.eval_days = range;
        }
    }
    if let Some(data) = &common.data {
        config.paths.data = Some(data.clone());
    }
    if let Some(out) = &common.out {
        config.paths.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn prepare(common: &Common, days_are_training: bool) -> Result<Run> {
    let config = load_config(common, days_are_training)?;
    let data = match &config.paths.data {
        Some(path) => ingest_csv(path, &config.ingest, &config.appliances, config.episode.grid)?,
        None => generate_synthetic(&config.synthetic, &config.appliances, config.episode.grid)?,
    };
    let out = config.paths.out.clone();
    fs::create_dir_all(&out).map_err(|e| Error::data(format!("cannot create {}: {e}", out.display())))?;
    Ok(Run { config, data, out })
}

fn training_options(run: &Run, checkpoint_dir: Option<PathBuf>) -> Result<TrainingOptions> {
    Ok(TrainingOptions {
        dqn: run.config.dqn.clone(),
        episodes: run.config.training.episodes,
        train_days: run.config.training.train_days.resolve(&run.data)?,
        seed: run.config.seed,
        max_steps: run.config.training.max_steps,
        checkpoint_dir,
        checkpoint_every: run.config.training.checkpoint_every,
        config_hash: run.config.hash(),
    })
}

pub fn generate_data(common: &Common) -> Result<()> {
    let mut common = common.clone();
    // the generated file is the dataset, never an input
    common.data = None;
    let run = prepare(&common, false)?;
    let path = run.out.join("dataset.csv");
    write(&path, run.data.to_csv_string(&run.config.appliances)?.as_bytes())?;
    run.manifest("generate-data", vec!["dataset.csv".into()])?;
    println!(
        "wrote {} ({} households, {} days)",
        path.display(),
        run.data.households.len(),
        run.data.num_days()
    );
    Ok(())
}

pub fn train(common: &Common) -> Result<()> {
    let run = prepare(common, true)?;
    let env = run.env()?;
    let opts = training_options(&run, Some(run.out.join("checkpoints")))?;
    let outcome = trainer::run_training(&env, &opts)?;
    let mut curve = Vec::new();
    trainer::write_learning_curve(&outcome.curve, &mut curve)?;
    write(&run.out.join("learning_curve.csv"), &curve)?;
    run.manifest("train", vec!["checkpoints".into(), "learning_curve.csv".into()])?;
    println!("trained {} episodes into {}", outcome.curve.len(), run.out.display());
    Ok(())
}

fn evaluate(run: &Run, env: &Environment, policy: Policy, checkpoints: &Path) -> Result<Vec<EpisodeTrace>> {
    let days = run.config.training.eval_days.resolve(&run.data)?;
    match policy {
        Policy::Nodr => days.map(|d| trainer::run_nodr(env, d)).collect(),
        Policy::Myopic => days.map(|d| trainer::run_myopic(env, d)).collect(),
        Policy::Marl => {
            let (agents, manifest) = Agents::load(checkpoints, env, &run.config.dqn)?;
            if manifest.dataset_fingerprint != run.data.fingerprint() {
                log::warn!("checkpoints in {} were trained on a different dataset", checkpoints.display());
            }
            trainer::run_policy_eval(env, &agents, days)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyMetrics {
    policy: String,
    metrics: BTreeMap<String, f64>,
}

fn metrics_table(rows: &[(String, RunMetrics)]) -> String {
    let mut out = format!("{:<32}", "metric");
    for (policy, _) in rows {
        out += &format!("{policy:>14}");
    }
    out.push('\n');
    for (i, name) in RunMetrics::ROW_NAMES.iter().enumerate() {
        out += &format!("{name:<32}");
        for (_, m) in rows {
            out += &format!("{:>14.4}", m.values()[i]);
        }
        out.push('\n');
    }
    out
}

pub fn eval(common: &Common, policies: &[Policy], checkpoints: Option<PathBuf>) -> Result<()> {
    let run = prepare(common, false)?;
    let env = run.env()?;
    let checkpoints = checkpoints.unwrap_or_else(|| run.out.join("checkpoints"));
    let mut seen = Vec::new();
    let mut rows: Vec<(String, RunMetrics)> = Vec::new();
    let mut rebound: BTreeMap<String, Vec<ReboundReport>> = BTreeMap::new();
    let trace_dir = run.out.join("traces");
    fs::create_dir_all(&trace_dir).map_err(|e| Error::data(format!("cannot create {}: {e}", trace_dir.display())))?;
    for &policy in policies {
        if seen.contains(&policy) {
            continue;
        }
        seen.push(policy);
        let traces = evaluate(&run, &env, policy, &checkpoints)?;
        for trace in &traces {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            write(&trace_dir.join(format!("{}_{}.csv", policy.name(), trace.date)), &buf)?;
        }
        rebound.insert(
            policy.name().into(),
            traces.iter().map(|t| detect_rebound(t, t.target_kw)).collect(),
        );
        rows.push((policy.name().into(), compute_metrics(&traces)?));
    }

    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string()];
    header.extend(rows.iter().map(|(p, _)| p.clone()));
    csv.write_record(&header)?;
    for (i, name) in RunMetrics::ROW_NAMES.iter().enumerate() {
        let mut record = vec![name.to_string()];
        record.extend(rows.iter().map(|(_, m)| m.values()[i].to_string()));
        csv.write_record(&record)?;
    }
    let csv = csv.into_inner().map_err(|e| Error::data(e.to_string()))?;
    write(&run.out.join("metrics.csv"), &csv)?;

    let json: Vec<PolicyMetrics> = rows
        .iter()
        .map(|(policy, m)| PolicyMetrics {
            policy: policy.clone(),
            metrics: RunMetrics::ROW_NAMES
                .iter()
                .map(|n| n.to_string())
                .zip(m.values())
                .collect(),
        })
        .collect();
    write(&run.out.join("metrics.json"), (serde_json::to_string_pretty(&json)? + "\n").as_bytes())?;
    write(&run.out.join("rebound.json"), (serde_json::to_string_pretty(&rebound)? + "\n").as_bytes())?;
    run.manifest(
        "eval",
        vec!["metrics.csv".into(), "metrics.json".into(), "rebound.json".into(), "traces".into()],
    )?;
    print!("{}", metrics_table(&rows));
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepOutput {
    rows: Vec<SweepRowOut>,
    spearman_rho_surplus: Option<f64>,
    spearman_rho_incentive: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRowOut {
    rho: f64,
    incentive_cents: f64,
    surplus_kwh: f64,
}

fn sweep_text(sweep: &SweepOutput) -> String {
    let mut out = format!("{:>6}{:>18}{:>14}\n", "rho", "incentive (¢)", "surplus (kWh)");
    for r in &sweep.rows {
        out += &format!("{:>6.2}{:>18.3}{:>14.3}\n", r.rho, r.incentive_cents, r.surplus_kwh);
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    out += &format!(
        "spearman(rho, surplus) = {}, spearman(rho, incentive) = {}\n",
        fmt(sweep.spearman_rho_surplus),
        fmt(sweep.spearman_rho_incentive)
    );
    out
}

pub fn rho_sweep(common: &Common, rhos: &[f64]) -> Result<()> {
    let run = prepare(common, false)?;
    let rhos = if rhos.is_empty() { run.config.rho_sweep.clone() } else { rhos.to_vec() };
    if rhos.is_empty() {
        return Err(Error::config("no rho values to sweep"));
    }
    let opts = training_options(&run, None)?;
    let eval_days = run.config.training.eval_days.resolve(&run.data)?;
    let report = trainer::rho_sweep(
        &rhos,
        |rho| {
            let mut episode = run.config.episode.clone();
            episode.rho = rho;
            Environment::new(episode, &run.config.appliances, run.data.clone(), run.config.seed)
        },
        &opts,
        eval_days,
    )?;
    let sweep = SweepOutput {
        rows: report
            .rows
            .iter()
            .map(|r| SweepRowOut {
                rho: r.rho,
                incentive_cents: r.incentive_cents,
                surplus_kwh: r.surplus_kwh,
            })
            .collect(),
        spearman_rho_surplus: report.spearman_rho_surplus,
        spearman_rho_incentive: report.spearman_rho_incentive,
    };
    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in &sweep.rows {
        csv.serialize(row)?;
    }
    let csv = csv.into_inner().map_err(|e| Error::data(e.to_string()))?;
    write(&run.out.join("sweep.csv"), &csv)?;
    write(&run.out.join("sweep.json"), (serde_json::to_string_pretty(&sweep)? + "\n").as_bytes())?;
    run.manifest("rho-sweep", vec!["sweep.csv".into(), "sweep.json".into()])?;
    print!("{}", sweep_text(&sweep));
    Ok(())
}

pub fn report(dir: &Path) -> Result<()> {
    let read = |name: &str| -> Result<Option<String>> {
        let path = dir.join(name);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::data(format!("cannot read {}: {e}", path.display()))),
        }
    };
    let mut found = false;
    if let Some(text) = read("metrics.json")? {
        found = true;
        let parsed: Vec<PolicyMetrics> = serde_json::from_str(&text)?;
        let rows = parsed
            .into_iter()
            .map(|p| {
                let get = |i: usize| {
                    p.metrics
                        .get(RunMetrics::ROW_NAMES[i])
                        .copied()
                        .ok_or_else(|| Error::data(format!("metrics.json lacks {:?}", RunMetrics::ROW_NAMES[i])))
                };
                Ok((
                    p.policy.clone(),
                    RunMetrics {
                        peak_load_kw: get(0)?,
                        mean_load_kw: get(1)?,
                        par: get(2)?,
                        surplus_kwh: get(3)?,
                        total_incentive_cents: get(4)?,
                        avg_dissatisfaction: get(5)?,
                        avg_incentive_income_cents: get(6)?,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        print!("{}", metrics_table(&rows));
    }
    if let Some(text) = read("rebound.json")? {
        let rebound: BTreeMap<String, Vec<ReboundReport>> = serde_json::from_str(&text)?;
        for (policy, days) in &rebound {
            let with = days.iter().filter(|d| !d.intervals.is_empty()).count();
            println!("{policy}: rebound peaks on {with} of {} days", days.len());
        }
    }
    if let Some(text) = read("sweep.json")? {
        found = true;
        let sweep: SweepOutput = serde_json::from_str(&text)?;
        print!("{}", sweep_text(&sweep));
    }
    if !found {
        return Err(Error::data(format!("{} holds no metrics.json or sweep.json", dir.display())));
    }
    Ok(())
}
