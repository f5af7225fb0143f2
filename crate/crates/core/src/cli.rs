//! Experiment runner behind the `prefgrad` binary: `run`, `diagnose` and `sweep`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    parse_json, read_file, seed_from_env, EnvSource, ExperimentConfig, InitSpec, LinkConfig,
    PolicyConfig, Preset, ResolvedRun, SweepAxis,
};
use crate::diagnostics::{self, Report};
use crate::error::{Error, Result};
use crate::optimizer::{Algorithm, HyperParams, Optimizer, RunOptions};
use crate::policy::ParamVector;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RESULT_FILE: &str = "result.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const METRICS_HEADER: [&str; 6] = [
    "iter",
    "value_readout",
    "grad_est_norm",
    "stationarity",
    "queries_cum",
    "wall_ms",
];
pub const SUMMARY_HEADER: [&str; 4] = ["axis_value", "seed", "final_stationarity", "total_queries"];

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub theta_r: ParamVector,
    /// Which iterate θ_R is.
    pub theta_r_iterate: usize,
    pub final_theta: ParamVector,
    pub total_queries: u64,
    pub hyperparams: HyperParams,
    /// ‖∇V‖² at θ_R, when the exact oracle is feasible.
    pub theta_r_stationarity: Option<f64>,
    /// ‖∇V‖² at θ_T, when the exact oracle is feasible.
    pub final_stationarity: Option<f64>,
    pub warnings: Vec<String>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Runs a resolved experiment and writes `metrics.csv`, `result.json` and
/// `config.resolved.json` into `out`.
pub fn execute_run(run: &ResolvedRun, out: &Path) -> Result<RunReport> {
    create_dir(out)?;
    let oracle_ok = run
        .env
        .check_enumeration(crate::env::DEFAULT_ENUMERATION_CAP)
        .is_ok();
    if run.eval_every > 0 {
        // surface oracle infeasibility before spending any queries
        run.env
            .check_enumeration(crate::env::DEFAULT_ENUMERATION_CAP)?;
    }
    let stationarity =
        |theta: &ParamVector| diagnostics::stationarity_metric(&run.env, &run.policy, theta);

    let metrics_path = out.join(METRICS_FILE);
    let mut writer = csv::Writer::from_path(&metrics_path)?;
    writer.write_record(METRICS_HEADER)?;
    let optimizer = Optimizer::new(
        &run.env,
        &run.policy,
        &run.link,
        run.hyperparams.clone(),
        run.algorithm,
    )?
    .with_options(RunOptions {
        theta0: Some(run.theta0.clone()),
        history: run.history,
        channel: run.channel,
    })?;
    let start = Instant::now();
    let mut failure: Option<Error> = None;
    let result = optimizer.run_observed(|step| {
        if failure.is_some() {
            return;
        }
        let t = step.record.t;
        let row = (|| -> Result<()> {
            let stat = if run.eval_every > 0 && t % run.eval_every == 0 {
                Some(stationarity(step.theta_after)?)
            } else {
                None
            };
            let wall = if run.wall_clock {
                start.elapsed().as_millis().to_string()
            } else {
                String::new()
            };
            writer.write_record([
                t.to_string(),
                step.record.value_readout.to_string(),
                step.record.grad_est_norm.to_string(),
                fmt_opt(stat),
                step.record.queries_cum.to_string(),
                wall,
            ])?;
            Ok(())
        })();
        if let Err(e) = row {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    writer.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let (theta_r_stationarity, final_stationarity) = if oracle_ok {
        (
            Some(stationarity(&result.theta_r)?),
            Some(stationarity(&result.final_theta)?),
        )
    } else {
        (None, None)
    };
    let report = RunReport {
        algorithm: result.algorithm,
        seed: result.hyperparams.seed,
        theta_r: result.theta_r.clone(),
        theta_r_iterate: result.theta_history[result.theta_r_index].t,
        final_theta: result.final_theta.clone(),
        total_queries: result.total_queries,
        hyperparams: result.hyperparams.clone(),
        theta_r_stationarity,
        final_stationarity,
        warnings: result.warnings.clone(),
    };
    write_file(
        &out.join(RESULT_FILE),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_file(&out.join(RESOLVED_CONFIG_FILE), &run.echo.to_json())?;
    Ok(report)
}

/// `prefgrad run`: loads the config (honouring `PREFGRAD_SEED`) and runs it.
pub fn cmd_run(config: &Path, out: &Path) -> Result<RunReport> {
    let resolved = ExperimentConfig::load(config)?.resolve(&base_dir(config), seed_from_env()?)?;
    log::info!(
        "{} run: d = {}, T = {}, N = {}, M = {}, seed = {}",
        resolved.algorithm,
        resolved.policy.dim(),
        resolved.hyperparams.iterations,
        resolved.hyperparams.pairs,
        resolved.hyperparams.queries,
        resolved.hyperparams.seed
    );
    execute_run(&resolved, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Check {
    SamplerMoments,
    Concentration,
    RewardBias,
    Smoothing,
    GradUnbiasedness,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::SamplerMoments,
        Check::Concentration,
        Check::RewardBias,
        Check::Smoothing,
        Check::GradUnbiasedness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::SamplerMoments => "sampler-moments",
            Check::Concentration => "concentration",
            Check::RewardBias => "reward-bias",
            Check::Smoothing => "smoothing",
            Check::GradUnbiasedness => "grad-unbiasedness",
        }
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Check::ALL.iter().map(|c| c.name()).collect();
                Error::config(format!(
                    "unknown check {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

/// Parameters for `prefgrad diagnose`. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub seed: Option<u64>,
    /// Dimension for the sampler checks.
    pub d: Option<usize>,
    #[serde(rename = "K")]
    pub block_size: Option<usize>,
    pub samples: Option<usize>,
    pub link: Option<LinkConfig>,
    /// Horizon bounding the reward gap for the preference checks.
    #[serde(rename = "H")]
    pub horizon: Option<usize>,
    pub r1: Option<f64>,
    pub r0: Option<f64>,
    #[serde(rename = "M")]
    pub queries: Option<OneOrMany<usize>>,
    pub delta: Option<f64>,
    pub trials: Option<usize>,
    pub env: Option<EnvSource>,
    pub policy: Option<PolicyConfig>,
    /// Evaluation point; defaults to a fixed non-stationary θ.
    pub theta: Option<InitSpec>,
    pub mu: Option<OneOrMany<f64>>,
    #[serde(rename = "L")]
    pub smoothness: Option<f64>,
}

/// The bundled chain benchmark used by the smoothing checks (d = 8 tabular).
pub fn chain_benchmark() -> Preset {
    Preset::Chain {
        states: 2,
        horizon: 2,
        slip: 0.2,
    }
}

/// Runs one diagnostic check.
pub fn run_check(check: Check, cfg: &DiagnoseConfig, base_dir: &Path) -> Result<Report> {
    let seed = cfg.seed.unwrap_or(0);
    let samples = cfg.samples.unwrap_or(100_000);
    let trials = cfg.trials.unwrap_or(10_000);
    let mut report = Report::default();
    match check {
        Check::SamplerMoments => {
            let d = cfg.d.unwrap_or(8);
            report = diagnostics::validate_sampler_moments(
                d,
                d,
                cfg.block_size.unwrap_or(3),
                samples,
                seed,
            )?;
        }
        Check::Concentration | Check::RewardBias => {
            let link = cfg
                .link
                .clone()
                .unwrap_or_default()
                .build(cfg.horizon.unwrap_or(1))?;
            let (r1, r0) = match check {
                Check::Concentration => (cfg.r1.unwrap_or(0.0), cfg.r0.unwrap_or(0.0)),
                _ => (cfg.r1.unwrap_or(0.8), cfg.r0.unwrap_or(0.0)),
            };
            let default_m = if check == Check::Concentration {
                100
            } else {
                1024
            };
            let ms = cfg
                .queries
                .as_ref()
                .map_or(vec![default_m], OneOrMany::to_vec);
            for (i, m) in ms.into_iter().enumerate() {
                let s = seed.wrapping_add(i as u64);
                report.extend(if check == Check::Concentration {
                    diagnostics::validate_concentration(
                        &link,
                        r1,
                        r0,
                        m,
                        trials,
                        cfg.delta.unwrap_or(0.05),
                        s,
                    )?
                } else {
                    diagnostics::validate_reward_bias(&link, r1, r0, m, trials, s)?
                });
            }
        }
        Check::Smoothing | Check::GradUnbiasedness => {
            let source = cfg.env.clone().unwrap_or(EnvSource::Preset {
                preset: chain_benchmark(),
            });
            let env = source.load(base_dir)?;
            let (policy, _) = cfg.policy.clone().unwrap_or_default().build(&env)?;
            let theta = match &cfg.theta {
                Some(init) => init.theta(policy.dim())?,
                None => diagnostics::reference_theta(policy.dim()),
            };
            let mus = cfg.mu.as_ref().map_or(vec![0.1], OneOrMany::to_vec);
            for (i, mu) in mus.into_iter().enumerate() {
                let s = seed.wrapping_add(i as u64);
                report.extend(if check == Check::Smoothing {
                    let l = cfg.smoothness.unwrap_or(diagnostics::CHAIN_SMOOTHNESS);
                    diagnostics::validate_smoothing(&env, &policy, &theta, mu, l, samples, s)?
                } else {
                    diagnostics::validate_grad_unbiasedness(&env, &policy, &theta, mu, samples, s)?
                });
            }
        }
    }
    Ok(report)
}

/// `prefgrad diagnose`: runs the named check and writes `report.json` into `out`.
pub fn cmd_diagnose(check: &str, config: Option<&Path>, out: &Path) -> Result<Report> {
    let check = Check::from_str(check)?;
    let (cfg, dir) = match config {
        Some(path) => (
            parse_json::<DiagnoseConfig>(&read_file(path)?)?,
            base_dir(path),
        ),
        None => (DiagnoseConfig::default(), PathBuf::new()),
    };
    let report = run_check(check, &cfg, &dir)?;
    create_dir(out)?;
    write_file(&out.join(REPORT_FILE), &report.to_json())?;
    Ok(report)
}

/// One axis, its values and the number of seeds per value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub seeds: usize,
}

impl SweepSpec {
    /// Parses `--axis`, a comma-separated `--values` list and `--seeds`.
    pub fn parse(axis: &str, values: &str, seeds: usize) -> Result<Self> {
        let axis = SweepAxis::from_str(axis)?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim().parse::<usize>().map_err(|_| {
                    Error::config(format!("sweep value {v:?} is not a non-negative integer"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() || seeds == 0 {
            return Err(Error::config(
                "a sweep needs at least one value and one seed",
            ));
        }
        Ok(SweepSpec {
            axis,
            values,
            seeds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis_value: usize,
    pub seed: u64,
    pub final_stationarity: Option<f64>,
    pub total_queries: u64,
}

/// Runs every (value, seed) pair of the sweep in parallel. Seed i of each
/// value is the base seed plus i, so runs at different values share streams.
pub fn run_sweep(
    config: &ExperimentConfig,
    base_dir: &Path,
    base_seed: u64,
    spec: &SweepSpec,
    out: &Path,
) -> Result<Vec<SummaryRow>> {
    create_dir(out)?;
    let jobs: Vec<(usize, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.seeds as u64).map(move |i| (v, base_seed.wrapping_add(i))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let resolved = config
                .with_axis(spec.axis, value)
                .resolve(base_dir, Some(seed))?;
            let dir = out
                .join(format!("{}={value}", spec.axis))
                .join(format!("seed={seed}"));
            let report = execute_run(&resolved, &dir)?;
            Ok(SummaryRow {
                axis_value: value,
                seed,
                final_stationarity: report.final_stationarity,
                total_queries: report.total_queries,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut writer = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    writer.write_record(SUMMARY_HEADER)?;
    for r in &rows {
        writer.write_record([
            r.axis_value.to_string(),
            r.seed.to_string(),
            fmt_opt(r.final_stationarity),
            r.total_queries.to_string(),
        ])?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(out.join(SUMMARY_FILE), e))?;
    Ok(rows)
}

/// `prefgrad sweep`.
pub fn cmd_sweep(config: &Path, spec: &SweepSpec, out: &Path) -> Result<Vec<SummaryRow>> {
    let cfg = ExperimentConfig::load(config)?;
    let base_seed = seed_from_env()?.unwrap_or(cfg.seed);
    run_sweep(&cfg, &base_dir(config), base_seed, spec, out)
}
