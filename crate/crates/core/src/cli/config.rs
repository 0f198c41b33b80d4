use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::{ExperimentSpec, Method, Snr};
use crate::error::{Error, Result};

/// Environment variable overriding the `workers` key.
pub const WORKERS_ENV: &str = "PDRO_WORKERS";

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "scenario",
    "methods",
    "n_grid",
    "seeds",
    "master_seed",
    "monte_carlo_ratio",
    "eps_grid",
    "comp_theta",
    "alpha",
    "e_apx",
    "delta",
    "multiplier",
    "split_fraction",
    "n_eval",
    "n_oracle",
    "oracle_restarts",
    "max_iter",
    "step_c",
    "tol",
    "solver_seed",
    "averaging",
    "dim",
    "gamma",
    "tau",
    "mu",
    "r",
    "radius",
    "lam",
    "shift_c",
    "shift_noise",
    "d_y",
    "snr",
    "mis",
    "noise_sd",
    "n_test_contexts",
    "covariates_csv",
    "percent_units",
    "workers",
    "record_wallclock",
    "output",
];

/// Experiment settings plus file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub output: PathBuf,
    /// Observed covariates for the contextual scenario.
    pub covariates_csv: Option<PathBuf>,
    /// Divide values read from CSV files by 100.
    pub percent_units: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: ExperimentSpec::default(),
            output: PathBuf::from("results.csv"),
            covariates_csv: None,
            percent_units: true,
        }
    }
}

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(scalar)
        .collect()
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

fn apply(cfg: &mut RunConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    let s = &mut cfg.spec;
    match key {
        "scenario" => s.scenario = v.parse().map_err(|e: Error| e.to_string())?,
        "methods" => {
            s.methods = v
                .split(',')
                .map(str::trim)
                .filter(|m| !m.is_empty())
                .map(|m| m.parse::<Method>().map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?
        }
        "n_grid" => s.n_grid = list(v)?,
        "seeds" => s.seeds = scalar(v)?,
        "master_seed" => s.master_seed = scalar(v)?,
        "monte_carlo_ratio" => s.monte_carlo_ratio = scalar(v)?,
        "eps_grid" => s.eps_grid = list(v)?,
        "comp_theta" => s.epsilon_rule.comp_theta = scalar(v)?,
        "alpha" => s.epsilon_rule.alpha = scalar(v)?,
        "e_apx" => s.epsilon_rule.e_apx = scalar(v)?,
        "delta" => s.epsilon_rule.delta = scalar(v)?,
        "multiplier" => s.epsilon_rule.multiplier = scalar(v)?,
        "split_fraction" => s.split_fraction = scalar(v)?,
        "n_eval" => s.n_eval = scalar(v)?,
        "n_oracle" => s.n_oracle = scalar(v)?,
        "oracle_restarts" => s.oracle_restarts = scalar(v)?,
        "max_iter" => s.solver.max_iter = scalar(v)?,
        "step_c" => s.solver.step_c = if v == "auto" { None } else { Some(scalar(v)?) },
        "tol" => s.solver.tol = scalar(v)?,
        "solver_seed" => s.solver.seed = scalar(v)?,
        "averaging" => s.solver.averaging = boolean(v)?,
        "dim" => s.dim = scalar(v)?,
        "gamma" => s.gamma = scalar(v)?,
        "tau" => s.tau = scalar(v)?,
        "mu" => s.mu = scalar(v)?,
        "r" => s.r = scalar(v)?,
        "radius" => s.radius = scalar(v)?,
        "lam" => s.lam = scalar(v)?,
        "shift_c" => s.shift_c = if v == "random" { None } else { Some(scalar(v)?) },
        "shift_noise" => s.shift_noise = scalar(v)?,
        "d_y" => s.d_y = scalar(v)?,
        "snr" => {
            s.snr = match v {
                "high" => Snr::High,
                "low" => Snr::Low,
                _ => return Err(format!("expected 'high' or 'low', got '{v}'")),
            }
        }
        "mis" => s.mis = boolean(v)?,
        "noise_sd" => s.noise_sd = scalar(v)?,
        "n_test_contexts" => s.n_test_contexts = scalar(v)?,
        "covariates_csv" => cfg.covariates_csv = Some(PathBuf::from(v)),
        "percent_units" => cfg.percent_units = boolean(v)?,
        "workers" => s.workers = scalar(v)?,
        "record_wallclock" => s.record_wallclock = boolean(v)?,
        "output" => cfg.output = PathBuf::from(v),
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

/// Parses the flat `key = value` format. `#` starts a comment. Every
/// problem in the text and every constraint violation is reported in one
/// [`Error::Config`]. `workers_override` replaces the `workers` key.
pub fn parse_config(text: &str, workers_override: Option<&str>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected 'key = value'", i + 1));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            problems.push(format!("line {}: unknown key '{key}'", i + 1));
            continue;
        }
        if !seen.insert(key.to_string()) {
            problems.push(format!("line {}: duplicate key '{key}'", i + 1));
            continue;
        }
        if let Err(e) = apply(&mut cfg, key, value) {
            problems.push(format!("line {}: {key}: {e}", i + 1));
        }
    }
    if let Some(w) = workers_override {
        match w.trim().parse() {
            Ok(w) => cfg.spec.workers = w,
            Err(_) => problems.push(format!("{WORKERS_ENV}: cannot parse '{w}'")),
        }
    }
    problems.extend(cfg.spec.violations());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

/// Reads and validates a config file. A relative `covariates_csv` is taken
/// relative to the config file, and its rows become the covariate pool.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let env = std::env::var(WORKERS_ENV).ok();
    let mut cfg = parse_config(&text, env.as_deref())?;
    if let Some(csv) = &cfg.covariates_csv {
        let full = match path.parent() {
            Some(dir) if csv.is_relative() => dir.join(csv),
            _ => csv.clone(),
        };
        let pool = super::load_returns_csv(&full, cfg.percent_units)?;
        cfg.spec.covariate_pool = Some(pool);
        cfg.spec.validate()?;
        cfg.covariates_csv = Some(full);
    }
    Ok(cfg)
}
