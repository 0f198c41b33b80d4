//! Command line front end: config loading, data ingestion, dispatch and
//! results output.

mod config;
mod data;
mod results;

pub use config::{load_config, parse_config, RunConfig, KEYS, WORKERS_ENV};
pub use data::{load_returns_csv, parse_returns};
pub use results::{
    fmt_sig, report, write_results, AggregateRow, ResultRow, ResultsTable, AGGREGATE_HEADER,
    AGGREGATE_SENTINEL, HEADER,
};

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use crate::bench::{check_bound_coverage, fit_and_solve, fit_model, run_trials, Estimator, FittedModel, Method};
use crate::dist::{Distribution, DivergenceKind, EmpiricalDist};
use crate::dro::{chi2_worst_case, kl_worst_case, w1_worst_case_lipschitz};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pdro", version, about = "Parametric distributionally robust optimization")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit an estimator to a returns CSV and print its parameters.
    Fit {
        /// empirical, beta, normal, noncontext-p or context-p.
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        data: PathBuf,
        /// Covariates CSV aligned with the data rows (context-p only).
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Divide CSV values by 100.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        percent_units: bool,
        /// Half-width of the Beta support.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
    },
    /// Worst-case expectation of a list of values over a divergence ball.
    WorstCase {
        /// chi2, kl or w1.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        eps: f64,
        /// File of values separated by commas, spaces or newlines.
        #[arg(long)]
        values: PathBuf,
        /// Nominal probabilities in the same format; uniform when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Lipschitz constant of the cost in the random vector (w1 only).
        #[arg(long)]
        lipschitz: Option<f64>,
    },
    /// Fit one method to a returns CSV and solve it with the configured cost.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Method id such as beta-dro-chi2@0.1 or normal-erm.
        #[arg(long)]
        method: String,
    },
    /// Run a benchmark experiment and write the results CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `output` key.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides the `workers` key and the environment.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check realized excess risk against its bound over the configured seeds.
    CheckBounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the aggregate section of a results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| {
            s.parse().map_err(|_| Error::Parse { row: 1, column: i + 1, message: format!("not a number: '{s}'") })
        })
        .collect()
}

fn joined(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

fn write_matrix(out: &mut dyn Write, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        writeln!(out, "{name}_row_{i} = {}", joined(m.row(i).iter().copied()))?;
    }
    Ok(())
}

fn io(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn config_or_default(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => parse_config("", std::env::var(WORKERS_ENV).ok().as_deref()),
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Fit { estimator, data, covariates, percent_units, r } => {
            let est: Estimator = estimator.parse()?;
            let xi = EmpiricalDist::uniform(load_returns_csv(&data, percent_units)?)?;
            let ys = covariates.map(|p| load_returns_csv(&p, percent_units)).transpose()?;
            let (model, warnings) = fit_model(est, &xi, ys.as_ref(), r)?;
            writeln!(out, "estimator = {}", est.as_str()).map_err(io)?;
            writeln!(out, "samples = {}", xi.len()).map_err(io)?;
            match &model {
                FittedModel::Empirical(e) => {
                    writeln!(out, "mean = {}", joined(e.mean().iter().copied())).map_err(io)?
                }
                FittedModel::Param(Distribution::ScaledBeta(b)) => {
                    writeln!(out, "r = {:?}", b.r()).map_err(io)?;
                    writeln!(out, "eta = {}", joined(b.eta().iter().copied())).map_err(io)?;
                }
                FittedModel::Param(Distribution::Gaussian(g)) => {
                    writeln!(out, "mean = {}", joined(g.mean().iter().copied())).map_err(io)?;
                    write_matrix(out, "cov", g.cov()).map_err(io)?;
                }
                FittedModel::Param(other) => writeln!(out, "model = {other:?}").map_err(io)?,
                FittedModel::Conditional(c) => {
                    write_matrix(out, "coef", c.coef()).map_err(io)?;
                    write_matrix(out, "cov", c.cov()).map_err(io)?;
                }
            }
            for w in warnings {
                writeln!(err, "warning: {w:?}").map_err(io)?;
            }
        }
        Command::WorstCase { kind, eps, values, weights, lipschitz } => {
            let kind: DivergenceKind = kind.parse()?;
            let v = read_numbers(&values)?;
            let base = match weights {
                Some(p) => read_numbers(&p)?,
                None => vec![1.0 / v.len().max(1) as f64; v.len()],
            };
            let res = match kind {
                DivergenceKind::Chi2 => chi2_worst_case(&v, &base, eps)?,
                DivergenceKind::Kl => kl_worst_case(&v, &base, eps)?,
                DivergenceKind::W1 => {
                    let lip = lipschitz.ok_or_else(|| Error::invalid("w1 needs --lipschitz"))?;
                    Error::check_dim(v.len(), base.len())?;
                    crate::dist::validate_simplex(&base)?;
                    let mean = v.iter().zip(&base).map(|(a, b)| a * b).sum();
                    w1_worst_case_lipschitz(mean, lip, eps)?
                }
                other => return Err(Error::Unsupported(format!("no worst-case solver for {other}"))),
            };
            writeln!(out, "{:?}", res.value).map_err(io)?;
        }
        Command::Solve { config, data, method } => {
            let cfg = config_or_default(config.as_deref())?;
            let method: Method = method.parse()?;
            let xi = EmpiricalDist::uniform(load_returns_csv(&data, cfg.percent_units)?)?;
            let mut spec = cfg.spec;
            spec.dim = xi.dim();
            let s = fit_and_solve(&spec, &method, &xi)?;
            writeln!(out, "method = {method}").map_err(io)?;
            writeln!(out, "eps = {:?}", s.eps).map_err(io)?;
            writeln!(out, "objective = {:?}", s.objective).map_err(io)?;
            writeln!(out, "status = {:?}", s.status).map_err(io)?;
            writeln!(out, "iterations = {}", s.iterations).map_err(io)?;
            writeln!(out, "x = {}", joined(s.x.iter().copied())).map_err(io)?;
        }
        Command::Experiment { config, output, workers } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = workers {
                cfg.spec.workers = w;
            }
            let path = output.unwrap_or(cfg.output);
            let trials = run_trials(&cfg.spec)?;
            for t in trials.iter().filter(|t| t.error.is_some()) {
                writeln!(err, "trial {} n={} seed={} failed: {}", t.method, t.n, t.seed, t.error.as_deref().unwrap_or(""))
                    .map_err(io)?;
            }
            write_results(&ResultsTable::from_trials(&trials), &path)?;
            writeln!(out, "wrote {} records to {}", trials.len(), path.display()).map_err(io)?;
        }
        Command::CheckBounds { config, workers } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = workers {
                cfg.spec.workers = w;
            }
            let rep = check_bound_coverage(&cfg.spec)?;
            writeln!(out, "method,n,seed,eps,gen_error,bound,covered").map_err(io)?;
            for r in &rep.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.method,
                    r.n,
                    r.seed,
                    fmt_sig(r.eps),
                    fmt_sig(r.gen_error),
                    fmt_sig(r.bound),
                    r.covered
                )
                .map_err(io)?;
            }
            writeln!(out, "coverage = {}", fmt_sig(rep.coverage)).map_err(io)?;
        }
        Command::Report { input } => {
            write!(out, "{}", report(&input)?).map_err(io)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 for usage or configuration errors,
/// 2 for runtime failures.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().ansi().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let mut full = vec!["pdro"];
        full.extend_from_slice(args);
        let code = run(full, &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors() {
        let (code, _, err) = call(&[]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"));
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn worst_case_at_zero_radius_is_the_mean() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "0, 1, 2\n").unwrap();
        let v = p.to_str().unwrap();
        let (code, out, _) = call(&["worst-case", "--kind", "chi2", "--eps", "0", "--values", v]);
        assert_eq!((code, out.as_str()), (EXIT_OK, "1.0\n"));
        let (code, out, _) = call(&["worst-case", "--kind", "w1", "--eps", "0.5", "--values", v, "--lipschitz", "2"]);
        assert_eq!((code, out.as_str()), (EXIT_OK, "2.0\n"));
        assert_eq!(call(&["worst-case", "--kind", "tv", "--eps", "0", "--values", v]).0, EXIT_RUNTIME);
        assert_eq!(call(&["worst-case", "--kind", "kl", "--eps", "0", "--values", "/nonexistent"]).0, EXIT_RUNTIME);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "gamma = 0.5\n").unwrap();
        let (code, _, err) = call(&["experiment", "--config", p.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("gamma"));
    }
}
