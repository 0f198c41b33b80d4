use std::fmt::Write as _;
use std::path::Path;

use crate::bench::TrialResult;
use crate::error::{Error, Result};

pub const HEADER: &str = "scenario,method,n,seed,eps,objective,gen_error,wallclock_ms";
pub const AGGREGATE_SENTINEL: &str = "# aggregate";
pub const AGGREGATE_HEADER: &str =
    "scenario,method,n,count,objective_mean,objective_sd,gen_error_mean,gen_error_sd";

/// Decimal rendering with at most 6 significant digits; scientific notation
/// outside `[1e-6, 1e16)`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..16).contains(&exp) {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        return format!("{mant}e{exp}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// The value a reader of the CSV sees.
fn rounded(v: f64) -> f64 {
    fmt_sig(v).parse().unwrap_or(f64::NAN)
}

/// A trial row as written: text identifiers and rounded numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub n: usize,
    pub seed: usize,
    pub eps: f64,
    pub objective: f64,
    pub gen_error: f64,
    pub wallclock_ms: f64,
}

impl From<&TrialResult> for ResultRow {
    fn from(t: &TrialResult) -> Self {
        Self {
            scenario: t.scenario.to_string(),
            method: t.method.clone(),
            n: t.n,
            seed: t.seed,
            eps: rounded(t.eps),
            objective: rounded(t.objective),
            gen_error: rounded(t.gen_error),
            wallclock_ms: rounded(t.wallclock_ms),
        }
    }
}

/// Mean and sample standard deviation per (scenario, method, n) over the
/// rows with a finite objective.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub n: usize,
    pub count: usize,
    pub objective_mean: f64,
    pub objective_sd: f64,
    pub gen_error_mean: f64,
    pub gen_error_sd: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn from_trials(trials: &[TrialResult]) -> Self {
        Self { rows: trials.iter().map(ResultRow::from).collect() }
    }

    /// Aggregates in order of first appearance.
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(&str, &str, usize)> = Vec::new();
        for r in &self.rows {
            let k = (r.scenario.as_str(), r.method.as_str(), r.n);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(s, m, n)| {
                let group: Vec<&ResultRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.scenario == s && r.method == m && r.n == n && r.objective.is_finite())
                    .collect();
                let obj: Vec<f64> = group.iter().map(|r| r.objective).collect();
                let gen: Vec<f64> = group.iter().map(|r| r.gen_error).collect();
                let (objective_mean, objective_sd) = mean_sd(&obj);
                let (gen_error_mean, gen_error_sd) = mean_sd(&gen);
                AggregateRow {
                    scenario: s.into(),
                    method: m.into(),
                    n,
                    count: group.len(),
                    objective_mean,
                    objective_sd,
                    gen_error_mean,
                    gen_error_sd,
                }
            })
            .collect()
    }

    pub fn trials_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.scenario,
                r.method,
                r.n,
                r.seed,
                fmt_sig(r.eps),
                fmt_sig(r.objective),
                fmt_sig(r.gen_error),
                fmt_sig(r.wallclock_ms)
            );
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_SENTINEL}\n{AGGREGATE_HEADER}\n");
        for a in self.aggregates() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                a.scenario,
                a.method,
                a.n,
                a.count,
                fmt_sig(a.objective_mean),
                fmt_sig(a.objective_sd),
                fmt_sig(a.gen_error_mean),
                fmt_sig(a.gen_error_sd)
            );
        }
        out
    }

    /// The whole file: trial rows, then the aggregate section when there is
    /// at least one row.
    pub fn to_csv(&self) -> String {
        let mut out = self.trials_csv();
        if !self.rows.is_empty() {
            out.push_str(&self.aggregate_csv());
        }
        out
    }

    /// Parses the trial section of a results file; the aggregate section, if
    /// any, is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => {
                return Err(Error::Parse { row: 1, column: 1, message: format!("expected header '{HEADER}'") })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim() == AGGREGATE_SENTINEL {
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let err = |column: usize, message: String| Error::Parse { row: i + 1, column, message };
            if cells.len() != 8 {
                return Err(err(cells.len().min(8) + 1, format!("expected 8 fields, found {}", cells.len())));
            }
            let int = |j: usize| cells[j].parse::<usize>().map_err(|_| err(j + 1, format!("not an integer: '{}'", cells[j])));
            let num = |j: usize| cells[j].parse::<f64>().map_err(|_| err(j + 1, format!("not a number: '{}'", cells[j])));
            rows.push(ResultRow {
                scenario: cells[0].to_string(),
                method: cells[1].to_string(),
                n: int(2)?,
                seed: int(3)?,
                eps: num(4)?,
                objective: num(5)?,
                gen_error: num(6)?,
                wallclock_ms: num(7)?,
            });
        }
        Ok(Self { rows })
    }
}

pub fn write_results(table: &ResultsTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads a results file and recomputes its aggregate section.
pub fn report(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(ResultsTable::parse(&text)?.aggregate_csv())
}
