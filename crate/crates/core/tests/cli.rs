use std::path::Path;
use std::process::{Command, Output};

fn pdro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdro")).args(args).env_remove("PDRO_WORKERS").output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const SMALL: &str = "\
scenario = beta-portfolio
methods = empirical-erm, beta-erm, beta-dro-chi2@0.05
n_grid = 20, 30
seeds = 2
dim = 3
monte_carlo_ratio = 5
n_eval = 2000
n_oracle = 2000
oracle_restarts = 1
max_iter = 100
";

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn experiment_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("out.csv");
    let run = pdro(&["experiment", "--config", &cfg, "--output", out.to_str().unwrap(), "--workers", "2"]);
    assert!(run.status.success(), "{}", text(&run.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let (trials, aggregate) = csv.split_once("# aggregate\n").unwrap();
    // 3 methods × 2 sample sizes × 2 seeds.
    assert_eq!(trials.lines().count(), 1 + 12);
    assert_eq!(aggregate.lines().count(), 1 + 6);

    let rep = pdro(&["report", "--input", out.to_str().unwrap()]);
    assert!(rep.status.success(), "{}", text(&rep.stderr));
    assert!(text(&rep.stdout).contains(aggregate.lines().nth(1).unwrap()));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let mut files = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}.csv"));
        let run = pdro(&["experiment", "--config", &cfg, "--output", out.to_str().unwrap(), "--workers", w]);
        assert!(run.status.success());
        files.push(std::fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "seeds = 0\nbogus = 1\nnot a pair\n");
    let run = pdro(&["experiment", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(1));
    let err = text(&run.stderr);
    assert!(err.contains("bogus") && err.contains("line 3") && err.contains("seeds"), "{err}");
}

#[test]
fn worst_case_and_fit_commands() {
    let dir = tempfile::tempdir().unwrap();
    let values = write(dir.path(), "v.txt", "0, 1, 2\n");
    let run = pdro(&["worst-case", "--kind", "chi2", "--eps", "0.06", "--values", &values]);
    assert!(run.status.success(), "{}", text(&run.stderr));
    // Closed form: 1 + sqrt(2 · 0.06 · 2/3).
    let v: f64 = text(&run.stdout).trim().parse().unwrap();
    assert!((v - (1.0 + 0.08f64.sqrt())).abs() < 1e-12);

    let data = write(dir.path(), "r.csv", "a,b\n1.0,2.0\n-1.0,0.5\n0.5,-0.5\n2.0,1.0\n");
    let fit = pdro(&["fit", "--estimator", "normal", "--data", &data]);
    assert!(fit.status.success(), "{}", text(&fit.stderr));
    assert!(!text(&fit.stdout).is_empty());

    let missing = pdro(&["fit", "--estimator", "normal", "--data", "/nonexistent.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(pdro(&["--version"]).status.code(), Some(0));
    assert_eq!(pdro(&["frobnicate"]).status.code(), Some(1));
}
