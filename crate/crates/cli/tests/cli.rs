use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use genea_sel::stats::is_valid_cdf_table;
use genea_sel_cli::output::read_csv_table;

fn genea_sel(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genea-sel"))
        .args(args)
        .env("GENEA_SEL_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_valid_cdf(path: &Path, value_column: &str) {
    let table = read_csv_table(path).unwrap();
    let h = table.column("h").unwrap();
    let v = table.column(value_column).unwrap();
    let points: Vec<(f64, f64)> = h.into_iter().zip(v).collect();
    assert!(is_valid_cdf_table(&points), "{} is not a valid CDF table", path.display());
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec!["simulate-moran", "--n", "20", "--alpha", "1", "--reps", "200", "--seed", "7", "--out", out]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let argv = args(d.to_str().unwrap());
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let o = genea_sel(&argv, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["cdf.csv", "distances.csv"] {
        let (x, y) = (fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap());
        assert!(x == y, "{file} differs between identical runs");
    }
    let other = dir.path().join("c");
    let o = genea_sel(
        &[
            "simulate-moran",
            "--n",
            "20",
            "--alpha",
            "1",
            "--reps",
            "200",
            "--seed",
            "8",
            "--out",
            other.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("distances.csv")).unwrap(), fs::read(other.join("distances.csv")).unwrap());
}

#[test]
fn two_individuals_follow_the_exponential_law() {
    let dir = tempfile::tempdir().unwrap();
    let m = 4000;
    let o = genea_sel(
        &["simulate-moran", "--n", "2", "--t", "6", "--reps", &m.to_string(), "--h-grid", "0:5.9:0.1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS neutral_law"));
    let table = read_csv_table(&dir.path().join("simulate-moran/cdf.csv")).unwrap();
    // Two lineages merge at rate 1 whatever the types, so R ~ min(Exp(1), T).
    let band = ((2.0_f64 / 0.01).ln() / (2.0 * m as f64)).sqrt();
    for row in &table.rows {
        let (h, f) = (row[0], row[1]);
        assert!((f - (1.0 - (-h).exp())).abs() <= band, "h = {h}: {f}");
    }
    let distances = read_csv_table(&dir.path().join("simulate-moran/distances.csv")).unwrap();
    assert_eq!(distances.rows.len(), m);
    assert!(distances.rows.iter().all(|r| r[0] > 0.0 && r[0] <= 6.0));
}

#[test]
fn verify_generators_passes_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = genea_sel(&["verify-generators"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches("PASS generator_identities").count(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify-generators/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["table_checks"], 36);
    assert_eq!(summary["results"]["moment_checks"], 8);
    assert!(summary["timings"]["total_seconds"].as_f64().unwrap() < 10.0);
}

#[test]
fn misprinted_fixture_fails_with_difference() {
    let dir = tempfile::tempdir().unwrap();
    let o = genea_sel(&["verify-generators", "--fixture", "misprinted", "--max-families", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("FAIL") && err.contains("difference") && err.contains("alpha"), "{err}");
    let report = fs::read_to_string(dir.path().join("verify-generators/report.txt")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("FAIL")).count(), 1);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_file = dir.path().join("bad.toml");
    fs::write(&bad_file, "n = 10\nreplicates = 5\n").unwrap();
    let cases: [&[&str]; 6] = [
        &["simulate-moran", "--n", "1"],
        &["simulate-moran", "--alpha", "-1"],
        &["simulate-moran", "--h-grid", "1,0.5"],
        &["simulate-moran", "--n", "many"],
        &["simulate-sde", "--t", "1", "--h-grid", "0.5,1.5"],
        &["simulate-moran", "--config", bad_file.to_str().unwrap()],
    ];
    for args in cases {
        let o = genea_sel(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn flags_override_config_file_and_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    fs::write(&file, "n = 12\nalpha = 0.5\nreps = 50\nseed = 99\n").unwrap();
    let o = genea_sel(
        &["simulate-moran", "--config", file.to_str().unwrap(), "--seed", "3", "--format", "json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("simulate-moran");
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["n"], 12);
    assert_eq!(cfg["alpha"], 0.5);
    assert_eq!(cfg["seed"], 3);
    assert_eq!(cfg["theta0"], 0.5);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["config"], cfg);
    assert!(summary["timings"]["total_seconds"].is_number());
    let records: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join("cdf.json")).unwrap()).unwrap();
    assert_eq!(records.len(), 41);
    assert!(records[0].get("empirical").is_some());
}

#[test]
fn emitted_cdf_files_reload_as_valid_cdfs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 4] = [
        &["simulate-moran", "--n", "15", "--alpha", "3", "--reps", "300"],
        &["equilibrium", "--alpha", "4", "--reps", "500"],
        &["analytic-curves", "--alpha", "0.2"],
        &["reproduce-figures", "--n", "12", "--reps", "150", "--alphas", "0,2", "--svg"],
    ];
    for args in runs {
        let o = genea_sel(args, dir.path());
        assert!(o.status.success(), "{args:?}: {}{}", stdout(&o), stderr(&o));
    }
    assert_valid_cdf(&dir.path().join("simulate-moran/cdf.csv"), "empirical");
    assert_valid_cdf(&dir.path().join("analytic-curves/analytic.csv"), "neutral");
    assert_valid_cdf(&dir.path().join("analytic-curves/analytic.csv"), "upper_bound");

    let eq = read_csv_table(&dir.path().join("equilibrium/equilibrium.csv")).unwrap();
    let points: Vec<(f64, f64)> = eq.rows.iter().map(|r| (r[0], r[2])).collect();
    assert!(is_valid_cdf_table(&points));

    let fig = read_csv_table(&dir.path().join("reproduce-figures/equilibrium_cdfs.csv")).unwrap();
    for alpha in [0.0, 2.0] {
        let points: Vec<(f64, f64)> = fig.rows.iter().filter(|r| r[0] == alpha).map(|r| (r[1], r[2])).collect();
        assert!(!points.is_empty());
        assert!(is_valid_cdf_table(&points), "alpha = {alpha}");
    }
    let svg = fs::read_to_string(dir.path().join("reproduce-figures/equilibrium_cdfs.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}
