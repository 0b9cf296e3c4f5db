//! The experiments behind each subcommand.

use std::time::Instant;

use genea_sel::analytics::{
    equilibrium_density, equilibrium_moments, neutral_cdf, quadrature_moments, small_alpha_cdf, small_alpha_density,
    tau, upper_bound_curve, EquilibriumSampler, EquilibriumSpec,
};
use genea_sel::family::estimate_cdf_via_families;
use genea_sel::generator::{verify_image_table, verify_moment_identities, TableVariant};
use genea_sel::moran::{init_population, pair_distance_samples, InitialTypes, Tracking};
use genea_sel::rng::{derive_seed, run_replicates};
use genea_sel::sde::{thm_key_estimator, EmIntegrator, FrequencyStart, KeyEstimate, SimplexState};
use genea_sel::stats::{
    crossing_scan, default_dominance_slack, dkw_band, dominance_check, is_valid_cdf_table, mean_and_stderr,
    normal_quantile, EmpiricalCdf, Estimate,
};
use serde_json::{json, Value};

use crate::config::{linspace_step, Backend, ExperimentConfig, Fixture};
use crate::error::CliError;
use crate::output::{svg_plot, Gate, OutputDir, Series, Table};

/// Confidence level of the CI and DKW checks.
pub const CONFIDENCE: f64 = 0.99;
/// Burn-in before the observation window in equilibrium experiments.
pub const BURN_IN: f64 = 5.0;
/// Allowance for Euler bias in diffusion means checked against closed forms.
pub const SDE_ALLOWANCE: f64 = 0.01;

/// What a command hands back for the summary.
pub struct CommandResult {
    pub gates: Vec<Gate>,
    pub results: Value,
    pub phases: Vec<(String, f64)>,
}

struct Phases(Vec<(String, f64)>);

impl Phases {
    fn time<R>(&mut self, name: impl Into<String>, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.0.push((name.into(), start.elapsed().as_secs_f64()));
        r
    }
}

fn delta() -> f64 {
    1.0 - CONFIDENCE
}

/// Half-width multiplier for `k` simultaneous two-sided intervals.
fn bonferroni_z(k: usize) -> f64 {
    normal_quantile(1.0 - delta() / (2.0 * k.max(1) as f64))
}

/// `E[Σ f_i²]` at distance `h` for `n` initial singleton families without
/// selection: `1 - (1 - 1/n) e^{-h}`.
fn neutral_finite(h: f64, n: usize) -> f64 {
    1.0 - (1.0 - 1.0 / n as f64) * (-h).exp()
}

fn cdf_table(name: &str, cdf: &EmpiricalCdf<f64>, grid: &[f64], extra: &[(&str, &dyn Fn(f64) -> f64)]) -> Table {
    let band = cdf.band(delta());
    let mut columns = vec!["h", "empirical", "lower", "upper"];
    columns.extend(extra.iter().map(|(c, _)| *c));
    let mut table = Table::new(name, &columns);
    for &h in grid {
        let f = cdf.query(h);
        let mut row = vec![h, f, (f - band).max(0.0), (f + band).min(1.0)];
        row.extend(extra.iter().map(|(_, g)| g(h)));
        table.push(row);
    }
    table
}

fn cdf_gate(table: &Table) -> Gate {
    let h = table.column("h").expect("h column");
    let f = table.column("empirical").or_else(|| table.column("cdf")).expect("cdf column");
    let points: Vec<(f64, f64)> = h.into_iter().zip(f).collect();
    Gate::new(format!("{}_valid_cdf", table.name), is_valid_cdf_table(&points), format!("{} rows", points.len()))
}

pub fn simulate_moran(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let mut phases = Phases(Vec::new());
    let params = cfg.model()?;
    let samples = phases
        .time("simulate", || pair_distance_samples(&params, cfg.t, cfg.reps, cfg.seed, InitialTypes::Bernoulli))?;
    let cdf = EmpiricalCdf::new(samples)?;
    let grid = cfg.grid_or(|| linspace_step(0.0, cfg.t, cfg.t / 40.0));
    let t = cfg.t;
    let table = cdf_table("cdf", &cdf, &grid, &[("neutral", &|h| neutral_cdf(h, t))]);
    out.write_table(&table)?;
    let mut distances = Table::new("distances", &["distance"]);
    for &s in cdf.samples() {
        distances.push(vec![s]);
    }
    out.write_table(&distances)?;

    let band = cdf.band(delta());
    // Never-merged pairs sit at exactly T; compare on [0, T).
    let sup = cdf.sup_distance_on(0.0, t * (1.0 - 1e-12), |h| 1.0 - (-h).exp());
    let mut gates = vec![cdf_gate(&table)];
    if cfg.alpha == 0.0 {
        gates.push(Gate::new(
            "neutral_law",
            sup <= band,
            format!("sup |F - (1 - e^-h)| = {sup:.4}, DKW band {band:.4}"),
        ));
    }
    Ok(CommandResult {
        gates,
        results: json!({
            "replicates": cdf.len(),
            "mean": cdf.mean(),
            "stderr": cdf.stderr(),
            "dkw_band": band,
            "sup_distance_to_exponential": sup,
        }),
        phases: phases.0,
    })
}

pub fn simulate_families(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let mut phases = Phases(Vec::new());
    let params = cfg.model()?;
    let grid = cfg.grid_or(|| linspace_step(0.25, 2.0, 0.25));
    let mut table = Table::new("family_estimates", &["h", "estimate", "stderr", "neutral"]);
    let z = bonferroni_z(grid.len());
    let mut worst = 0.0_f64;
    for (k, &h) in grid.iter().enumerate() {
        let est = phases.time(format!("h={h}"), || {
            estimate_cdf_via_families(&params, cfg.t, h, cfg.reps, derive_seed(cfg.seed, k as u64))
        })?;
        let neutral = neutral_finite(h, cfg.n);
        worst = worst.max((est.mean - neutral).abs() / (z * est.stderr).max(1e-300));
        table.push(vec![h, est.mean, est.stderr, neutral]);
    }
    out.write_table(&table)?;
    let mut gates = Vec::new();
    if cfg.alpha == 0.0 {
        gates.push(Gate::new(
            "neutral_identity",
            worst <= 1.0,
            format!("max |estimate - neutral| / CI half-width = {worst:.3}"),
        ));
    }
    Ok(CommandResult { gates, results: json!({ "estimates": table.rows }), phases: phases.0 })
}

fn sde_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let grid = cfg.grid_or(|| linspace_step(0.25, cfg.t, 0.25).into_iter().filter(|&h| h < cfg.t).collect());
    if grid.iter().any(|&h| !(h > 0.0 && h < cfg.t)) {
        return Err(CliError::Config(format!("diffusion grid needs 0 < h < T = {}", cfg.t)));
    }
    Ok(grid)
}

pub fn simulate_sde(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let mut phases = Phases(Vec::new());
    let grid = sde_grid(cfg)?;
    let mut table = Table::new("sde_estimates", &["h", "phi1", "phi1_stderr", "phi2", "phi2_stderr", "neutral"]);
    let mut fallbacks = 0;
    let z = bonferroni_z(grid.len());
    let mut worst = 0.0_f64;
    for (k, &h) in grid.iter().enumerate() {
        let mut sde = cfg.sde(cfg.families)?;
        sde.seed = derive_seed(cfg.seed, k as u64);
        let est: KeyEstimate<f64> = phases
            .time(format!("h={h}"), || thm_key_estimator(&sde, cfg.t, h, FrequencyStart::Scalar { y0: cfg.p0 }))?;
        fallbacks += est.fallbacks;
        let neutral = neutral_finite(h, cfg.families);
        worst = worst.max((est.phi1.mean - neutral).abs() - z * est.phi1.stderr);
        table.push(vec![h, est.phi1.mean, est.phi1.stderr, est.phi2.mean, est.phi2.stderr, neutral]);
    }
    out.write_table(&table)?;
    let mut gates = Vec::new();
    if cfg.alpha == 0.0 {
        gates.push(Gate::new(
            "neutral_moment",
            worst <= SDE_ALLOWANCE,
            format!("max excess over CI half-width = {worst:.4} (allowance {SDE_ALLOWANCE})"),
        ));
    }
    Ok(CommandResult {
        gates,
        results: json!({ "estimates": table.rows, "noise_fallbacks": fallbacks }),
        phases: phases.0,
    })
}

pub fn equilibrium(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let mut phases = Phases(Vec::new());
    let spec = EquilibriumSpec::new(cfg.alpha, cfg.theta0, cfg.theta1)?;
    let sampler = phases.time("tabulate", || EquilibriumSampler::new(spec))?;
    let cells = 200;
    let mut table = Table::new("equilibrium", &["x", "density", "cdf"]);
    for k in 0..cells {
        let x = (k as f64 + 0.5) / cells as f64;
        table.push(vec![x, equilibrium_density(x, &spec)?, sampler.cdf(x)]);
    }
    out.write_table(&table)?;
    let moments = equilibrium_moments(cfg.alpha, cfg.theta0, cfg.theta1)?;
    let (q1, q2) = quadrature_moments(&spec)?;
    let draws: Vec<f64> =
        phases.time("sample", || run_replicates(cfg.reps, cfg.seed, |_, rng| 1.0 - sampler.sample(rng)));
    let (mean, se) = mean_and_stderr(&draws);
    let z = (mean - moments.m1).abs() / se.max(1e-300);
    let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[2])).collect();
    let mut gates = vec![
        Gate::new("equilibrium_valid_cdf", is_valid_cdf_table(&points), format!("{cells} rows")),
        Gate::new("sampler_mean", z <= 3.0, format!("|mean - m1| / stderr = {z:.2}")),
    ];
    if moments.closed_form {
        let err = (moments.m1 - q1).abs().max((moments.m2 - q2).abs());
        gates.push(Gate::new("closed_form_vs_quadrature", err <= 1e-9, format!("max error {err:.2e}")));
    }
    Ok(CommandResult {
        gates,
        results: json!({
            "moments": moments,
            "quadrature": { "m1": q1, "m2": q2 },
            "sampler": { "draws": draws.len(), "mean_one_minus_ybar": mean, "stderr": se },
        }),
        phases: phases.0,
    })
}

pub fn analytic_curves(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let grid = cfg.grid_or(|| linspace_step(0.0, 6.0, 0.05));
    let alpha = cfg.alpha;
    let mut columns = vec!["h", "neutral", "small_alpha_cdf", "small_alpha_density", "tau"];
    if alpha > 0.0 {
        columns.push("upper_bound");
    }
    let mut table = Table::new("analytic", &columns);
    for &h in &grid {
        let mut row =
            vec![h, 1.0 - (-h).exp(), small_alpha_cdf(h, alpha).value, small_alpha_density(h, alpha).value, tau(h)];
        if alpha > 0.0 {
            row.push(upper_bound_curve(h, alpha, cfg.theta0)?);
        }
        table.push(row);
    }
    out.write_table(&table)?;
    let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[1])).collect();
    Ok(CommandResult {
        gates: vec![Gate::new("neutral_valid_cdf", is_valid_cdf_table(&points), format!("{} rows", points.len()))],
        results: json!({
            "small_alpha_within_validity": small_alpha_cdf(0.0, alpha).within_validity,
            "upper_bound_theta": cfg.theta0,
        }),
        phases: Vec::new(),
    })
}

pub fn verify_generators(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let args = cfg.verify.clone().expect("verify arguments");
    let variant = match args.fixture {
        Fixture::Corrected => TableVariant::Corrected,
        Fixture::Misprinted => TableVariant::Misprinted,
    };
    let mut phases = Phases(Vec::new());
    let mut report = String::new();
    let mut gates = Vec::new();
    let mut counts = (0usize, 0usize);
    for n in 2..=args.max_families {
        let table = phases.time(format!("table n={n}"), || verify_image_table(n, n as u32, variant))?;
        let moments = phases.time(format!("moments n={n}"), || verify_moment_identities(n))?;
        report += &table.to_string();
        let names = genea_sel::generator::Layout::new(n)?.names();
        for c in &moments {
            if c.passed() {
                report += &format!("ok    {}\n", c.label);
            } else {
                report += &format!("FAIL  {}: difference {}\n", c.label, c.difference.display_with(&names));
            }
        }
        counts.0 += table.checks.len();
        counts.1 += moments.len();
        let failed: Vec<String> = table
            .failures()
            .map(|c| c.label.clone())
            .chain(moments.iter().filter(|c| !c.passed()).map(|c| c.label.clone()))
            .collect();
        gates.push(Gate::new(
            format!("generator_identities_n{n}"),
            failed.is_empty(),
            if failed.is_empty() {
                "all zero".to_string()
            } else {
                format!("nonzero difference: {}", failed.join(", "))
            },
        ));
    }
    out.write_text("report.txt", &report)?;
    for line in report.lines().filter(|l| l.starts_with("FAIL")) {
        eprintln!("{line}");
    }
    Ok(CommandResult {
        gates,
        results: json!({ "table_checks": counts.0, "moment_checks": counts.1, "fixture": args.fixture }),
        phases: phases.0,
    })
}

pub fn compare(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let args = cfg.compare.clone().expect("compare arguments");
    let mut phases = Phases(Vec::new());
    let params = cfg.model()?;
    let grid = cfg.grid_or(|| vec![0.5, 1.0, 2.0]);
    if grid.iter().any(|&h| h <= 0.0) {
        return Err(CliError::Config("compare needs h > 0".into()));
    }
    let z = bonferroni_z(grid.len());
    let mut table = Table::new(
        "compare",
        &[
            "h",
            "matrix",
            "matrix_stderr",
            "family",
            "family_stderr",
            "sde",
            "sde_stderr",
            "neutral_matrix",
            "neutral_sde",
        ],
    );
    let mut identity_ok = true;
    let mut neutral_ok = true;
    let mut matrix_means = Vec::new();
    for (k, &h) in grid.iter().enumerate() {
        let t_end = cfg.t + h;
        let values = phases.time(format!("matrix h={h}"), || {
            run_replicates(cfg.reps, derive_seed(cfg.seed, 3 * k as u64), |_, rng| {
                let mut s = init_population(&params, rng, Tracking::MATRIX).expect("validated");
                s.run_until(&params, t_end, rng).expect("forward in time");
                s.full_matrix_fraction_within(h)
            })
        });
        let matrix = Estimate::from_samples(&values);
        let family = phases.time(format!("family h={h}"), || {
            estimate_cdf_via_families(&params, cfg.t, h, cfg.reps, derive_seed(cfg.seed, 3 * k as u64 + 1))
        })?;
        let mut sde_cfg = cfg.sde(cfg.families)?;
        sde_cfg.seed = derive_seed(cfg.seed, 3 * k as u64 + 2);
        let sde = phases.time(format!("sde h={h}"), || {
            thm_key_estimator(&sde_cfg, t_end, h, FrequencyStart::Scalar { y0: cfg.p0 })
        })?;
        identity_ok &= (matrix.mean - family.mean).abs() <= z * (matrix.stderr + family.stderr);
        let (nm, ns) = (neutral_finite(h, cfg.n), neutral_finite(h, cfg.families));
        if cfg.alpha == 0.0 {
            neutral_ok &= (matrix.mean - nm).abs() <= z * matrix.stderr
                && (family.mean - nm).abs() <= z * family.stderr
                && (sde.phi1.mean - ns).abs() <= z * sde.phi1.stderr + SDE_ALLOWANCE;
        }
        matrix_means.push(matrix.mean);
        table.push(vec![
            h,
            matrix.mean,
            matrix.stderr,
            family.mean,
            family.stderr,
            sde.phi1.mean,
            sde.phi1.stderr,
            nm,
            ns,
        ]);
    }
    out.write_table(&table)?;
    let mut gates = vec![Gate::new(
        "matrix_vs_family",
        identity_ok,
        format!("all gaps within combined {:.0}% CIs (Bonferroni over {} points)", CONFIDENCE * 100.0, grid.len()),
    )];
    if cfg.alpha == 0.0 {
        gates.push(Gate::new(
            "neutral_all_three",
            neutral_ok,
            "each estimator within CI of its finite-size neutral value",
        ));
    }

    let mut sweep = Table::new("sde_sweep", &["families", "h", "phi1", "phi1_stderr", "gap_to_matrix"]);
    let mut mean_gaps = Vec::new();
    for (j, &n) in args.sweep.iter().enumerate() {
        let mut total = 0.0;
        for (k, &h) in grid.iter().enumerate() {
            let mut sde_cfg = cfg.sde(n)?;
            sde_cfg.seed = derive_seed(cfg.seed, 1000 + (j * grid.len() + k) as u64);
            let est = phases.time(format!("sweep n={n} h={h}"), || {
                thm_key_estimator(&sde_cfg, cfg.t + h, h, FrequencyStart::Scalar { y0: cfg.p0 })
            })?;
            let gap = (est.phi1.mean - matrix_means[k]).abs();
            total += gap;
            sweep.push(vec![n as f64, h, est.phi1.mean, est.phi1.stderr, gap]);
        }
        mean_gaps.push(total / grid.len() as f64);
    }
    if !args.sweep.is_empty() {
        out.write_table(&sweep)?;
    }
    let shrinking = mean_gaps.windows(2).all(|w| w[1] <= w[0]);
    Ok(CommandResult {
        gates,
        results: json!({
            "estimates": table.rows,
            "sweep_families": args.sweep,
            "sweep_mean_gaps": mean_gaps,
            "sweep_gap_shrinks": shrinking,
        }),
        phases: phases.0,
    })
}

/// One alpha's equilibrium CDF on the grid, with pointwise half-widths.
struct Curve {
    alpha: f64,
    values: Vec<f64>,
    half_widths: Vec<f64>,
    mean_r: Estimate<f64>,
    samples: Option<EmpiricalCdf<f64>>,
}

fn moran_curve(cfg: &ExperimentConfig, alpha: f64, grid: &[f64], h_max: f64, seed: u64) -> Result<Curve, CliError> {
    let spec = EquilibriumSpec::new(alpha, cfg.theta0, cfg.theta1)?;
    let sampler = EquilibriumSampler::new(spec)?;
    let params = cfg.model_with_alpha(alpha)?;
    let samples = pair_distance_samples(&params, BURN_IN + h_max, cfg.reps, seed, InitialTypes::Stationary(&sampler))?;
    let cdf = EmpiricalCdf::new(samples)?;
    let band = cdf.band(delta());
    Ok(Curve {
        alpha,
        values: grid.iter().map(|&h| cdf.query(h)).collect(),
        half_widths: vec![band; grid.len()],
        mean_r: Estimate::from_samples(cdf.samples()),
        samples: Some(cdf),
    })
}

/// Stationary start, one path per replicate, `φ1` recorded along the grid.
fn sde_curve(cfg: &ExperimentConfig, alpha: f64, grid: &[f64], seed: u64) -> Result<Curve, CliError> {
    let spec = EquilibriumSpec::new(alpha, cfg.theta0, cfg.theta1)?;
    let sampler = EquilibriumSampler::new(spec)?;
    let mut sde = cfg.sde_with(cfg.families, alpha)?;
    sde.seed = seed;
    let n = cfg.families;
    let paths = run_replicates(cfg.reps, seed, |_, rng| {
        let ybar = sampler.sample(rng);
        let mut state = SimplexState::uniform_families(n, ybar).expect("frequency in [0, 1]");
        let mut em = EmIntegrator::new(sde.clone()).expect("validated");
        let mut now = 0.0;
        grid.iter()
            .map(|&h| {
                if h > now {
                    em.run(&mut state, h - now, rng);
                    now = h;
                }
                state.observables().0
            })
            .collect::<Vec<f64>>()
    });
    let z = normal_quantile(1.0 - delta() / 2.0);
    let mut values = Vec::with_capacity(grid.len());
    let mut half_widths = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let column: Vec<f64> = paths.iter().map(|p| p[k]).collect();
        let (m, se) = mean_and_stderr(&column);
        values.push(m);
        half_widths.push(z * se);
    }
    // E[R] on [0, h_max] from the curve by the trapezoid rule.
    let mut mean = 0.0;
    let mut prev = (0.0, 1.0 / n as f64);
    for (&h, &f) in grid.iter().zip(&values) {
        mean += 0.5 * (h - prev.0) * ((1.0 - f) + (1.0 - prev.1));
        prev = (h, f);
    }
    Ok(Curve {
        alpha,
        values,
        half_widths,
        mean_r: Estimate { mean, stderr: f64::NAN, count: cfg.reps },
        samples: None,
    })
}

pub fn reproduce_figures(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<CommandResult, CliError> {
    let args = cfg.figures.clone().expect("figure arguments");
    if cfg.theta0 != cfg.theta1 {
        return Err(CliError::Config("figures use a symmetric mutation rate; set theta0 = theta1".into()));
    }
    let theta = cfg.theta0;
    let mut alphas = args.alphas.clone();
    alphas.push(0.0);
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let grid = cfg.grid_or(|| match cfg.backend {
        Backend::Moran => linspace_step(0.0, 5.0, 0.05),
        Backend::Sde => linspace_step(0.25, 5.0, 0.25),
    });
    let h_max = *grid.last().expect("nonempty grid");
    let mut phases = Phases(Vec::new());
    let mut curves = Vec::new();
    for (k, &alpha) in alphas.iter().enumerate() {
        let seed = derive_seed(cfg.seed, k as u64);
        let curve = phases.time(format!("alpha={alpha}"), || match cfg.backend {
            Backend::Moran => moran_curve(cfg, alpha, &grid, h_max, seed),
            Backend::Sde => sde_curve(cfg, alpha, &grid, seed),
        })?;
        curves.push(curve);
    }

    let t_total = BURN_IN + h_max;
    // Diffusion curves are pointwise moment estimates, not empirical CDFs.
    let (name, value) = match cfg.backend {
        Backend::Moran => ("equilibrium_cdfs", "cdf"),
        Backend::Sde => ("equilibrium_moments", "phi1"),
    };
    let mut long = Table::new(name, &["alpha", "h", value, "half_width", "neutral", "upper_bound"]);
    for c in &curves {
        for (k, &h) in grid.iter().enumerate() {
            let upper = if c.alpha > 0.0 { upper_bound_curve(h, c.alpha, theta)? } else { f64::NAN };
            long.push(vec![c.alpha, h, c.values[k], c.half_widths[k], neutral_cdf(h, t_total), upper]);
        }
    }
    out.write_table(&long)?;
    let mut fig4 = Table::new("mean_distance", &["alpha", "mean_r", "stderr"]);
    for c in &curves {
        fig4.push(vec![c.alpha, c.mean_r.mean, c.mean_r.stderr]);
    }
    out.write_table(&fig4)?;

    let mut gates = Vec::new();
    if cfg.backend == Backend::Moran {
        for c in &curves {
            let points: Vec<(f64, f64)> = grid.iter().copied().zip(c.values.iter().copied()).collect();
            gates.push(Gate::new(
                format!("equilibrium_cdfs_valid_alpha_{}", c.alpha),
                is_valid_cdf_table(&points),
                format!("{} rows", points.len()),
            ));
        }
    }
    let base = &curves[0];
    let mut verdicts = Vec::new();
    for c in curves.iter().skip(1) {
        let (pass, violation, slack) = match (&c.samples, &base.samples) {
            (Some(f), Some(g)) => {
                let v = dominance_check(f, g, default_dominance_slack(f.len(), g.len(), delta()));
                (v.pass, v.max_violation, v.slack)
            }
            _ => {
                let mut worst = f64::NEG_INFINITY;
                let mut pass = true;
                for k in 0..grid.len() {
                    let excess = base.values[k] - c.values[k];
                    let slack = 2.0 * (base.half_widths[k] + c.half_widths[k]);
                    worst = worst.max(excess);
                    pass &= excess <= slack;
                }
                (pass, worst, f64::NAN)
            }
        };
        verdicts.push(json!({ "alpha": c.alpha, "pass": pass, "max_violation": violation, "slack": slack }));
        gates.push(Gate::new(format!("dominance_alpha_{}", c.alpha), pass, format!("max violation {violation:.4}")));
        if c.alpha >= 5.0 {
            let worst = match &c.samples {
                Some(f) => {
                    f.excess_on(0.0, h_max, |h| upper_bound_curve(h, c.alpha, theta).expect("alpha > 0")).0
                        - f.band(delta())
                }
                None => grid
                    .iter()
                    .enumerate()
                    .map(|(k, &h)| {
                        c.values[k] - upper_bound_curve(h, c.alpha, theta).expect("alpha > 0") - c.half_widths[k]
                    })
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            gates.push(Gate::new(
                format!("upper_bound_alpha_{}", c.alpha),
                worst <= 0.0,
                format!("max excess over upper curve + band {worst:.4}"),
            ));
        }
    }
    if base.samples.is_some() {
        let expected = 1.0 - (-t_total).exp();
        let z = normal_quantile(1.0 - delta() / 2.0);
        let gap = (base.mean_r.mean - expected).abs();
        gates.push(Gate::new(
            "neutral_mean_r",
            gap <= z * base.mean_r.stderr,
            format!("E[R] = {:.4} vs 1 - e^-T = {expected:.4}", base.mean_r.mean),
        ));
    }
    let crossings: Vec<Value> = curves
        .windows(2)
        .filter_map(|w| match (&w[0].samples, &w[1].samples) {
            (Some(f), Some(g)) => {
                let band = dkw_band(f.len(), delta()) + dkw_band(g.len(), delta());
                Some(json!({ "alphas": [w[0].alpha, w[1].alpha], "crossings": crossing_scan(f, g, band) }))
            }
            _ => None,
        })
        .collect();

    if args.svg {
        let pts: Vec<Vec<(f64, f64)>> =
            curves.iter().map(|c| grid.iter().copied().zip(c.values.iter().copied()).collect()).collect();
        let series: Vec<Series<'_>> =
            curves.iter().zip(&pts).map(|(c, p)| Series { label: format!("alpha={}", c.alpha), points: p }).collect();
        out.write_text("equilibrium_cdfs.svg", &svg_plot("Distance CDF at equilibrium", "h", "P(R <= h)", &series))?;
        let means: Vec<(f64, f64)> = curves.iter().map(|c| (c.alpha, c.mean_r.mean)).collect();
        let series = [Series { label: "E[R]".into(), points: &means }];
        out.write_text("mean_distance.svg", &svg_plot("Expected distance", "alpha", "E[R]", &series))?;
    }
    Ok(CommandResult {
        gates,
        results: json!({
            "backend": cfg.backend,
            "alphas": alphas,
            "horizon": t_total,
            "dominance": verdicts,
            "crossings": crossings,
            "mean_r": fig4.rows,
        }),
        phases: phases.0,
    })
}
