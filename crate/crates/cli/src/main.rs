//! `mitoclock`: growth fit, IMT histogram fit, rate inversion, simulation
//! and verification from the command line.
//!
//! Exit codes: 0 success, 1 numerical failure (a diagnostic JSON object is
//! printed on stdout), 2 usage or validation error.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mitoclock::fitter::DEFAULT_SEED;
use mitoclock::imt_models::parse_two_columns;
use mitoclock::inversion::InversionWarning;
use mitoclock::simulator::default_a_max;
use mitoclock::spectral::characteristic_residual;
use mitoclock::{
    best_erfc, equilibrium, equilibrium_on, fit_growth, fit_imt, gre_functional, imt_experiment, invert_imt,
    mass_check, quiescent_fraction, simulate, solve_lambda, DivisionRate, Error, FamilyKind, FitOptions,
    GrowthSeries, Histogram, InitialProfile, MassCheck, ModelFamily, SimConfig, SimOutput, TabulatedRate,
};
use serde_json::{json, Value};

use svg::{chart, Series};

const SEED_VAR: &str = "MITOCLOCK_SEED";

#[derive(Parser)]
#[command(name = "mitoclock", version, about = "Division rates from intermitotic times, and population simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit ln N(t) with a straight line to get the growth rate.
    FitGrowth(FitGrowthArgs),
    /// Reweight an IMT histogram by the growth rate and fit a model family.
    FitImt(FitImtArgs),
    /// Recover the division rate from a tabulated IMT density.
    Invert(InvertArgs),
    /// Simulate the population for one or more quiescence fractions.
    Simulate(SimulateArgs),
    /// Run a numerical self-check suite on a model.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FitGrowthArgs {
    /// CSV with columns `t,count`.
    counts: PathBuf,
    /// Restrict the fit to `LO <= t <= HI`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    window: Option<Vec<f64>>,
    /// Directory for `growth_fit.json`, `growth_line.csv` and `growth.svg`.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitImtArgs {
    /// Histogram file: one bin height per line, bin i (from 1) covering `[i dt, (i + 1) dt]`.
    histogram: PathBuf,
    /// Bin width in hours.
    #[arg(long)]
    dt: f64,
    /// Growth rate used to reweight the histogram (1/h).
    #[arg(long)]
    lambda: f64,
    /// One of `gamma1`, `gamma2`, `emg`, `erfc`, `erfc-mu`.
    #[arg(long)]
    family: FamilyKind,
    /// Number of optimizer starts.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Allowed deviation of the fitted mass from 1.
    #[arg(long, default_value_t = 0.12)]
    mass_tolerance: f64,
    /// Directory for `fit_result.json`, `model.json`, `fit_curve.csv` and `fit.svg`.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    /// CSV with columns `age,density`.
    density: PathBuf,
    /// Directory for `beta.csv` and `beta.svg`.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON (closed-form family) or `age,beta` CSV table.
    model: PathBuf,
    /// Quiescence fractions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    f: Vec<f64>,
    #[arg(long, default_value_t = 120.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    /// Death rate of proliferating cells; defaults to the model's.
    #[arg(long)]
    mu: Option<f64>,
    /// Death rate of quiescent cells; defaults to the proliferating one.
    #[arg(long)]
    mu_q: Option<f64>,
    /// Largest tracked age; defaults to where survival falls below 1e-14.
    #[arg(long)]
    a_max: Option<f64>,
    /// `equilibrium`, `truncated:T0` or `uniform:WIDTH`.
    #[arg(long, default_value = "equilibrium")]
    initial: String,
    /// Directory for per-run CSV files and `dose_sweep.svg`.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Eigen,
    Gre,
    ImtConvergence,
    Fraction,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model JSON (closed-form family) or `age,beta` CSV table.
    model: PathBuf,
    #[arg(long, value_enum)]
    suite: Suite,
    /// Labeling age window for the GRE and IMT suites (hours).
    #[arg(long, default_value_t = 10.0)]
    t0: f64,
    /// Death rate; defaults to the model's.
    #[arg(long)]
    mu: Option<f64>,
}

enum Failure {
    Usage(String),
    Numerical { message: String, details: Value },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::NonConvergence {
                evaluations,
                best_objective,
                best_parameters,
            } => Failure::Numerical {
                message,
                details: json!({
                    "kind": "non_convergence",
                    "evaluations": evaluations,
                    "best_objective": best_objective,
                    "best_parameters": best_parameters,
                }),
            },
            Error::Degenerate(_) => Failure::Numerical { message, details: json!({"kind": "degenerate"}) },
            Error::GridTooSmall(_) => Failure::Numerical { message, details: json!({"kind": "grid_too_small"}) },
            Error::GridMismatch(_) => Failure::Numerical { message, details: json!({"kind": "grid_mismatch"}) },
            _ => Failure::Usage(message),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn seed() -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Err(_) => Ok(DEFAULT_SEED),
        Ok(s) => {
            let s = s.trim();
            let parsed = match s.strip_prefix("0x") {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => s.parse(),
            };
            parsed.map_err(|_| Failure::Usage(format!("{SEED_VAR} must be an unsigned integer, got {s:?}")))
        }
    }
}

fn write_out(dir: &Option<PathBuf>, name: &str, contents: &str) -> CmdResult {
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

fn print_json(v: &Value) {
    use std::io::Write;
    // A closed pipe on stdout is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("serializable"));
}

/// Loads a division rate and the death rate carried by the model, if any.
fn load_rate(path: &Path) -> Result<(DivisionRate<f64>, f64, Option<ModelFamily<f64>>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let table = TabulatedRate::parse_csv(&text)?;
        return Ok((DivisionRate::tabulated(table), 0.0, None));
    }
    let model: ModelFamily<f64> = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: not a model JSON: {e}", path.display())))?;
    model.validate()?;
    let rate = DivisionRate::closed_form(model)?;
    Ok((rate, model.mu(), Some(model)))
}

fn cmd_fit_growth(a: FitGrowthArgs) -> CmdResult {
    let mut series = GrowthSeries::<f64>::load(&a.counts)?;
    if let Some(w) = &a.window {
        series = series.window(w[0], w[1])?;
    }
    let fit = fit_growth(&series);
    let fitted = fit.fitted_line(series.times());
    let mut csv = String::from("t,count,fitted\n");
    for ((t, n), f) in series.times().iter().zip(series.counts()).zip(&fitted) {
        csv.push_str(&format!("{t},{n},{f}\n"));
    }
    let value = serde_json::to_value(fit).map_err(Error::from)?;
    write_out(&a.out_dir, "growth_fit.json", &(serde_json::to_string_pretty(&value).map_err(Error::from)? + "\n"))?;
    write_out(&a.out_dir, "growth_line.csv", &csv)?;
    let n0 = series.counts()[0];
    let observed = series.times().iter().zip(series.counts()).map(|(t, n)| (*t, (n / n0).ln())).collect();
    let line = series.times().iter().zip(&fitted).map(|(t, f)| (*t, (f / n0).ln())).collect();
    let plot = chart(
        &format!("growth rate {:.5} /h", fit.lambda),
        "time (h)",
        "ln N(t)/N(0)",
        &[Series::points("observed", observed), Series::line("fit", line)],
    );
    write_out(&a.out_dir, "growth.svg", &plot)?;
    print_json(&value);
    Ok(())
}

fn cmd_fit_imt(a: FitImtArgs) -> CmdResult {
    let hist = Histogram::<f64>::load(&a.histogram, a.dt)?.normalize()?.reweight(a.lambda)?;
    let opts = FitOptions {
        starts: a.starts,
        seed: seed()?,
        ..FitOptions::default()
    };
    let fit = fit_imt(&hist, a.family, &opts)?;
    let check = match mass_check(&fit, a.mass_tolerance) {
        MassCheck::Pass => json!({"status": "pass"}),
        MassCheck::Warn(d) => {
            eprintln!("warning: fitted mass {:.4} deviates from 1 by {d:.4}", fit.integral_i_tilde);
            json!({"status": "warn", "deviation": d})
        }
    };
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let names = fit.model.kind().param_names();
    let params: serde_json::Map<String, Value> =
        names.iter().zip(fit.model.params()).map(|(n, v)| (n.to_string(), json!(v))).collect();
    let summary = json!({
        "family": fit.model.kind().name(),
        "parameters": params,
        "model": fit.model,
        "r_squared": fit.r_squared,
        "integral_i_tilde": fit.integral_i_tilde,
        "mass_check": check,
        "lambda_used": fit.lambda_used,
        "objective": fit.objective,
        "n_evaluations": fit.n_evaluations,
        "seed": opts.seed,
        "warnings": fit.warnings,
    });
    let ages = hist.mid_ages();
    let fitted: Vec<f64> = fit.model.i_tilde_curve(a.lambda, &ages);
    let mut csv = String::from("age,observed,fitted\n");
    for ((x, h), f) in ages.iter().zip(hist.heights()).zip(&fitted) {
        csv.push_str(&format!("{x},{h},{f}\n"));
    }
    write_out(&a.out_dir, "fit_result.json", &(serde_json::to_string_pretty(&fit).map_err(Error::from)? + "\n"))?;
    write_out(&a.out_dir, "model.json", &(serde_json::to_string_pretty(&fit.model).map_err(Error::from)? + "\n"))?;
    write_out(&a.out_dir, "fit_curve.csv", &csv)?;
    let fine: Vec<f64> = (0..=400).map(|k| k as f64 * hist.bin_width() * hist.len() as f64 / 400.0).collect();
    let plot = chart(
        &format!("{} fit, R2 = {:.5}", fit.model.kind(), fit.r_squared),
        "age (h)",
        "reweighted density",
        &[
            Series::points("histogram", ages.iter().copied().zip(hist.heights().iter().copied()).collect()),
            Series::line("model", fine.iter().copied().zip(fit.model.i_tilde_curve(a.lambda, &fine)).collect()),
        ],
    );
    write_out(&a.out_dir, "fit.svg", &plot)?;
    print_json(&summary);
    Ok(())
}

fn cmd_invert(a: InvertArgs) -> CmdResult {
    let text = fs::read_to_string(&a.density).map_err(|e| Failure::Usage(format!("{}: {e}", a.density.display())))?;
    let (ages, values) = parse_two_columns::<f64>(&text)?;
    let inv = invert_imt(&ages, &values)?;
    let mut warnings = Vec::new();
    for w in &inv.warnings {
        let msg = match w {
            InversionWarning::Truncated { last_reliable_age } => {
                format!("rate reliable only up to age {last_reliable_age}; the table ends too early")
            }
            InversionWarning::HeavyTail { last_to_peak } => {
                format!("density at the last age is {last_to_peak:.2e} of the peak; the tail beyond the table is estimated")
            }
        };
        eprintln!("warning: {msg}");
        warnings.push(msg);
    }
    let best = best_erfc(&inv.rate)?;
    write_out(&a.out_dir, "beta.csv", &inv.rate.to_csv())?;
    let model_curve = inv.rate.ages().iter().map(|x| (*x, best.beta0 * mitoclock::erfc((best.m - x) / best.sigma))).collect();
    let plot = chart(
        "division rate",
        "age (h)",
        "beta (1/h)",
        &[
            Series::line("inverted", inv.rate.ages().iter().copied().zip(inv.rate.values().iter().copied()).collect()),
            Series::line("best erfc", model_curve),
        ],
    );
    write_out(&a.out_dir, "beta.svg", &plot)?;
    print_json(&json!({
        "rows": inv.rate.ages().len(),
        "reliable_until": inv.reliable_until,
        "tail_closure": inv.tail_closure,
        "warnings": warnings,
        "best_erfc": {
            "beta0": best.beta0,
            "m": best.m,
            "sigma": best.sigma,
            "r_squared": best.distance.r_squared,
            "max_abs_err": best.distance.max_abs_err,
        },
    }));
    Ok(())
}

fn parse_initial(s: &str) -> Result<InitialProfile<f64>, Failure> {
    let bad = || Failure::Usage(format!("--initial must be equilibrium, truncated:T0 or uniform:WIDTH, got {s:?}"));
    let number = |v: &str| v.parse::<f64>().ok().filter(|x| *x > 0.0).ok_or_else(bad);
    match s.split_once(':') {
        None if s == "equilibrium" => Ok(InitialProfile::Equilibrium),
        Some(("truncated", v)) => Ok(InitialProfile::TruncatedEquilibrium { t0: number(v)? }),
        Some(("uniform", v)) => Ok(InitialProfile::Uniform { width: number(v)? }),
        _ => Err(bad()),
    }
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let (rate, model_mu, _) = load_rate(&a.model)?;
    let mu = a.mu.unwrap_or(model_mu);
    if a.f.is_empty() {
        return Err(Failure::Usage("--f needs at least one value".into()));
    }
    let initial = parse_initial(&a.initial)?;
    let a_max = match a.a_max {
        Some(v) => v,
        None => default_a_max(&rate, mu)?,
    };
    let configs: Vec<SimConfig<f64>> = a
        .f
        .iter()
        .map(|f| SimConfig {
            beta: rate.clone(),
            mu,
            mu_q: a.mu_q.unwrap_or(mu),
            f: *f,
            dt: a.dt,
            a_max,
            t_end: a.t_end,
            initial: initial.clone(),
            q0: 0.0,
            snapshots: Vec::new(),
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let lambda = solve_lambda(&rate, mu)?;
    let results: Vec<Result<SimOutput<f64>, Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || simulate(c))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut runs = Vec::new();
    let mut series = Vec::new();
    for (c, r) in configs.iter().zip(results) {
        let out = r?;
        let tag = format!("f{}", c.f);
        write_out(&a.out_dir, &format!("sim_{tag}.csv"), &out.to_csv())?;
        write_out(&a.out_dir, &format!("profile_{tag}.csv"), &out.final_profile.to_csv("p"))?;
        let n0 = out.total[0];
        let stride = (out.times.len() / 600).max(1);
        series.push(Series::line(
            format!("f = {}", c.f),
            out.times.iter().zip(&out.total).step_by(stride).map(|(t, n)| (*t, (n / n0).ln())).collect(),
        ));
        let last = out.times.len() - 1;
        runs.push(json!({
            "f": c.f,
            "final_time": out.times[last],
            "final_P": out.proliferating[last],
            "final_Q": out.quiescent[last],
            "final_N": out.total[last],
            "late_growth_rate": out.log_growth_rate(0.5 * c.t_end),
        }));
    }
    let plot = chart("dose sweep", "time (h)", "ln N(t)/N(0)", &series);
    write_out(&a.out_dir, "dose_sweep.svg", &plot)?;
    print_json(&json!({ "lambda": lambda, "mu": mu, "a_max": a_max, "dt": a.dt, "runs": runs }));
    Ok(())
}

struct Check {
    name: String,
    value: f64,
    bound: f64,
    pass: bool,
}

fn below(name: impl Into<String>, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, bound, pass: value.abs() < bound }
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let (rate, model_mu, model) = load_rate(&a.model)?;
    let mu = a.mu.unwrap_or(model_mu);
    let mut checks = Vec::new();
    let table;
    match a.suite {
        Suite::Eigen => {
            let lambda = solve_lambda(&rate, mu)?;
            checks.push(below("characteristic residual", characteristic_residual(&rate, mu, lambda)?, 1e-10));
            let delta = 1e-3;
            let shifted = solve_lambda(&rate, mu + delta)?;
            checks.push(below("death-rate shift", shifted - (lambda - delta), 1e-10));
            let eig = equilibrium(&rate, mu)?;
            checks.push(below("p_hat mass - 1", eig.p_hat_profile().integral() - 1.0, 1e-8));
            let w: Vec<f64> = eig.p_hat.iter().zip(&eig.phi).map(|(p, f)| p * f).collect();
            checks.push(below("int p_hat phi - 1", eig.grid.integrate(&w) - 1.0, 1e-6));
            checks.push(below("boundary condition", eig.boundary_residual(&rate), 1e-6));
            table = json!({ "lambda": lambda });
        }
        Suite::Gre => {
            let mut cfg = SimConfig::new(rate.clone(), mu, 0.0, 100.0)?;
            cfg.initial = InitialProfile::TruncatedEquilibrium { t0: a.t0 };
            cfg.snapshots = (0..=10).map(|k| 10.0 * k as f64).collect();
            let out = simulate(&cfg)?;
            let eig = equilibrium_on(&rate, mu, cfg.grid()?)?;
            let phi = eig.phi_profile();
            let mut values = Vec::new();
            for (t, p) in &out.snapshots {
                values.push(gre_functional(p, &phi, eig.lambda, *t)?);
            }
            let drift = values.iter().map(|v| (v / values[0] - 1.0).abs()).fold(0.0, f64::max);
            checks.push(below("GRE drift over 100 h", drift, 5e-3));
            table = json!({ "times": out.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), "functional": values });
        }
        Suite::ImtConvergence => {
            let model = model.ok_or_else(|| Failure::Usage("imt-convergence needs a closed-form model".into()))?;
            let (m, sigma) = (model.m(), model.sigma());
            let mut rows = Vec::new();
            let mut gaps = Vec::new();
            for k in [2.0, 4.0, 8.0, 15.0] {
                let horizon = a.t0 + m + k * sigma;
                let gap = imt_experiment(&rate, mu, a.t0, horizon, 0.05)?.l1_gap;
                rows.push(json!({ "T": horizon, "l1_gap": gap }));
                gaps.push(gap);
            }
            let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
            checks.push(Check {
                name: "gap decreasing in T".into(),
                value: if decreasing { 1.0 } else { 0.0 },
                bound: 1.0,
                pass: decreasing,
            });
            checks.push(below("gap at T = t0+m+15 sigma", gaps[3], 0.02));
            table = Value::Array(rows);
        }
        Suite::Fraction => {
            let mut rows = Vec::new();
            for f in [0.0, 0.3, 0.6, 0.84] {
                let mut cfg = SimConfig::new(rate.clone(), 0.0, f, 200.0)?;
                cfg.mu_q = 0.0;
                let frac = quiescent_fraction(&cfg, 200.0)?;
                checks.push(below(format!("|F - f| at f = {f}, no death"), frac - f, 1e-4));
                let with_death = if mu > 0.0 {
                    Some(quiescent_fraction(&SimConfig::new(rate.clone(), mu, f, 200.0)?, 200.0)?)
                } else {
                    None
                };
                rows.push(json!({ "f": f, "F": frac, "F_with_death": with_death }));
            }
            table = Value::Array(rows);
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        eprintln!("{} {} = {:.3e} (bound {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    let report = json!({
        "suite": match a.suite {
            Suite::Eigen => "eigen",
            Suite::Gre => "gre",
            Suite::ImtConvergence => "imt-convergence",
            Suite::Fraction => "fraction",
        },
        "pass": pass,
        "checks": checks.iter().map(|c| json!({"name": c.name, "value": c.value, "bound": c.bound, "pass": c.pass})).collect::<Vec<_>>(),
        "data": table,
    });
    if pass {
        print_json(&report);
        Ok(())
    } else {
        Err(Failure::Numerical { message: "verification failed".into(), details: report })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FitGrowth(a) => cmd_fit_growth(a),
        Command::FitImt(a) => cmd_fit_imt(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical { message, details }) => {
            eprintln!("error: {message}");
            print_json(&json!({ "status": "numerical_failure", "error": message, "details": details }));
            ExitCode::from(1)
        }
    }
}
