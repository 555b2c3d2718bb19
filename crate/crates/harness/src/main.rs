//! `halypo` CLI: run configured experiments, sweep seeds, plot saved
//! trajectories, and execute the validation suites.
//!
//! Exit codes: 0 success, 1 check or runtime-step failure, 2 config error,
//! 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use halypo_core::StepRecord;
use halypo_harness::config::{ConfigError, RunConfig};
use halypo_harness::persist::{self, PersistError};
use halypo_harness::plot::{render_plot, PlotConfig, PlotError, Series};
use halypo_harness::runner::{run_experiment, sweep, HarnessError};
use halypo_harness::validate::run_suite;

const EXIT_OK: u8 = 0;
const EXIT_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "halypo",
    version,
    about = "Gap-projection experiments on analytic multi-agent games"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment from a JSON config.
    Run {
        /// Path to the run config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; writes trajectory.csv, log.json, and v.svg
        /// there, overriding any paths in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run one config across theta0 seeds 0..n and aggregate.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds.
        #[arg(long)]
        seeds: usize,
        /// Where to write the report JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot one column of saved trajectory CSVs as an SVG.
    Plot {
        /// Trajectory CSV; repeat for one series per file.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Column to plot: V, eta, lambda, d_norm, cos_phi, or J_team.
        #[arg(long, default_value = "V")]
        series: String,
        /// Log-scale the y axis (non-positive points are dropped).
        #[arg(long)]
        logy: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a validation suite and report each check.
    Validate {
        /// projection, gradients, descent, convergence, metrics, or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Optional path for the report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_for(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Config(ConfigError::Io { .. }) => EXIT_IO,
        HarnessError::Config(_) => EXIT_CONFIG,
        HarnessError::Persist(PersistError::Io { .. }) => EXIT_IO,
        HarnessError::Persist(_) => EXIT_CONFIG,
        HarnessError::Plot(_) => EXIT_CONFIG,
        HarnessError::Run(_) => EXIT_CHECK,
    }
}

fn fail(err: &HarnessError) -> u8 {
    eprintln!("error: {err}");
    exit_for(err)
}

/// V-versus-step plot; falls back to a linear axis when the gap hits exact
/// zero too often for a log scale.
fn v_plot(records: &[StepRecord], final_v: f64, final_k: usize) -> Result<String, PlotError> {
    let mut points: Vec<(f64, f64)> = records.iter().map(|r| (r.k as f64, r.v)).collect();
    points.push((final_k as f64, final_v));
    let series = [Series { name: "V".into(), points }];
    let cfg = PlotConfig {
        title: "rationality gap".into(),
        y_label: "V".into(),
        log_y: true,
        ..PlotConfig::default()
    };
    match render_plot(&series, &cfg) {
        Err(PlotError::TooFewPoints { .. }) => {
            render_plot(&series, &PlotConfig { log_y: false, ..cfg })
        }
        other => other,
    }
}

fn cmd_run(config_path: &PathBuf, out: Option<&PathBuf>) -> u8 {
    let config = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return fail(&HarnessError::Config(e)),
    };
    let (csv, json, svg) = match out {
        Some(dir) => {
            if let Err(source) = std::fs::create_dir_all(dir) {
                eprintln!("error: could not create {}: {source}", dir.display());
                return EXIT_IO;
            }
            (
                Some(dir.join("trajectory.csv")),
                Some(dir.join("log.json")),
                Some(dir.join("v.svg")),
            )
        }
        None => (
            config.output.csv.clone(),
            config.output.json.clone(),
            config.output.svg.clone(),
        ),
    };

    let (log, wall) = match run_experiment(&config) {
        Ok(ok) => ok,
        Err(HarnessError::Run(failure)) => {
            eprintln!("error: {failure}");
            if let Some(path) = &csv {
                match persist::write_csv(path, &failure.partial.records) {
                    Ok(()) => eprintln!("partial trajectory written to {}", path.display()),
                    Err(e) => eprintln!("error: could not persist partial trajectory: {e}"),
                }
            }
            return EXIT_CHECK;
        }
        Err(e) => return fail(&e),
    };

    println!("fingerprint: {}", log.fingerprint);
    println!("steps: {} ({} recorded)", config.n_steps, log.records.len());
    println!("final V: {:.6e}", log.final_v);
    println!("steady-state V: {:.6e}", log.summary.steady_state_v);
    match log.summary.convergence_step {
        Some(k) => println!("convergence step: {k}"),
        None => println!("convergence step: not reached"),
    }
    println!("field evaluations: {}", log.field_evals);
    println!("wall time: {:.3} ms", wall.as_secs_f64() * 1e3);

    if let Some(path) = &csv {
        if let Err(e) = persist::write_csv(path, &log.records) {
            return fail(&HarnessError::Persist(e));
        }
        println!("wrote {}", path.display());
    }
    if let Some(path) = &json {
        if let Err(e) = persist::write_json(path, &log) {
            return fail(&HarnessError::Persist(e));
        }
        println!("wrote {}", path.display());
    }
    if let Some(path) = &svg {
        let svg_text = match v_plot(&log.records, log.final_v, config.n_steps) {
            Ok(s) => s,
            Err(e) => return fail(&HarnessError::Plot(e)),
        };
        if let Err(source) = std::fs::write(path, svg_text) {
            eprintln!("error: could not write {}: {source}", path.display());
            return EXIT_IO;
        }
        println!("wrote {}", path.display());
    }
    EXIT_OK
}

fn fmt_mean_std(m: &Option<halypo_harness::runner::MeanStd>) -> String {
    match m {
        Some(m) => format!("{:.6e} +- {:.3e} (n={})", m.mean, m.std, m.n),
        None => "undefined".into(),
    }
}

fn cmd_sweep(config_path: &PathBuf, n_seeds: usize, out: Option<&PathBuf>) -> u8 {
    if n_seeds == 0 {
        eprintln!("error: --seeds must be at least 1");
        return EXIT_CONFIG;
    }
    let config = match RunConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return fail(&HarnessError::Config(e)),
    };
    let seeds: Vec<u64> = (0..n_seeds as u64).collect();
    let report = match sweep(&config, &seeds) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };

    println!("base fingerprint: {}", report.base_fingerprint);
    println!("seeds: {n_seeds}, failures: {}", report.n_failures);
    if let Some(agg) = &report.aggregate {
        println!("steady-state V: {}", fmt_mean_std(&Some(agg.steady_state_v)));
        println!("mean alignment: {}", fmt_mean_std(&agg.mean_alignment));
        println!("conflict rate:  {}", fmt_mean_std(&Some(agg.gcr)));
        println!("gap decay rate: {}", fmt_mean_std(&agg.gap_decay_rate));
        println!("converged: {}/{}", agg.converged, agg.n_runs);
    }
    match out {
        Some(path) => {
            if let Err(e) = persist::write_json(path, &report) {
                return fail(&HarnessError::Persist(e));
            }
            println!("wrote {}", path.display());
        }
        None => match persist::json_string(&report) {
            Ok(text) => print!("{text}"),
            Err(e) => return fail(&HarnessError::Persist(e)),
        },
    }
    if report.n_failures > 0 {
        EXIT_CHECK
    } else {
        EXIT_OK
    }
}

fn column(records: &[StepRecord], name: &str) -> Option<Vec<(f64, f64)>> {
    let pick: fn(&StepRecord) -> Option<f64> = match name {
        "V" => |r| Some(r.v),
        "eta" => |r| Some(r.eta),
        "lambda" => |r| Some(r.lambda_star),
        "d_norm" => |r| Some(r.d_norm),
        "cos_phi" => |r| r.cos_phi,
        "J_team" => |r| Some(r.j_team),
        _ => return None,
    };
    Some(records.iter().filter_map(|r| pick(r).map(|y| (r.k as f64, y))).collect())
}

fn cmd_plot(inputs: &[PathBuf], series_name: &str, logy: bool, out: &PathBuf) -> u8 {
    let mut series = Vec::new();
    for path in inputs {
        let records = match persist::load_csv(path) {
            Ok(r) => r,
            Err(e) => return fail(&HarnessError::Persist(e)),
        };
        let points = match column(&records, series_name) {
            Some(p) => p,
            None => {
                eprintln!(
                    "error: unknown column {series_name:?}; choose from V, eta, lambda, d_norm, cos_phi, J_team"
                );
                return EXIT_CONFIG;
            }
        };
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        series.push(Series {
            name: stem.unwrap_or_else(|| series_name.to_string()),
            points,
        });
    }
    let cfg = PlotConfig {
        title: series_name.to_string(),
        y_label: series_name.to_string(),
        log_y: logy,
        ..PlotConfig::default()
    };
    let svg = match render_plot(&series, &cfg) {
        Ok(s) => s,
        Err(e) => return fail(&HarnessError::Plot(e)),
    };
    if let Err(source) = std::fs::write(out, svg) {
        eprintln!("error: could not write {}: {source}", out.display());
        return EXIT_IO;
    }
    println!("wrote {}", out.display());
    EXIT_OK
}

fn cmd_validate(suite: &str, out: Option<&PathBuf>) -> u8 {
    let report = match run_suite(suite) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}::{} - {}", c.suite, c.name, c.detail);
    }
    println!("{}/{} checks passed", report.n_passed, report.n_passed + report.n_failed);
    if let Some(path) = out {
        if let Err(e) = persist::write_json(path, &report) {
            return fail(&HarnessError::Persist(e));
        }
        println!("wrote {}", path.display());
    }
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_CHECK
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("HALYPO_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // Ignore the error when a pool already exists (e.g. repeated
                // in-process invocations under tests).
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: HALYPO_THREADS={threads} is not a positive integer; ignored"),
        }
    }
    let cli = Cli::parse();
    let code = match &cli.cmd {
        Cmd::Run { config, out } => cmd_run(config, out.as_ref()),
        Cmd::Sweep { config, seeds, out } => cmd_sweep(config, *seeds, out.as_ref()),
        Cmd::Plot { input, series, logy, out } => cmd_plot(input, series, *logy, out),
        Cmd::Validate { suite, out } => cmd_validate(suite, out.as_ref()),
    };
    ExitCode::from(code)
}
