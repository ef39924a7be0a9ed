//! Command-line front end: scenario runs, comparisons, extraction
//! benchmarks, and Jacobian verification.
//!
//! Exit codes: 0 on success, 1 on scenario failure (contact loss, solver
//! failure, failed comparison preconditions), 2 on configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tacservo_sim::runner::{compare_runs, run_scenario, EndReason, RunMetrics};
use tacservo_sim::scenario::{demo, Scenario, DEMO_NAMES};

#[derive(Parser)]
#[command(name = "tacservo", about = "Tactile contour-following simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a JSON config and write its artifacts.
    Sim {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several configs from one scenario family and compare metrics.
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic ridge dataset and benchmark every extractor.
    BenchExtract {
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Depth-image noise sigma in meters.
        #[arg(long, default_value_t = 2e-5)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out/bench")]
        out: PathBuf,
    },
    /// Verify interaction-matrix and transition Jacobians against central
    /// finite differences.
    CheckJacobians {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run a built-in scenario by name.
    Demo {
        /// One of the shipped scenario names.
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn write_run_artifacts(
    scenario: &Scenario,
    out_root: &Path,
) -> anyhow::Result<(RunMetrics, PathBuf)> {
    let (log, metrics) = run_scenario(scenario)?;
    let dir = out_root.join(&scenario.name);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("scenario.json"), scenario.to_json())?;
    std::fs::write(dir.join("run.csv"), log.to_csv())?;
    if !log.solve_times_ms.is_empty() {
        std::fs::write(dir.join("solver.csv"), log.solver_csv())?;
    }
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    let world = scenario.world.build().expect("validated world");
    let trajectory: Vec<(f64, f64)> = log
        .rows
        .iter()
        .map(|r| (r.sensor_x, r.sensor_y))
        .collect();
    tacservo_sim::plots::emit_plots(&log, world.geometry(), &trajectory, &dir.join("plots"))?;
    Ok((metrics, dir))
}

fn print_metrics(metrics: &RunMetrics) {
    println!(
        "{}: end={:?} contact={} completion={:.2} settle={} vx10={:.4} rmse_offset={:.3e} solver={:.2}±{:.2} ms",
        metrics.scenario_name,
        metrics.end_reason,
        metrics.contact_maintained,
        metrics.completion,
        metrics
            .settling_time_s
            .map(|t| format!("{t:.2}s"))
            .unwrap_or_else(|| "-".into()),
        metrics.vx_final10_mean,
        metrics.rmse_offset_m,
        metrics.solve_time_mean_ms,
        metrics.solve_time_std_ms,
    );
}

fn run_failed(metrics: &RunMetrics) -> bool {
    matches!(
        metrics.end_reason,
        EndReason::NoContact | EndReason::SolverFailure
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(RunOutcome::Config(message)) => {
            eprintln!("config error: {message}");
            ExitCode::from(2)
        }
        Err(RunOutcome::Failure(message)) => {
            eprintln!("run failure: {message}");
            ExitCode::from(1)
        }
    }
}

enum RunOutcome {
    Config(String),
    Failure(String),
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<Scenario, RunOutcome> {
    let mut scenario = Scenario::from_file(path)
        .map_err(|e| RunOutcome::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    Ok(scenario)
}

fn run(cli: Cli) -> Result<ExitCode, RunOutcome> {
    match cli.command {
        Command::Sim { config, out, seed } => {
            let scenario = load_config(&config, seed)?;
            let (metrics, dir) = write_run_artifacts(&scenario, &out)
                .map_err(|e| RunOutcome::Failure(e.to_string()))?;
            print_metrics(&metrics);
            println!("artifacts in {}", dir.display());
            if run_failed(&metrics) {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { configs, out } => {
            let mut all = Vec::new();
            for path in &configs {
                let scenario = load_config(path, None)?;
                let (metrics, _) = write_run_artifacts(&scenario, &out)
                    .map_err(|e| RunOutcome::Failure(e.to_string()))?;
                print_metrics(&metrics);
                all.push(metrics);
            }
            let report =
                compare_runs(&all).map_err(|e| RunOutcome::Failure(e.to_string()))?;
            print!("{}", report.to_text());
            std::fs::write(
                out.join("comparison.json"),
                serde_json::to_string_pretty(&report)
                    .map_err(|e| RunOutcome::Failure(e.to_string()))?,
            )
            .map_err(|e| RunOutcome::Failure(e.to_string()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::BenchExtract {
            count,
            noise,
            seed,
            out,
        } => {
            if count == 0 {
                return Err(RunOutcome::Config("--count must be positive".into()));
            }
            if noise < 0.0 {
                return Err(RunOutcome::Config("--noise must be non-negative".into()));
            }
            let frames = tacservo_sim::bench::generate_dataset(count, noise, seed);
            let rows = tacservo_sim::bench::run_benchmark(&frames);
            print!("{}", tacservo_sim::bench::rows_to_text(&rows));
            tacservo_sim::bench::write_benchmark(&frames, &rows, &out)
                .map_err(|e| RunOutcome::Failure(e.to_string()))?;
            println!("dataset and results in {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckJacobians { seed } => {
            let report = tacservo_sim::checks::run_all(seed, 100);
            println!(
                "point interaction matrix   max rel err {:.3e}",
                report.point_max_rel_err
            );
            println!(
                "contour interaction matrix max rel err {:.3e}",
                report.contour_max_rel_err
            );
            println!(
                "filter transition matrix   max rel err {:.3e}",
                report.transition_max_rel_err
            );
            if report.all_below(1e-5) {
                println!("all checks below 1e-5");
                Ok(ExitCode::SUCCESS)
            } else {
                Err(RunOutcome::Failure("jacobian check exceeded 1e-5".into()))
            }
        }
        Command::Demo { name, out } => {
            let scenario = demo(&name).map_err(|e| {
                RunOutcome::Config(format!("{e}; known demos: {}", DEMO_NAMES.join(", ")))
            })?;
            let (metrics, dir) = write_run_artifacts(&scenario, &out)
                .map_err(|e| RunOutcome::Failure(e.to_string()))?;
            print_metrics(&metrics);
            println!("artifacts in {}", dir.display());
            if run_failed(&metrics) {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
