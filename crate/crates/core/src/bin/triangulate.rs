use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use triangulation::batch::run_batch;
use triangulation::dataset::{self, Dataset, VGG_MISSING};
use triangulation::finite_diff::{self, DerivativeAudit};
use triangulation::initializer::initialize;
use triangulation::report::{emit_report, examples_table, run_examples, ReportFormat};
use triangulation::{Method, SolveStatus, SolverConfig};

#[derive(Parser)]
#[command(name = "triangulate", version, about = "Multi-view L2 triangulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate every track of a native problem file.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "gn_line_search")]
        method: Method,
        #[arg(long, default_value = "table")]
        report: ReportFormat,
    },
    /// Triangulate a VGG-style dataset (one camera file per view plus a point matrix).
    Batch {
        /// Glob matching the camera files; they are taken in sorted path order.
        #[arg(long)]
        cameras: String,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value = "gn_line_search")]
        method: Method,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "table")]
        report: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Coordinate value marking a missing view.
        #[arg(long, default_value_t = VGG_MISSING, allow_hyphen_values = true)]
        sentinel: f64,
    },
    /// Solve the four synthetic examples (SA2, SA3, SA4, Con).
    Examples {
        #[arg(long, default_value = "gn_line_search")]
        method: Method,
    },
    /// Compare analytic derivatives with central differences at each track's
    /// symmedian point.
    CheckDerivatives {
        #[arg(long)]
        problem: PathBuf,
    },
}

const EXIT_TRACK_FAILURE: u8 = 1;
const EXIT_INPUT_ERROR: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { problem, method, report } => {
            let dataset = match dataset::load_native_problem(&problem) {
                Ok(d) => d,
                Err(e) => return input_error(e),
            };
            batch(&dataset, method, 1, report, None)
        }
        Command::Batch {
            cameras,
            points,
            method,
            jobs,
            report,
            out,
            sentinel,
        } => {
            if jobs == 0 {
                return input_error("--jobs must be at least 1");
            }
            let files = match camera_files(&cameras) {
                Ok(f) => f,
                Err(e) => return input_error(e),
            };
            let dataset = match dataset::parse_vgg_dataset(&files, &points, sentinel) {
                Ok(d) => d,
                Err(e) => return input_error(e),
            };
            batch(&dataset, method, jobs, report, out)
        }
        Command::Examples { method } => {
            let start = Instant::now();
            let rows = run_examples(&SolverConfig::with_method(method));
            print!("{}", examples_table(&rows));
            println!("elapsed {:.6} s", start.elapsed().as_secs_f64());
            if rows.iter().all(|r| r.status == SolveStatus::Converged) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_TRACK_FAILURE)
            }
        }
        Command::CheckDerivatives { problem } => {
            let dataset = match dataset::load_native_problem(&problem) {
                Ok(d) => d,
                Err(e) => return input_error(e),
            };
            check_derivatives(&dataset)
        }
    }
}

fn input_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INPUT_ERROR)
}

fn camera_files(pattern: &str) -> Result<Vec<PathBuf>, String> {
    let mut files = glob::glob(pattern)
        .map_err(|e| format!("bad camera glob {pattern:?}: {e}"))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    if files.is_empty() {
        return Err(format!("no camera files match {pattern:?}"));
    }
    files.sort();
    Ok(files)
}

fn batch(dataset: &Dataset, method: Method, jobs: usize, format: ReportFormat, out: Option<PathBuf>) -> ExitCode {
    let report = run_batch(dataset, &SolverConfig::with_method(method), jobs);
    let text = emit_report(&report, format);
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, text) {
                return input_error(format!("{}: {e}", path.display()));
            }
        }
        None => print!("{text}"),
    }
    if report.failures() > 0 {
        eprintln!("{} of {} tracks did not converge", report.failures(), report.tracks_processed);
        ExitCode::from(EXIT_TRACK_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}

fn check_derivatives(dataset: &Dataset) -> ExitCode {
    println!("{:<12} {:>12} {:>12} {:>12}  result", "track", "jacobian", "gradient", "hessian");
    let mut failed = 0;
    for track in &dataset.tracks {
        let audit = dataset
            .problem(track)
            .and_then(|p| initialize(&p).and_then(|init| finite_diff::audit(&p, &init.point)));
        match audit {
            Ok(a) => {
                let ok = a.passes();
                failed += !ok as usize;
                println!(
                    "{:<12} {:>12.3e} {:>12.3e} {:>12.3e}  {}",
                    track.id,
                    a.jacobian,
                    a.gradient,
                    a.hessian,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            Err(e) => {
                failed += 1;
                println!("{:<12} error: {e}", track.id);
            }
        }
    }
    println!(
        "tolerances: jacobian {:e}, gradient {:e}, hessian {:e}",
        DerivativeAudit::JACOBIAN_TOL,
        DerivativeAudit::GRADIENT_TOL,
        DerivativeAudit::HESSIAN_TOL
    );
    if failed > 0 {
        ExitCode::from(EXIT_TRACK_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}
