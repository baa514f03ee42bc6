use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reachkit::polyapprox::BoundMode;
use reachkit_cli::golden::{default_models_dir, format_table, run_golden_suite};
use reachkit_cli::plot::{emit_plot, load_plot_input, PlotFormat};
use reachkit_cli::run::{
    default_out_dir, run, Command, Overrides, EXIT_GOLDEN_FAILURE, EXIT_MODEL_ERROR, EXIT_OK,
};

/// Reachability analysis by face lifting and polyhedral over-approximation.
#[derive(Debug, Parser)]
#[command(name = "reachkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bounds {
    Sampled,
    Conservative,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model file (JSON).
    model: PathBuf,
    /// Output directory (default reachkit-out/<model>-<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time step Δ.
    #[arg(long)]
    dt: Option<f64>,
    /// Grid cell size h.
    #[arg(long)]
    cell: Option<f64>,
    /// Horizon τ (per-location horizon for hybrid-reach).
    #[arg(long)]
    tau: Option<f64>,
    /// Under-approximate instead of over-approximate.
    #[arg(long)]
    under: bool,
    /// Bound mode for polyapprox.
    #[arg(long, value_enum)]
    bounds: Option<Bounds>,
    /// Iteration cap for reach-inv, or max k for hybrid-reach.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Bounded-time reach tube.
    Reach(RunArgs),
    /// Invariant-constrained reach set.
    ReachInv(RunArgs),
    /// Polyhedral over-approximation of one flow-pipe step.
    Polyapprox(RunArgs),
    /// Semi-decision of hybrid reachability.
    HybridReach(RunArgs),
    /// CSV or SVG from a tube manifest or a polyhedron.json file.
    Plot {
        /// Output directory of a run, its tube manifest.json, or a polyhedron.json.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "svg")]
        format: PlotFormat,
        /// Directory for plot.csv or plot.svg (default reachkit-out/plot).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the acceptance criteria over the bundled models.
    Golden {
        /// Directory holding the example models.
        #[arg(long)]
        models: Option<PathBuf>,
    },
}

fn dispatch(command: Command, a: RunArgs) -> i32 {
    let ov = Overrides {
        dt: a.dt,
        cell: a.cell,
        tau: a.tau,
        under: a.under,
        bounds: a.bounds.map(|b| match b {
            Bounds::Sampled => BoundMode::Sampled,
            Bounds::Conservative => BoundMode::Conservative,
        }),
        max_iters: a.max_iters,
    };
    let out = a.out.unwrap_or_else(|| default_out_dir(&a.model, command.as_str()));
    match run(command, &a.model, &out, &ov) {
        Ok(report) => {
            println!("{}: {}", report.command, report.status);
            for o in &report.outputs {
                println!("  wrote {o}");
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::Reach(a) => dispatch(Command::Reach, a),
        Cmd::ReachInv(a) => dispatch(Command::ReachInv, a),
        Cmd::Polyapprox(a) => dispatch(Command::Polyapprox, a),
        Cmd::HybridReach(a) => dispatch(Command::HybridReach, a),
        Cmd::Plot { input, format, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from("reachkit-out/plot"));
            match load_plot_input(&input).and_then(|d| emit_plot(&d, format, &out)) {
                Ok(s) => {
                    for f in &s.files {
                        println!("wrote {}", f.display());
                    }
                    if s.candidate_edges > 0 {
                        println!("{} candidate edges, {} active", s.candidate_edges, s.active_edges);
                    }
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_MODEL_ERROR
                }
            }
        }
        Cmd::Golden { models } => {
            let results = run_golden_suite(&models.unwrap_or_else(default_models_dir));
            println!("{}", format_table(&results));
            if results.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_GOLDEN_FAILURE
            }
        }
    };
    ExitCode::from(code as u8)
}
