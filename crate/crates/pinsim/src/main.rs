//! Command-line driver: reproducible run dispatch and artifact emission.
//!
//! `pinsim <subcommand> --config <path> [--seed N] [--out DIR]`
//!
//! Each run writes its artifacts plus a `manifest.json` with the normalized
//! configuration, the master seed, and SHA-256 checksums; re-running the
//! same manifest reproduces the bytes exactly. On failure a machine-readable
//! error document goes to stderr and the exit status is nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pinsim::config::{parse_config, RunConfig};
use pinsim::experiments::{
    ensemble_statistics, epsilon_convergence_study, estimate_pinning_threshold, run_hysteresis,
};
use pinsim::obstacle::sample_field;
use pinsim::output::{self, Json};
use pinsim::solver::{run_until, State};
use pinsim::svg::render_profile_svg;
use pinsim::{Error, Result};

#[derive(Parser)]
#[command(name = "pinsim", version, about = "Interface pinning simulator with dry-friction obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Evolve the interface until stationary, escaped, or timed out.
    Simulate(RunArgs),
    /// Bisect the constant force between pinned and depinned runs.
    PinThreshold(RunArgs),
    /// Triangular quasistatic loading loop plus a rate-halved companion.
    Hysteresis(RunArgs),
    /// Regularized-backend convergence study against the prox backend.
    EpsStudy(RunArgs),
    /// Pinning-threshold ensemble over a seed list.
    Ensemble(RunArgs),
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Path to the key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed (also reseeds the obstacle field).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; artifacts are overwritten deterministically.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::PinThreshold(_) => "pin-threshold",
            Command::Hysteresis(_) => "hysteresis",
            Command::EpsStudy(_) => "eps-study",
            Command::Ensemble(_) => "ensemble",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::PinThreshold(a)
            | Command::Hysteresis(a)
            | Command::EpsStudy(a)
            | Command::Ensemble(a) => a,
        }
    }
}

fn main() -> ExitCode {
    // Worker pool size: PINSIM_THREADS, default = logical core count.
    if let Ok(threads) = std::env::var("PINSIM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::FAILURE
        }
    }
}

fn error_json(err: &Error) -> String {
    let kind = match err {
        Error::Config(_) => "config",
        Error::Contract(_) => "contract",
        Error::Numerical { .. } => "numerical",
        Error::UnsupportedDimension(_) => "unsupported-dimension",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    Json::obj([
        (
            "error",
            Json::obj([
                ("kind", Json::Str(kind.into())),
                ("message", Json::Str(err.to_string())),
            ]),
        ),
    ])
    .render()
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.obstacle.seed = seed;
    }
    Ok(config)
}

fn out_dir(args: &RunArgs, name: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| Path::new("runs").join(name))
}

fn dispatch(command: &Command) -> Result<()> {
    let args = command.args();
    let config = load_config(args)?;
    let dir = out_dir(args, command.name());
    let mut artifacts: Vec<(String, String)> = Vec::new();

    match command {
        Command::Simulate(_) => {
            let grid = config.grid();
            let field = sample_field(&config.obstacle)?;
            let out = run_until(&grid, &State::flat(&grid), &field, &config.forcing, &config.solver)?;
            artifacts.push(output::write_artifact(&dir, "field.json", &field.to_json())?);
            artifacts.push(output::write_artifact(
                &dir,
                "trajectory.csv",
                &output::trajectory_csv(&out.rows),
            )?);
            artifacts.push(output::write_artifact(
                &dir,
                "snapshot.json",
                &output::snapshot_json(&grid, &out.state),
            )?);
            if grid.dimension() == 1 {
                artifacts.push(output::write_artifact(
                    &dir,
                    "profile.svg",
                    &render_profile_svg(&grid, &out.state.u, &field)?,
                )?);
            }
            let summary = Json::obj([
                ("outcome", Json::Str(out.outcome.as_str().into())),
                ("steps", Json::UInt(out.steps)),
                ("t_end", Json::Num(out.state.t)),
            ])
            .render();
            artifacts.push(output::write_artifact(&dir, "summary.json", &summary)?);
        }
        Command::PinThreshold(_) => {
            let grid = config.grid();
            let field = sample_field(&config.obstacle)?;
            let report = estimate_pinning_threshold(
                &grid,
                &field,
                &config.solver,
                config.pin.f_init_hi,
                config.pin.steps,
            )?;
            artifacts.push(output::write_artifact(&dir, "field.json", &field.to_json())?);
            artifacts.push(output::write_artifact(
                &dir,
                "pinning.json",
                &output::pinning_report_json(&report),
            )?);
            if grid.dimension() == 1 {
                artifacts.push(output::write_artifact(
                    &dir,
                    "pinned_profile.svg",
                    &render_profile_svg(&grid, &report.pinned_profile, &field)?,
                )?);
            }
        }
        Command::Hysteresis(_) => {
            let grid = config.grid();
            let field = sample_field(&config.obstacle)?;
            let params = config.hysteresis_params()?;
            let report = run_hysteresis(&grid, &field, &params, &config.solver)?;
            artifacts.push(output::write_artifact(&dir, "field.json", &field.to_json())?);
            artifacts.push(output::write_artifact(
                &dir,
                "hysteresis.json",
                &output::hysteresis_report_json(&report),
            )?);
            artifacts.push(output::write_artifact(
                &dir,
                "hysteresis.csv",
                &output::hysteresis_csv(&report.samples),
            )?);
        }
        Command::EpsStudy(_) => {
            let grid = config.grid();
            let field = sample_field(&config.obstacle)?;
            let report = epsilon_convergence_study(
                &grid,
                &field,
                config.eps.force,
                &config.eps.list,
                &config.solver,
                config.eps.t_study,
            )?;
            artifacts.push(output::write_artifact(&dir, "field.json", &field.to_json())?);
            artifacts.push(output::write_artifact(
                &dir,
                "eps_study.json",
                &output::eps_report_json(&report),
            )?);
        }
        Command::Ensemble(_) => {
            let grid = config.grid();
            let seeds = config.ensemble_seeds();
            let report = ensemble_statistics(
                &grid,
                &config.obstacle,
                &seeds,
                &config.solver,
                config.pin.f_init_hi,
                config.pin.steps,
            )?;
            artifacts.push(output::write_artifact(
                &dir,
                "ensemble.json",
                &output::ensemble_report_json(&report),
            )?);
        }
    }

    let manifest =
        output::manifest_json(command.name(), config.seed, &config.dump(), &artifacts);
    std::fs::write(dir.join("manifest.json"), &manifest)?;
    Ok(())
}
