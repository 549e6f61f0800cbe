//! `predeco`: seeded batch runs of the predecoherence and collapse models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "predeco", version, about = "Seeded simulations of predecoherence and collapse")]
struct Cli {
    /// Master seed; every run needs one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs (default: $PREDECO_OUTPUT_DIR or ./predeco-out).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// TOML or JSON file with parameter values; flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run trials on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Born-rule ensemble of simplex random walks.
    Collapse(CollapseFlags),
    /// Reaction-diffusion front for the intricate fraction.
    Kpp(KppFlags),
    /// Discrete duplication walk.
    FrontWalk(WalkFlags),
    /// Trace identities of single collisions.
    Scatter(ScatterFlags),
    /// Sourced evolution of the fluctuating part of the state.
    Omega(OmegaFlags),
    /// Named measurement scenario through the collapse engine.
    Scenario(ScenarioFlags),
    /// Collapse timescale from track parameters.
    Timescale(TrackFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Collapse(_) => "collapse",
            Command::Kpp(_) => "kpp",
            Command::FrontWalk(_) => "front-walk",
            Command::Scatter(_) => "scatter",
            Command::Omega(_) => "omega",
            Command::Scenario(_) => "scenario",
            Command::Timescale(_) => "timescale",
        }
    }

    fn flags(&self) -> serde_json::Map<String, serde_json::Value> {
        match self {
            Command::Collapse(f) => config::flag_map(f),
            Command::Kpp(f) => config::flag_map(f),
            Command::FrontWalk(f) => config::flag_map(f),
            Command::Scatter(f) => config::flag_map(f),
            Command::Omega(f) => config::flag_map(f),
            Command::Scenario(f) => config::flag_map(f),
            Command::Timescale(f) => config::flag_map(f),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct CollapseFlags {
    /// Initial probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<u64>,
    /// Step in the same time unit as --tau-c.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tau_c: Option<f64>,
    /// gaussian or two_point.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Also dump trial 0 as a trajectory CSV.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    trajectory: Option<bool>,
    #[arg(long)]
    record_every: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct KppFlags {
    /// free, moving or unsourced.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    /// step or bump.
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    front0: Option<f64>,
    #[arg(long)]
    bump_amplitude: Option<f64>,
    #[arg(long)]
    bump_width: Option<f64>,
    #[arg(long)]
    sample_interval: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct WalkFlags {
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    site_cap: Option<u64>,
    #[arg(long)]
    population_cap: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    start: Option<i64>,
}

#[derive(Args, Debug, Serialize)]
struct ScatterFlags {
    #[arg(long)]
    apparatus_dim: Option<u64>,
    #[arg(long)]
    molecule_dim: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    /// haar, exchange or energy_conserving.
    #[arg(long)]
    unitary: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct OmegaFlags {
    #[arg(long)]
    dim: Option<u64>,
    #[arg(long)]
    molecule_dim: Option<u64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    reference_time: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct TrackFlags {
    #[arg(long)]
    energy_ev: Option<f64>,
    #[arg(long)]
    exciton_energy_ev: Option<f64>,
    #[arg(long)]
    length_cm: Option<f64>,
    #[arg(long)]
    cell_width_cm: Option<f64>,
    #[arg(long)]
    mean_free_path_cm: Option<f64>,
    #[arg(long)]
    mean_free_time_s: Option<f64>,
    /// uniform or bragg_like.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    bragg_exponent: Option<f64>,
    /// Use the mean free path exactly as printed (1e5 cm).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    lambda_as_printed: Option<bool>,
}

#[derive(Args, Debug, Serialize)]
struct ScenarioFlags {
    /// geiger_case1, geiger_case2, stern_gerlach or cat_tracks.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    p1: Option<f64>,
    /// Channel weights for cat_tracks, comma separated.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<u64>,
    /// Step in seconds (default 1e-3 tau_c).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    law: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    track: TrackFlags,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => config::load_file(path)?,
        None => Default::default(),
    };
    let mut flags = cli.command.flags();
    if let Some(seed) = cli.seed {
        flags.insert("seed".into(), seed.into());
    }
    if let Some(dir) = &cli.output_dir {
        flags.insert("output_dir".into(), dir.to_string_lossy().into_owned().into());
    }
    let mut layer = config::Layer::merge(file, flags);
    let exec = if cli.sequential { predeco::exec::Execution::Sequential } else { predeco::exec::Execution::Parallel };
    commands::execute(cli.command.name(), &mut layer, exec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
