//! Parameter resolution and execution for each subcommand.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::path::{Path, PathBuf};

use predeco::collapse::{self, CollapseError, CollapseParams, IncrementLaw, SimplexState};
use predeco::collision::{self, CollisionError, EvolveOptions};
use predeco::denmat::{self, DenMatError, DensityMatrix};
use predeco::exec::{map_indexed, trial_rng, Execution, TrialRng};
use predeco::measurement::{self, MeasurementError, Profile, ScenarioKind, ScenarioParams, TimescaleReport, TrackModel};
use predeco::transport::{self, BoundaryMode, FrontField, TransportError, WalkConfig, WalkPopulation};
use predeco::{linalg, CMatrix};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{self, ConfigError, Layer};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("run failed: {0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
        }
    }
}

impl From<CollapseError> for CliError {
    fn from(e: CollapseError) -> Self {
        match e {
            CollapseError::MaxStepsExceeded(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::UnstableStep { .. } | TransportError::Invalid(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MeasurementError> for CliError {
    fn from(e: MeasurementError) -> Self {
        match e {
            MeasurementError::Collapse(c) => c.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CollisionError> for CliError {
    fn from(e: CollisionError) -> Self {
        match e {
            CollisionError::NonUnitaryDrift(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<DenMatError> for CliError {
    fn from(e: DenMatError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Files produced by a run, in write order.
type Artifacts = Vec<(String, Vec<u8>)>;

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    predeco::io::to_json_string(value).map(String::into_bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

fn csv_bytes<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(write: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(buf)
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Invalid(msg.into()))
    }
}

/// Resolves parameters, runs the command and writes artifacts plus the
/// manifest. Returns a one-line summary.
pub fn execute(command: &str, layer: &mut Layer, exec: Execution) -> Result<String> {
    if let Some(c) = layer.opt_string("command")? {
        if c != command {
            return Err(ConfigError::InvalidValue { key: "command".into(), reason: format!("config is for `{c}`, not `{command}`") }.into());
        }
    }
    let seed = layer.opt_u64("seed")?.ok_or_else(|| ConfigError::MissingRequired("seed".into()))?;
    let output_dir = config::resolve_output_dir(layer)?;
    let plan = Plan::resolve(command, layer)?;
    std::mem::take(layer).finish()?;
    plan.validate()?;
    let (artifacts, summary) = plan.run(seed, exec)?;
    write_outputs(&output_dir, command, seed, exec, &plan, artifacts)?;
    Ok(summary)
}

fn write_outputs(dir: &Path, command: &str, seed: u64, exec: Execution, plan: &Plan, artifacts: Artifacts) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let names: Vec<&str> = artifacts.iter().map(|(n, _)| n.as_str()).collect();
    let manifest = json!({
        "tool": "predeco",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "execution": if exec == Execution::Sequential { "sequential" } else { "parallel" },
        "parameters": plan,
        "outputs": names,
    });
    for (name, bytes) in &artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, json_bytes(&manifest)?).map_err(io_err(&path))?;
    Ok(())
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Plan {
    Collapse(CollapseArgs),
    Kpp(KppArgs),
    Walk(WalkArgs),
    Scatter(ScatterArgs),
    Omega(OmegaArgs),
    Scenario(ScenarioArgs),
    Timescale(TrackArgs),
}

impl Plan {
    fn resolve(command: &str, l: &mut Layer) -> Result<Self> {
        Ok(match command {
            "collapse" => Plan::Collapse(CollapseArgs::resolve(l)?),
            "kpp" => Plan::Kpp(KppArgs::resolve(l)?),
            "front-walk" => Plan::Walk(WalkArgs::resolve(l)?),
            "scatter" => Plan::Scatter(ScatterArgs::resolve(l)?),
            "omega" => Plan::Omega(OmegaArgs::resolve(l)?),
            "scenario" => Plan::Scenario(ScenarioArgs::resolve(l)?),
            "timescale" => Plan::Timescale(TrackArgs::resolve(l)?),
            other => return Err(CliError::Invalid(format!("unknown command `{other}`"))),
        })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Plan::Collapse(a) => a.validate(),
            Plan::Kpp(a) => a.validate(),
            Plan::Walk(a) => a.validate(),
            Plan::Scatter(a) => a.validate(),
            Plan::Omega(a) => a.validate(),
            Plan::Scenario(a) => a.track.build().map(|_| ()),
            Plan::Timescale(a) => a.build().map(|_| ()),
        }
    }

    fn run(&self, seed: u64, exec: Execution) -> Result<(Artifacts, String)> {
        match self {
            Plan::Collapse(a) => a.run(seed, exec),
            Plan::Kpp(a) => a.run(),
            Plan::Walk(a) => a.run(),
            Plan::Scatter(a) => a.run(seed, exec),
            Plan::Omega(a) => a.run(seed),
            Plan::Scenario(a) => a.run(seed, exec),
            Plan::Timescale(a) => a.run(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CollapseArgs {
    p: Vec<f64>,
    trials: usize,
    dt: f64,
    tau_c: f64,
    law: IncrementLaw,
    max_steps: u64,
    trajectory: bool,
    record_every: usize,
}

impl CollapseArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        Ok(CollapseArgs {
            p: l.req_vec_f64("p")?,
            trials: l.usize("trials", 10_000)?,
            dt: l.f64("dt", collapse::DEFAULT_DT)?,
            tau_c: l.f64("tau_c", 1.0)?,
            law: l.parsed("law", "gaussian")?,
            max_steps: l.u64("max_steps", collapse::DEFAULT_MAX_STEPS)?,
            trajectory: l.bool("trajectory", false)?,
            record_every: l.usize("record_every", 1)?,
        })
    }

    fn params(&self) -> CollapseParams {
        CollapseParams { dt: self.dt, tau_c: self.tau_c, law: self.law, max_steps: self.max_steps }
    }

    fn validate(&self) -> Result<()> {
        SimplexState::new(&self.p)?;
        collapse::covariance_matrix(&self.p, self.dt, self.tau_c)?;
        require(self.trials >= 1, "trials must be at least 1")?;
        require(self.dt / self.tau_c <= collapse::MAX_STEP_RATIO, format!("dt/tau_c must not exceed {}", collapse::MAX_STEP_RATIO))
    }

    fn run(&self, seed: u64, exec: Execution) -> Result<(Artifacts, String)> {
        let stats = collapse::ensemble(&self.p, &self.params(), self.trials, seed, exec)?;
        let mut out = vec![("stats.json".to_string(), json_bytes(&stats)?)];
        if self.trajectory {
            let (outcome, states) = collapse::trajectory(&self.p, &self.params(), &mut trial_rng(seed, 0), self.record_every);
            outcome?;
            out.push(("trajectory.csv".into(), csv_bytes(|w| collapse::write_trajectory_csv(&states, w))?));
        }
        let summary = format!(
            "collapse: {} trials ({} unfinished), win frequencies {:?}",
            stats.trials, stats.unfinished, stats.win_frequency
        );
        Ok((out, summary))
    }
}

#[derive(Debug, Serialize)]
struct KppArgs {
    mode: String,
    t_end: f64,
    dx: f64,
    dt: f64,
    x_max: f64,
    initial: String,
    front0: f64,
    bump_amplitude: f64,
    bump_width: f64,
    sample_interval: f64,
}

impl KppArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        let mode = l.string("mode", "free")?;
        let t_end = l.f64("t_end", 100.0)?;
        let default_x_max = if mode == "unsourced" { 100.0 } else { (2.0 * t_end + 20.0).max(40.0) };
        let default_initial = if mode == "unsourced" { "bump" } else { "step" };
        Ok(KppArgs {
            t_end,
            dx: l.f64("dx", transport::DEFAULT_GRID_SPACING)?,
            dt: l.f64("dt", transport::DEFAULT_DT)?,
            x_max: l.f64("x_max", default_x_max)?,
            initial: l.string("initial", default_initial)?,
            front0: l.f64("front0", 0.0)?,
            bump_amplitude: l.f64("bump_amplitude", 1e-6)?,
            bump_width: l.f64("bump_width", 1.5)?,
            sample_interval: l.f64("sample_interval", 1.0)?,
            mode,
        })
    }

    fn boundary(&self) -> Result<BoundaryMode> {
        Ok(self.mode.parse()?)
    }

    fn validate(&self) -> Result<()> {
        self.boundary()?;
        require(self.t_end > 0.0, "t_end must be positive")?;
        require(self.sample_interval >= self.dt, "sample_interval must be at least dt")?;
        require(matches!(self.initial.as_str(), "step" | "bump"), format!("initial must be step or bump, got `{}`", self.initial))?;
        let limit = self.dx * self.dx;
        if !(self.dt > 0.0) || self.dt > limit {
            return Err(TransportError::UnstableStep { dt: self.dt, limit }.into());
        }
        Ok(())
    }

    fn initial_field(&self) -> Result<FrontField> {
        let f = match self.initial.as_str() {
            "step" => FrontField::step_profile(self.x_max, self.dx, self.front0)?,
            _ => {
                let (a, w, c) = (self.bump_amplitude, self.bump_width, 0.5 * self.x_max);
                FrontField::from_fn(self.x_max, self.dx, |x| a * (-(x - c).powi(2) / (2.0 * w * w)).exp())?
            }
        };
        Ok(f)
    }

    fn run(&self) -> Result<(Artifacts, String)> {
        let mode = self.boundary()?;
        let every = ((self.sample_interval / self.dt).round() as usize).max(1);
        let history = transport::run_kpp(self.initial_field()?, self.dt, self.t_end, mode, every)?;
        let last = history.last().expect("history holds the initial field");

        let expected = match mode {
            BoundaryMode::Free => Some(SQRT_2),
            BoundaryMode::Moving => Some(1.0),
            BoundaryMode::Unsourced => None,
        };
        let (speed, speed_error) = match expected {
            Some(_) => match transport::front_speed(&history) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            },
            None => (None, None),
        };
        let (growth, growth_error) = match mode {
            BoundaryMode::Unsourced => match transport::mass_growth_rate(&history, 0..history.len()) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            },
            _ => (None, None),
        };
        let report = json!({
            "mode": self.mode,
            "t_end": last.time,
            "samples": history.len(),
            "front_speed": speed,
            "front_speed_error": speed_error,
            "expected_speed": expected,
            "relative_error": speed.zip(expected).map(|(s, e)| (s - e).abs() / e),
            "mass_growth_rate": growth,
            "mass_growth_error": growth_error,
            "final_front_position": last.level_crossing(0.5),
            "final_mass": last.mass(),
            "reference_speeds": { "continuum_minimal": SQRT_2, "discrete_walk": 1.0 },
        });
        let out = vec![
            ("kpp_history.csv".to_string(), csv_bytes(|w| transport::write_kpp_csv(&history, w))?),
            ("kpp_snapshot.csv".to_string(), csv_bytes(|w| last.write_snapshot_csv(w))?),
            ("kpp_report.json".to_string(), json_bytes(&report)?),
        ];
        let summary = match (speed, growth) {
            (Some(s), _) => format!("kpp ({}): front speed {s:.4}", self.mode),
            (_, Some(g)) => format!("kpp ({}): mass growth rate {g:.4}", self.mode),
            _ => format!("kpp ({}): no rate could be fitted, see kpp_report.json", self.mode),
        };
        Ok((out, summary))
    }
}

#[derive(Debug, Serialize)]
struct WalkArgs {
    steps: u64,
    site_cap: u64,
    population_cap: u64,
    start: i64,
}

impl WalkArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        let defaults = WalkConfig::default();
        Ok(WalkArgs {
            steps: l.u64("steps", 50)?,
            site_cap: l.u64("site_cap", defaults.site_cap)?,
            population_cap: l.u64("population_cap", defaults.population_cap)?,
            start: l.i64("start", 0)?,
        })
    }

    fn validate(&self) -> Result<()> {
        require(self.steps >= 1, "steps must be at least 1")?;
        require(self.site_cap >= 1, "site_cap must be at least 1")
    }

    fn run(&self) -> Result<(Artifacts, String)> {
        let cfg = WalkConfig { site_cap: self.site_cap, population_cap: self.population_cap };
        let history = transport::duplication_walk(&WalkPopulation::single(self.start), self.steps, cfg)?;
        // Longest prefix of exact doubling.
        let doubling = history
            .iter()
            .enumerate()
            .take_while(|(i, p)| *i < 63 && p.total() == history[0].total() << i)
            .count();
        let growth = if doubling >= 3 { transport::walk_growth_rate(&history, 0..doubling).ok() } else { None };
        let last = history.last().expect("history is non-empty");
        let report = json!({
            "steps": self.steps,
            "final_front_position": last.front(),
            "final_population": last.total(),
            "front_speed_planes_per_step": transport::walk_front_speed(&history),
            "growth_rate_per_step": growth,
            "growth_window_steps": doubling,
            "plane_spacing_mfp": transport::PLANE_SPACING,
            "reference_speeds": { "continuum_minimal": SQRT_2, "discrete_walk": 1.0 },
        });
        let out = vec![
            ("walk_history.csv".to_string(), csv_bytes(|w| transport::write_walk_csv(&history, w))?),
            ("walk_report.json".to_string(), json_bytes(&report)?),
        ];
        Ok((out, format!("front-walk: front at plane {:?} after {} steps", last.front(), self.steps)))
    }
}

#[derive(Debug, Serialize)]
struct ScatterArgs {
    apparatus_dim: usize,
    molecule_dim: usize,
    samples: usize,
    unitary: String,
    theta: f64,
}

impl ScatterArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        Ok(ScatterArgs {
            apparatus_dim: l.usize("apparatus_dim", 4)?,
            molecule_dim: l.usize("molecule_dim", 2)?,
            samples: l.usize("samples", 200)?,
            unitary: l.string("unitary", "haar")?,
            theta: l.f64("theta", FRAC_PI_2)?,
        })
    }

    fn validate(&self) -> Result<()> {
        require(self.apparatus_dim >= 1 && self.molecule_dim >= 2, "need apparatus_dim >= 1 and molecule_dim >= 2")?;
        require(self.apparatus_dim * self.molecule_dim <= denmat::DEFAULT_MAX_DIM, "joint dimension exceeds 64")?;
        require(self.samples >= 1, "samples must be at least 1")?;
        require(
            matches!(self.unitary.as_str(), "haar" | "exchange" | "energy_conserving"),
            format!("unitary must be haar, exchange or energy_conserving, got `{}`", self.unitary),
        )
    }

    fn joint_unitary(&self, rng: &mut TrialRng) -> Result<CMatrix> {
        let (da, dm) = (self.apparatus_dim, self.molecule_dim);
        Ok(match self.unitary.as_str() {
            "haar" => linalg::haar_unitary(da * dm, rng),
            "exchange" => collision::exchange_unitary(&linalg::haar_unitary(da, rng), self.theta, dm)?,
            _ => {
                let h_a = linalg::from_real_diagonal(&(0..da).map(|i| i as f64).collect::<Vec<_>>());
                let h_m = linalg::from_real_diagonal(&(0..dm).map(|i| i as f64).collect::<Vec<_>>());
                collision::energy_conserving_unitary(&h_a, &h_m, 1e-9, rng)?
            }
        })
    }

    fn run(&self, seed: u64, exec: Execution) -> Result<(Artifacts, String)> {
        let molecule = collision::ground_molecule(self.molecule_dim);
        let rows: Vec<Result<[f64; 7]>> = map_indexed(self.samples, exec, |i| {
            let mut rng = trial_rng(seed, i as u64);
            let rho = DensityMatrix::new(linalg::random_density(self.apparatus_dim, &mut rng), 1.0)?;
            let u = self.joint_unitary(&mut rng)?;
            let d = collision::scatter(&rho, &molecule, &u)?;
            let (tp, tm) = (d.delta_plus.trace(), d.delta_minus.trace());
            let after = d.rho_after.trace();
            let min_eig = d.rho_after.eigen().values[0];
            Ok([d.epsilon, tp, tm, (tp - tm).abs(), after, min_eig, denmat::hermitian_norm(&d.interference)])
        });
        let rows: Vec<[f64; 7]> = rows.into_iter().collect::<Result<_>>()?;
        let col = |j: usize| rows.iter().map(move |r| r[j]);
        let max = |j: usize| col(j).fold(f64::NEG_INFINITY, f64::max);
        let min = |j: usize| col(j).fold(f64::INFINITY, f64::min);
        let report = json!({
            "samples": self.samples,
            "dims": [self.apparatus_dim, self.molecule_dim],
            "unitary": self.unitary,
            "max_trace_gap": max(3),
            "max_trace_error": col(4).map(|t| (t - 1.0).abs()).fold(0.0, f64::max),
            "min_eigenvalue": min(5),
            "epsilon_min": min(0),
            "epsilon_max": max(0),
            "epsilon_mean": col(0).sum::<f64>() / rows.len() as f64,
            "max_interference_norm": max(6),
        });
        let csv = csv_bytes(|w| {
            use std::io::Write;
            writeln!(w, "sample,epsilon,trace_delta_plus,trace_delta_minus,trace_gap,rho_after_trace,rho_after_min_eigenvalue,interference_norm")?;
            for (i, r) in rows.iter().enumerate() {
                writeln!(w, "{i},{}", predeco::io::csv_row(r))?;
            }
            Ok(())
        })?;
        let out = vec![("scatter.csv".to_string(), csv), ("scatter_report.json".to_string(), json_bytes(&report)?)];
        Ok((out, format!("scatter: {} samples, max |Tr d+ - Tr d-| = {:.3e}", self.samples, max(3))))
    }
}

#[derive(Debug, Serialize)]
struct OmegaArgs {
    dim: usize,
    molecule_dim: usize,
    rate: f64,
    t_end: f64,
    dt: f64,
    temperature: f64,
    reference_time: f64,
}

impl OmegaArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        Ok(OmegaArgs {
            dim: l.usize("dim", 8)?,
            molecule_dim: l.usize("molecule_dim", 2)?,
            rate: l.f64("rate", 1.0)?,
            t_end: l.f64("t_end", 20.0)?,
            dt: l.f64("dt", 0.02)?,
            temperature: l.f64("temperature", 1.0)?,
            reference_time: l.f64("reference_time", 0.0)?,
        })
    }

    fn validate(&self) -> Result<()> {
        require(self.dim >= 2 && self.molecule_dim >= 2, "dim and molecule_dim must be at least 2")?;
        require(self.dim * self.molecule_dim <= denmat::DEFAULT_MAX_DIM, "joint dimension exceeds 64")?;
        require(self.dt > 0.0 && self.t_end > 0.0, "dt and t_end must be positive")?;
        require(self.temperature > 0.0, "temperature must be positive")?;
        require(self.rate >= 0.0, "rate must be non-negative")
    }

    fn run(&self, seed: u64) -> Result<(Artifacts, String)> {
        let (traj, collisions) = omega_run(self, seed)?;
        let gap = traj.trace_plus.iter().zip(&traj.trace_minus).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let plateau = traj.plateau(0.25);
        let report = json!({
            "dim": self.dim,
            "samples": traj.len(),
            "collisions": collisions,
            "max_abs_trace_omega": traj.max_abs_omega_trace(),
            "max_trace_plus_minus_gap": gap,
            "plateau_trace_plus": plateau,
            "plateau_fraction": 0.25,
            "plateau_note": "mean Tr(Omega+) over the last quarter of samples; conjectured near 1, reported only",
        });
        let out = vec![
            ("omega.csv".to_string(), csv_bytes(|w| traj.write_csv(w))?),
            ("omega_report.json".to_string(), json_bytes(&report)?),
        ];
        Ok((out, format!("omega: {} samples, plateau Tr(Omega+) = {plateau:.4}", traj.len())))
    }
}

/// Hamiltonian with levels `0, 1, …, d−1` in a Haar-random basis, started
/// from its thermal state. Also returns the number of collisions.
fn omega_run(a: &OmegaArgs, seed: u64) -> Result<(collision::OmegaTrajectory, usize)> {
    let basis = linalg::haar_unitary(a.dim, &mut trial_rng(seed, 2));
    let levels = linalg::from_real_diagonal(&(0..a.dim).map(|i| i as f64).collect::<Vec<_>>());
    let h = linalg::hermitian_part(&(&basis * levels * basis.adjoint()));
    let rho0 = denmat::thermal_state(&h, a.temperature)?;
    let events = collision::random_collision_schedule(a.rate, a.t_end, a.dim, a.molecule_dim, seed)?;
    let opts = EvolveOptions { t_end: a.t_end, dt: a.dt, reference_time: a.reference_time };
    Ok((collision::evolve_with_source(&rho0, &h, &events, opts)?, events.len()))
}

#[derive(Debug, Serialize)]
struct TrackArgs {
    energy_ev: f64,
    exciton_energy_ev: f64,
    length_cm: f64,
    cell_width_cm: f64,
    mean_free_path_cm: f64,
    mean_free_time_s: f64,
    profile: String,
    bragg_exponent: f64,
    lambda_as_printed: bool,
}

/// Mean free path as printed next to the other quoted parameters.
const PRINTED_LAMBDA_CM: f64 = 1e5;
const DEFAULT_LAMBDA_CM: f64 = 1e-5;

impl TrackArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        let lambda_as_printed = l.bool("lambda_as_printed", false)?;
        let default_mfp = if lambda_as_printed { PRINTED_LAMBDA_CM } else { DEFAULT_LAMBDA_CM };
        let mean_free_path_cm = l.f64("mean_free_path_cm", default_mfp)?;
        Ok(TrackArgs {
            energy_ev: l.f64("energy_ev", 10e6)?,
            exciton_energy_ev: l.f64("exciton_energy_ev", 10.0)?,
            length_cm: l.f64("length_cm", 10.0)?,
            cell_width_cm: l.f64("cell_width_cm", 3.0 * mean_free_path_cm)?,
            mean_free_time_s: l.f64("mean_free_time_s", 1e-10)?,
            profile: l.string("profile", "uniform")?,
            bragg_exponent: l.f64("bragg_exponent", measurement::DEFAULT_BRAGG_EXPONENT)?,
            mean_free_path_cm,
            lambda_as_printed,
        })
    }

    fn build(&self) -> Result<TrackModel> {
        let profile = match self.profile.as_str() {
            "uniform" => Profile::Uniform,
            "bragg_like" => Profile::BraggLike { exponent: self.bragg_exponent },
            other => return Err(ConfigError::InvalidValue { key: "profile".into(), reason: format!("unknown profile `{other}`") }.into()),
        };
        Ok(measurement::build_track(
            self.energy_ev,
            self.exciton_energy_ev,
            self.length_cm,
            self.cell_width_cm,
            self.mean_free_path_cm,
            self.mean_free_time_s,
            profile,
        )?)
    }

    fn run(&self) -> Result<(Artifacts, String)> {
        #[derive(Serialize)]
        struct Report {
            #[serde(flatten)]
            requested: TimescaleReport,
            literal_reading: TimescaleReport,
        }
        let report = Report {
            requested: measurement::timescale_report(&self.build()?),
            literal_reading: measurement::literal_reading_report(),
        };
        let summary = format!(
            "timescale: tau_c = {:.4e} s (quoted order {:.0e} s, ratio {:.3e})",
            report.requested.tau_c_seconds, measurement::TARGET_TAU_C, report.requested.paper_comparison.ratio
        );
        Ok((vec![("timescale_report.json".to_string(), json_bytes(&report)?)], summary))
    }
}

#[derive(Debug, Serialize)]
struct ScenarioArgs {
    name: ScenarioKind,
    p1: Option<f64>,
    weights: Option<Vec<f64>>,
    trials: usize,
    dt: Option<f64>,
    law: IncrementLaw,
    track: TrackArgs,
}

impl ScenarioArgs {
    fn resolve(l: &mut Layer) -> Result<Self> {
        let name = l.opt_string("name")?.ok_or_else(|| ConfigError::MissingRequired("name".into()))?;
        let name: ScenarioKind = name.parse().map_err(|e: MeasurementError| ConfigError::InvalidValue { key: "name".into(), reason: e.to_string() })?;
        Ok(ScenarioArgs {
            name,
            p1: l.opt_f64("p1")?,
            weights: l.opt_vec_f64("weights")?,
            trials: l.usize("trials", 10_000)?,
            dt: l.opt_f64("dt")?,
            law: l.parsed("law", "gaussian")?,
            track: TrackArgs::resolve(l)?,
        })
    }

    fn run(&self, seed: u64, exec: Execution) -> Result<(Artifacts, String)> {
        let params = ScenarioParams { p1: self.p1, weights: self.weights.clone(), track: self.track.build()? };
        match self.name {
            ScenarioKind::CatTracks if params.weights.is_none() => return Err(ConfigError::MissingRequired("weights".into()).into()),
            ScenarioKind::GeigerCase1 | ScenarioKind::GeigerCase2 | ScenarioKind::SternGerlach if params.p1.is_none() => {
                return Err(ConfigError::MissingRequired("p1".into()).into())
            }
            _ => {}
        }
        let scenario = measurement::scenario(self.name, &params)?;
        let run = measurement::run_scenario(&scenario, self.dt, self.law, self.trials, seed, exec)?;
        let summary = format!("scenario {:?}: tau_c = {:.4e} s, win frequencies {:?}", self.name, run.tau_c_seconds, run.stats.win_frequency);
        Ok((vec![("scenario_stats.json".to_string(), json_bytes(&run)?)], summary))
    }
}
