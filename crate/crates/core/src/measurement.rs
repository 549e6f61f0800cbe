//! Physical parameters of a detector track, the probability-fluctuation
//! formulas built on intricon counts, the collapse timescale, and named
//! measurement scenarios.
//!
//! Units are CGS plus eV for energies and seconds for times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collapse::{self, CollapseError, CollapseParams, EnsembleStats, IncrementLaw};
use crate::exec::Execution;

/// Air at standard conditions, molecules per cm³.
pub const AIR_NUMBER_DENSITY: f64 = 2.5e19;
/// Mean molecular speed in air at room temperature, cm/s.
pub const AIR_MEAN_SPEED: f64 = 4.6e4;
/// Order of magnitude quoted for the collapse time, in seconds.
pub const TARGET_TAU_C: f64 = 1e-11;
pub const DEFAULT_BRAGG_EXPONENT: f64 = 0.5;
const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("cell width {cell} cm is narrower than the mean free path {mfp} cm")]
    CellNarrowerThanMFP { cell: f64, mfp: f64 },
    #[error("bad scenario parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Collapse(#[from] CollapseError),
}

pub type Result<T> = std::result::Result<T, MeasurementError>;

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(MeasurementError::DomainError(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `n_M v_M S`, collisions per second.
pub fn collision_rate(n_m: f64, v_m: f64, s: f64) -> Result<f64> {
    for (name, v) in [("n_M", n_m), ("v_M", v_m), ("S", s)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(MeasurementError::DomainError(format!("{name} must be non-negative, got {v}")));
        }
    }
    Ok(n_m * v_m * s)
}

/// Deposition profile along the track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    /// Density `∝ (1 − x/L)^(−s)` sampled at cell midpoints.
    BraggLike { exponent: f64 },
}

/// A straight track cut into transverse cells of width `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackModel {
    pub energy_ev: f64,
    pub exciton_energy_ev: f64,
    pub length_cm: f64,
    pub cell_width_cm: f64,
    pub mean_free_path_cm: f64,
    pub mean_free_time_s: f64,
    pub profile: Profile,
    /// `E/e`.
    pub n_total: f64,
    pub n_cells: usize,
    /// Reference intricon count `n_β` per cell.
    #[serde(skip)]
    pub cell_counts: Vec<f64>,
    /// `Σ_β 1/n_β`.
    pub inverse_count_sum: f64,
}

pub fn build_track(
    energy_ev: f64,
    exciton_energy_ev: f64,
    length_cm: f64,
    cell_width_cm: f64,
    mean_free_path_cm: f64,
    mean_free_time_s: f64,
    profile: Profile,
) -> Result<TrackModel> {
    positive("E", energy_ev)?;
    positive("e", exciton_energy_ev)?;
    positive("L", length_cm)?;
    positive("Lambda", cell_width_cm)?;
    positive("lambda_mfp", mean_free_path_cm)?;
    positive("tau", mean_free_time_s)?;
    if cell_width_cm < mean_free_path_cm {
        return Err(MeasurementError::CellNarrowerThanMFP { cell: cell_width_cm, mfp: mean_free_path_cm });
    }
    let n_total = energy_ev / exciton_energy_ev;
    let n_cells = ((length_cm / cell_width_cm).ceil() as usize).max(1);
    let (cell_counts, inverse_count_sum) = match profile {
        Profile::Uniform => {
            let n_beta = n_total / n_cells as f64;
            // Closed form keeps N/n_β exact for the uniform case.
            (vec![n_beta; n_cells], n_cells as f64 / n_beta)
        }
        Profile::BraggLike { exponent } => {
            if !(exponent >= 0.0) || !exponent.is_finite() {
                return Err(MeasurementError::DomainError(format!("bragg exponent must be >= 0, got {exponent}")));
            }
            let weights: Vec<f64> = (0..n_cells)
                .map(|b| {
                    let lo = b as f64 * cell_width_cm;
                    let hi = (lo + cell_width_cm).min(length_cm);
                    let mid = 0.5 * (lo + hi);
                    (hi - lo) * (1.0 - mid / length_cm).powf(-exponent)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let counts: Vec<f64> = weights.iter().map(|w| n_total * w / total).collect();
            let inv = counts.iter().map(|n| 1.0 / n).sum();
            (counts, inv)
        }
    };
    Ok(TrackModel {
        energy_ev,
        exciton_energy_ev,
        length_cm,
        cell_width_cm,
        mean_free_path_cm,
        mean_free_time_s,
        profile,
        n_total,
        n_cells,
        cell_counts,
        inverse_count_sum,
    })
}

impl TrackModel {
    /// Mean `n_β` over cells.
    pub fn mean_cell_count(&self) -> f64 {
        self.n_total / self.n_cells as f64
    }

    /// Relative error of `Σ n_β` against `n_total`.
    pub fn count_closure(&self) -> f64 {
        (self.cell_counts.iter().sum::<f64>() - self.n_total).abs() / self.n_total
    }
}

/// Exact and first-order probability change from `δn₁` new intricons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaP1 {
    pub exact: f64,
    pub approximate: f64,
    pub difference: f64,
}

/// `(n₁ + δn₁)/(n + δn₁) − n₁/n` against `p₂ δn₁/n`.
///
/// A channel with no intricons (`n₁ = 0`) is absorbed and has no
/// collisions to fluctuate, so both forms are 0 there.
pub fn delta_p1(n1: f64, n: f64, dn1: f64) -> Result<DeltaP1> {
    if !(n > 0.0) || !(0.0..=n).contains(&n1) || !dn1.is_finite() {
        return Err(MeasurementError::DomainError(format!("need 0 <= n1 <= n, n > 0; got n1 = {n1}, n = {n}")));
    }
    if !(n + dn1 > 0.0) || (n1 + dn1 < 0.0 && n1 > 0.0) {
        return Err(MeasurementError::DomainError(format!("counts become negative with dn1 = {dn1}")));
    }
    if n1 == 0.0 {
        return Ok(DeltaP1 { exact: 0.0, approximate: 0.0, difference: 0.0 });
    }
    let exact = (n1 + dn1) / (n + dn1) - n1 / n;
    let approximate = (n - n1) / n * dn1 / n;
    Ok(DeltaP1 { exact, approximate, difference: exact - approximate })
}

fn check_variance_inputs(p: f64, dt: f64, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MeasurementError::DomainError(format!("p1 must lie in [0, 1], got {p}")));
    }
    positive("dt", dt)?;
    let delta = dt / tau;
    if delta > 1.0 {
        return Err(MeasurementError::DomainError(format!("dt/tau = {delta} exceeds 1")));
    }
    Ok(delta)
}

/// `⟨(δp₁)²⟩ = p₁ p₂ (dt/τ) Σ_β 1/n_β` with `p₂ = 1 − p₁`.
pub fn variance_per_step(track: &TrackModel, p1: f64, dt: f64) -> Result<f64> {
    variance_per_step_pair(track, p1, 1.0 - p1, dt)
}

/// As [`variance_per_step`] with both probabilities given, which makes the
/// result bitwise symmetric under exchanging them.
pub fn variance_per_step_pair(track: &TrackModel, p1: f64, p2: f64, dt: f64) -> Result<f64> {
    let delta = check_variance_inputs(p1, dt, track.mean_free_time_s)?;
    check_variance_inputs(p2, dt, track.mean_free_time_s)?;
    if ((p1 + p2) - 1.0).abs() > SUM_TOL {
        return Err(MeasurementError::DomainError(format!("p1 + p2 = {} differs from 1", p1 + p2)));
    }
    Ok(p1 * p2 * (delta * track.inverse_count_sum))
}

/// `τ_c = τ / Σ_β n_β⁻¹`, which is `τ n_β / N(β)` for a uniform track.
pub fn collapse_timescale(track: &TrackModel) -> f64 {
    match track.profile {
        Profile::Uniform => track.mean_free_time_s * track.mean_cell_count() / track.n_cells as f64,
        Profile::BraggLike { .. } => track.mean_free_time_s / track.inverse_count_sum,
    }
}

/// Combined timescale for several channels' tracks.
///
/// Each track contributes its rate `1/τ_c` weighted equally, so identical
/// tracks reproduce the single-track value.
pub fn combined_timescale(tracks: &[&TrackModel]) -> Result<f64> {
    if tracks.is_empty() {
        return Err(MeasurementError::BadParams("at least one tracked channel is required".into()));
    }
    if tracks.len() == 1 {
        return Ok(collapse_timescale(tracks[0]));
    }
    let rate: f64 = tracks.iter().map(|t| 1.0 / collapse_timescale(t)).sum::<f64>() / tracks.len() as f64;
    Ok(1.0 / rate)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaperComparison {
    pub target: f64,
    pub computed: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimescaleReport {
    pub tau_c_seconds: f64,
    pub parameters: TrackModel,
    pub paper_comparison: PaperComparison,
    pub notes: Vec<String>,
}

pub fn timescale_report(track: &TrackModel) -> TimescaleReport {
    let tau_c = collapse_timescale(track);
    let ratio = tau_c / TARGET_TAU_C;
    let mut notes = vec![format!(
        "N(beta) = {}, mean n_beta = {:.6e}, tau_c = tau * n_beta / N(beta) = {:.6e} s",
        track.n_cells,
        track.mean_cell_count(),
        tau_c
    )];
    if !(0.1..=10.0).contains(&ratio) {
        notes.push(format!(
            "computed tau_c differs from the quoted order {TARGET_TAU_C:e} s by a factor {ratio:.3e} ({:+.1} decades)",
            ratio.log10()
        ));
    }
    if track.mean_cell_count() < 10.0 {
        notes.push(format!(
            "mean n_beta = {:.3} intricons per cell is too small for count fluctuations to be Gaussian",
            track.mean_cell_count()
        ));
    }
    TimescaleReport {
        tau_c_seconds: tau_c,
        parameters: track.clone(),
        paper_comparison: PaperComparison { target: TARGET_TAU_C, computed: tau_c, ratio },
        notes,
    }
}

/// Track from the quoted parameters with `λ = 10⁻⁵ cm` and `Λ = 3λ`.
pub fn literal_track() -> TrackModel {
    let lambda = 1e-5;
    build_track(10e6, 10.0, 10.0, 3.0 * lambda, lambda, 1e-10, Profile::Uniform).expect("literal parameters are valid")
}

pub fn literal_reading_report() -> TimescaleReport {
    let mut report = timescale_report(&literal_track());
    report.notes.push(
        "inputs: E = 10 MeV, e = 10 eV, L = 10 cm, lambda = 1e-5 cm, Lambda = 3 lambda, tau = 1e-10 s".to_string(),
    );
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    GeigerCase1,
    GeigerCase2,
    SternGerlach,
    CatTracks,
}

impl std::str::FromStr for ScenarioKind {
    type Err = MeasurementError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geiger_case1" => Ok(ScenarioKind::GeigerCase1),
            "geiger_case2" => Ok(ScenarioKind::GeigerCase2),
            "stern_gerlach" => Ok(ScenarioKind::SternGerlach),
            "cat_tracks" => Ok(ScenarioKind::CatTracks),
            other => Err(MeasurementError::BadParams(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Channels of a measurement. A mute channel has no track in the detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: ScenarioKind,
    pub channels: Vec<f64>,
    pub mute_mask: Vec<bool>,
    pub tracks: Vec<Option<TrackModel>>,
    pub spherical_cells: bool,
}

/// Inputs for [`scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub p1: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub track: TrackModel,
}

impl ScenarioParams {
    pub fn two_channel(p1: f64, track: TrackModel) -> Self {
        ScenarioParams { p1: Some(p1), weights: None, track }
    }

    pub fn weighted(weights: Vec<f64>, track: TrackModel) -> Self {
        ScenarioParams { p1: None, weights: Some(weights), track }
    }
}

pub fn scenario(name: ScenarioKind, params: &ScenarioParams) -> Result<Scenario> {
    let p1 = || -> Result<f64> {
        let p = params.p1.ok_or_else(|| MeasurementError::BadParams("p1 is required".into()))?;
        if (0.0..=1.0).contains(&p) {
            Ok(p)
        } else {
            Err(MeasurementError::BadParams(format!("p1 must lie in [0, 1], got {p}")))
        }
    };
    let t = || Some(params.track.clone());
    let s = match name {
        ScenarioKind::GeigerCase1 => {
            let p = p1()?;
            Scenario { name, channels: vec![p, 1.0 - p], mute_mask: vec![false, true], tracks: vec![t(), None], spherical_cells: false }
        }
        ScenarioKind::GeigerCase2 => {
            let p = p1()?;
            Scenario { name, channels: vec![p, 1.0 - p], mute_mask: vec![false, false], tracks: vec![t(), t()], spherical_cells: false }
        }
        ScenarioKind::SternGerlach => {
            let p = p1()?;
            Scenario {
                name,
                channels: vec![p, 1.0 - p, 0.0, 0.0],
                mute_mask: vec![false, false, true, true],
                tracks: vec![t(), t(), None, None],
                spherical_cells: false,
            }
        }
        ScenarioKind::CatTracks => {
            let w = params.weights.as_ref().ok_or_else(|| MeasurementError::BadParams("weights are required".into()))?;
            if w.is_empty() || w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(MeasurementError::BadParams("weights must be non-empty and non-negative".into()));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(MeasurementError::BadParams("weights sum to zero".into()));
            }
            let k = w.len();
            Scenario {
                name,
                channels: w.iter().map(|x| x / total).collect(),
                mute_mask: vec![false; k],
                tracks: vec![t(); k],
                spherical_cells: true,
            }
        }
    };
    Ok(s)
}

impl Scenario {
    /// `τ_c` from the tracked channels; mute channels contribute nothing.
    pub fn tau_c(&self) -> Result<f64> {
        let tracks: Vec<&TrackModel> = self.tracks.iter().flatten().collect();
        combined_timescale(&tracks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRun {
    pub scenario: ScenarioKind,
    pub channels: Vec<f64>,
    pub mute_mask: Vec<bool>,
    pub tau_c_seconds: f64,
    pub dt_seconds: f64,
    pub mean_collapse_time_seconds: f64,
    pub stats: EnsembleStats,
}

/// Runs the collapse ensemble for a scenario. `dt` is in seconds and
/// defaults to `10⁻³ τ_c`.
pub fn run_scenario(
    scenario: &Scenario,
    dt: Option<f64>,
    law: IncrementLaw,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ScenarioRun> {
    if trials == 0 {
        return Err(MeasurementError::BadParams("trials must be at least 1".into()));
    }
    let tau_c = scenario.tau_c()?;
    let dt = dt.unwrap_or(collapse::DEFAULT_DT * tau_c);
    let params = CollapseParams { dt, tau_c, law, ..Default::default() };
    let stats = collapse::ensemble(&scenario.channels, &params, trials, seed, exec)?;
    Ok(ScenarioRun {
        scenario: scenario.name,
        channels: scenario.channels.clone(),
        mute_mask: scenario.mute_mask.clone(),
        tau_c_seconds: tau_c,
        dt_seconds: dt,
        mean_collapse_time_seconds: stats.mean_collapse_time * tau_c,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_track() -> TrackModel {
        // n_total = 1e5, N = 1000, n_beta = 100.
        build_track(1e6, 10.0, 10.0, 0.01, 1e-3, 1e-10, Profile::Uniform).unwrap()
    }

    #[test]
    fn rate_examples() {
        assert_eq!(collision_rate(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(collision_rate(1.0, 2.0, 6.0).unwrap(), 2.0 * collision_rate(1.0, 2.0, 3.0).unwrap());
        assert_relative_eq!(collision_rate(AIR_NUMBER_DENSITY, AIR_MEAN_SPEED, 100.0).unwrap(), 1.15e26, max_relative = 1e-12);
        assert!(collision_rate(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn track_examples() {
        let t = build_track(10e6, 10.0, 10.0, 0.01, 1e-5, 1e-10, Profile::Uniform).unwrap();
        assert_eq!(t.n_total, 1e6);
        assert_eq!(t.n_cells, 1000);
        assert!(t.cell_counts.iter().all(|&n| n == 1000.0));
        assert!(matches!(
            build_track(10e6, 10.0, 10.0, 1e-6, 1e-5, 1e-10, Profile::Uniform),
            Err(MeasurementError::CellNarrowerThanMFP { .. })
        ));
        let b = build_track(10e6, 10.0, 10.0, 0.01, 1e-5, 1e-10, Profile::BraggLike { exponent: 0.5 }).unwrap();
        assert!(b.count_closure() < 1e-9);
        assert!(b.cell_counts.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn delta_p1_examples() {
        assert_eq!(delta_p1(1e6, 1e6, 17.0).unwrap().exact, 0.0);
        assert_eq!(delta_p1(0.0, 1e6, 0.0).unwrap().exact, 0.0);
        assert_eq!(delta_p1(3e5, 1e6, 0.0).unwrap().exact, 0.0);
        let d = delta_p1(3e5, 1e6, 1.0).unwrap();
        assert_relative_eq!(d.approximate, 7.0e-7, max_relative = 1e-12);
        assert!((d.difference / d.approximate).abs() < 2e-6);
        assert!(delta_p1(2.0, 1.0, 0.0).is_err());
        assert!(delta_p1(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn variance_examples() {
        let t = unit_track();
        assert_eq!(variance_per_step(&t, 0.0, 1e-10).unwrap(), 0.0);
        assert_eq!(variance_per_step(&t, 1.0, 1e-10).unwrap(), 0.0);
        let square = build_track(1e4, 1.0, 1.0, 0.01, 1e-3, 1.0, Profile::Uniform).unwrap();
        // N = n_beta = 100.
        assert_eq!(variance_per_step(&square, 0.5, 1.0).unwrap(), 0.25);
        assert!(variance_per_step(&t, 1.5, 1e-10).is_err());
        assert!(variance_per_step(&t, 0.5, 2e-10).is_err());
    }

    #[test]
    fn timescale_examples() {
        let t = build_track(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, Profile::Uniform).unwrap();
        assert_eq!(collapse_timescale(&t), 1.0);
        assert_relative_eq!(collapse_timescale(&unit_track()), 1e-11, max_relative = 1e-15);
        let lit = literal_reading_report();
        assert_eq!(lit.parameters.n_cells, 333_334);
        assert_relative_eq!(lit.tau_c_seconds, 9.0e-16, max_relative = 1e-4);
        assert!(lit.notes.len() >= 2);
    }

    #[test]
    fn scenario_examples() {
        let sg = scenario(ScenarioKind::SternGerlach, &ScenarioParams::two_channel(0.5, unit_track())).unwrap();
        assert_eq!(sg.channels, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(sg.mute_mask, vec![false, false, true, true]);
        let g = scenario(ScenarioKind::GeigerCase1, &ScenarioParams::two_channel(1.0, unit_track())).unwrap();
        assert_eq!(g.channels, vec![1.0, 0.0]);
        let cat = scenario(ScenarioKind::CatTracks, &ScenarioParams::weighted(vec![1.0; 5], unit_track())).unwrap();
        assert_eq!(cat.channels, vec![0.2; 5]);
        assert!(cat.spherical_cells);
        assert!(scenario(ScenarioKind::GeigerCase1, &ScenarioParams::weighted(vec![1.0], unit_track())).is_err());
        let g2 = scenario(ScenarioKind::GeigerCase2, &ScenarioParams::two_channel(0.5, unit_track())).unwrap();
        assert_eq!(g2.tau_c().unwrap(), collapse_timescale(&unit_track()));
    }

    #[test]
    fn run_scenario_paths() {
        let sg = scenario(ScenarioKind::SternGerlach, &ScenarioParams::two_channel(0.3, unit_track())).unwrap();
        assert!(matches!(
            run_scenario(&sg, None, IncrementLaw::Gaussian, 0, 1, Execution::Sequential),
            Err(MeasurementError::BadParams(_))
        ));
        let run = run_scenario(&sg, None, IncrementLaw::Gaussian, 200, 1, Execution::Parallel).unwrap();
        assert_eq!(&run.stats.win_counts[2..], &[0, 0]);
        assert_eq!(run.stats.max_mass_on_initially_zero, 0.0);
        assert_relative_eq!(run.dt_seconds, 1e-14, max_relative = 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn variance_pair_is_symmetric(p1 in 0.0f64..=1.0, dt in 1e-12f64..1e-10) {
                let t = build_track(1e6, 10.0, 10.0, 0.01, 1e-3, 1e-10, Profile::Uniform).unwrap();
                let p2 = 1.0 - p1;
                prop_assert_eq!(variance_per_step_pair(&t, p1, p2, dt).unwrap(), variance_per_step_pair(&t, p2, p1, dt).unwrap());
            }

            #[test]
            fn delta_p1_first_order(n in 1e3f64..1e8, frac in 0.0f64..=1.0, r in -0.1f64..0.1) {
                let n1 = (frac * n).floor();
                let dn1 = (r * n).round().max(-n1);
                let d = delta_p1(n1, n, dn1).unwrap();
                if d.approximate != 0.0 {
                    prop_assert!((d.difference / d.approximate).abs() <= 2.0 * dn1.abs() / n + 1e-12);
                }
            }

            #[test]
            fn timescale_scaling(tau in 1e-12f64..1e-8, k in 1.0f64..10.0) {
                let base = build_track(1e6, 10.0, 10.0, 0.01, 1e-3, tau, Profile::Uniform).unwrap();
                let t2 = build_track(1e6, 10.0, 10.0, 0.01, 1e-3, k * tau, Profile::Uniform).unwrap();
                prop_assert!((collapse_timescale(&t2) / collapse_timescale(&base) - k).abs() < 1e-12 * k);
                let more = build_track(k.round() * 1e6, 10.0, 10.0, 0.01, 1e-3, tau, Profile::Uniform).unwrap();
                prop_assert!((collapse_timescale(&more) / collapse_timescale(&base) - k.round()).abs() < 1e-12 * k);
                let cells = build_track(1e6, 10.0, 10.0, 0.01 / k.round(), 1e-3 / k.round(), tau, Profile::Uniform).unwrap();
                let expected = 1.0 / (k.round() * k.round());
                prop_assert!((collapse_timescale(&cells) / collapse_timescale(&base) - expected).abs() < 1e-9 * expected);
            }
        }
    }
}
