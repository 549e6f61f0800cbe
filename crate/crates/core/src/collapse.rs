//! Brownian motion of channel probabilities on the simplex.
//!
//! Each step adds a zero-mean increment with covariance
//! `⟨δp_j δp_k⟩ = (p_j δ_jk − p_j p_k) dt/τ_c`. Channels that reach 0 are
//! absorbed for good; the race ends when a single channel holds all the
//! probability.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{map_indexed, trial_rng, Execution};

pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance on `Σp = 1` accepted from callers before renormalising.
pub const INPUT_SUM_TOL: f64 = 1e-9;
pub const WIN_THRESHOLD: f64 = 1.0 - 1e-9;
/// Largest allowed `dt/τ_c`.
pub const MAX_STEP_RATIO: f64 = 1e-2;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
pub const MAX_HISTORY_STEPS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollapseError {
    #[error("probability vector is off the simplex: {0}")]
    OffSimplex(String),
    #[error("dt/tau_c = {ratio} exceeds {MAX_STEP_RATIO}")]
    StepTooLarge { ratio: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("no collapse after {0} steps")]
    MaxStepsExceeded(u64),
    #[error("{n} history steps requested, at most {MAX_HISTORY_STEPS} can be enumerated")]
    TooManySteps { n: usize },
}

pub type Result<T> = std::result::Result<T, CollapseError>;

fn validate_simplex(p: &[f64], tol: f64) -> Result<f64> {
    if p.is_empty() {
        return Err(CollapseError::OffSimplex("empty vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0 || **x > 1.0 + tol) {
        return Err(CollapseError::OffSimplex(format!("entry {x} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(CollapseError::OffSimplex(format!("entries sum to {sum}")));
    }
    Ok(sum)
}

fn check_step(dt: f64, tau_c: f64) -> Result<f64> {
    if !(tau_c > 0.0) || !tau_c.is_finite() {
        return Err(CollapseError::InvalidParams(format!("tau_c must be positive, got {tau_c}")));
    }
    if !(dt > 0.0) {
        return Err(CollapseError::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let ratio = dt / tau_c;
    if ratio > MAX_STEP_RATIO {
        return Err(CollapseError::StepTooLarge { ratio });
    }
    Ok(ratio)
}

/// Channel probabilities with absorption flags. `time` is in units of `τ_c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexState {
    pub p: Vec<f64>,
    pub frozen: Vec<bool>,
    pub time: f64,
}

impl SimplexState {
    /// Channels starting at 0 are frozen; a channel at or above the win
    /// threshold collapses the state immediately.
    pub fn new(p0: &[f64]) -> Result<Self> {
        let sum = validate_simplex(p0, INPUT_SUM_TOL)?;
        let p: Vec<f64> = p0.iter().map(|x| x / sum).collect();
        let frozen = p.iter().map(|&x| x == 0.0).collect();
        let mut s = SimplexState { p, frozen, time: 0.0 };
        s.settle();
        Ok(s)
    }

    pub fn channels(&self) -> usize {
        self.p.len()
    }

    pub fn active(&self) -> usize {
        self.frozen.iter().filter(|f| !**f).count()
    }

    pub fn is_collapsed(&self) -> bool {
        self.frozen.iter().all(|&f| f)
    }

    pub fn winner(&self) -> Option<usize> {
        if self.is_collapsed() {
            self.p.iter().position(|&x| x == 1.0)
        } else {
            None
        }
    }

    /// Declares a winner once one active channel reaches the threshold or is
    /// the only one left.
    fn settle(&mut self) {
        let lead = (0..self.p.len()).filter(|&j| !self.frozen[j]).find(|&j| self.p[j] >= WIN_THRESHOLD);
        let lone = (self.active() == 1).then(|| self.frozen.iter().position(|f| !f)).flatten();
        if let Some(w) = lead.or(lone) {
            for j in 0..self.p.len() {
                self.p[j] = if j == w { 1.0 } else { 0.0 };
                self.frozen[j] = true;
            }
        }
    }
}

/// `A_jk dt/τ_c` with `A_jk = p_j δ_jk − p_j p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSpec {
    pub matrix: DMatrix<f64>,
}

impl CovSpec {
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.matrix)
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn covariance_matrix(p: &[f64], dt: f64, tau_c: f64) -> Result<CovSpec> {
    validate_simplex(p, INPUT_SUM_TOL)?;
    if !(dt > 0.0) || !(tau_c > 0.0) {
        return Err(CollapseError::InvalidParams(format!("need dt, tau_c > 0, got {dt}, {tau_c}")));
    }
    let scale = dt / tau_c;
    let k = p.len();
    let matrix = DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { p[i] } else { 0.0 };
        (d - p[i] * p[j]) * scale
    });
    Ok(CovSpec { matrix })
}

/// Distribution of a single increment. Both laws share the same covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementLaw {
    /// Multivariate normal.
    #[default]
    Gaussian,
    /// Independent random signs along the eigenvectors of the covariance.
    /// With two channels this is `δp₁ = ±√(p₁p₂ dt/τ_c)`.
    TwoPoint,
}

impl std::str::FromStr for IncrementLaw {
    type Err = CollapseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(IncrementLaw::Gaussian),
            "two_point" | "two-point" => Ok(IncrementLaw::TwoPoint),
            other => Err(CollapseError::InvalidParams(format!("unknown increment law `{other}`"))),
        }
    }
}

fn sample_increment<R: Rng + ?Sized>(p: &[f64], ratio: f64, law: IncrementLaw, rng: &mut R) -> Vec<f64> {
    let k = p.len();
    let scale = ratio.sqrt();
    match law {
        IncrementLaw::Gaussian => {
            // x = (diag √p − p √pᵀ) z has covariance diag(p) − ppᵀ when Σp = 1.
            let w: Vec<f64> = p.iter().map(|&pj| pj.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
            let total: f64 = w.iter().sum();
            (0..k).map(|j| scale * (w[j] - p[j] * total)).collect()
        }
        IncrementLaw::TwoPoint => {
            let active: Vec<usize> = (0..k).filter(|&j| p[j] > 0.0).collect();
            let mut x = vec![0.0; k];
            if active.len() == 2 {
                let (a, b) = (active[0], active[1]);
                let d = scale * (p[a] * p[b]).sqrt();
                let d = if rng.random::<bool>() { d } else { -d };
                x[a] = d;
                x[b] = -d;
                return x;
            }
            let q: Vec<f64> = active.iter().map(|&j| p[j]).collect();
            let m = active.len();
            let cov = DMatrix::from_fn(m, m, |i, j| if i == j { q[i] } else { 0.0 } - q[i] * q[j]);
            let eig = cov.symmetric_eigen();
            let mut y = DVector::zeros(m);
            for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
                if lambda > 0.0 {
                    let s = if rng.random::<bool>() { lambda.sqrt() } else { -lambda.sqrt() };
                    y += eig.eigenvectors.column(c) * s;
                }
            }
            for (i, &j) in active.iter().enumerate() {
                x[j] = scale * y[i];
            }
            x
        }
    }
}

/// One increment followed by clamp-and-redistribute.
///
/// Channels pushed below 0 are set to 0 and frozen; their deficit is taken
/// from the remaining positive channels in proportion to their mass.
pub fn step<R: Rng + ?Sized>(state: &SimplexState, dt: f64, tau_c: f64, law: IncrementLaw, rng: &mut R) -> Result<SimplexState> {
    let ratio = check_step(dt, tau_c)?;
    let mut next = state.clone();
    if state.is_collapsed() {
        return Ok(next);
    }
    let live: Vec<f64> = (0..state.channels()).map(|j| if state.frozen[j] { 0.0 } else { state.p[j] }).collect();
    let x = sample_increment(&live, ratio, law, rng);
    let mut deficit = 0.0;
    for j in 0..next.channels() {
        if next.frozen[j] {
            continue;
        }
        next.p[j] += x[j];
        if next.p[j] <= 0.0 {
            deficit -= next.p[j];
            next.p[j] = 0.0;
            next.frozen[j] = true;
        }
    }
    if deficit > 0.0 {
        let positive: f64 = (0..next.channels()).filter(|&j| !next.frozen[j]).map(|j| next.p[j]).sum();
        let keep = 1.0 - deficit / positive;
        for j in 0..next.channels() {
            if !next.frozen[j] {
                next.p[j] *= keep;
            }
        }
    }
    let sum: f64 = next.p.iter().sum();
    for v in next.p.iter_mut() {
        *v = (*v / sum).min(1.0);
    }
    next.time = state.time + ratio;
    next.settle();
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseOutcome {
    pub winner: usize,
    /// In units of `τ_c`.
    pub collapse_time: f64,
    pub path_length: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseParams {
    pub dt: f64,
    pub tau_c: f64,
    pub law: IncrementLaw,
    pub max_steps: u64,
}

impl Default for CollapseParams {
    fn default() -> Self {
        CollapseParams { dt: DEFAULT_DT, tau_c: 1.0, law: IncrementLaw::Gaussian, max_steps: DEFAULT_MAX_STEPS }
    }
}

/// Steps until collapse, calling `observe` on the initial state and after
/// every step.
pub fn run_observed<R, F>(p0: &[f64], params: &CollapseParams, rng: &mut R, mut observe: F) -> Result<CollapseOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&SimplexState),
{
    check_step(params.dt, params.tau_c)?;
    let mut state = SimplexState::new(p0)?;
    observe(&state);
    let mut steps = 0u64;
    while !state.is_collapsed() {
        if steps >= params.max_steps {
            return Err(CollapseError::MaxStepsExceeded(steps));
        }
        state = step(&state, params.dt, params.tau_c, params.law, rng)?;
        steps += 1;
        observe(&state);
    }
    let winner = state.winner().expect("collapsed state has a winner");
    Ok(CollapseOutcome { winner, collapse_time: state.time, path_length: steps })
}

pub fn run_to_collapse<R: Rng + ?Sized>(p0: &[f64], params: &CollapseParams, rng: &mut R) -> Result<CollapseOutcome> {
    run_observed(p0, params, rng, |_| {})
}

/// Runs one trial and keeps every `record_every`-th state plus the last.
pub fn trajectory<R: Rng + ?Sized>(
    p0: &[f64],
    params: &CollapseParams,
    rng: &mut R,
    record_every: usize,
) -> (Result<CollapseOutcome>, Vec<SimplexState>) {
    let every = record_every.max(1);
    let mut kept = Vec::new();
    let mut count = 0usize;
    let mut last = None;
    let outcome = run_observed(p0, params, rng, |s| {
        if count % every == 0 {
            kept.push(s.clone());
            last = None;
        } else {
            last = Some(s.clone());
        }
        count += 1;
    });
    kept.extend(last);
    (outcome, kept)
}

pub fn write_trajectory_csv<W: Write>(states: &[SimplexState], mut w: W) -> io::Result<()> {
    let k = states.first().map_or(0, SimplexState::channels);
    let header: Vec<String> = std::iter::once("time".to_string()).chain((0..k).map(|j| format!("p_{j}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for s in states {
        let row: Vec<f64> = std::iter::once(s.time).chain(s.p.iter().copied()).collect();
        writeln!(w, "{}", crate::io::csv_row(&row))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub expected: Vec<Vec<f64>>,
    /// `max |empirical − expected| / max |expected|`.
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub trials: usize,
    pub finished: usize,
    /// Trials that hit `max_steps`; excluded from the frequencies.
    pub unfinished: usize,
    pub win_counts: Vec<u64>,
    /// Over finished trials.
    pub win_frequency: Vec<f64>,
    /// In units of `τ_c`, over finished trials.
    pub mean_collapse_time: f64,
    pub mean_path_length: f64,
    /// Sample covariance of the first increment across trials, normalised
    /// by `dt/τ_c`.
    pub empirical_step_covariance: Vec<Vec<f64>>,
    pub covariance_check: CovarianceCheck,
    /// Largest probability ever held by a channel that started at 0.
    pub max_mass_on_initially_zero: f64,
}

impl EnsembleStats {
    /// Standard error of a win frequency under a binomial model.
    pub fn binomial_sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.finished.max(1) as f64).sqrt()
    }
}

struct Trial {
    outcome: Result<CollapseOutcome>,
    first_increment: Option<Vec<f64>>,
    zero_mass: f64,
}

pub fn ensemble(p0: &[f64], params: &CollapseParams, trials: usize, seed: u64, exec: Execution) -> Result<EnsembleStats> {
    if trials == 0 {
        return Err(CollapseError::InvalidParams("trials must be at least 1".into()));
    }
    let ratio = check_step(params.dt, params.tau_c)?;
    let start = SimplexState::new(p0)?;
    let zero_set: Vec<usize> = (0..start.channels()).filter(|&j| p0[j] == 0.0).collect();
    let k = start.channels();

    let results: Vec<Trial> = map_indexed(trials, exec, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let mut prev: Option<Vec<f64>> = None;
        let mut first_increment = None;
        let mut zero_mass: f64 = 0.0;
        let outcome = run_observed(p0, params, &mut rng, |s| {
            for &j in &zero_set {
                zero_mass = zero_mass.max(s.p[j]);
            }
            match &prev {
                None => prev = Some(s.p.clone()),
                Some(p) if first_increment.is_none() => {
                    first_increment = Some(s.p.iter().zip(p).map(|(a, b)| a - b).collect());
                }
                _ => {}
            }
        });
        Trial { outcome, first_increment, zero_mass }
    });

    let mut win_counts = vec![0u64; k];
    let (mut finished, mut time_sum, mut path_sum) = (0usize, 0.0, 0.0);
    let mut max_zero: f64 = 0.0;
    let mut increments = Vec::new();
    for t in &results {
        max_zero = max_zero.max(t.zero_mass);
        match &t.outcome {
            Ok(o) => {
                finished += 1;
                win_counts[o.winner] += 1;
                time_sum += o.collapse_time;
                path_sum += o.path_length as f64;
            }
            Err(CollapseError::MaxStepsExceeded(_)) => {}
            Err(e) => return Err(e.clone()),
        }
        if let Some(inc) = &t.first_increment {
            increments.push(inc.clone());
        }
    }
    let denom = finished.max(1) as f64;
    let empirical = sample_covariance(&increments, k) / ratio;
    let expected = covariance_matrix(&start.p, 1.0, 1.0)?.matrix;
    let scale = expected.amax();
    let max_relative_error = if scale > 0.0 { (&empirical - &expected).amax() / scale } else { empirical.amax() };
    Ok(EnsembleStats {
        trials,
        finished,
        unfinished: trials - finished,
        win_frequency: win_counts.iter().map(|&c| c as f64 / denom).collect(),
        win_counts,
        mean_collapse_time: time_sum / denom,
        mean_path_length: path_sum / denom,
        empirical_step_covariance: matrix_rows(&empirical),
        covariance_check: CovarianceCheck { expected: matrix_rows(&expected), max_relative_error },
        max_mass_on_initially_zero: max_zero,
    })
}

fn sample_covariance(rows: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let n = rows.len();
    if n < 2 {
        return DMatrix::zeros(k, k);
    }
    let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(k, k);
    for r in rows {
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    cov / (n as f64 - 1.0)
}

/// Moments of single increments drawn at a fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSample {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn sample_steps(p: &[f64], params: &CollapseParams, samples: usize, seed: u64, exec: Execution) -> Result<StepSample> {
    if samples < 2 {
        return Err(CollapseError::InvalidParams("need at least 2 samples".into()));
    }
    let state = SimplexState::new(p)?;
    check_step(params.dt, params.tau_c)?;
    let rows: Vec<Vec<f64>> = map_indexed(samples, exec, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let next = step(&state, params.dt, params.tau_c, params.law, &mut rng).expect("parameters already validated");
        next.p.iter().zip(&state.p).map(|(a, b)| a - b).collect()
    });
    let k = state.channels();
    let covariance = sample_covariance(&rows, k);
    let n = samples as f64;
    let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let standard_error = (0..k).map(|j| (covariance[(j, j)] / n).sqrt()).collect();
    Ok(StepSample { samples, mean, standard_error, covariance })
}

/// Per-step `Δp₁` used by [`enumerate_histories`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    Constant(f64),
    /// `Δp₁ = √(p₁ p₂ δ)` at the current `p₁`.
    Variance { delta: f64 },
}

impl DeltaRule {
    pub fn delta_at(&self, p1: f64) -> f64 {
        match *self {
            DeltaRule::Constant(d) => d,
            DeltaRule::Variance { delta } => (p1 * (1.0 - p1) * delta).sqrt(),
        }
    }
}

/// Terminal `p₁` over all `2ⁿ` sign histories, each of weight `2⁻ⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryDistribution {
    pub terminal: Vec<f64>,
    pub weight: f64,
    pub mean: f64,
    /// Whether any branch touched 0 or 1.
    pub clamped: bool,
}

impl HistoryDistribution {
    /// Distinct terminal values with their total weight, ascending.
    pub fn merged(&self) -> Vec<(f64, f64)> {
        merge_weighted(self.terminal.iter().map(|&x| (x, self.weight)).collect())
    }
}

pub fn enumerate_histories(p0: &[f64], rule: DeltaRule, n_steps: usize) -> Result<HistoryDistribution> {
    if p0.len() != 2 {
        return Err(CollapseError::InvalidParams(format!("history tree needs 2 channels, got {}", p0.len())));
    }
    validate_simplex(p0, INPUT_SUM_TOL)?;
    if n_steps > MAX_HISTORY_STEPS {
        return Err(CollapseError::TooManySteps { n: n_steps });
    }
    let mut level = vec![p0[0]];
    let mut clamped = false;
    for _ in 0..n_steps {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &p1 in &level {
            if p1 <= 0.0 || p1 >= 1.0 {
                next.extend([p1, p1]);
                continue;
            }
            let d = rule.delta_at(p1);
            let (up, down) = (p1 + d, p1 - d);
            clamped |= up >= 1.0 || down <= 0.0;
            next.extend([up.min(1.0), down.max(0.0)]);
        }
        level = next;
    }
    let weight = 0.5f64.powi(n_steps as i32);
    let mean = level.iter().sum::<f64>() * weight;
    Ok(HistoryDistribution { terminal: level, weight, mean, clamped })
}

/// Points within this distance are treated as the same atom.
pub const ATOM_TOL: f64 = 1e-12;

fn merge_weighted(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (x, w) in pts {
        match out.last_mut() {
            Some(last) if (x - last.0).abs() <= ATOM_TOL => last.1 += w,
            _ => out.push((x, w)),
        }
    }
    out
}

/// Kolmogorov-Smirnov distance between two weighted samples.
pub fn ks_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let wa: f64 = a.iter().map(|p| p.1).sum();
    let wb: f64 = b.iter().map(|p| p.1).sum();
    let tagged: Vec<(f64, f64)> =
        a.iter().map(|&(x, w)| (x, w / wa)).chain(b.iter().map(|&(x, w)| (x, -w / wb))).collect();
    // Merging signed weights per atom gives the CDF difference increments.
    let mut cdf = 0.0f64;
    let mut sup = 0.0f64;
    for (_, d) in merge_weighted(tagged) {
        cdf += d;
        sup = sup.max(cdf.abs());
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::trial_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn covariance_examples() {
        let c = covariance_matrix(&[0.5, 0.5], 1.0, 1.0).unwrap();
        assert_eq!(c.to_rows(), vec![vec![0.25, -0.25], vec![-0.25, 0.25]]);
        let z = covariance_matrix(&[1.0, 0.0, 0.0], 1e-3, 1.0).unwrap();
        assert!(z.matrix.iter().all(|&v| v == 0.0));
        assert!(matches!(covariance_matrix(&[0.3, 0.6], 1.0, 1.0), Err(CollapseError::OffSimplex(_))));
    }

    #[test]
    fn collapsed_state_is_fixed() {
        let s = SimplexState::new(&[1.0, 0.0]).unwrap();
        assert_eq!(s.winner(), Some(0));
        let mut rng = trial_rng(1, 0);
        assert_eq!(step(&s, 1e-3, 1.0, IncrementLaw::Gaussian, &mut rng).unwrap(), s);
        let o = run_to_collapse(&[1.0, 0.0], &CollapseParams::default(), &mut rng).unwrap();
        assert_eq!(o, CollapseOutcome { winner: 0, collapse_time: 0.0, path_length: 0 });
    }

    #[test]
    fn step_guard() {
        let s = SimplexState::new(&[0.5, 0.5]).unwrap();
        let mut rng = trial_rng(1, 0);
        assert!(matches!(step(&s, 0.02, 1.0, IncrementLaw::Gaussian, &mut rng), Err(CollapseError::StepTooLarge { .. })));
        assert!(step(&s, 0.01, 1.0, IncrementLaw::Gaussian, &mut rng).is_ok());
    }

    #[test]
    fn two_point_two_channels() {
        let s = SimplexState::new(&[0.3, 0.7]).unwrap();
        let mut rng = trial_rng(5, 0);
        let d = (0.21f64 * 1e-3).sqrt();
        for _ in 0..20 {
            let n = step(&s, 1e-3, 1.0, IncrementLaw::TwoPoint, &mut rng).unwrap();
            assert_abs_diff_eq!((n.p[0] - 0.3).abs(), d, epsilon = 1e-15);
            assert_abs_diff_eq!(n.p[0] + n.p[1], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn max_steps_reported() {
        let params = CollapseParams { max_steps: 3, ..Default::default() };
        let mut rng = trial_rng(1, 0);
        assert_eq!(run_to_collapse(&[0.5, 0.5], &params, &mut rng), Err(CollapseError::MaxStepsExceeded(3)));
        let stats = ensemble(&[0.5, 0.5], &params, 10, 1, Execution::Sequential).unwrap();
        assert_eq!(stats.unfinished, 10);
    }

    #[test]
    fn ensemble_single_trial_and_determinism() {
        let params = CollapseParams::default();
        let stats = ensemble(&[0.4, 0.6], &params, 1, 9, Execution::Sequential).unwrap();
        let single = run_to_collapse(&[0.4, 0.6], &params, &mut trial_rng(9, 0)).unwrap();
        assert_eq!(stats.win_counts[single.winner], 1);
        assert_eq!(stats.mean_collapse_time, single.collapse_time);
        let a = ensemble(&[0.2, 0.3, 0.5], &params, 50, 4, Execution::Sequential).unwrap();
        let b = ensemble(&[0.2, 0.3, 0.5], &params, 50, 4, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(ensemble(&[0.5, 0.5], &params, 0, 1, Execution::Sequential).is_err());
    }

    #[test]
    fn born_rule_two_channels() {
        let stats = ensemble(&[0.1, 0.9], &CollapseParams::default(), 10_000, 11, Execution::Parallel).unwrap();
        let sigma = stats.binomial_sigma(0.1);
        assert!((stats.win_frequency[0] - 0.1).abs() < 3.0 * sigma, "{:?}", stats.win_frequency);
        assert_abs_diff_eq!(stats.win_frequency.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn initially_zero_channels_never_win() {
        let stats = ensemble(&[0.5, 0.5, 0.0, 0.0], &CollapseParams::default(), 500, 2, Execution::Parallel).unwrap();
        assert_eq!(&stats.win_counts[2..], &[0, 0]);
        assert_eq!(stats.max_mass_on_initially_zero, 0.0);
    }

    #[test]
    fn history_tree_examples() {
        let h = enumerate_histories(&[0.5, 0.5], DeltaRule::Constant(0.1), 1).unwrap();
        assert_eq!(h.merged(), vec![(0.4, 0.5), (0.6, 0.5)]);
        let h = enumerate_histories(&[0.3, 0.7], DeltaRule::Variance { delta: 1e-3 }, 12).unwrap();
        assert!(!h.clamped);
        assert!((h.mean - 0.3).abs() <= 1e-12);
        assert_eq!(h.terminal.len(), 4096);
        assert!(matches!(enumerate_histories(&[0.3, 0.7], DeltaRule::Constant(0.01), 21), Err(CollapseError::TooManySteps { .. })));
    }

    #[test]
    fn tree_clamps_and_absorbs() {
        let h = enumerate_histories(&[0.5, 0.5], DeltaRule::Constant(0.3), 3).unwrap();
        assert!(h.clamped);
        assert!(h.terminal.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // 0.5 → 0.8 → 1 stays at 1.
        assert_eq!(h.terminal[0], 1.0);
        assert_eq!(h.terminal[1], 1.0);
    }

    #[test]
    fn ks_basics() {
        let a = [(0.0, 1.0), (1.0, 1.0)];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_abs_diff_eq!(ks_distance(&a, &[(0.0, 1.0)]), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ks_distance(&[(0.0, 1.0)], &[(1.0, 3.0)]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn trajectory_csv() {
        let (o, states) = trajectory(&[0.5, 0.5], &CollapseParams::default(), &mut trial_rng(3, 0), 10);
        let o = o.unwrap();
        assert!(states.last().unwrap().is_collapsed());
        let mut buf = Vec::new();
        write_trajectory_csv(&states, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("time,p_0,p_1"));
        assert_eq!(text.lines().count(), states.len() + 1);
        assert!(o.path_length > 0);
    }

    mod props {
        use super::super::*;
        use crate::exec::trial_rng;
        use proptest::prelude::*;

        fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |w| {
                let s: f64 = w.iter().sum();
                (s > 1e-3).then(|| w.iter().map(|x| x / s).collect())
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn covariance_rows_sum_to_zero(p in (2usize..7).prop_flat_map(simplex), dt in 1e-4f64..1.0) {
                let c = covariance_matrix(&p, dt, 1.0).unwrap();
                for r in c.matrix.row_iter() {
                    prop_assert!(r.sum().abs() <= 1e-12);
                }
                let eig = c.matrix.clone().symmetric_eigen();
                prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10));
            }

            #[test]
            fn steps_stay_on_simplex(p in (2usize..5).prop_flat_map(simplex), seed in any::<u64>(), two_point in any::<bool>()) {
                let law = if two_point { IncrementLaw::TwoPoint } else { IncrementLaw::Gaussian };
                let mut rng = trial_rng(seed, 0);
                let mut s = SimplexState::new(&p).unwrap();
                for _ in 0..400 {
                    let next = step(&s, 1e-2, 1.0, law, &mut rng).unwrap();
                    prop_assert!((next.p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
                    prop_assert!(next.p.iter().all(|&x| (0.0..=1.0).contains(&x)));
                    for j in 0..p.len() {
                        if s.frozen[j] {
                            prop_assert!(next.frozen[j]);
                            prop_assert_eq!(next.p[j], s.p[j]);
                        }
                        if next.frozen[j] {
                            prop_assert!(next.p[j] == 0.0 || next.p[j] == 1.0);
                        }
                    }
                    s = next;
                }
            }

            #[test]
            fn unclamped_tree_is_a_martingale(p1 in 0.2f64..0.8, n in 1usize..12) {
                let h = enumerate_histories(&[p1, 1.0 - p1], DeltaRule::Variance { delta: 1e-4 }, n).unwrap();
                prop_assert!(!h.clamped);
                prop_assert!((h.mean - p1).abs() <= 1e-12);
            }
        }
    }
}
