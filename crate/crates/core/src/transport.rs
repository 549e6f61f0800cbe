//! Intricacy transport: the reaction-diffusion front for the intricate
//! fraction `g = f/f₀` and the discrete duplication walk.
//!
//! Lengths are in mean free paths and times in mean free times, so the PDE
//! reads `∂g/∂t = ½ ∂²g/∂x² + g(1 − g)` with the source face at `x = 0`.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::ops::Range;

use thiserror::Error;

pub const DEFAULT_GRID_SPACING: f64 = 0.25;
pub const DEFAULT_DT: f64 = 0.025;
pub const DEFAULT_SITE_CAP: u64 = 16;
/// Plane spacing of the walk in units of the mean free path (`3^{-1/2}`).
pub const PLANE_SPACING: f64 = 0.577_350_269_189_625_8;
/// Samples earlier than this are treated as transient by [`front_speed`].
pub const TRANSIENT_TIME: f64 = 20.0;
pub const MIN_SPEED_SAMPLES: usize = 20;
/// Cells kept free between the half-level front and the right edge.
pub const EDGE_MARGIN_CELLS: usize = 10;
pub const MAX_RELATIVE_CURVATURE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("dt = {dt} violates the explicit stability bound dt <= dx^2 = {limit}")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("front at x = {front} is within {EDGE_MARGIN_CELLS} cells of the right edge x = {edge}")]
    GridTooShort { front: f64, edge: f64 },
    #[error("no g = 0.5 crossing at t = {0}")]
    FrontNotFormed(f64),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("growth window is saturated (relative curvature {0:.3})")]
    WindowSaturated(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// `g(x)` on a uniform grid starting at `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontField {
    pub grid_spacing: f64,
    pub values: Vec<f64>,
    pub time: f64,
}

impl FrontField {
    fn cells(x_max: f64, dx: f64) -> Result<usize> {
        if !(dx > 0.0) || !(x_max > dx) {
            return Err(TransportError::Invalid(format!("need 0 < dx < x_max, got dx = {dx}, x_max = {x_max}")));
        }
        Ok((x_max / dx).round() as usize + 1)
    }

    pub fn from_fn<F: Fn(f64) -> f64>(x_max: f64, dx: f64, f: F) -> Result<Self> {
        let n = Self::cells(x_max, dx)?;
        Ok(FrontField { grid_spacing: dx, values: (0..n).map(|i| f(i as f64 * dx)).collect(), time: 0.0 })
    }

    /// `g = 1` on `[0, x_front]`, 0 beyond.
    pub fn step_profile(x_max: f64, dx: f64, x_front: f64) -> Result<Self> {
        Self::from_fn(x_max, dx, |x| if x <= x_front + 1e-12 { 1.0 } else { 0.0 })
    }

    pub fn constant(x_max: f64, dx: f64, value: f64) -> Result<Self> {
        Self::from_fn(x_max, dx, |_| value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.grid_spacing
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len().saturating_sub(1))
    }

    /// `∫ g dx` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.grid_spacing * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }

    /// Rightmost position where `g` drops through `level`, linearly
    /// interpolated between grid points.
    pub fn level_crossing(&self, level: f64) -> Option<f64> {
        let v = &self.values;
        (0..v.len().saturating_sub(1)).rev().find_map(|i| {
            let (a, b) = (v[i], v[i + 1]);
            (a >= level && b < level).then(|| self.x(i) + self.grid_spacing * (a - level) / (a - b))
        })
    }

    pub fn write_snapshot_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,g")?;
        for (i, g) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.x(i), g)?;
        }
        Ok(())
    }
}

/// Boundary treatment for [`kpp_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// `g(0) = 1`, right edge held at 0.
    Free,
    /// `g(0) = 1` and `g = 0` beyond the boundary `x = t`.
    Moving,
    /// No source: zero-flux at both ends.
    Unsourced,
}

impl std::str::FromStr for BoundaryMode {
    type Err = TransportError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" | "free_boundary" => Ok(BoundaryMode::Free),
            "moving" | "moving_boundary" => Ok(BoundaryMode::Moving),
            "unsourced" => Ok(BoundaryMode::Unsourced),
            other => Err(TransportError::Invalid(format!("unknown boundary mode `{other}`"))),
        }
    }
}

/// One step of `∂g/∂t = ½ g_xx + g(1 − g)`: explicit centred diffusion
/// followed by the exact logistic flow of the reaction term.
///
/// Both substeps are monotone maps of `[0, 1]` into itself whenever
/// `dt <= dx²`, so bounds and ordering of profiles are preserved.
pub fn kpp_step(field: &FrontField, dt: f64, mode: BoundaryMode) -> Result<FrontField> {
    let dx = field.grid_spacing;
    let limit = dx * dx;
    if !(dt > 0.0) || dt > limit {
        return Err(TransportError::UnstableStep { dt, limit });
    }
    let n = field.len();
    if n < 3 {
        return Err(TransportError::Invalid(format!("grid needs at least 3 points, got {n}")));
    }
    let g = &field.values;
    let coef = 0.5 * dt / limit;
    let growth = dt.exp_m1();
    let mut next = vec![0.0; n];
    for i in 0..n {
        let left = if i == 0 { g[1] } else { g[i - 1] };
        let right = if i == n - 1 { g[n - 2] } else { g[i + 1] };
        let diffused = g[i] + coef * (left - 2.0 * g[i] + right);
        // Exact logistic flow over dt.
        next[i] = diffused * (1.0 + growth) / (1.0 + diffused * growth);
    }
    let time = field.time + dt;
    match mode {
        BoundaryMode::Free => {
            next[0] = 1.0;
            next[n - 1] = 0.0;
        }
        BoundaryMode::Moving => {
            next[0] = 1.0;
            for (i, v) in next.iter_mut().enumerate().skip(1) {
                if i as f64 * dx > time {
                    *v = 0.0;
                }
            }
            next[n - 1] = 0.0;
        }
        BoundaryMode::Unsourced => {}
    }
    let out = FrontField { grid_spacing: dx, values: next, time };
    if mode != BoundaryMode::Unsourced {
        if let Some(front) = out.level_crossing(0.5) {
            let edge = out.x_max();
            if front > edge - EDGE_MARGIN_CELLS as f64 * dx {
                return Err(TransportError::GridTooShort { front, edge });
            }
        }
    }
    Ok(out)
}

/// Integrates to `t_end`, keeping every `sample_every`-th field (plus the
/// initial one).
pub fn run_kpp(initial: FrontField, dt: f64, t_end: f64, mode: BoundaryMode, sample_every: usize) -> Result<Vec<FrontField>> {
    let steps = (t_end / dt).round() as usize;
    let every = sample_every.max(1);
    let t0 = initial.time;
    let mut history = vec![initial.clone()];
    let mut field = initial;
    for s in 1..=steps {
        field = kpp_step(&field, dt, mode)?;
        // Pin the clock to the step count so long runs do not accumulate drift.
        field.time = t0 + s as f64 * dt;
        if s % every == 0 || s == steps {
            history.push(field.clone());
        }
    }
    Ok(history)
}

pub fn write_kpp_csv<W: Write>(history: &[FrontField], mut w: W) -> io::Result<()> {
    writeln!(w, "time,front_position_halflevel,mass")?;
    for f in history {
        let front = f.level_crossing(0.5).map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", f.time, front, f.mass())?;
    }
    Ok(())
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Speed of the `g = 0.5` level set, fitted over samples with
/// `t > TRANSIENT_TIME`.
pub fn front_speed(history: &[FrontField]) -> Result<f64> {
    let late: Vec<&FrontField> = history.iter().filter(|f| f.time > TRANSIENT_TIME).collect();
    if late.len() < MIN_SPEED_SAMPLES {
        return Err(TransportError::InsufficientSamples { needed: MIN_SPEED_SAMPLES, got: late.len() });
    }
    let mut times = Vec::with_capacity(late.len());
    let mut fronts = Vec::with_capacity(late.len());
    for f in late {
        fronts.push(f.level_crossing(0.5).ok_or(TransportError::FrontNotFormed(f.time))?);
        times.push(f.time);
    }
    Ok(ls_slope(&times, &fronts))
}

/// Walker occupancy per plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkPopulation {
    pub occupancy: BTreeMap<i64, u64>,
    pub step: u64,
}

impl WalkPopulation {
    pub fn single(position: i64) -> Self {
        WalkPopulation { occupancy: BTreeMap::from([(position, 1)]), step: 0 }
    }

    pub fn total(&self) -> u64 {
        self.occupancy.values().sum()
    }

    /// Furthest occupied plane in the `+x` direction.
    pub fn front(&self) -> Option<i64> {
        self.occupancy.keys().next_back().copied()
    }

    /// Expanded multiset of positions.
    pub fn positions(&self) -> Vec<i64> {
        self.occupancy.iter().flat_map(|(&x, &c)| std::iter::repeat_n(x, c as usize)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    /// Occupancy limit per plane once saturation sets in.
    pub site_cap: u64,
    /// Total population above which per-plane truncation is applied.
    pub population_cap: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { site_cap: DEFAULT_SITE_CAP, population_cap: 1 << 20 }
    }
}

/// Every walker is replaced by two copies one plane to each side.
pub fn duplication_walk(initial: &WalkPopulation, n_steps: u64, config: WalkConfig) -> Result<Vec<WalkPopulation>> {
    if n_steps == 0 {
        return Err(TransportError::Invalid("n_steps must be at least 1".into()));
    }
    if initial.total() == 0 {
        return Err(TransportError::Invalid("initial population is empty".into()));
    }
    if config.site_cap == 0 {
        return Err(TransportError::Invalid("site cap must be positive".into()));
    }
    let mut history = Vec::with_capacity(n_steps as usize + 1);
    history.push(initial.clone());
    let mut current = initial.clone();
    for _ in 0..n_steps {
        let mut next: BTreeMap<i64, u64> = BTreeMap::new();
        for (&x, &c) in &current.occupancy {
            *next.entry(x - 1).or_default() = next.get(&(x - 1)).copied().unwrap_or(0).saturating_add(c);
            *next.entry(x + 1).or_default() = next.get(&(x + 1)).copied().unwrap_or(0).saturating_add(c);
        }
        let total: u64 = next.values().fold(0u64, |a, &b| a.saturating_add(b));
        if total > config.population_cap {
            for c in next.values_mut() {
                *c = (*c).min(config.site_cap);
            }
        }
        current = WalkPopulation { occupancy: next, step: current.step + 1 };
        history.push(current.clone());
    }
    Ok(history)
}

pub fn write_walk_csv<W: Write>(history: &[WalkPopulation], mut w: W) -> io::Result<()> {
    writeln!(w, "time,front_position,total_population")?;
    for p in history {
        let front = p.front().map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", p.step, front, p.total())?;
    }
    Ok(())
}

/// Exponential rate of `values` against `times` over `window`.
///
/// Fails with [`TransportError::WindowSaturated`] when a quadratic fit of
/// `ln y` changes slope across the window by more than 10% of the linear
/// rate.
pub fn growth_rate(times: &[f64], values: &[f64], window: Range<usize>) -> Result<f64> {
    if window.end > times.len() || window.end > values.len() || window.len() < 3 {
        return Err(TransportError::InsufficientSamples { needed: 3, got: window.len().min(times.len()) });
    }
    let t = &times[window.clone()];
    let y = &values[window];
    if y.iter().any(|&v| !(v > 0.0)) {
        return Err(TransportError::Invalid("growth series must be positive".into()));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let rate = ls_slope(t, &logs);
    let curvature = quadratic_coefficient(t, &logs);
    let span = t[t.len() - 1] - t[0];
    let relative = (2.0 * curvature * span).abs() / rate.abs().max(f64::MIN_POSITIVE);
    if relative > MAX_RELATIVE_CURVATURE {
        return Err(TransportError::WindowSaturated(relative));
    }
    Ok(rate)
}

/// Leading coefficient of the least-squares parabola through `(x, y)`.
fn quadratic_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let xs: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let (mut s2, mut s3, mut s4, mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&u, &v) in xs.iter().zip(y) {
        let u2 = u * u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        sy += v;
        sxy += u * v;
        sx2y += u2 * v;
    }
    // Normal equations for y = a + b u + c u² with Σu = 0.
    let m = nalgebra::Matrix3::new(n, 0.0, s2, 0.0, s2, s3, s2, s3, s4);
    let rhs = nalgebra::Vector3::new(sy, sxy, sx2y);
    m.lu().solve(&rhs).map(|s| s[2]).unwrap_or(0.0)
}

pub fn walk_growth_rate(history: &[WalkPopulation], window: Range<usize>) -> Result<f64> {
    let t: Vec<f64> = history.iter().map(|p| p.step as f64).collect();
    let y: Vec<f64> = history.iter().map(|p| p.total() as f64).collect();
    growth_rate(&t, &y, window)
}

pub fn mass_growth_rate(history: &[FrontField], window: Range<usize>) -> Result<f64> {
    let t: Vec<f64> = history.iter().map(|f| f.time).collect();
    let y: Vec<f64> = history.iter().map(FrontField::mass).collect();
    growth_rate(&t, &y, window)
}

/// Front speed of a walk in planes per step, fitted over the whole history.
pub fn walk_front_speed(history: &[WalkPopulation]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history.iter().filter_map(|p| p.front().map(|f| (p.step as f64, f as f64))).collect();
    if pts.len() < 2 {
        return None;
    }
    let (t, x): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(ls_slope(&t, &x))
}
