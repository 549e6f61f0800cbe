//! Apparatus/molecule collisions and the sourced evolution of `Ω(t)`.
//!
//! A collision is a joint unitary `U` on `A ⊗ M`. For an eigenstate `|k⟩` of
//! `ρ_A` and an eigenstate `|q⟩` of the molecule, `U|kq⟩` splits into the
//! forward amplitude `⟨kq|U|kq⟩ |kq⟩` and the scattered remainder, whose
//! components are the off-forward elements of `T = i(I − U)`.
//!
//! - `δρ₋ = Σ_k p_k ε_k |k⟩⟨k|`, with `ε_k = Σ_q w_q (1 − |⟨kq|U|kq⟩|²)` the
//!   loss of each eigenstate.
//! - `δρ₊ = Σ_{kq} p_k w_q Tr_M(|s_kq⟩⟨s_kq|)` built from the scattered
//!   amplitudes `s_kq`.
//!
//! Unitarity makes the two traces equal. The exact post-collision state
//! `ρ'_A = Tr_M[U(ρ_A ⊗ ρ_M)U†]` differs from `ρ_A − δρ₋ + δρ₊` by a traceless
//! interference term between forward and scattered waves; it is reported
//! separately and vanishes when scattering always moves the molecule out of
//! its incoming state (see [`exchange_unitary`]).

use std::io::{self, Write};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::denmat::{self, DenMatError, DensityMatrix, Factor};
use crate::exec::trial_rng;
use crate::linalg::{self, HermitianEigen};
use crate::{CMatrix, Complex64};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const DRIFT_TOL: f64 = 1e-8;
/// Eigenvalue gaps below this are flagged rather than divided by.
pub const GAP_FLOOR: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("joint matrix is not unitary (max |U†U - I| = {0:e})")]
    NotUnitary(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("invalid collision schedule: {0}")]
    InvalidSchedule(String),
    #[error("unitary stepper drifted by {0:e}")]
    NonUnitaryDrift(f64),
    #[error(transparent)]
    DenMat(#[from] DenMatError),
}

pub type Result<T> = std::result::Result<T, CollisionError>;

/// Outcome of a single collision.
#[derive(Debug, Clone)]
pub struct CollisionDelta {
    /// `ρ'_A`, the exact reduced state after the collision.
    pub rho_after: DensityMatrix,
    pub delta_plus: DensityMatrix,
    pub delta_minus: DensityMatrix,
    /// `ρ'_A − ρ_A + δρ₋ − δρ₊`: traceless forward/scattered interference.
    pub interference: CMatrix,
    /// `Tr δρ₋`.
    pub epsilon: f64,
    /// Per eigenstate of `ρ_A` (ascending eigenvalue order): `ε_k` from the
    /// forward amplitude.
    pub depletion: Vec<f64>,
    /// Per eigenstate: `Σ_{uq'} |T_{kq→uq'}|²` summed directly over the
    /// scattered amplitudes and averaged over the molecule spectrum.
    pub scattered_weight: Vec<f64>,
}

fn check_unitary(u: &CMatrix, dim: usize) -> Result<()> {
    if u.nrows() != dim || u.ncols() != dim {
        return Err(CollisionError::DimMismatch { expected: dim, actual: u.nrows().max(u.ncols()) });
    }
    let dev = linalg::unitarity_deviation(u);
    if dev > UNITARITY_TOL {
        return Err(CollisionError::NotUnitary(dev));
    }
    Ok(())
}

pub fn scatter(rho_a: &DensityMatrix, molecule: &DensityMatrix, joint_unitary: &CMatrix) -> Result<CollisionDelta> {
    let da = rho_a.dim();
    let dm = molecule.dim();
    let n = da * dm;
    check_unitary(joint_unitary, n)?;

    let joint = joint_unitary * rho_a.matrix().kronecker(molecule.matrix()) * joint_unitary.adjoint();
    let after = linalg::hermitian_part(&denmat::partial_trace_matrix(&joint, (da, dm), Factor::First)?);
    let rho_after = DensityMatrix::new(after, rho_a.trace_hint())?;

    let a_eig = rho_a.eigen();
    let m_eig = molecule.eigen();
    let mut depletion = vec![0.0; da];
    let mut scattered_weight = vec![0.0; da];
    let mut plus = CMatrix::zeros(da, da);
    for k in 0..da {
        let p_k = a_eig.values[k].max(0.0);
        let ket_k = a_eig.vectors.column(k);
        for q in 0..dm {
            let w_q = m_eig.values[q].max(0.0);
            let ket_q = m_eig.vectors.column(q);
            let incoming = DVector::from_fn(n, |i, _| ket_k[i / dm] * ket_q[i % dm]);
            let outgoing = joint_unitary * &incoming;
            let forward = incoming.dotc(&outgoing);
            let scattered = &outgoing - &incoming * forward;
            depletion[k] += w_q * (1.0 - forward.norm_sqr()).max(0.0);
            scattered_weight[k] += w_q * scattered.norm_squared();
            let weight = p_k * w_q;
            if weight == 0.0 {
                continue;
            }
            // Tr_M |s⟩⟨s|
            for u1 in 0..da {
                for u2 in 0..da {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for qp in 0..dm {
                        acc += scattered[u1 * dm + qp] * scattered[u2 * dm + qp].conj();
                    }
                    plus[(u1, u2)] += acc * weight;
                }
            }
        }
    }
    let minus_weights: Vec<f64> = (0..da).map(|k| a_eig.values[k].max(0.0) * depletion[k]).collect();
    let minus = a_eig.with_values(&minus_weights);
    let plus = linalg::hermitian_part(&plus);

    let delta_minus = DensityMatrix::from_trusted(minus)?;
    let delta_plus = DensityMatrix::from_trusted(plus)?;
    let interference = rho_after.matrix() - rho_a.matrix() + delta_minus.matrix() - delta_plus.matrix();
    let epsilon = delta_minus.trace();
    Ok(CollisionDelta { rho_after, delta_plus, delta_minus, interference, epsilon, depletion, scattered_weight })
}

/// Collision in which the molecule, incoming in level `|0⟩`, is deflected into
/// level `|1⟩` with amplitude `sin θ` while the apparatus undergoes `B`:
/// `U = exp(−iθ (B ⊗ |1⟩⟨0| + B† ⊗ |0⟩⟨1|))`. Molecule levels above 1 are
/// spectators.
///
/// Every apparatus state is depleted by `ε = sin²θ` and the scattered wave
/// never overlaps the incoming channel, so `ρ'_A = ρ_A − δρ₋ + δρ₊` holds
/// with zero interference. `θ = π/2` scatters with certainty.
pub fn exchange_unitary(b: &CMatrix, theta: f64, molecule_dim: usize) -> Result<CMatrix> {
    let da = b.nrows();
    check_unitary(b, da)?;
    if molecule_dim < 2 {
        return Err(CollisionError::DimMismatch { expected: 2, actual: molecule_dim });
    }
    let dm = molecule_dim;
    let (s, c) = theta.sin_cos();
    let mut u = CMatrix::identity(da * dm, da * dm);
    let minus_i_s = Complex64::new(0.0, -s);
    for a1 in 0..da {
        for a2 in 0..da {
            let (i0, i1) = (a1 * dm, a1 * dm + 1);
            let (j0, j1) = (a2 * dm, a2 * dm + 1);
            let delta = if a1 == a2 { c } else { 0.0 };
            u[(i0, j0)] = Complex64::new(delta, 0.0);
            u[(i1, j1)] = Complex64::new(delta, 0.0);
            // ⟨a1,1| B ⊗ |1⟩⟨0| |a2,0⟩ = B[a1,a2]
            u[(i1, j0)] = minus_i_s * b[(a1, a2)];
            // ⟨a1,0| B† ⊗ |0⟩⟨1| |a2,1⟩ = conj(B[a2,a1])
            u[(i0, j1)] = minus_i_s * b[(a2, a1)].conj();
        }
    }
    Ok(u)
}

/// Haar-random unitary restricted to blocks of equal total energy
/// `H_A ⊗ I + I ⊗ H_M`, expressed in the computational product basis.
pub fn energy_conserving_unitary<R: Rng + ?Sized>(
    h_a: &CMatrix,
    h_m: &CMatrix,
    degeneracy_tol: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    let ea = HermitianEigen::new(h_a);
    let em = HermitianEigen::new(h_m);
    let (da, dm) = (ea.values.len(), em.values.len());
    let mut levels: Vec<(f64, usize)> = (0..da * dm)
        .map(|i| (ea.values[i / dm] + em.values[i % dm], i))
        .collect();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = da * dm;
    let mut in_eigenbasis = CMatrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && levels[end].0 - levels[start].0 <= degeneracy_tol {
            end += 1;
        }
        let block = linalg::haar_unitary(end - start, rng);
        for (bi, &(_, i)) in levels[start..end].iter().enumerate() {
            for (bj, &(_, j)) in levels[start..end].iter().enumerate() {
                in_eigenbasis[(i, j)] = block[(bi, bj)];
            }
        }
        start = end;
    }
    let basis = ea.vectors.kronecker(&em.vectors);
    Ok(&basis * in_eigenbasis * basis.adjoint())
}

/// One first-order eigenvector-correction coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTerm {
    pub k: usize,
    pub k_prime: usize,
    /// `|⟨k'|δ|k⟩|`
    pub coupling: f64,
    /// `|p_k − p_k'|`
    pub gap: f64,
    /// `coupling / gap`, or `None` when the gap is below [`GAP_FLOOR`].
    pub magnitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub max_term: f64,
    pub gap_min: f64,
    pub terms: Vec<SensitivityTerm>,
}

impl SensitivityReport {
    pub fn flagged(&self) -> impl Iterator<Item = &SensitivityTerm> {
        self.terms.iter().filter(|t| t.magnitude.is_none())
    }
}

/// First-order perturbation coefficients of the eigenvectors of `rho`.
pub fn eigvec_sensitivity(rho: &DensityMatrix, perturbation: &CMatrix) -> Result<SensitivityReport> {
    let dim = rho.dim();
    if perturbation.nrows() != dim || perturbation.ncols() != dim {
        return Err(CollisionError::DimMismatch { expected: dim, actual: perturbation.nrows() });
    }
    let dev = linalg::hermitian_deviation(perturbation);
    if dev > denmat::HERMITIAN_TOL {
        return Err(DenMatError::NotHermitian(dev).into());
    }
    let eig = rho.eigen();
    let rotated = eig.vectors.adjoint() * perturbation * &eig.vectors;
    let mut terms = Vec::with_capacity(dim * dim.saturating_sub(1) / 2);
    let mut max_term = 0.0_f64;
    let mut gap_min = f64::INFINITY;
    for k in 0..dim {
        for kp in (k + 1)..dim {
            let coupling = rotated[(kp, k)].norm();
            let gap = (eig.values[k] - eig.values[kp]).abs();
            gap_min = gap_min.min(gap);
            let magnitude = (gap >= GAP_FLOOR).then(|| coupling / gap);
            if let Some(m) = magnitude {
                max_term = max_term.max(m);
            }
            terms.push(SensitivityTerm { k, k_prime: kp, coupling, gap, magnitude });
        }
    }
    Ok(SensitivityReport { max_term, gap_min, terms })
}

#[derive(Debug, Clone)]
pub struct CollisionEvent {
    pub time: f64,
    pub molecule: DensityMatrix,
    pub unitary: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// `t'` of the collision-free reference `ρ_iso(t) = U(t−t') ρ(t') U†`.
    pub reference_time: f64,
}

impl EvolveOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        EvolveOptions { t_end, dt, reference_time: 0.0 }
    }
}

/// Sampled `ρ(t)`, `ρ_iso(t)` and `Ω(t)`.
#[derive(Debug, Clone)]
pub struct OmegaTrajectory {
    pub times: Vec<f64>,
    pub rho: Vec<DensityMatrix>,
    pub rho_iso: Vec<DensityMatrix>,
    pub omega: Vec<CMatrix>,
    pub trace_plus: Vec<f64>,
    pub trace_minus: Vec<f64>,
}

/// Per-sample diagnostics written to the trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaSample {
    pub time: f64,
    pub trace_plus: f64,
    pub purity: f64,
    pub distance: f64,
    pub similarity: f64,
}

impl OmegaTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean of `Tr Ω₊` over the trailing `fraction` of samples.
    pub fn plateau(&self, fraction: f64) -> f64 {
        let n = self.trace_plus.len();
        if n == 0 {
            return 0.0;
        }
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        self.trace_plus[n - take..].iter().sum::<f64>() / take as f64
    }

    pub fn max_abs_omega_trace(&self) -> f64 {
        self.omega.iter().map(|o| linalg::trace(o).norm()).fold(0.0, f64::max)
    }

    pub fn samples(&self) -> Vec<OmegaSample> {
        (0..self.len())
            .map(|i| {
                let rho = &self.rho[i];
                let iso = &self.rho_iso[i];
                OmegaSample {
                    time: self.times[i],
                    trace_plus: self.trace_plus[i],
                    purity: rho.purity(),
                    distance: denmat::matrix_distance(rho, iso).unwrap_or(f64::NAN),
                    similarity: denmat::similarity_k(rho, iso).unwrap_or(f64::NAN),
                }
            })
            .collect()
    }

    /// `K(Ω₊, ρ)` and `K(Ω₋, ρ_iso)` per sample; `None` while `Ω = 0`.
    pub fn congruence(&self) -> Result<Vec<Option<(f64, f64)>>> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let split = denmat::split_signed(&self.omega[i])?;
            let pair = denmat::similarity_of(split.positive_part.matrix(), self.rho[i].matrix())
                .and_then(|a| denmat::similarity_of(split.negative_part.matrix(), self.rho_iso[i].matrix()).map(|b| (a, b)))
                .ok();
            out.push(pair);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,trace_plus,purity,distance,k")?;
        for s in self.samples() {
            writeln!(w, "{},{},{},{},{}", s.time, s.trace_plus, s.purity, s.distance, s.similarity)?;
        }
        Ok(())
    }
}

struct Stepper {
    eig: HermitianEigen,
    full: CMatrix,
    dt: f64,
}

impl Stepper {
    fn new(h: &CMatrix, dt: f64) -> Result<Self> {
        let eig = HermitianEigen::new(h);
        let full = linalg::unitary_propagator(&eig, dt);
        let dev = linalg::unitarity_deviation(&full);
        if dev > DRIFT_TOL {
            return Err(CollisionError::NonUnitaryDrift(dev));
        }
        Ok(Stepper { eig, full, dt })
    }

    fn propagator(&self, span: f64) -> CMatrix {
        if span == self.dt {
            self.full.clone()
        } else {
            linalg::unitary_propagator(&self.eig, span)
        }
    }

    fn advance(&self, rho: &CMatrix, span: f64) -> CMatrix {
        if span <= 0.0 {
            return rho.clone();
        }
        let u = self.propagator(span);
        linalg::hermitian_part(&(&u * rho * u.adjoint()))
    }
}

fn apply_collision(rho: &CMatrix, event: &CollisionEvent) -> Result<CMatrix> {
    let da = rho.nrows();
    let dm = event.molecule.dim();
    let u = &event.unitary;
    let joint = u * rho.kronecker(event.molecule.matrix()) * u.adjoint();
    Ok(linalg::hermitian_part(&denmat::partial_trace_matrix(&joint, (da, dm), Factor::First)?))
}

fn validate_schedule(events: &[CollisionEvent], dim: usize, t_end: f64) -> Result<()> {
    let mut last = 0.0;
    for (i, e) in events.iter().enumerate() {
        if !e.time.is_finite() || e.time < 0.0 || e.time > t_end {
            return Err(CollisionError::InvalidSchedule(format!("event {i} at t = {} outside [0, {t_end}]", e.time)));
        }
        if e.time < last {
            return Err(CollisionError::InvalidSchedule(format!("event {i} at t = {} is out of order", e.time)));
        }
        last = e.time;
        check_unitary(&e.unitary, dim * e.molecule.dim())?;
    }
    Ok(())
}

/// Evolves `rho0` under `H` with collisions applied at their scheduled
/// times and records `Ω(t) = ρ(t) − ρ_iso(t)` at multiples of `dt`.
pub fn evolve_with_source(
    rho0: &DensityMatrix,
    hamiltonian: &CMatrix,
    collisions: &[CollisionEvent],
    options: EvolveOptions,
) -> Result<OmegaTrajectory> {
    let EvolveOptions { t_end, dt, reference_time } = options;
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(CollisionError::InvalidSchedule(format!("need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}")));
    }
    if !(0.0..=t_end).contains(&reference_time) {
        return Err(CollisionError::InvalidSchedule(format!("reference time {reference_time} outside [0, {t_end}]")));
    }
    let dim = rho0.dim();
    if hamiltonian.nrows() != dim || hamiltonian.ncols() != dim {
        return Err(CollisionError::DimMismatch { expected: dim, actual: hamiltonian.nrows() });
    }
    let dev = linalg::hermitian_deviation(hamiltonian);
    if dev > denmat::HERMITIAN_TOL {
        return Err(DenMatError::NotHermitian(dev).into());
    }
    validate_schedule(collisions, dim, t_end)?;

    let stepper = Stepper::new(hamiltonian, dt)?;
    let trace0 = rho0.trace_hint();
    let n_samples = (t_end / dt + 1e-9).floor() as usize + 1;

    let mut traj = OmegaTrajectory {
        times: Vec::with_capacity(n_samples),
        rho: Vec::with_capacity(n_samples),
        rho_iso: Vec::with_capacity(n_samples),
        omega: Vec::with_capacity(n_samples),
        trace_plus: Vec::with_capacity(n_samples),
        trace_minus: Vec::with_capacity(n_samples),
    };

    let mut rho = rho0.matrix().clone();
    let mut now = 0.0;
    let mut next_event = 0;
    let mut reference: Option<CMatrix> = None;

    for i in 0..n_samples {
        let target = i as f64 * dt;
        // Collisions at or before `target`, and the reference capture, in time order.
        loop {
            let event_time = collisions.get(next_event).map(|e| e.time).filter(|&t| t <= target);
            let ref_due = reference.is_none() && reference_time <= target;
            match (event_time, ref_due) {
                (Some(te), true) if te <= reference_time => {
                    rho = stepper.advance(&rho, te - now);
                    now = te;
                    rho = apply_collision(&rho, &collisions[next_event])?;
                    next_event += 1;
                }
                (_, true) => {
                    rho = stepper.advance(&rho, reference_time - now);
                    now = reference_time;
                    // Collisions sharing the reference instant belong to ρ(t').
                    while let Some(e) = collisions.get(next_event).filter(|e| e.time <= reference_time) {
                        rho = apply_collision(&rho, e)?;
                        next_event += 1;
                    }
                    reference = Some(rho.clone());
                }
                (Some(te), false) => {
                    rho = stepper.advance(&rho, te - now);
                    now = te;
                    rho = apply_collision(&rho, &collisions[next_event])?;
                    next_event += 1;
                }
                (None, false) => break,
            }
        }
        rho = stepper.advance(&rho, target - now);
        now = target;

        let drift = (linalg::trace(&rho).re - trace0).abs();
        if drift > DRIFT_TOL {
            return Err(CollisionError::NonUnitaryDrift(drift));
        }
        let iso = match &reference {
            Some(r) => stepper.advance(r, target - reference_time),
            None => rho.clone(),
        };
        let omega = linalg::hermitian_part(&(&rho - &iso));
        let split = denmat::split_signed(&omega)?;
        traj.times.push(target);
        traj.trace_plus.push(split.positive_part.trace());
        traj.trace_minus.push(split.negative_part.trace());
        traj.rho.push(DensityMatrix::new(rho.clone(), trace0)?);
        traj.rho_iso.push(DensityMatrix::new(iso, trace0)?);
        traj.omega.push(omega);
    }
    Ok(traj)
}

/// Molecule prepared in its lowest level.
pub fn ground_molecule(dim: usize) -> DensityMatrix {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    DensityMatrix::diagonal(&v).expect("basis projector is a valid state")
}

/// Poisson collision times on `[0, t_end]` at `rate`, each with its own
/// Haar-random joint unitary on `apparatus_dim ⊗ molecule_dim` and the
/// molecule in its ground level.
pub fn random_collision_schedule(
    rate: f64,
    t_end: f64,
    apparatus_dim: usize,
    molecule_dim: usize,
    seed: u64,
) -> Result<Vec<CollisionEvent>> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(CollisionError::InvalidSchedule(format!("rate must be a finite non-negative number, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(Vec::new());
    }
    let mut times_rng = trial_rng(seed, 0);
    let waits = Exp::new(rate).map_err(|e| CollisionError::InvalidSchedule(e.to_string()))?;
    let molecule = ground_molecule(molecule_dim);
    let mut unitary_rng = trial_rng(seed, 1);
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += waits.sample(&mut times_rng);
        if t > t_end {
            break;
        }
        let unitary = linalg::haar_unitary(apparatus_dim * molecule_dim, &mut unitary_rng);
        events.push(CollisionEvent { time: t, molecule: molecule.clone(), unitary });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_diagonal, haar_unitary, random_density};
    use approx::assert_abs_diff_eq;

    fn rand_state(dim: usize, seed: u64) -> DensityMatrix {
        DensityMatrix::new(random_density(dim, &mut trial_rng(seed, 0)), 1.0).unwrap()
    }

    #[test]
    fn identity_does_nothing() {
        let rho = rand_state(4, 1);
        let m = ground_molecule(2);
        let d = scatter(&rho, &m, &CMatrix::identity(8, 8)).unwrap();
        assert!(d.epsilon.abs() < 1e-14);
        assert!(d.delta_plus.matrix().camax() < 1e-15);
        assert!(d.delta_minus.matrix().camax() < 1e-15);
        assert!((d.rho_after.matrix() - rho.matrix()).camax() < 1e-14);
    }

    #[test]
    fn rejects_bad_unitary() {
        let rho = rand_state(2, 1);
        let m = ground_molecule(2);
        let bad = CMatrix::identity(4, 4).scale(1.1);
        assert!(matches!(scatter(&rho, &m, &bad), Err(CollisionError::NotUnitary(_))));
        assert!(matches!(
            scatter(&rho, &m, &CMatrix::identity(6, 6)),
            Err(CollisionError::DimMismatch { expected: 4, actual: 6 })
        ));
    }

    #[test]
    fn full_exchange_scatters_everything() {
        let rho = rand_state(4, 2);
        let b = haar_unitary(4, &mut trial_rng(3, 0));
        let u = exchange_unitary(&b, std::f64::consts::FRAC_PI_2, 2).unwrap();
        let d = scatter(&rho, &ground_molecule(2), &u).unwrap();
        assert_abs_diff_eq!(d.epsilon, 1.0, epsilon = 1e-10);
        for (dep, w) in d.depletion.iter().zip(&d.scattered_weight) {
            assert_abs_diff_eq!(*dep, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-10);
        }
        // Complete suppression and reconstruction.
        assert!((d.delta_minus.matrix() - rho.matrix()).camax() < 1e-12);
        assert!((d.delta_plus.matrix() - d.rho_after.matrix()).camax() < 1e-12);
    }

    #[test]
    fn partial_exchange_has_no_interference() {
        let rho = rand_state(4, 5);
        let b = haar_unitary(4, &mut trial_rng(6, 0));
        let theta = 0.4;
        let u = exchange_unitary(&b, theta, 3).unwrap();
        let d = scatter(&rho, &ground_molecule(3), &u).unwrap();
        assert_abs_diff_eq!(d.epsilon, theta.sin().powi(2), epsilon = 1e-12);
        assert!(d.interference.camax() < 1e-12);
        let rebuilt = rho.matrix() - d.delta_minus.matrix() + d.delta_plus.matrix();
        assert!((rebuilt - d.rho_after.matrix()).camax() < 1e-12);
    }

    #[test]
    fn delta_minus_shares_eigenvectors() {
        let rho = rand_state(4, 8);
        let u = haar_unitary(8, &mut trial_rng(9, 0));
        let d = scatter(&rho, &ground_molecule(2), &u).unwrap();
        let v = rho.eigen().vectors;
        let rotated = v.adjoint() * d.delta_minus.matrix() * &v;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(rotated[(i, j)].norm() < 1e-12);
                }
            }
        }
        assert!(d.epsilon >= 0.0 && d.epsilon <= 1.0 + 1e-10);
        assert!(linalg::trace(&d.interference).norm() < 1e-12);
    }

    #[test]
    fn energy_conserving_blocks() {
        let h_a = from_real_diagonal(&[0.0, 1.0, 1.0, 2.0]);
        let h_m = from_real_diagonal(&[0.0, 1.0]);
        let u = energy_conserving_unitary(&h_a, &h_m, 1e-9, &mut trial_rng(1, 0)).unwrap();
        assert!(linalg::unitarity_deviation(&u) < 1e-12);
        let total = h_a.kronecker(&CMatrix::identity(2, 2)) + CMatrix::identity(4, 4).kronecker(&h_m);
        let comm = &u * &total - &total * &u;
        assert!(comm.camax() < 1e-12);
    }

    #[test]
    fn sensitivity_two_level() {
        let g = 1e-3;
        let v = 2e-6;
        let rho = DensityMatrix::diagonal(&[0.5 + g / 2.0, 0.5 - g / 2.0]).unwrap();
        let pert = CMatrix::from_row_slice(2, 2, &[
            Complex64::new(0.0, 0.0), Complex64::new(v, 0.0),
            Complex64::new(v, 0.0), Complex64::new(0.0, 0.0),
        ]);
        let r = eigvec_sensitivity(&rho, &pert).unwrap();
        assert_abs_diff_eq!(r.max_term, v / g, epsilon = 1e-9);
        let rho_half = DensityMatrix::diagonal(&[0.5 + g / 4.0, 0.5 - g / 4.0]).unwrap();
        let r2 = eigvec_sensitivity(&rho_half, &pert).unwrap();
        assert_abs_diff_eq!(r2.max_term / r.max_term, 2.0, epsilon = 1e-6);

        let zero = eigvec_sensitivity(&rho, &CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.max_term, 0.0);
        assert!(zero.terms.iter().all(|t| t.magnitude == Some(0.0)));

        let degenerate = DensityMatrix::maximally_mixed(2);
        let flagged = eigvec_sensitivity(&degenerate, &pert).unwrap();
        assert_eq!(flagged.flagged().count(), 1);
    }

    #[test]
    fn empty_schedule_keeps_omega_zero() {
        let rho = rand_state(4, 3);
        let h = random_density(4, &mut trial_rng(4, 0)).scale(3.0);
        let traj = evolve_with_source(&rho, &h, &[], EvolveOptions::new(2.0, 0.1)).unwrap();
        assert_eq!(traj.len(), 21);
        let spec0 = rho.eigen().values;
        for (o, r) in traj.omega.iter().zip(&traj.rho) {
            assert!(o.camax() < 1e-12);
            let s = r.eigen().values;
            for (a, b) in s.iter().zip(&spec0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn schedule_validation() {
        let rho = rand_state(2, 1);
        let h = CMatrix::zeros(2, 2);
        let ev = |t| CollisionEvent { time: t, molecule: ground_molecule(2), unitary: CMatrix::identity(4, 4) };
        let late = [ev(5.0)];
        assert!(matches!(
            evolve_with_source(&rho, &h, &late, EvolveOptions::new(1.0, 0.1)),
            Err(CollisionError::InvalidSchedule(_))
        ));
        let unordered = [ev(0.5), ev(0.2)];
        assert!(matches!(
            evolve_with_source(&rho, &h, &unordered, EvolveOptions::new(1.0, 0.1)),
            Err(CollisionError::InvalidSchedule(_))
        ));
        assert!(evolve_with_source(&rho, &h, &[], EvolveOptions::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn reference_time_shifts_origin() {
        let rho = rand_state(4, 11);
        let h = from_real_diagonal(&[0.0, 0.3, 0.7, 1.1]);
        let events = random_collision_schedule(4.0, 3.0, 4, 2, 17).unwrap();
        assert!(!events.is_empty());
        let mut opts = EvolveOptions::new(3.0, 0.05);
        opts.reference_time = 1.0;
        let traj = evolve_with_source(&rho, &h, &events, opts).unwrap();
        for (t, o) in traj.times.iter().zip(&traj.omega) {
            if *t <= 1.0 + 1e-12 {
                assert!(o.camax() < 1e-12, "Ω must vanish up to t' (t = {t})");
            }
        }
        assert!(traj.trace_plus.last().unwrap() > &0.0);
    }

    #[test]
    fn schedule_basics() {
        assert!(random_collision_schedule(0.0, 10.0, 4, 2, 1).unwrap().is_empty());
        assert!(random_collision_schedule(-1.0, 10.0, 4, 2, 1).is_err());
        let a = random_collision_schedule(2.0, 10.0, 4, 2, 42).unwrap();
        let b = random_collision_schedule(2.0, 10.0, 4, 2, 42).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.time, y.time);
            assert_eq!(x.unitary, y.unitary);
        }
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
