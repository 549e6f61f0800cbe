//! Validated density matrices and the functionals built on them.
//!
//! A [`DensityMatrix`] is Hermitian and positive-semidefinite with a known
//! trace. The trace is carried explicitly (`trace_hint`) because collision
//! deltas are sub-normalised: `δρ±` have trace `ε`, not 1.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{self, HermitianEigen};
use crate::{CMatrix, Complex64};

/// Entrywise Hermiticity tolerance on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues in `[−ROUNDING_TOL, 0)` are rounding noise.
pub const ROUNDING_TOL: f64 = 1e-12;
/// Eigenvalues below `−NEGATIVITY_TOL` are a hard error.
pub const NEGATIVITY_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_DIM: usize = 64;
/// Spectral cut-off for [`split_signed`].
pub const SPLIT_DROP_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenMatError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max |M - M†| = {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive-semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("trace {actual} does not match expected {expected}")]
    TraceMismatch { expected: f64, actual: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("dimension {dim} exceeds configured cap {cap}")]
    DimTooLarge { dim: usize, cap: usize },
    #[error("zero matrix has no normalised similarity")]
    ZeroMatrix,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
}

pub type Result<T> = std::result::Result<T, DenMatError>;

/// Hermitian positive-semidefinite matrix with a known trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
    trace_hint: f64,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix, trace_hint: f64) -> Result<Self> {
        Self::with_cap(matrix, trace_hint, DEFAULT_MAX_DIM)
    }

    pub fn with_cap(matrix: CMatrix, trace_hint: f64, max_dim: usize) -> Result<Self> {
        if !matrix.is_square() {
            return Err(DenMatError::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        let dim = matrix.nrows();
        if dim > max_dim {
            return Err(DenMatError::DimTooLarge { dim, cap: max_dim });
        }
        let dev = linalg::hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(DenMatError::NotHermitian(dev));
        }
        let mut entries = linalg::hermitian_part(&matrix);
        let eig = HermitianEigen::new(&entries);
        let min = eig.values.first().copied().unwrap_or(0.0);
        if min < -NEGATIVITY_TOL {
            return Err(DenMatError::NotPositive(min));
        }
        if min < -ROUNDING_TOL {
            entries = eig.projector_sum(|v| v.max(0.0));
        }
        let actual = linalg::trace(&entries).re;
        if (actual - trace_hint).abs() > TRACE_TOL {
            return Err(DenMatError::TraceMismatch { expected: trace_hint, actual });
        }
        Ok(DensityMatrix { entries, trace_hint })
    }

    /// Builds from a matrix that is PSD by construction, taking the trace
    /// hint from the matrix itself.
    pub(crate) fn from_trusted(matrix: CMatrix) -> Result<Self> {
        let tr = linalg::trace(&matrix).re;
        Self::new(matrix, tr)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = CMatrix::identity(dim, dim).unscale(dim as f64);
        DensityMatrix { entries: m, trace_hint: 1.0 }
    }

    pub fn pure(state: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(state);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(DenMatError::ZeroMatrix);
        }
        let v = v.unscale(norm);
        Self::new(&v * v.adjoint(), 1.0)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let tr = values.iter().sum();
        Self::new(linalg::from_real_diagonal(values), tr)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn trace_hint(&self) -> f64 {
        self.trace_hint
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.entries).re
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        scalar_product(&self.entries, &self.entries)
    }

    pub fn eigen(&self) -> HermitianEigen {
        HermitianEigen::new(&self.entries)
    }
}

/// `{a, b} = Tr(ab)` for Hermitian `a`, `b`.
pub fn scalar_product(a: &CMatrix, b: &CMatrix) -> f64 {
    // Tr(ab) = Σ_ij a_ij b_ji = Σ_ij a_ij conj(b_ij) for Hermitian b.
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

/// Gibbs state `exp(−H/T) / Z` with `k_B = 1`.
pub fn thermal_state(hamiltonian: &CMatrix, temperature: f64) -> Result<DensityMatrix> {
    if !(temperature > 0.0) {
        return Err(DenMatError::NonPositiveTemperature(temperature));
    }
    let dev = linalg::hermitian_deviation(hamiltonian);
    if dev > HERMITIAN_TOL {
        return Err(DenMatError::NotHermitian(dev));
    }
    let eig = HermitianEigen::new(hamiltonian);
    // Largest Boltzmann exponent shifted to zero so every weight is ≤ 1.
    let ground = eig.values.first().copied().unwrap_or(0.0);
    let weights: Vec<f64> = eig.values.iter().map(|&e| (-(e - ground) / temperature).exp()).collect();
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    DensityMatrix::new(eig.with_values(&probs), 1.0)
}

/// Hilbert-Schmidt distance `√Tr[(a − b)²]`.
pub fn matrix_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(hermitian_norm(&(a.matrix() - b.matrix())))
}

/// `√Tr(M²)` for Hermitian `M`.
pub fn hermitian_norm(m: &CMatrix) -> f64 {
    scalar_product(m, m).max(0.0).sqrt()
}

/// Normalised overlap `Tr(ab) / √(Tr(a²) Tr(b²))`.
pub fn similarity_k(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    similarity_of(a.matrix(), b.matrix())
}

pub(crate) fn similarity_of(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let aa = scalar_product(a, a);
    let bb = scalar_product(b, b);
    if aa <= 0.0 || bb <= 0.0 {
        return Err(DenMatError::ZeroMatrix);
    }
    Ok(scalar_product(a, b) / (aa * bb).sqrt())
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(DenMatError::DimMismatch(a, b));
    }
    Ok(())
}

/// Positive and negative spectral parts of a Hermitian matrix,
/// `Ω = Ω₊ − Ω₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSplit {
    pub positive_part: DensityMatrix,
    pub negative_part: DensityMatrix,
}

impl SignedSplit {
    pub fn reconstruct(&self) -> CMatrix {
        self.positive_part.matrix() - self.negative_part.matrix()
    }
}

pub fn split_signed(omega: &CMatrix) -> Result<SignedSplit> {
    if !omega.is_square() {
        return Err(DenMatError::NotSquare { rows: omega.nrows(), cols: omega.ncols() });
    }
    let dev = linalg::hermitian_deviation(omega);
    if dev > HERMITIAN_TOL {
        return Err(DenMatError::NotHermitian(dev));
    }
    let eig = HermitianEigen::new(omega);
    let plus = eig.projector_sum(|v| if v > SPLIT_DROP_TOL { v } else { 0.0 });
    let minus = eig.projector_sum(|v| if v < -SPLIT_DROP_TOL { -v } else { 0.0 });
    let trace_of = |sign: f64| -> f64 {
        eig.values.iter().map(|&v| v * sign).filter(|&v| v > SPLIT_DROP_TOL).sum()
    };
    let cap = omega.nrows().max(DEFAULT_MAX_DIM);
    Ok(SignedSplit {
        positive_part: DensityMatrix::with_cap(plus, trace_of(1.0), cap)?,
        negative_part: DensityMatrix::with_cap(minus, trace_of(-1.0), cap)?,
    })
}

/// Which tensor factor [`partial_trace`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    First,
    Second,
}

/// Reduced matrix of one factor of `joint` on `dims.0 ⊗ dims.1`.
pub fn partial_trace(joint: &DensityMatrix, dims: (usize, usize), keep: Factor) -> Result<DensityMatrix> {
    let reduced = partial_trace_matrix(joint.matrix(), dims, keep)?;
    let cap = reduced.nrows().max(DEFAULT_MAX_DIM);
    DensityMatrix::with_cap(reduced, joint.trace_hint(), cap)
}

/// Partial trace on a raw matrix, without validation of the result.
pub fn partial_trace_matrix(joint: &CMatrix, dims: (usize, usize), keep: Factor) -> Result<CMatrix> {
    let (da, db) = dims;
    if joint.nrows() != da * db || !joint.is_square() {
        return Err(DenMatError::DimMismatch(joint.nrows(), da * db));
    }
    let out = match keep {
        Factor::First => CMatrix::from_fn(da, da, |i, j| {
            (0..db).map(|k| joint[(i * db + k, j * db + k)]).sum()
        }),
        Factor::Second => CMatrix::from_fn(db, db, |i, j| {
            (0..da).map(|k| joint[(k * db + i, k * db + j)]).sum()
        }),
    };
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixRepr {
    dim: usize,
    entries: Vec<[f64; 2]>,
    trace_hint: f64,
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.entries[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        DensityMatrixRepr { dim: n, entries, trace_hint: self.trace_hint }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = DensityMatrixRepr::deserialize(deserializer)?;
        if repr.entries.len() != repr.dim * repr.dim {
            return Err(D::Error::custom(format!(
                "expected {} entries for dim {}, got {}",
                repr.dim * repr.dim,
                repr.dim,
                repr.entries.len()
            )));
        }
        let m = CMatrix::from_fn(repr.dim, repr.dim, |i, j| {
            let [re, im] = repr.entries[i * repr.dim + j];
            Complex64::new(re, im)
        });
        DensityMatrix::new(m, repr.trace_hint).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::trial_rng;
    use crate::linalg::{from_real_diagonal, random_density};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn accepts_maximally_mixed() {
        let m = CMatrix::identity(2, 2).scale(0.5);
        assert!(DensityMatrix::new(m, 1.0).is_ok());
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(DensityMatrix::new(m, 0.0), Err(DenMatError::NotHermitian(_))));
    }

    #[test]
    fn rejects_negative_and_bad_trace() {
        let neg = from_real_diagonal(&[1.1, -0.1]);
        assert!(matches!(DensityMatrix::new(neg, 1.0), Err(DenMatError::NotPositive(_))));
        let off = from_real_diagonal(&[0.5, 0.4]);
        assert!(matches!(DensityMatrix::new(off, 1.0), Err(DenMatError::TraceMismatch { .. })));
    }

    #[test]
    fn clamps_small_negativity() {
        let m = from_real_diagonal(&[1.0 + 5e-11, -5e-11]);
        let rho = DensityMatrix::new(m, 1.0).unwrap();
        assert!(rho.eigen().values[0] >= 0.0);
        let tiny = from_real_diagonal(&[1.0, -1e-13]);
        let kept = DensityMatrix::new(tiny.clone(), 1.0).unwrap();
        assert_eq!(kept.matrix(), &tiny);
    }

    #[test]
    fn dimension_cap() {
        let m = CMatrix::identity(5, 5).unscale(5.0);
        assert!(matches!(
            DensityMatrix::with_cap(m, 1.0, 4),
            Err(DenMatError::DimTooLarge { dim: 5, cap: 4 })
        ));
    }

    #[test]
    fn two_level_thermal_values() {
        // Z = 1 + e^{-1}
        let z = 1.0 + (-1.0_f64).exp();
        let p0 = 1.0 / z;
        assert_abs_diff_eq!(p0, 0.731_058_578_630_004_9, epsilon = 1e-15);
        let rho = DensityMatrix::diagonal(&[0.7311, 0.2689]).unwrap();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);

        let h = from_real_diagonal(&[0.0, 1.0]);
        let th = thermal_state(&h, 1.0).unwrap();
        assert_abs_diff_eq!(th.matrix()[(0, 0)].re, p0, epsilon = 1e-12);
        assert_abs_diff_eq!(th.matrix()[(1, 1)].re, 1.0 - p0, epsilon = 1e-12);
        assert_abs_diff_eq!(th.matrix()[(0, 0)].re, 0.731059, epsilon = 1e-6);
    }

    #[test]
    fn thermal_limits() {
        let h = from_real_diagonal(&[0.0, 1.0]);
        let hot = thermal_state(&h, 1e9).unwrap();
        assert!((hot.matrix() - CMatrix::identity(2, 2).scale(0.5)).camax() < 1e-8);
        let cold = thermal_state(&h, 1e-9).unwrap();
        assert!((cold.matrix() - from_real_diagonal(&[1.0, 0.0])).camax() < 1e-8);
        assert!(matches!(thermal_state(&h, 0.0), Err(DenMatError::NonPositiveTemperature(_))));
        // Large energies would overflow without the ground-state shift.
        let big = from_real_diagonal(&[-2000.0, -1999.0]);
        let t = thermal_state(&big, 1.0).unwrap();
        assert_abs_diff_eq!(t.matrix()[(0, 0)].re, 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn thermal_commutes_with_hamiltonian() {
        let mut rng = trial_rng(9, 0);
        let a = random_density(6, &mut rng);
        let h = a.scale(4.0);
        let rho = thermal_state(&h, 0.3).unwrap();
        let comm = &h * rho.matrix() - rho.matrix() * &h;
        assert!(comm.camax() < 1e-10);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        assert!(rho.eigen().values[0] >= -1e-12);
    }

    #[test]
    fn distance_examples() {
        let a = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::diagonal(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(matrix_distance(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(matrix_distance(&a, &b).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        let c3 = DensityMatrix::maximally_mixed(3);
        assert!(matches!(matrix_distance(&a, &c3), Err(DenMatError::DimMismatch(2, 3))));
    }

    #[test]
    fn similarity_examples() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let pure = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(similarity_k(&mixed, &mixed).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(similarity_k(&mixed, &pure).unwrap(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        let e0 = DensityMatrix::diagonal(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let e1 = DensityMatrix::diagonal(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(similarity_k(&e0, &e1).unwrap(), 0.0);
        let zero = DensityMatrix::diagonal(&[0.0, 0.0]).unwrap();
        assert!(matches!(similarity_k(&zero, &pure), Err(DenMatError::ZeroMatrix)));
    }

    #[test]
    fn split_diagonal_and_zero() {
        let s = split_signed(&from_real_diagonal(&[0.2, -0.2])).unwrap();
        assert!((s.positive_part.matrix() - from_real_diagonal(&[0.2, 0.0])).camax() < 1e-15);
        assert!((s.negative_part.matrix() - from_real_diagonal(&[0.0, 0.2])).camax() < 1e-15);
        let z = split_signed(&CMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z.positive_part.trace(), 0.0);
        assert_eq!(z.negative_part.trace(), 0.0);
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = trial_rng(4, 0);
        let rho = DensityMatrix::new(random_density(3, &mut rng), 1.0).unwrap();
        let sigma = DensityMatrix::new(random_density(2, &mut rng), 1.0).unwrap();
        let joint = DensityMatrix::new(rho.matrix().kronecker(sigma.matrix()), 1.0).unwrap();
        let a = partial_trace(&joint, (3, 2), Factor::First).unwrap();
        let b = partial_trace(&joint, (3, 2), Factor::Second).unwrap();
        assert!((a.matrix() - rho.matrix()).camax() < 1e-12);
        assert!((b.matrix() - sigma.matrix()).camax() < 1e-12);

        let s = 0.5f64.sqrt();
        let bell = DensityMatrix::pure(&[c(s), c(0.0), c(0.0), c(s)]).unwrap();
        let red = partial_trace(&bell, (2, 2), Factor::First).unwrap();
        assert!((red.matrix() - CMatrix::identity(2, 2).scale(0.5)).camax() < 1e-15);

        assert!(matches!(
            partial_trace(&bell, (3, 2), Factor::First),
            Err(DenMatError::DimMismatch(4, 6))
        ));
    }

    #[test]
    fn json_shape() {
        let rho = DensityMatrix::diagonal(&[0.25, 0.75]).unwrap();
        let v = serde_json::to_value(&rho).unwrap();
        assert_eq!(v["dim"], 2);
        assert_eq!(v["entries"].as_array().unwrap().len(), 4);
        assert_eq!(v["entries"][3][0], 0.75);
        assert_eq!(v["trace_hint"], 1.0);
        let bad = serde_json::json!({"dim": 2, "entries": [[0,0],[1,0],[0,0],[0,0]], "trace_hint": 0.0});
        assert!(serde_json::from_value::<DensityMatrix>(bad).is_err());
    }
}
