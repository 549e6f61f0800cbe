//! Dense complex helpers shared by the quantum modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::CMatrix;

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(m: &CMatrix) -> Self {
        let sym = hermitian_part(m);
        let eig = sym.symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        HermitianEigen { values, vectors }
    }

    /// `V f(Λ) V†` for a complex-valued spectral function.
    pub fn apply<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let diag = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let scaled = &self.vectors * CMatrix::from_diagonal(&diag);
        scaled * self.vectors.adjoint()
    }

    /// `V diag(values) V†` with replacement eigenvalues.
    pub fn with_values(&self, values: &[f64]) -> CMatrix {
        let diag = DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
        let scaled = &self.vectors * CMatrix::from_diagonal(&diag);
        scaled * self.vectors.adjoint()
    }

    /// `Σ_k w(λ_k) |v_k⟩⟨v_k|`.
    pub fn projector_sum<F: Fn(f64) -> f64>(&self, weight: F) -> CMatrix {
        self.apply(|v| Complex64::new(weight(v), 0.0))
    }
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise `|M − M†|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entrywise `|U†U − I|`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let n = u.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `exp(−i H t)` for Hermitian `H`.
pub fn unitary_propagator(eig: &HermitianEigen, t: f64) -> CMatrix {
    eig.apply(|e| Complex64::from_polar(1.0, -e * t))
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    q
}

/// Random density matrix `A A† / Tr(A A†)` with Ginibre `A`.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let m = &a * a.adjoint();
    let tr = trace(&m).re;
    hermitian_part(&m.unscale(tr))
}

pub fn from_real_diagonal(values: &[f64]) -> CMatrix {
    let d = DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
    CMatrix::from_diagonal(&d)
}

pub fn from_real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::trial_rng;

    #[test]
    fn haar_is_unitary() {
        let mut rng = trial_rng(11, 0);
        for n in [1, 2, 8, 16] {
            let u = haar_unitary(n, &mut rng);
            assert!(unitarity_deviation(&u) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn haar_diagonal_phases_are_uniform() {
        // For Haar measure E[U_00] = 0 and E|U_00|^2 = 1/n.
        let mut rng = trial_rng(5, 0);
        let n = 4;
        let samples = 20_000;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for _ in 0..samples {
            let u = haar_unitary(n, &mut rng);
            mean += u[(0, 0)];
            second += u[(0, 0)].norm_sqr();
        }
        mean /= samples as f64;
        second /= samples as f64;
        assert!(mean.norm() < 0.02, "{mean}");
        assert!((second - 0.25).abs() < 0.01, "{second}");
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let mut rng = trial_rng(2, 0);
        let rho = random_density(6, &mut rng);
        let eig = HermitianEigen::new(&rho);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let back = eig.projector_sum(|v| v);
        assert!((back - &rho).camax() < 1e-13);
    }

    #[test]
    fn propagator_is_unitary() {
        let h = from_real_diagonal(&[0.0, 1.0, 2.5]);
        let eig = HermitianEigen::new(&h);
        let u = unitary_propagator(&eig, 0.37);
        assert!(unitarity_deviation(&u) < 1e-14);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, -0.37)).norm() < 1e-14);
    }
}
