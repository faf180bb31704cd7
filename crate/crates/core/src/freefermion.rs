//! Exact free-fermion engine.
//!
//! A number-conserving pure Gaussian state is stored as an `L × n_f` matrix `Φ` of
//! orthonormal occupied orbitals. Everything else (occupations, variances, overlaps)
//! follows from `Φ` through Wick's theorem.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, LatticeSpec, SingleParticleHamiltonian};

pub const ORTHONORMALITY_TOL: f64 = 1e-10;
pub const DEGENERACY_TOL: f64 = 1e-10;
pub const ZERO_MODE_TOL: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-10;
const VARIANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending single-particle energies.
    pub energies: Vec<f64>,
    /// Column `k` is the eigenvector of `energies[k]`.
    pub orbitals: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `max_k ‖H v_k − E_k v_k‖∞`.
    pub fn max_residual(&self, h: &DMatrix<f64>) -> f64 {
        let hv = h * &self.orbitals;
        let mut worst = 0.0f64;
        for (k, &e) in self.energies.iter().enumerate() {
            for i in 0..self.dim() {
                worst = worst.max((hv[(i, k)] - e * self.orbitals[(i, k)]).abs());
            }
        }
        worst
    }

    /// Largest entry of `|QᵀQ − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.orbitals.transpose() * &self.orbitals;
        max_identity_deviation_real(&g)
    }

    /// Slater state of the `n_f` lowest orbitals; errors on a degenerate Fermi level.
    pub fn ground_state(&self, n_f: usize) -> Result<SlaterState> {
        let l = self.dim();
        if n_f == 0 || n_f > l {
            return Err(Error::InvalidFilling { l, n_f });
        }
        if n_f < l {
            let gap = self.energies[n_f] - self.energies[n_f - 1];
            if gap < DEGENERACY_TOL {
                return Err(Error::DegenerateFermiLevel { n_f, gap });
            }
        }
        let cols = self.orbitals.columns(0, n_f);
        Ok(SlaterState {
            orbitals: cols.map(|x| Complex64::new(x, 0.0)),
        })
    }

    pub fn negative_count(&self) -> Result<usize> {
        if let Some(e) = self.energies.iter().find(|e| e.abs() < ZERO_MODE_TOL) {
            return Err(Error::AmbiguousZeroMode(*e));
        }
        Ok(self.energies.iter().filter(|&&e| e < 0.0).count())
    }
}

fn max_identity_deviation_real(g: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

fn max_identity_deviation(g: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Dense symmetric eigendecomposition, sorted ascending. Each eigenvector is signed so
/// that its largest-magnitude entry is positive.
pub fn diagonalize_matrix(h: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h.ncols(),
        });
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::EigenNonConvergence(format!("symmetric QR on {n}x{n}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut orbitals = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| {
            if x.abs() > acc.abs() {
                x
            } else {
                acc
            }
        });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        orbitals.set_column(dst, &(col * sign));
    }
    Ok(SpectralDecomposition { energies, orbitals })
}

pub fn diagonalize(h: &SingleParticleHamiltonian) -> Result<SpectralDecomposition> {
    diagonalize_matrix(&h.matrix)
}

/// Pure Slater determinant: orthonormal occupied orbitals as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterState {
    orbitals: DMatrix<Complex64>,
}

impl SlaterState {
    pub fn new(orbitals: DMatrix<Complex64>) -> Result<Self> {
        let (l, n_f) = orbitals.shape();
        if n_f == 0 || n_f > l {
            return Err(Error::InvalidFilling { l, n_f });
        }
        let g = orbitals.adjoint() * &orbitals;
        let err = max_identity_deviation(&g);
        if err > ORTHONORMALITY_TOL {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self { orbitals })
    }

    pub fn from_real(orbitals: &DMatrix<f64>) -> Result<Self> {
        Self::new(orbitals.map(|x| Complex64::new(x, 0.0)))
    }

    /// Skips the orthonormality check; callers guarantee a unitary image of a valid state.
    pub(crate) fn from_unitary_image(orbitals: DMatrix<Complex64>) -> Self {
        Self { orbitals }
    }

    /// Occupies the listed (0-based) sites.
    pub fn site_occupation(l: usize, sites: &[usize]) -> Result<Self> {
        let mut orbitals = DMatrix::zeros(l, sites.len());
        for (k, &s) in sites.iter().enumerate() {
            if s >= l {
                return Err(Error::InvalidArgument(format!("site {s} outside lattice of {l}")));
            }
            orbitals[(s, k)] = Complex64::new(1.0, 0.0);
        }
        Self::new(orbitals)
    }

    pub fn orbitals(&self) -> &DMatrix<Complex64> {
        &self.orbitals
    }

    pub fn l(&self) -> usize {
        self.orbitals.nrows()
    }

    pub fn n_f(&self) -> usize {
        self.orbitals.ncols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        max_identity_deviation(&(self.orbitals.adjoint() * &self.orbitals))
    }

    /// `⟨n_i⟩ = Σ_k |Φ_ik|²`.
    pub fn occupations(&self) -> Vec<f64> {
        self.orbitals
            .row_iter()
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// `⟨Σ_i o_i n_i⟩` without forming the correlation matrix.
    pub fn diagonal_expectation(&self, coefficients: &[f64]) -> Result<f64> {
        check_len(self.l(), coefficients.len())?;
        Ok(self
            .occupations()
            .iter()
            .zip(coefficients)
            .map(|(n, o)| n * o)
            .sum())
    }

    /// Variance of `Σ_i o_i n_i` as `‖OΦ‖² − ‖Φ†OΦ‖²`.
    pub fn diagonal_variance(&self, coefficients: &[f64]) -> Result<f64> {
        check_len(self.l(), coefficients.len())?;
        let mut scaled = self.orbitals.clone();
        for (i, &o) in coefficients.iter().enumerate() {
            scaled.row_mut(i).scale_mut(o);
        }
        variance_from_image(&self.orbitals, &scaled)
    }

    /// `⟨A⟩` for the one-body operator `Σ A_ij c†_i c_j` (first-quantized matrix `A`).
    pub fn one_body_expectation(&self, a: &DMatrix<Complex64>) -> Result<Complex64> {
        check_len(self.l(), a.nrows())?;
        let projected = self.orbitals.adjoint() * a * &self.orbitals;
        Ok(projected.trace())
    }

    /// Variance of a Hermitian one-body operator `A`.
    pub fn one_body_variance(&self, a: &DMatrix<Complex64>) -> Result<f64> {
        check_len(self.l(), a.nrows())?;
        let image = a * &self.orbitals;
        variance_from_image(&self.orbitals, &image)
    }
}

fn variance_from_image(phi: &DMatrix<Complex64>, image: &DMatrix<Complex64>) -> Result<f64> {
    let total = image.norm_squared();
    let projected = (phi.adjoint() * image).norm_squared();
    let var = total - projected;
    // Catastrophic cancellation scales with the size of the terms being subtracted.
    if var < -VARIANCE_TOL * total.max(1.0) {
        return Err(Error::NegativeVariance(var));
    }
    Ok(var.max(0.0))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn ground_state(spec: &LatticeSpec, v: f64, n_f: usize) -> Result<SlaterState> {
    let h = build_hamiltonian(spec, v)?;
    diagonalize(&h)?.ground_state(n_f)
}

/// Number of strictly negative single-particle energies at amplitude `v`.
pub fn negative_energy_count(spec: &LatticeSpec, v: f64) -> Result<usize> {
    let h = build_hamiltonian(spec, v)?;
    diagonalize(&h)?.negative_count()
}

/// One-body reduced density matrix `C_ij = ⟨c†_i c_j⟩`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub c: DMatrix<Complex64>,
}

impl CorrelationMatrix {
    pub fn l(&self) -> usize {
        self.c.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.c.trace().re
    }

    pub fn occupations(&self) -> Vec<f64> {
        self.c.diagonal().iter().map(|z| z.re).collect()
    }

    /// `max |C² − C|`; zero for a pure Slater state.
    pub fn idempotency_error(&self) -> f64 {
        let sq = &self.c * &self.c;
        (sq - &self.c).iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.c - self.c.adjoint())
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()))
    }
}

/// `C = Φ* Φᵀ`.
pub fn correlation_matrix(state: &SlaterState) -> CorrelationMatrix {
    let phi = state.orbitals();
    CorrelationMatrix {
        c: phi.conjugate() * phi.transpose(),
    }
}

/// `⟨Σ o_i n_i⟩ = Σ o_i C_ii`.
pub fn expectation_linear(c: &CorrelationMatrix, coefficients: &[f64]) -> Result<f64> {
    check_len(c.l(), coefficients.len())?;
    let sum: Complex64 = coefficients
        .iter()
        .enumerate()
        .map(|(i, &o)| c.c[(i, i)] * o)
        .sum();
    if sum.im.abs() > IMAG_TOL {
        return Err(Error::ComplexExpectation(sum.im));
    }
    Ok(sum.re)
}

/// Wick form `Σ_ij o_i o_j C_ij (δ_ij − C_ji)`.
pub fn variance_linear(c: &CorrelationMatrix, coefficients: &[f64]) -> Result<f64> {
    let l = c.l();
    check_len(l, coefficients.len())?;
    let mut var = 0.0;
    for i in 0..l {
        let oi = coefficients[i];
        var += oi * oi * c.c[(i, i)].re;
        for j in 0..l {
            var -= oi * coefficients[j] * (c.c[(i, j)] * c.c[(j, i)]).re;
        }
    }
    if var < -VARIANCE_TOL {
        return Err(Error::NegativeVariance(var));
    }
    Ok(var.max(0.0))
}

/// `⟨ψ_A|ψ_B⟩ = det(Φ_A† Φ_B)`.
pub fn slater_overlap(a: &SlaterState, b: &SlaterState) -> Result<Complex64> {
    check_len(a.l(), b.l())?;
    check_len(a.n_f(), b.n_f())?;
    let m = a.orbitals().adjoint() * b.orbitals();
    Ok(m.determinant())
}

/// `|⟨ψ_A|ψ_B⟩|`, the phase-free fidelity.
pub fn slater_fidelity(a: &SlaterState, b: &SlaterState) -> Result<f64> {
    slater_overlap(a, b).map(|z| z.norm())
}

/// `1 − |⟨ψ_A|ψ_B⟩|` without cancellation.
///
/// The singular values of `(1 − Φ_A Φ_A†) Φ_B` are the sines of the principal angles
/// between the occupied subspaces, and `|⟨ψ_A|ψ_B⟩| = Π cos θ_k`. Working with the
/// sines keeps full relative precision when the states are nearly identical, which is
/// exactly the regime of finite-difference stencils.
pub fn slater_infidelity(a: &SlaterState, b: &SlaterState) -> Result<f64> {
    check_len(a.l(), b.l())?;
    check_len(a.n_f(), b.n_f())?;
    let (pa, pb) = (a.orbitals(), b.orbitals());
    let residual = pb - pa * (pa.adjoint() * pb);
    let sines = residual.singular_values();
    if sines.iter().any(|&s| s >= 1.0) {
        return Ok(1.0);
    }
    let log_fidelity: f64 = sines.iter().map(|s| 0.5 * (-s * s).ln_1p()).sum();
    Ok(-log_fidelity.exp_m1())
}
