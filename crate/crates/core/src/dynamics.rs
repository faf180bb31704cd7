//! Sudden-quench sensing.
//!
//! An initial Slater state is evolved under `H(V_f)`; the parameter being sensed is the
//! quench amplitude `V_f`. Both legs of every finite difference start from the same
//! initial state and differ only in the quench Hamiltonian.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freefermion::{
    diagonalize, slater_fidelity, slater_infidelity, SlaterState, SpectralDecomposition,
};
use crate::metrology::{fidelity_stencil, ofi_from_moments, FdConfig, FdEstimate, LinearObservable};
use crate::model::{build_hamiltonian, LatticeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Ground state of `H(v_i)` with `n_f` fermions.
    GroundState { v_i: f64, n_f: usize },
    /// `|1010…⟩` with sites `1, 3, 5, …` occupied.
    CdwProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchProtocol {
    pub spec: LatticeSpec,
    pub initial: InitialState,
    pub v_f: f64,
    pub times: Vec<f64>,
    pub cfg: FdConfig,
}

impl QuenchProtocol {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.cfg.validate()?;
        if !self.v_f.is_finite() {
            return Err(Error::InvalidArgument("V_f must be finite".into()));
        }
        if self.times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidArgument("times must be positive".into()));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<SlaterState> {
        match self.initial {
            InitialState::GroundState { v_i, n_f } => {
                crate::freefermion::ground_state(&self.spec, v_i, n_f)
            }
            InitialState::CdwProduct => cdw_product_state(self.spec.l),
        }
    }
}

/// `|1010…⟩`: unit orbitals on sites `1, 3, 5, …`, so `n_f = ⌈L/2⌉`.
pub fn cdw_product_state(l: usize) -> Result<SlaterState> {
    if l == 0 {
        return Err(Error::InvalidArgument("empty lattice".into()));
    }
    let sites: Vec<usize> = (0..l).step_by(2).collect();
    SlaterState::site_occupation(l, &sites)
}

/// Spectral data of one quench Hamiltonian with its unitary kept in complex form.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub v: f64,
    pub spectrum: SpectralDecomposition,
    q: DMatrix<Complex64>,
}

impl Propagator {
    pub fn new(spec: &LatticeSpec, v: f64) -> Result<Self> {
        let spectrum = diagonalize(&build_hamiltonian(spec, v)?)?;
        Ok(Self::from_spectrum(v, spectrum))
    }

    pub fn from_spectrum(v: f64, spectrum: SpectralDecomposition) -> Self {
        let q = spectrum.orbitals.map(|x| Complex64::new(x, 0.0));
        Self { v, spectrum, q }
    }

    /// Initial orbitals in the eigenbasis, `Qᵀ Φ`.
    pub fn to_eigenbasis(&self, state: &SlaterState) -> DMatrix<Complex64> {
        self.q.adjoint() * state.orbitals()
    }

    pub fn evolve(&self, state: &SlaterState, t: f64) -> SlaterState {
        if t == 0.0 {
            return state.clone();
        }
        let mut coeffs = self.to_eigenbasis(state);
        for (k, &e) in self.spectrum.energies.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -e * t);
            for z in coeffs.row_mut(k).iter_mut() {
                *z *= phase;
            }
        }
        SlaterState::from_unitary_image(&self.q * coeffs)
    }
}

/// `Φ(t) = Q e^{−iEt} Qᵀ Φ` for the quench Hamiltonian `h_f`.
pub fn evolve_slater(
    state: &SlaterState,
    h_f: &crate::model::SingleParticleHamiltonian,
    t: f64,
) -> Result<SlaterState> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    if state.l() != h_f.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_f.dim(),
            got: state.l(),
        });
    }
    let prop = Propagator::from_spectrum(h_f.v, diagonalize(h_f)?);
    Ok(prop.evolve(state, t))
}

/// `(e^{ix} − 1)/(ix)` with its Taylor series near zero.
pub fn phase_average(x: f64) -> Complex64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        Complex64::new(1.0 - x2 / 6.0, x / 2.0 - x * x2 / 24.0)
    } else {
        (Complex64::from_polar(1.0, x) - 1.0) / Complex64::new(0.0, x)
    }
}

/// `H̄₂(t) = (1/t) ∫₀ᵗ e^{iHt'} H₂ e^{−iHt'} dt'` in the eigenbasis of `H(V_f)`.
#[derive(Debug, Clone)]
pub struct TimeAveragedGenerator {
    pub t: f64,
    pub matrix: DMatrix<Complex64>,
}

impl TimeAveragedGenerator {
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()))
    }
}

/// A quench protocol with its initial state and propagators prepared once.
#[derive(Debug, Clone)]
pub struct PreparedQuench {
    pub protocol: QuenchProtocol,
    pub initial: SlaterState,
    center: Propagator,
    /// Propagators at `V_f ± δ` and `V_f ± 2δ` for the configured `δ`.
    shifted: [Propagator; 4],
    /// `H₂` in the eigenbasis of `H(V_f)`.
    h2_eigen: DMatrix<Complex64>,
    /// Initial orbitals in the eigenbasis of `H(V_f)`.
    initial_eigen: DMatrix<Complex64>,
}

impl PreparedQuench {
    pub fn new(protocol: QuenchProtocol) -> Result<Self> {
        protocol.validate()?;
        let initial = protocol.initial_state()?;
        let spec = &protocol.spec;
        let v_f = protocol.v_f;
        let d = protocol.cfg.delta_v;
        let center = Propagator::new(spec, v_f)?;
        let shifted = [
            Propagator::new(spec, v_f + d)?,
            Propagator::new(spec, v_f - d)?,
            Propagator::new(spec, v_f + 2.0 * d)?,
            Propagator::new(spec, v_f - 2.0 * d)?,
        ];
        let q = &center.q;
        let h2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            spec.l,
            spec.potential_profile().into_iter().map(|x| Complex64::new(x, 0.0)),
        ));
        let h2_eigen = q.adjoint() * h2 * q;
        let initial_eigen = center.to_eigenbasis(&initial);
        Ok(Self {
            protocol,
            initial,
            center,
            shifted,
            h2_eigen,
            initial_eigen,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.protocol.spec
    }

    fn propagator_at(&self, dv: f64) -> Result<Propagator> {
        let d = self.protocol.cfg.delta_v;
        let pick = [(d, 0), (-d, 1), (2.0 * d, 2), (-2.0 * d, 3)]
            .iter()
            .find(|(x, _)| *x == dv)
            .map(|&(_, k)| k);
        match pick {
            Some(k) => Ok(self.shifted[k].clone()),
            None => Propagator::new(self.spec(), self.protocol.v_f + dv),
        }
    }

    pub fn evolve(&self, t: f64) -> SlaterState {
        self.center.evolve(&self.initial, t)
    }

    pub fn evolve_shifted(&self, dv: f64, t: f64) -> Result<SlaterState> {
        if dv == 0.0 {
            return Ok(self.evolve(t));
        }
        Ok(self.propagator_at(dv)?.evolve(&self.initial, t))
    }

    /// `|⟨ψ(V_f, t)|ψ(V_f + dv, t)⟩|`.
    pub fn dynamic_fidelity(&self, t: f64, dv: f64) -> Result<f64> {
        check_time(t)?;
        if dv == 0.0 || t == 0.0 {
            return Ok(1.0);
        }
        slater_fidelity(&self.evolve(t), &self.evolve_shifted(dv, t)?)
    }

    /// Fidelity-stencil QFI of the evolved state with respect to `V_f`.
    pub fn dynamic_qfi(&self, t: f64) -> Result<FdEstimate> {
        check_time(t)?;
        let reference = self.evolve(t);
        fidelity_stencil(
            |dv| slater_infidelity(&reference, &self.evolve_shifted(dv, t)?),
            &self.protocol.cfg,
        )
    }

    pub fn time_averaged_generator(&self, t: f64) -> TimeAveragedGenerator {
        let e = &self.center.spectrum.energies;
        let matrix = DMatrix::from_fn(e.len(), e.len(), |k, l| {
            self.h2_eigen[(k, l)] * phase_average((e[k] - e[l]) * t)
        });
        TimeAveragedGenerator { t, matrix }
    }

    /// `4 t² Var(H̄₂(t))` on the initial state.
    pub fn generator_variance_qfi(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let gen = self.time_averaged_generator(t);
        let image = &gen.matrix * &self.initial_eigen;
        let total = image.norm_squared();
        let projected = (self.initial_eigen.adjoint() * &image).norm_squared();
        Ok(4.0 * t * t * (total - projected).max(0.0))
    }

    /// `⟨O⟩(t)` and `Var O(t)` for a diagonal observable at `V_f + dv`.
    pub fn moments(&self, t: f64, dv: f64, obs: &LinearObservable) -> Result<(f64, f64)> {
        let state = self.evolve_shifted(dv, t)?;
        Ok((
            state.diagonal_expectation(&obs.coefficients)?,
            state.diagonal_variance(&obs.coefficients)?,
        ))
    }

    /// Error-propagation OFI with a central difference over `V_f ± δ`.
    pub fn dynamic_ofi(&self, t: f64, obs: &LinearObservable) -> Result<f64> {
        check_time(t)?;
        let d = self.protocol.cfg.delta_v;
        let c = &obs.coefficients;
        let plus = self.evolve_shifted(d, t)?.diagonal_expectation(c)?;
        let minus = self.evolve_shifted(-d, t)?.diagonal_expectation(c)?;
        let var = self.evolve(t).diagonal_variance(c)?;
        ofi_from_moments((plus - minus) / (2.0 * d), var)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Per-time output of a quench run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSample {
    pub t: f64,
    /// Fidelity-stencil QFI.
    pub f_q: f64,
    /// `4 t² Var(H̄₂)`.
    pub f_q_generator: f64,
    pub f_o: std::collections::BTreeMap<String, f64>,
    pub stencil_error: f64,
}

/// Evaluates every time of the protocol.
pub fn run_quench(protocol: QuenchProtocol, observables: &[LinearObservable]) -> Result<Vec<QuenchSample>> {
    let prepared = PreparedQuench::new(protocol)?;
    crate::par::try_map(&prepared.protocol.times, |&t| {
        let q = prepared.dynamic_qfi(t)?;
        let mut f_o = std::collections::BTreeMap::new();
        for obs in observables {
            f_o.insert(obs.label.clone(), prepared.dynamic_ofi(t, obs)?);
        }
        Ok(QuenchSample {
            t,
            f_q: q.value,
            f_q_generator: prepared.generator_variance_qfi(t)?,
            f_o,
            stencil_error: q.stencil_error,
        })
    })
}

/// Geometric samples on `[t_min, t_split]` followed by linear samples up to `t_max`.
pub fn quench_time_grid(t_min: f64, t_split: f64, t_max: f64, n_geometric: usize, n_linear: usize) -> Vec<f64> {
    let mut times = Vec::with_capacity(n_geometric + n_linear);
    if n_geometric > 1 {
        let ratio = (t_split / t_min).ln() / (n_geometric - 1) as f64;
        times.extend((0..n_geometric).map(|k| t_min * (ratio * k as f64).exp()));
    } else if n_geometric == 1 {
        times.push(t_min);
    }
    if n_linear > 0 && t_max > t_split {
        let step = (t_max - t_split) / n_linear as f64;
        times.extend((1..=n_linear).map(|k| t_split + step * k as f64));
    }
    times
}

/// Arithmetic mean of the samples with `t` inside `[lo, hi]`.
pub fn window_average(samples: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let inside: Vec<f64> = samples
        .iter()
        .filter(|(t, _)| (lo..=hi).contains(t))
        .map(|&(_, y)| y)
        .collect();
    (!inside.is_empty()).then(|| inside.iter().sum::<f64>() / inside.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::{cdw_observable, h2_observable};

    fn protocol(l: usize, initial: InitialState, v_f: f64) -> QuenchProtocol {
        QuenchProtocol {
            spec: LatticeSpec::fibonacci(l).unwrap(),
            initial,
            v_f,
            times: vec![0.1, 0.5, 1.0],
            cfg: FdConfig::default(),
        }
    }

    #[test]
    fn cdw_state_layout() {
        let s = cdw_product_state(5).unwrap();
        assert_eq!(s.n_f(), 3);
        assert_eq!(s.occupations(), vec![1.0, 0.0, 1.0, 0.0, 1.0]);
        let cdw = cdw_observable(5, 3);
        assert!((s.diagonal_expectation(&cdw.coefficients).unwrap().abs() - 1.0).abs() < 1e-15);
        assert_eq!(s.diagonal_variance(&cdw.coefficients).unwrap(), 0.0);
    }

    #[test]
    fn evolution_is_unitary() {
        let q = PreparedQuench::new(protocol(21, InitialState::CdwProduct, 1.0)).unwrap();
        assert_eq!(q.evolve(0.0), q.initial);
        for t in [0.3, 2.0, 17.0] {
            let s = q.evolve(t);
            assert!(s.orthonormality_error() < 1e-10);
            let ones = vec![1.0; 21];
            assert!((s.diagonal_expectation(&ones).unwrap() - 11.0).abs() < 1e-10);
            assert!(s.diagonal_variance(&ones).unwrap() < 1e-10);
        }
    }

    #[test]
    fn trivial_fidelities() {
        let q = PreparedQuench::new(protocol(13, InitialState::GroundState { v_i: 5.0, n_f: 6 }, 1.0)).unwrap();
        assert_eq!(q.dynamic_fidelity(0.7, 0.0).unwrap(), 1.0);
        assert_eq!(q.dynamic_fidelity(0.0, 1e-3).unwrap(), 1.0);
        assert_eq!(q.generator_variance_qfi(0.0).unwrap(), 0.0);
        assert!(q.dynamic_qfi(-1.0).is_err());
    }

    #[test]
    fn cdw_ofi_vanishes_at_t0() {
        let q = PreparedQuench::new(protocol(21, InitialState::CdwProduct, 2.0)).unwrap();
        assert_eq!(q.dynamic_ofi(0.0, &cdw_observable(21, 11)).unwrap(), 0.0);
    }

    #[test]
    fn generator_limit_is_h2_variance() {
        let q = PreparedQuench::new(protocol(21, InitialState::GroundState { v_i: 5.0, n_f: 11 }, 1.0)).unwrap();
        let g = q.time_averaged_generator(1e-9);
        assert!((&g.matrix - &q.h2_eigen).norm() < 1e-7);
        let t = 1e-4;
        let var = q.initial.diagonal_variance(&h2_observable(q.spec()).coefficients).unwrap();
        let ratio = q.generator_variance_qfi(t).unwrap() / (4.0 * t * t * var);
        assert!((ratio - 1.0).abs() < 1e-6);
        assert!(q.time_averaged_generator(2.5).hermiticity_error() < 1e-12);
    }

    #[test]
    fn stationary_state_has_zero_qfi() {
        // Eigenstate of H(V_f) with H₂ ∝ the number operator after filling every orbital.
        let mut p = protocol(13, InitialState::GroundState { v_i: 1.0, n_f: 13 }, 1.0);
        p.cfg = FdConfig::with_delta(1e-2);
        let q = PreparedQuench::new(p).unwrap();
        assert!(q.generator_variance_qfi(1.3).unwrap() < 1e-10);
        assert!(q.dynamic_qfi(1.3).unwrap().value.abs() < 1e-8);
    }

    #[test]
    fn phase_average_branches_agree() {
        for x in [1e-4, -1e-4] {
            let y = x * 0.999_999;
            let series = phase_average(y);
            let exact = (Complex64::from_polar(1.0, y) - 1.0) / Complex64::new(0.0, y);
            assert!((series - exact).norm() < 1e-11);
        }
        assert_eq!(phase_average(0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn time_grid() {
        let g = quench_time_grid(0.05, 0.8, 3.0, 5, 4);
        assert_eq!(g.len(), 9);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[4] - 0.8).abs() < 1e-12);
        assert!((g[8] - 3.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(window_average(&[(1.0, 2.0), (6.0, 4.0), (7.0, 6.0)], 5.0, 20.0), Some(5.0));
    }

    #[test]
    fn protocol_validation() {
        let mut p = protocol(13, InitialState::CdwProduct, 1.0);
        p.times = vec![1.0, 0.5];
        assert!(PreparedQuench::new(p).is_err());
    }
}
