//! Fisher-information estimators and the sensing observables.
//!
//! All estimators work on a family of states (or distributions, or moments) indexed by
//! the modulation amplitude `V`. Quantum and classical Fisher information use the
//! symmetric fidelity stencil
//!
//! ```text
//! F ≈ 4 [(1 − 𝓕(V, V+δ)) + (1 − 𝓕(V, V−δ))] / δ²
//! ```
//!
//! which follows from `𝓕 = 1 − F δ²/8 + O(δ³)`. Evaluating the stencil at `δ` and `2δ`
//! gives a Richardson estimate of the truncation error (and, optionally, removes it).

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freefermion::{diagonalize, slater_fidelity, slater_infidelity, SlaterState};
use crate::model::{build_hamiltonian, LatticeSpec};

/// Infidelities below this are indistinguishable from rounding noise.
pub const NOISE_FLOOR: f64 = 1e-15;
const NORMALIZATION_TOL: f64 = 1e-10;
const ZERO_VARIANCE: f64 = 1e-14;
const ZERO_SLOPE: f64 = 1e-10;

/// Relative slack allowed on `F_O ≤ F_C ≤ F_Q` for finite-difference bias.
pub const CRAMER_RAO_SLACK: f64 = 1e-3;

/// `Σ_i o_i n_i` with a label used as a map key in results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearObservable {
    pub label: String,
    pub coefficients: Vec<f64>,
}

impl LinearObservable {
    pub fn new(label: impl Into<String>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("observable has non-finite coefficients".into()));
        }
        Ok(Self {
            label: label.into(),
            coefficients,
        })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

pub const CDW_LABEL: &str = "cdw";
pub const H2_LABEL: &str = "h2";
pub const IPR_LABEL: &str = "ipr";

/// Even/odd imbalance `Σ (−1)^i n_i / n_f`.
pub fn cdw_observable(l: usize, n_f: usize) -> LinearObservable {
    let norm = n_f.max(1) as f64;
    LinearObservable {
        label: CDW_LABEL.into(),
        coefficients: (1..=l)
            .map(|i| if i % 2 == 0 { 1.0 / norm } else { -1.0 / norm })
            .collect(),
    }
}

/// The modulation itself, `Σ cos(2π i ω) n_i`.
pub fn h2_observable(spec: &LatticeSpec) -> LinearObservable {
    LinearObservable {
        label: H2_LABEL.into(),
        coefficients: spec.potential_profile(),
    }
}

/// `Σ ⟨n_i⟩ n_i`, built from the occupations of a particular state. Its expectation is
/// `Σ ⟨n_i⟩²`. Because the weights depend on the state it is not a fixed observable and
/// is never fed to the error-propagation estimator.
pub fn ipr_observable(occupations: &[f64]) -> LinearObservable {
    LinearObservable {
        label: IPR_LABEL.into(),
        coefficients: occupations.to_vec(),
    }
}

/// Site-to-outcome assignment for a single-particle position measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub label: String,
    pub outcome_of_site: Vec<usize>,
    pub n_outcomes: usize,
}

pub const SITE_RESOLVED_LABEL: &str = "site";
pub const PARITY_LABEL: &str = "parity";

impl MeasurementModel {
    pub fn new(label: impl Into<String>, outcome_of_site: Vec<usize>) -> Result<Self> {
        let n_outcomes = outcome_of_site.iter().max().map_or(0, |m| m + 1);
        if outcome_of_site.is_empty() {
            return Err(Error::InvalidArgument("measurement covers no sites".into()));
        }
        Ok(Self {
            label: label.into(),
            outcome_of_site,
            n_outcomes,
        })
    }

    pub fn site_resolved(l: usize) -> Self {
        Self {
            label: SITE_RESOLVED_LABEL.into(),
            outcome_of_site: (0..l).collect(),
            n_outcomes: l,
        }
    }

    /// Two outcomes: particle found on an odd site (`i = 1, 3, …`) or an even one.
    pub fn parity_binned(l: usize) -> Self {
        Self {
            label: PARITY_LABEL.into(),
            outcome_of_site: (1..=l).map(|i| i % 2).collect(),
            n_outcomes: 2,
        }
    }

    /// Outcome probabilities for a single-particle state.
    pub fn distribution(&self, state: &SlaterState) -> Result<Vec<f64>> {
        if state.n_f() != 1 {
            return Err(Error::InvalidArgument(format!(
                "position-measurement distributions need n_f = 1, got {}",
                state.n_f()
            )));
        }
        if state.l() != self.outcome_of_site.len() {
            return Err(Error::DimensionMismatch {
                expected: self.outcome_of_site.len(),
                got: state.l(),
            });
        }
        let mut p = vec![0.0; self.n_outcomes];
        for (site, n) in state.occupations().into_iter().enumerate() {
            p[self.outcome_of_site[site]] += n;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub delta_v: f64,
    /// Rescale `delta_v` until the infidelity lands in `target_infidelity`.
    pub adaptive: bool,
    pub target_infidelity: (f64, f64),
    /// Return the Richardson-extrapolated value instead of the plain `δ` stencil.
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            delta_v: 1e-4,
            adaptive: false,
            target_infidelity: (1e-8, 1e-4),
            richardson: true,
        }
    }
}

impl FdConfig {
    pub fn with_delta(delta_v: f64) -> Self {
        Self {
            delta_v,
            ..Self::default()
        }
    }

    pub fn adaptive(mut self) -> Self {
        self.adaptive = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_v > 0.0 && self.delta_v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta_v must be positive, got {}",
                self.delta_v
            )));
        }
        let (lo, hi) = self.target_infidelity;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "bad infidelity window [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Result of a fidelity-stencil evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    pub delta_v: f64,
    /// Richardson estimate `|F(δ) − F(2δ)| / 3` of the plain-stencil truncation error.
    pub stencil_error: f64,
    /// Mean infidelity `1 − 𝓕` at `±δ`.
    pub infidelity: f64,
}

/// Anything with a phase-free overlap.
pub trait PureState {
    fn fidelity(&self, other: &Self) -> Result<f64>;

    /// `1 − 𝓕`. Implementations should avoid the cancellation of the naive form.
    fn infidelity(&self, other: &Self) -> Result<f64> {
        Ok(1.0 - self.fidelity(other)?)
    }
}

impl PureState for SlaterState {
    fn fidelity(&self, other: &Self) -> Result<f64> {
        slater_fidelity(self, other)
    }

    fn infidelity(&self, other: &Self) -> Result<f64> {
        slater_infidelity(self, other)
    }
}

impl<S: PureState> PureState for Rc<S> {
    fn fidelity(&self, other: &Self) -> Result<f64> {
        S::fidelity(self, other)
    }

    fn infidelity(&self, other: &Self) -> Result<f64> {
        S::infidelity(self, other)
    }
}

fn stencil(infid_plus: f64, infid_minus: f64, delta: f64) -> f64 {
    4.0 * (infid_plus + infid_minus) / (delta * delta)
}

/// Runs the symmetric stencil on an infidelity function `dv ↦ 1 − 𝓕(V, V + dv)`.
pub fn fidelity_stencil(
    mut infidelity: impl FnMut(f64) -> Result<f64>,
    cfg: &FdConfig,
) -> Result<FdEstimate> {
    cfg.validate()?;
    let (lo, hi) = cfg.target_infidelity;
    let mut delta = cfg.delta_v;
    let mut pair = |d: f64| -> Result<(f64, f64)> { Ok((infidelity(d)?, infidelity(-d)?)) };

    let mut infid = pair(delta)?;
    if cfg.adaptive {
        let target = (lo * hi).sqrt();
        for _ in 0..12 {
            let mean = 0.5 * (infid.0 + infid.1);
            if (lo..=hi).contains(&mean) {
                break;
            }
            let factor = if mean <= NOISE_FLOOR {
                100.0
            } else {
                (target / mean).sqrt().clamp(1e-3, 1e3)
            };
            let next = (delta * factor).min(1.0);
            if next == delta {
                break;
            }
            delta = next;
            infid = pair(delta)?;
        }
        let mean = 0.5 * (infid.0 + infid.1);
        if mean < lo {
            return Err(Error::StepTooSmall {
                delta_v: delta,
                infidelity: mean,
            });
        }
        if mean > hi {
            return Err(Error::StepTooLarge {
                delta_v: delta,
                infidelity: mean,
            });
        }
    }

    let plain = stencil(infid.0, infid.1, delta);
    let wide = pair(2.0 * delta)?;
    let coarse = stencil(wide.0, wide.1, 2.0 * delta);
    let stencil_error = (plain - coarse).abs() / 3.0;
    let value = if cfg.richardson {
        (4.0 * plain - coarse) / 3.0
    } else {
        plain
    };
    Ok(FdEstimate {
        value,
        delta_v: delta,
        stencil_error,
        infidelity: 0.5 * (infid.0 + infid.1),
    })
}

/// Quantum Fisher information `F_Q = 4 χ_Q` of a pure-state family.
pub fn qfi_from_fidelity<S: PureState>(
    state_at: impl Fn(f64) -> Result<S>,
    v: f64,
    cfg: &FdConfig,
) -> Result<FdEstimate> {
    let center = state_at(v)?;
    fidelity_stencil(|dv| center.infidelity(&state_at(v + dv)?), cfg)
}

/// Bhattacharyya coefficient `Σ_ζ √(p_ζ q_ζ)`.
pub fn classical_fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    check_distributions(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt()).sum())
}

/// `1 − Σ_ζ √(p_ζ q_ζ)` in the cancellation-free Hellinger form `½ Σ_ζ (√p_ζ − √q_ζ)²`.
pub fn classical_infidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    check_distributions(p, q)?;
    Ok(0.5
        * p.iter()
            .zip(q)
            .map(|(a, b)| (a.max(0.0).sqrt() - b.max(0.0).sqrt()).powi(2))
            .sum::<f64>())
}

fn check_distributions(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    for d in [p, q] {
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(s));
        }
    }
    Ok(())
}

/// Classical Fisher information of an outcome distribution family.
pub fn cfi(
    dist_at: impl Fn(f64) -> Result<Vec<f64>>,
    v: f64,
    cfg: &FdConfig,
) -> Result<FdEstimate> {
    let center = dist_at(v)?;
    fidelity_stencil(
        |dv| {
            let shifted = dist_at(v + dv)?;
            if let Some(k) = center
                .iter()
                .zip(&shifted)
                .position(|(&p, &q)| p <= 0.0 && q > 0.0)
            {
                return Err(Error::CfiDivergent(k));
            }
            classical_infidelity(&center, &shifted)
        },
        cfg,
    )
}

/// Error-propagation Fisher information `(∂⟨O⟩/∂V)² / Var(O)` from a central difference.
pub fn ofi(
    mean_at: impl Fn(f64) -> Result<f64>,
    var_at: impl Fn(f64) -> Result<f64>,
    v: f64,
    cfg: &FdConfig,
) -> Result<f64> {
    cfg.validate()?;
    let d = cfg.delta_v;
    let slope = (mean_at(v + d)? - mean_at(v - d)?) / (2.0 * d);
    ofi_from_moments(slope, var_at(v)?)
}

/// Applies the zero-variance rules to a slope and a variance.
pub fn ofi_from_moments(slope: f64, variance: f64) -> Result<f64> {
    if variance <= ZERO_VARIANCE {
        if slope.abs() <= ZERO_SLOPE {
            return Ok(0.0);
        }
        return Err(Error::DeterministicObservable(slope));
    }
    Ok(slope * slope / variance)
}

/// Lower bound `1 / (M F)` on the estimator variance after `M` repetitions.
pub fn cramer_rao_bound(fisher: f64, repetitions: u64) -> Result<f64> {
    if fisher.is_nan() || fisher <= 0.0 {
        return Err(Error::NonPositiveFisher(fisher));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be positive".into()));
    }
    Ok(1.0 / (repetitions as f64 * fisher))
}

/// One sample of a Fisher-information scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherPoint {
    pub v: f64,
    pub f_q: f64,
    /// Classical Fisher information per measurement model (empty when not defined).
    pub f_c: BTreeMap<String, f64>,
    /// Observable Fisher information per observable label.
    pub f_o: BTreeMap<String, f64>,
    /// `⟨O⟩` per observable label at `v`.
    pub expectations: BTreeMap<String, f64>,
    pub l: usize,
    pub n_f: usize,
    pub delta_v_used: f64,
    pub stencil_error: f64,
}

impl FisherPoint {
    pub fn chi_q(&self) -> f64 {
        self.f_q / 4.0
    }

    /// Checks `F_O ≤ max F_C ≤ F_Q` (or `F_O ≤ F_Q` without a measurement model)
    /// with relative slack.
    pub fn check_cramer_rao(&self, slack: f64) -> std::result::Result<(), String> {
        let bound = |upper: f64| upper * (1.0 + slack) + 1e-12;
        if self.f_q < -1e-12 {
            return Err(format!("negative F_Q {} at V={}", self.f_q, self.v));
        }
        for (label, &fc) in &self.f_c {
            if fc > bound(self.f_q) {
                return Err(format!("F_C[{label}]={fc} > F_Q={} at V={}", self.f_q, self.v));
            }
        }
        let ceiling = self
            .f_c
            .values()
            .copied()
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            .unwrap_or(self.f_q);
        for (label, &fo) in &self.f_o {
            if fo > bound(ceiling) {
                return Err(format!(
                    "F_O[{label}]={fo} exceeds bound {ceiling} at V={}",
                    self.v
                ));
            }
        }
        Ok(())
    }
}

/// Memoised ground states of one lattice at fixed filling.
struct GroundStates<'a> {
    spec: &'a LatticeSpec,
    n_f: usize,
    cache: RefCell<Vec<(f64, Rc<SlaterState>)>>,
}

impl<'a> GroundStates<'a> {
    fn new(spec: &'a LatticeSpec, n_f: usize) -> Self {
        Self {
            spec,
            n_f,
            cache: RefCell::new(Vec::new()),
        }
    }

    fn at(&self, v: f64) -> Result<Rc<SlaterState>> {
        if let Some((_, s)) = self.cache.borrow().iter().find(|(x, _)| *x == v) {
            return Ok(Rc::clone(s));
        }
        let h = build_hamiltonian(self.spec, v)?;
        let state = Rc::new(diagonalize(&h)?.ground_state(self.n_f)?);
        self.cache.borrow_mut().push((v, Rc::clone(&state)));
        Ok(state)
    }
}

/// QFI, CFI and OFI of the `n_f`-fermion ground state at one amplitude.
///
/// Measurement models only apply to single-particle states and are skipped otherwise.
pub fn adiabatic_point(
    spec: &LatticeSpec,
    n_f: usize,
    v: f64,
    observables: &[LinearObservable],
    measurements: &[MeasurementModel],
    cfg: &FdConfig,
) -> Result<FisherPoint> {
    for obs in observables {
        if obs.len() != spec.l {
            return Err(Error::DimensionMismatch {
                expected: spec.l,
                got: obs.len(),
            });
        }
    }
    let states = GroundStates::new(spec, n_f);
    let q = qfi_from_fidelity(|x| states.at(x), v, cfg)?;
    let local = FdConfig {
        delta_v: q.delta_v,
        adaptive: false,
        ..*cfg
    };

    let mut f_c = BTreeMap::new();
    if n_f == 1 {
        for m in measurements {
            let est = cfi(|x| m.distribution(&*states.at(x)?), v, &local)?;
            f_c.insert(m.label.clone(), est.value);
        }
    }

    let mut f_o = BTreeMap::new();
    let mut expectations = BTreeMap::new();
    let center = states.at(v)?;
    for obs in observables {
        let c = &obs.coefficients;
        let fo = ofi(
            |x| states.at(x)?.diagonal_expectation(c),
            |x| states.at(x)?.diagonal_variance(c),
            v,
            &local,
        )?;
        f_o.insert(obs.label.clone(), fo);
        expectations.insert(obs.label.clone(), center.diagonal_expectation(c)?);
    }

    Ok(FisherPoint {
        v,
        f_q: q.value,
        f_c,
        f_o,
        expectations,
        l: spec.l,
        n_f,
        delta_v_used: q.delta_v,
        stencil_error: q.stencil_error,
    })
}

/// [`adiabatic_point`] over a sorted grid; output is ordered like the grid.
pub fn adiabatic_sweep(
    spec: &LatticeSpec,
    n_f: usize,
    v_grid: &[f64],
    observables: &[LinearObservable],
    measurements: &[MeasurementModel],
    cfg: &FdConfig,
) -> Result<Vec<FisherPoint>> {
    if v_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("V grid must be sorted".into()));
    }
    crate::par::try_map(v_grid, |&v| {
        adiabatic_point(spec, n_f, v, observables, measurements, cfg)
    })
}
