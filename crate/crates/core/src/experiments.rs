//! End-to-end pipelines shared by the command-line driver, the browser demo and the
//! test suites.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{zoom_peak, Peak, ZoomConfig};
use crate::dynamics::{run_quench, InitialState, QuenchProtocol, QuenchSample};
use crate::error::{Error, Result};
use crate::freefermion::{diagonalize, SpectralDecomposition};
use crate::manybody::{
    build_basis, build_hamiltonian_mb, ground_state_mb_with, LanczosConfig,
    SparseManyBodyHamiltonian,
};
use crate::metrology::{
    cdw_observable, fidelity_stencil, h2_observable, ofi_from_moments, FdConfig, LinearObservable,
    PureState,
};
use crate::model::{build_hamiltonian, LatticeSpec};

/// Early-time window for `t ≲ 1` power laws.
pub const TRANSIENT_WINDOW: (f64, f64) = (0.05, 0.8);
/// Early-time window for quenches from the extended into the localized phase.
pub const SHORT_TRANSIENT_WINDOW: (f64, f64) = (0.01, 0.1);
/// Window of the long-time average.
pub const LONG_TIME_WINDOW: (f64, f64) = (5.0, 20.0);

/// Bracket and resolution of a peak search in `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSearch {
    pub lo: f64,
    pub hi: f64,
    pub zoom: ZoomConfig,
}

impl Default for PeakSearch {
    /// Brackets the transition at `V = 2` while staying clear of the near-degenerate
    /// orbitals deep in the localized phase.
    fn default() -> Self {
        Self {
            lo: 1.5,
            hi: 2.4,
            zoom: ZoomConfig {
                points: 19,
                levels: 3,
            },
        }
    }
}

fn spectrum(spec: &LatticeSpec, v: f64) -> Result<SpectralDecomposition> {
    diagonalize(&build_hamiltonian(spec, v)?)
}

/// Ground-state QFI of `n_f` free fermions at one amplitude.
pub fn qfi_at(spec: &LatticeSpec, n_f: usize, v: f64, cfg: &FdConfig) -> Result<f64> {
    let center = spectrum(spec, v)?.ground_state(n_f)?;
    let est = fidelity_stencil(
        |dv| center.infidelity(&spectrum(spec, v + dv)?.ground_state(n_f)?),
        cfg,
    )?;
    Ok(est.value)
}

/// Ground-state OFI of a diagonal observable with a central difference of step `δ`.
pub fn ofi_at(
    spec: &LatticeSpec,
    n_f: usize,
    v: f64,
    obs: &LinearObservable,
    cfg: &FdConfig,
) -> Result<f64> {
    let d = cfg.delta_v;
    let c = &obs.coefficients;
    let mean = |x: f64| spectrum(spec, x)?.ground_state(n_f)?.diagonal_expectation(c);
    let slope = (mean(v + d)? - mean(v - d)?) / (2.0 * d);
    let var = spectrum(spec, v)?.ground_state(n_f)?.diagonal_variance(c)?;
    ofi_from_moments(slope, var)
}

/// QFI and CDW-OFI maxima of a single particle on one ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleParticlePeaks {
    pub l: usize,
    pub qfi: Peak,
    pub cdw: Peak,
}

pub fn single_particle_peaks(
    spec: &LatticeSpec,
    search: &PeakSearch,
    cfg: &FdConfig,
) -> Result<SingleParticlePeaks> {
    let obs = cdw_observable(spec.l, 1);
    let qfi = zoom_peak(|v| qfi_at(spec, 1, v, cfg), search.lo, search.hi, &search.zoom)?;
    let cdw = zoom_peak(
        |v| ofi_at(spec, 1, v, &obs, cfg),
        search.lo,
        search.hi,
        &search.zoom,
    )?;
    Ok(SingleParticlePeaks {
        l: spec.l,
        qfi: qfi.peak,
        cdw: cdw.peak,
    })
}

/// QFI maximum of one filling together with the number of negative levels there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillingPeak {
    pub n_f: usize,
    pub qfi: Peak,
    pub negative_count: usize,
}

/// Half-filled maxima at the self-consistent filling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfFilledPeaks {
    pub l: usize,
    /// Filling that equals the negative-level count at its own QFI maximum.
    pub n_f: usize,
    pub qfi: Peak,
    /// `H₂` OFI at the QFI maximum.
    pub f_h2: f64,
    pub candidates: Vec<FillingPeak>,
    /// Fillings whose QFI maximum sits on the search boundary (no transition peak).
    pub skipped: Vec<usize>,
}

/// Both near-half fillings are scanned; the one that fills every negative level at its
/// own QFI maximum wins. Without such a filling, the filling closest to its count wins.
/// A filling without an interior maximum in the bracket is skipped.
pub fn half_filled_peaks(
    spec: &LatticeSpec,
    search: &PeakSearch,
    cfg: &FdConfig,
) -> Result<HalfFilledPeaks> {
    let mut fillings = spec.half_fillings().to_vec();
    fillings.dedup();
    let mut candidates = Vec::with_capacity(fillings.len());
    let mut skipped = Vec::new();
    let mut last_err = None;
    for n_f in fillings {
        let qfi = match zoom_peak(|v| qfi_at(spec, n_f, v, cfg), search.lo, search.hi, &search.zoom) {
            Ok(q) => q,
            Err(e @ Error::PeakOnBoundary(_)) => {
                skipped.push(n_f);
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let negative_count = spectrum(spec, qfi.peak.x)?.negative_count()?;
        candidates.push(FillingPeak {
            n_f,
            qfi: qfi.peak,
            negative_count,
        });
    }
    let Some(best) = candidates
        .iter()
        .min_by_key(|c| c.n_f.abs_diff(c.negative_count))
        .cloned()
    else {
        return Err(last_err.expect("every filling was skipped"));
    };
    let f_h2 = ofi_at(spec, best.n_f, best.qfi.x, &h2_observable(spec), cfg)?;
    Ok(HalfFilledPeaks {
        l: spec.l,
        n_f: best.n_f,
        qfi: best.qfi,
        f_h2,
        candidates,
        skipped,
    })
}

/// Time series of one quench with its observables keyed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSeries {
    pub l: usize,
    pub n_f: usize,
    pub v_f: f64,
    pub samples: Vec<QuenchSample>,
}

impl QuenchSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn qfi(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f_q).collect()
    }

    pub fn generator_qfi(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f_q_generator).collect()
    }

    pub fn ofi(&self, label: &str) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.f_o.get(label).copied()).collect()
    }
}

/// Runs a quench with the CDW and `H₂` observables attached.
pub fn quench_series(
    spec: &LatticeSpec,
    initial: InitialState,
    v_f: f64,
    times: Vec<f64>,
    cfg: &FdConfig,
) -> Result<QuenchSeries> {
    let protocol = QuenchProtocol {
        spec: *spec,
        initial,
        v_f,
        times,
        cfg: *cfg,
    };
    let n_f = protocol.initial_state()?.n_f();
    let observables = [cdw_observable(spec.l, n_f), h2_observable(spec)];
    let samples = run_quench(protocol, &observables)?;
    Ok(QuenchSeries {
        l: spec.l,
        n_f,
        v_f,
        samples,
    })
}

/// `value / (L t²)` per size, keyed by `L`, for a collapse test.
pub fn scaled_qfi_curves(series: &[QuenchSeries]) -> BTreeMap<usize, Vec<(f64, f64)>> {
    series
        .iter()
        .map(|s| {
            let curve = s
                .samples
                .iter()
                .map(|x| (x.t, x.f_q / (x.t * x.t)))
                .collect();
            (s.l, curve)
        })
        .collect()
}

/// Reusable exact-diagonalization sector for QFI scans of the interacting ring.
pub struct InteractingScan {
    template: SparseManyBodyHamiltonian,
    pub u: f64,
    pub lanczos: LanczosConfig,
}

impl InteractingScan {
    pub fn new(spec: &LatticeSpec, n_f: usize, u: f64, lanczos: LanczosConfig) -> Result<Self> {
        let basis = Arc::new(build_basis(spec.l, n_f)?);
        Ok(Self {
            template: build_hamiltonian_mb(spec, 0.0, u, basis)?,
            u,
            lanczos,
        })
    }

    pub fn qfi_at(&self, v: f64, cfg: &FdConfig) -> Result<f64> {
        let solve = |x: f64, check: bool| -> Result<_> {
            let h = self.template.with_parameters(x, self.u)?;
            let cfg = LanczosConfig {
                check_degeneracy: self.lanczos.check_degeneracy && check,
                ..self.lanczos
            };
            ground_state_mb_with(&h, &cfg)
        };
        let center = solve(v, true)?;
        Ok(fidelity_stencil(|dv| center.infidelity(&solve(v + dv, false)?), cfg)?.value)
    }

    pub fn peak(&self, search: &PeakSearch, cfg: &FdConfig) -> Result<Peak> {
        Ok(zoom_peak(|v| self.qfi_at(v, cfg), search.lo, search.hi, &search.zoom)?.peak)
    }
}

/// Checks that a sequence is monotone in the given direction (ties allowed).
pub fn is_monotone(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| {
        if increasing {
            w[1] >= w[0]
        } else {
            w[1] <= w[0]
        }
    })
}

/// Sizes must be odd Fibonacci numbers for scaling runs.
pub fn check_scaling_sizes(sizes: &[usize]) -> Result<()> {
    for &l in sizes {
        if l % 2 == 0 || crate::model::fibonacci_index(l as u64).is_none() {
            return Err(Error::InvalidLattice(format!(
                "L={l} is not an odd Fibonacci number"
            )));
        }
    }
    Ok(())
}
