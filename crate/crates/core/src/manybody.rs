//! Exact diagonalization of the interacting ring at fixed particle number.
//!
//! Basis states are bit patterns (bit `k` is site `k + 1`) with exactly `n_f` set bits,
//! ordered by integer value. The Hamiltonian adds `U Σ n_i n_{i+1}` (wrap bond
//! included) to the quasi-periodic tight-binding ring. The ground state comes from a
//! restarted Lanczos iteration with full reorthogonalization.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrology::{ofi, qfi_from_fidelity, FdConfig, FisherPoint, LinearObservable, PureState};
use crate::model::LatticeSpec;

/// Largest ring handled by the bit-pattern basis.
pub const MAX_SITES: usize = 24;
/// Default cap on the basis dimension (covers `L = 21` at half filling).
pub const DEFAULT_DIM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationBasis {
    l: usize,
    n_f: usize,
    states: Vec<u32>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Next larger integer with the same number of set bits.
fn next_same_popcount(x: u32) -> u32 {
    let c = x & x.wrapping_neg();
    let r = x + c;
    (((r ^ x) >> 2) / c) | r
}

pub fn build_basis(l: usize, n_f: usize) -> Result<OccupationBasis> {
    build_basis_with_cap(l, n_f, DEFAULT_DIM_CAP)
}

pub fn build_basis_with_cap(l: usize, n_f: usize, cap: usize) -> Result<OccupationBasis> {
    if l == 0 || l > MAX_SITES {
        return Err(Error::InvalidArgument(format!(
            "ED needs 1 <= L <= {MAX_SITES}, got {l}"
        )));
    }
    if n_f > l {
        return Err(Error::InvalidFilling { l, n_f });
    }
    let dim = binomial(l, n_f);
    if dim > cap as u128 {
        return Err(Error::BasisTooLarge {
            dim: dim.min(usize::MAX as u128) as usize,
            cap,
        });
    }
    let dim = dim as usize;
    let mut states = Vec::with_capacity(dim);
    if n_f == 0 {
        states.push(0);
    } else {
        let mut s = (1u32 << n_f) - 1;
        for _ in 0..dim {
            states.push(s);
            if states.len() < dim {
                s = next_same_popcount(s);
            }
        }
    }
    Ok(OccupationBasis { l, n_f, states })
}

impl OccupationBasis {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn index_of(&self, pattern: u32) -> Option<usize> {
        self.states.binary_search(&pattern).ok()
    }

    /// Occupation of site `k` (0-based) in basis state `s`.
    pub fn occupied(&self, s: usize, k: usize) -> bool {
        self.states[s] >> k & 1 == 1
    }

    /// `Σ_k o_k n_k` evaluated on every basis state.
    pub fn diagonal_values(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.l {
            return Err(Error::DimensionMismatch {
                expected: self.l,
                got: coefficients.len(),
            });
        }
        Ok(self
            .states
            .iter()
            .map(|&s| {
                coefficients
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| s >> k & 1 == 1)
                    .map(|(_, o)| o)
                    .sum()
            })
            .collect())
    }

    /// `Σ_k n_k n_{k+1}` on the ring for every basis state.
    fn bond_counts(&self) -> Vec<f64> {
        let l = self.l;
        let ring = |s: u32| -> u32 {
            let rotated = if l == 1 { s } else { (s >> 1) | ((s & 1) << (l - 1)) };
            (s & rotated).count_ones()
        };
        self.states.iter().map(|&s| ring(s) as f64).collect()
    }
}

/// Off-diagonal hopping part in compressed-row form. It depends only on the basis.
#[derive(Debug, Clone)]
struct Hopping {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Fermionic sign of moving a particle between sites `a` and `b` of pattern `s`.
fn hop_sign(s: u32, a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let between = if hi - lo <= 1 {
        0
    } else {
        (s >> (lo + 1)) & ((1u32 << (hi - lo - 1)) - 1)
    };
    if between.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn bonds(l: usize) -> Vec<(usize, usize)> {
    match l {
        1 => vec![],
        2 => vec![(0, 1)],
        _ => (0..l).map(|k| (k, (k + 1) % l)).collect(),
    }
}

impl Hopping {
    fn new(basis: &OccupationBasis) -> Self {
        let bonds = bonds(basis.l);
        let mut row_ptr = Vec::with_capacity(basis.dim() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(2 * bonds.len());
        for &s in &basis.states {
            row.clear();
            for &(a, b) in &bonds {
                let (na, nb) = (s >> a & 1, s >> b & 1);
                if na == nb {
                    continue;
                }
                let target = s ^ (1 << a) ^ (1 << b);
                let j = basis.index_of(target).expect("hop stays in the fixed-n_f sector");
                row.push((j as u32, -hop_sign(s, a, b)));
            }
            row.sort_by_key(|&(j, _)| j);
            for &(j, x) in &row {
                cols.push(j);
                vals.push(x);
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.vals[range])
            .map(|(&j, &h)| h * x[j as usize])
            .sum()
    }
}

/// `H = Σ hopping + V Σ cos(2π i ω) n_i + U Σ n_i n_{i+1}` on one fixed-`n_f` sector.
#[derive(Debug, Clone)]
pub struct SparseManyBodyHamiltonian {
    pub spec: LatticeSpec,
    pub v: f64,
    pub u: f64,
    basis: Arc<OccupationBasis>,
    hopping: Arc<Hopping>,
    potential: Arc<Vec<f64>>,
    bonds: Arc<Vec<f64>>,
    diagonal: Vec<f64>,
}

pub fn build_hamiltonian_mb(
    spec: &LatticeSpec,
    v: f64,
    u: f64,
    basis: Arc<OccupationBasis>,
) -> Result<SparseManyBodyHamiltonian> {
    spec.validate()?;
    if basis.l != spec.l {
        return Err(Error::DimensionMismatch {
            expected: spec.l,
            got: basis.l,
        });
    }
    let hopping = Arc::new(Hopping::new(&basis));
    let potential = Arc::new(basis.diagonal_values(&spec.potential_profile())?);
    let bonds = Arc::new(basis.bond_counts());
    let mut h = SparseManyBodyHamiltonian {
        spec: *spec,
        v: 0.0,
        u: 0.0,
        basis,
        hopping,
        potential,
        bonds,
        diagonal: Vec::new(),
    };
    h.set_parameters(v, u)?;
    Ok(h)
}

impl SparseManyBodyHamiltonian {
    /// Same sector and hopping structure at new `(V, U)`.
    pub fn with_parameters(&self, v: f64, u: f64) -> Result<Self> {
        let mut h = self.clone();
        h.set_parameters(v, u)?;
        Ok(h)
    }

    fn set_parameters(&mut self, v: f64, u: f64) -> Result<()> {
        if !(v.is_finite() && u.is_finite()) {
            return Err(Error::InvalidArgument(format!("V={v}, U={u} must be finite")));
        }
        self.v = v;
        self.u = u;
        self.diagonal = self
            .potential
            .iter()
            .zip(self.bonds.iter())
            .map(|(p, b)| v * p + u * b)
            .collect();
        Ok(())
    }

    pub fn basis(&self) -> &Arc<OccupationBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn nnz_offdiagonal(&self) -> usize {
        self.hopping.vals.len()
    }

    /// Off-diagonal entries as `(row, col, value)`.
    pub fn offdiagonal_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |i| {
            let range = self.hopping.row_ptr[i]..self.hopping.row_ptr[i + 1];
            range.map(move |k| (i, self.hopping.cols[k] as usize, self.hopping.vals[k]))
        })
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let row = |(i, yi): (usize, &mut f64)| {
            *yi = self.diagonal[i] * x[i] + self.hopping.row_dot(i, x);
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if x.len() >= 4096 {
                y.par_iter_mut().enumerate().for_each(row);
                return;
            }
        }
        y.iter_mut().enumerate().for_each(row);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diagonal));
        for (i, j, x) in self.offdiagonal_entries() {
            m[(i, j)] += x;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosConfig {
    /// Krylov vectors kept per cycle (further capped by `memory_budget`).
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Target residual `‖Hv − Ev‖`.
    pub tol: f64,
    pub seed: u64,
    /// Run a second, deflated solve to detect a degenerate ground level.
    pub check_degeneracy: bool,
    pub degeneracy_tol: f64,
    /// Bytes available for Krylov vectors.
    pub memory_budget: usize,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            krylov_dim: 80,
            max_restarts: 200,
            tol: 1e-11,
            seed: 0x5eed,
            check_degeneracy: true,
            degeneracy_tol: 1e-8,
            memory_budget: 256 << 20,
        }
    }
}

/// Normalized ground state on an [`OccupationBasis`].
#[derive(Debug, Clone)]
pub struct ManyBodyState {
    pub basis: Arc<OccupationBasis>,
    pub amplitudes: DVector<f64>,
    pub energy: f64,
    pub residual: f64,
}

impl ManyBodyState {
    pub fn norm_error(&self) -> f64 {
        (self.amplitudes.norm() - 1.0).abs()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.amplitudes.iter().map(|a| a * a)
    }

    pub fn occupations(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.basis.l];
        for (s, w) in self.weights().enumerate() {
            for (k, nk) in n.iter_mut().enumerate() {
                if self.basis.occupied(s, k) {
                    *nk += w;
                }
            }
        }
        n
    }

    pub fn diagonal_expectation(&self, coefficients: &[f64]) -> Result<f64> {
        let values = self.basis.diagonal_values(coefficients)?;
        Ok(self.weights().zip(&values).map(|(w, o)| w * o).sum())
    }

    pub fn diagonal_variance(&self, coefficients: &[f64]) -> Result<f64> {
        let values = self.basis.diagonal_values(coefficients)?;
        let mean: f64 = self.weights().zip(&values).map(|(w, o)| w * o).sum();
        Ok(self
            .weights()
            .zip(&values)
            .map(|(w, o)| w * (o - mean) * (o - mean))
            .sum())
    }

    pub fn overlap(&self, other: &Self) -> Result<f64> {
        if self.basis.dim() != other.basis.dim() || self.basis.l != other.basis.l {
            return Err(Error::DimensionMismatch {
                expected: self.basis.dim(),
                got: other.basis.dim(),
            });
        }
        Ok(self.amplitudes.dot(&other.amplitudes))
    }
}

impl PureState for ManyBodyState {
    fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.overlap(other)?.abs())
    }

    /// `½ ‖a ∓ b‖²` with the sign of the overlap, equal to `1 − |a·b|` for unit vectors.
    fn infidelity(&self, other: &Self) -> Result<f64> {
        let sign = self.overlap(other)?.signum();
        Ok(0.5 * (&self.amplitudes - &other.amplitudes * sign).norm_squared())
    }
}

fn orthogonalize(w: &mut DVector<f64>, against: &[DVector<f64>]) {
    // Two passes keep the Krylov basis orthonormal to working precision.
    for _ in 0..2 {
        for b in against {
            let c = b.dot(w);
            w.axpy(-c, b, 1.0);
        }
    }
}

/// Lowest eigenpair of `h` restricted to the complement of `deflate`.
fn lanczos_lowest(
    h: &SparseManyBodyHamiltonian,
    deflate: &[DVector<f64>],
    cfg: &LanczosConfig,
) -> Result<Option<(f64, DVector<f64>, f64)>> {
    let dim = h.dim();
    let free_dim = dim.saturating_sub(deflate.len());
    if free_dim == 0 {
        return Ok(None);
    }
    let by_memory = (cfg.memory_budget / (8 * dim)).max(3);
    let m = cfg.krylov_dim.min(by_memory).min(free_dim).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    orthogonalize(&mut v, deflate);
    v.unscale_mut(v.norm());

    let mut hv = DVector::zeros(dim);
    let mut best = (f64::INFINITY, v.clone(), f64::INFINITY);
    for _ in 0..=cfg.max_restarts {
        let mut basis: Vec<DVector<f64>> = vec![v.clone()];
        let mut alphas = Vec::with_capacity(m);
        let mut betas: Vec<f64> = Vec::with_capacity(m);
        loop {
            let j = basis.len() - 1;
            h.apply(basis[j].as_slice(), hv.as_mut_slice());
            let mut w = hv.clone();
            alphas.push(basis[j].dot(&w));
            orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, deflate);
            let beta = w.norm();
            if basis.len() == m || beta < 1e-13 * alphas[j].abs().max(1.0) {
                break;
            }
            betas.push(beta);
            basis.push(w.unscale(beta));
        }
        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |a, b| {
            if a == b {
                alphas[a]
            } else if a.abs_diff(b) == 1 {
                betas[a.min(b)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty tridiagonal");
        let y = eig.eigenvectors.column(idx);
        let mut x = DVector::zeros(dim);
        for (b, &c) in basis.iter().zip(y.iter()) {
            x.axpy(c, b, 1.0);
        }
        orthogonalize(&mut x, deflate);
        x.unscale_mut(x.norm());
        h.apply(x.as_slice(), hv.as_mut_slice());
        let energy = x.dot(&hv);
        let residual = (&hv - &x * energy).norm();
        if residual < best.2 {
            best = (energy, x.clone(), residual);
        }
        if residual < cfg.tol {
            break;
        }
        v = x;
    }
    if best.2 >= cfg.tol {
        return Err(Error::EigenNonConvergence(format!(
            "Lanczos residual {:e} after {} restarts",
            best.2, cfg.max_restarts
        )));
    }
    Ok(Some(best))
}

/// Fixes the global sign so the largest-magnitude amplitude is positive.
fn fix_sign(x: &mut DVector<f64>) {
    let pivot = x.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
    if pivot < 0.0 {
        x.neg_mut();
    }
}

pub fn ground_state_mb(h: &SparseManyBodyHamiltonian) -> Result<ManyBodyState> {
    ground_state_mb_with(h, &LanczosConfig::default())
}

pub fn ground_state_mb_with(
    h: &SparseManyBodyHamiltonian,
    cfg: &LanczosConfig,
) -> Result<ManyBodyState> {
    let (energy, mut x, residual) = lanczos_lowest(h, &[], cfg)?.expect("dimension >= 1");
    if cfg.check_degeneracy && h.dim() > 1 {
        // A fresh start vector: the original one has no weight left in a degenerate
        // ground space once the converged vector is projected out.
        let deflate = [x.clone()];
        let second = LanczosConfig {
            seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
            ..*cfg
        };
        if let Some((e1, _, _)) = lanczos_lowest(h, &deflate, &second)? {
            if e1 - energy < cfg.degeneracy_tol {
                return Err(Error::DegenerateFermiLevel {
                    n_f: h.basis.n_f,
                    gap: e1 - energy,
                });
            }
        }
    }
    fix_sign(&mut x);
    Ok(ManyBodyState {
        basis: Arc::clone(&h.basis),
        amplitudes: x,
        energy,
        residual,
    })
}

/// Ground states of one sector memoised by `V`.
struct MbGroundStates<'a> {
    template: &'a SparseManyBodyHamiltonian,
    u: f64,
    center: f64,
    cfg: LanczosConfig,
    cache: RefCell<Vec<(f64, Rc<ManyBodyState>)>>,
}

impl MbGroundStates<'_> {
    fn at(&self, v: f64) -> Result<Rc<ManyBodyState>> {
        if let Some((_, s)) = self.cache.borrow().iter().find(|(x, _)| *x == v) {
            return Ok(Rc::clone(s));
        }
        let h = self.template.with_parameters(v, self.u)?;
        let cfg = LanczosConfig {
            check_degeneracy: self.cfg.check_degeneracy && v == self.center,
            ..self.cfg
        };
        let state = Rc::new(ground_state_mb_with(&h, &cfg)?);
        self.cache.borrow_mut().push((v, Rc::clone(&state)));
        Ok(state)
    }
}

/// QFI and OFI of the interacting ground state at one amplitude.
pub fn mb_fisher_point(
    spec: &LatticeSpec,
    v: f64,
    u: f64,
    n_f: usize,
    observables: &[LinearObservable],
    cfg: &FdConfig,
) -> Result<FisherPoint> {
    let basis = Arc::new(build_basis(spec.l, n_f)?);
    let h = build_hamiltonian_mb(spec, v, u, basis)?;
    mb_fisher_point_with(&h, v, u, observables, cfg, &LanczosConfig::default())
}

/// [`mb_fisher_point`] reusing the sector structure of `template`.
pub fn mb_fisher_point_with(
    template: &SparseManyBodyHamiltonian,
    v: f64,
    u: f64,
    observables: &[LinearObservable],
    cfg: &FdConfig,
    lanczos: &LanczosConfig,
) -> Result<FisherPoint> {
    let l = template.spec.l;
    for obs in observables {
        if obs.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: obs.len(),
            });
        }
    }
    let states = MbGroundStates {
        template,
        u,
        center: v,
        cfg: *lanczos,
        cache: RefCell::new(Vec::new()),
    };
    let q = qfi_from_fidelity(|x| states.at(x), v, cfg)?;
    let local = FdConfig {
        delta_v: q.delta_v,
        adaptive: false,
        ..*cfg
    };
    let center = states.at(v)?;
    let mut f_o = BTreeMap::new();
    let mut expectations = BTreeMap::new();
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
        f_c: BTreeMap::new(),
        f_o,
        expectations,
        l,
        n_f: template.basis.n_f,
        delta_v_used: q.delta_v,
        stencil_error: q.stencil_error,
    })
}

/// [`mb_fisher_point`] over a sorted grid, sharing one sector build.
pub fn mb_sweep(
    spec: &LatticeSpec,
    u: f64,
    n_f: usize,
    v_grid: &[f64],
    observables: &[LinearObservable],
    cfg: &FdConfig,
    lanczos: &LanczosConfig,
) -> Result<Vec<FisherPoint>> {
    if v_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("V grid must be sorted".into()));
    }
    let basis = Arc::new(build_basis(spec.l, n_f)?);
    let template = build_hamiltonian_mb(spec, 0.0, u, basis)?;
    crate::par::try_map(v_grid, |&v| {
        mb_fisher_point_with(&template, v, u, observables, cfg, lanczos)
    })
}
