//! Quasi-periodic tight-binding rings.
//!
//! Sites are numbered `i = 1..=L` and the onsite term is `V cos(2π i ω + φ)` with a
//! rational frequency `ω = p/q`. Hopping is fixed to `-1` on every nearest-neighbour
//! bond of the ring, including the `(L, 1)` wrap.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest index whose Fibonacci number fits in a `u64`.
pub const MAX_FIBONACCI_INDEX: usize = 93;

/// Returns `(F_{m-1}, F_m)` with the seed `F_1 = F_2 = 1`.
pub fn fibonacci_approximant(m: usize) -> Result<(u64, u64)> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "fibonacci index must be >= 2, got {m}"
        )));
    }
    let (mut prev, mut cur) = (1u64, 1u64);
    for _ in 2..m {
        let next = prev
            .checked_add(cur)
            .ok_or(Error::FibonacciOverflow(m))?;
        prev = cur;
        cur = next;
    }
    Ok((prev, cur))
}

/// Index `m >= 2` with `F_m == n`, if `n` is a Fibonacci number.
pub fn fibonacci_index(n: u64) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let (mut prev, mut cur, mut m) = (1u64, 1u64, 2usize);
    while cur < n {
        let next = prev.checked_add(cur)?;
        prev = cur;
        cur = next;
        m += 1;
    }
    (cur == n).then_some(m)
}

/// The odd Fibonacci sizes used for scaling ladders.
pub const ODD_FIBONACCI_SIZES: [usize; 7] = [21, 55, 89, 233, 377, 987, 1597];

/// How a Fibonacci lattice size `L = F_m` picks its rational frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaConvention {
    /// `ω = F_m / F_{m+1}`: the size is the numerator of the approximant.
    #[default]
    SizeOverNext,
    /// `ω = F_{m-1} / F_m`: the potential is exactly commensurate with the ring.
    PreviousOverSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub l: usize,
    pub omega_num: u64,
    pub omega_den: u64,
    #[serde(default)]
    pub phase_offset: f64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl LatticeSpec {
    pub fn new(l: usize, omega_num: u64, omega_den: u64) -> Result<Self> {
        let spec = Self {
            l,
            omega_num,
            omega_den,
            phase_offset: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Fibonacci-sized ring with the default frequency convention.
    pub fn fibonacci(l: usize) -> Result<Self> {
        Self::fibonacci_with(l, OmegaConvention::default())
    }

    pub fn fibonacci_with(l: usize, convention: OmegaConvention) -> Result<Self> {
        let m = fibonacci_index(l as u64)
            .ok_or_else(|| Error::InvalidLattice(format!("L={l} is not a Fibonacci number")))?;
        let (num, den) = match convention {
            OmegaConvention::SizeOverNext => {
                let (cur, next) = fibonacci_approximant(m + 1)?;
                (cur, next)
            }
            OmegaConvention::PreviousOverSize => fibonacci_approximant(m)?,
        };
        Self::new(l, num, den)
    }

    pub fn with_phase_offset(mut self, phase_offset: f64) -> Self {
        self.phase_offset = phase_offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 3 {
            return Err(Error::InvalidLattice(format!(
                "periodic ring needs L >= 3, got {}",
                self.l
            )));
        }
        if self.omega_den == 0 || self.omega_num == 0 || self.omega_num >= self.omega_den {
            return Err(Error::InvalidLattice(format!(
                "need 0 < omega_num < omega_den, got {}/{}",
                self.omega_num, self.omega_den
            )));
        }
        if gcd(self.omega_num, self.omega_den) != 1 {
            return Err(Error::InvalidLattice(format!(
                "omega {}/{} is not in lowest terms",
                self.omega_num, self.omega_den
            )));
        }
        if !self.phase_offset.is_finite() {
            return Err(Error::InvalidLattice("phase offset is not finite".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        self.omega_num as f64 / self.omega_den as f64
    }

    /// `cos(2π i ω + φ)` for `i = 1..=L`. The product `i ω` is reduced modulo one in
    /// integer arithmetic, so integer arguments give exact cosines.
    pub fn potential_profile(&self) -> Vec<f64> {
        let den = self.omega_den as u128;
        (1..=self.l)
            .map(|i| {
                let frac = (i as u128 * self.omega_num as u128) % den;
                (2.0 * PI * frac as f64 / self.omega_den as f64 + self.phase_offset).cos()
            })
            .collect()
    }

    /// `(-1)^i` for `i = 1..=L`.
    pub fn site_parity(&self) -> Vec<f64> {
        (1..=self.l)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    /// Both near-half fillings `(L-1)/2` and `(L+1)/2` (equal for even `L`).
    pub fn half_fillings(&self) -> [usize; 2] {
        [self.l / 2, self.l.div_ceil(2)]
    }
}

/// `H = -Σ (c†_i c_{i+1} + h.c.) + V Σ cos(2π i ω) n_i` on a periodic ring.
#[derive(Debug, Clone)]
pub struct SingleParticleHamiltonian {
    pub spec: LatticeSpec,
    pub v: f64,
    pub matrix: DMatrix<f64>,
}

impl SingleParticleHamiltonian {
    pub fn dim(&self) -> usize {
        self.spec.l
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().sum()
    }
}

pub fn build_hamiltonian(spec: &LatticeSpec, v: f64) -> Result<SingleParticleHamiltonian> {
    spec.validate()?;
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("V must be finite, got {v}")));
    }
    let l = spec.l;
    let mut matrix = DMatrix::zeros(l, l);
    for (i, c) in spec.potential_profile().into_iter().enumerate() {
        matrix[(i, i)] = v * c;
        let j = (i + 1) % l;
        matrix[(i, j)] = -1.0;
        matrix[(j, i)] = -1.0;
    }
    Ok(SingleParticleHamiltonian {
        spec: *spec,
        v,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_seed_and_known_pair() {
        assert_eq!(fibonacci_approximant(2).unwrap(), (1, 1));
        let m = fibonacci_index(89).unwrap();
        assert_eq!(fibonacci_approximant(m).unwrap(), (55, 89));
        assert_eq!(fibonacci_index(90), None);
    }

    #[test]
    fn fibonacci_ratio_converges_to_golden_section() {
        let m = fibonacci_index(1597).unwrap();
        let (a, b) = fibonacci_approximant(m).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((a as f64 / b as f64 - golden).abs() < 1e-6);
    }

    #[test]
    fn fibonacci_overflow_is_reported() {
        assert!(fibonacci_approximant(MAX_FIBONACCI_INDEX).is_ok());
        assert_eq!(
            fibonacci_approximant(MAX_FIBONACCI_INDEX + 1),
            Err(Error::FibonacciOverflow(MAX_FIBONACCI_INDEX + 1))
        );
    }

    #[test]
    fn conventions() {
        let a = LatticeSpec::fibonacci(89).unwrap();
        assert_eq!((a.omega_num, a.omega_den), (89, 144));
        let b = LatticeSpec::fibonacci_with(89, OmegaConvention::PreviousOverSize).unwrap();
        assert_eq!((b.omega_num, b.omega_den), (55, 89));
        assert!(LatticeSpec::fibonacci(90).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(LatticeSpec::new(10, 4, 6).is_err());
        assert!(LatticeSpec::new(10, 7, 5).is_err());
        assert!(LatticeSpec::new(2, 1, 2).is_err());
    }

    #[test]
    fn matrix_structure() {
        let spec = LatticeSpec::new(89, 55, 89).unwrap();
        let h = build_hamiltonian(&spec, 2.0).unwrap();
        assert_eq!(h.matrix[(88, 88)], 2.0);
        assert_eq!(h.matrix, h.matrix.transpose());
        for i in 0..89 {
            for j in 0..89 {
                let d = (i as isize - j as isize).unsigned_abs();
                let x = h.matrix[(i, j)];
                if d == 1 || d == 88 {
                    assert_eq!(x, -1.0);
                } else if d != 0 {
                    assert_eq!(x, 0.0);
                }
            }
        }
        let flat = build_hamiltonian(&spec, 0.0).unwrap();
        assert!(flat.matrix.diagonal().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn commensurate_potential_is_periodic() {
        let spec = LatticeSpec::fibonacci_with(55, OmegaConvention::PreviousOverSize).unwrap();
        let p = spec.potential_profile();
        let omega = spec.omega();
        for (k, &x) in p.iter().enumerate() {
            let i = (k + 1 + spec.l) as f64;
            assert!((x - (2.0 * PI * i * omega).cos()).abs() < 1e-9);
        }
    }
}
