//! Brute-force reference implementations used only by the test suites.
//!
//! Everything here works on explicit many-body vectors in the fixed-particle Fock
//! sector and shares no code with the library beyond the data types.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All `L`-bit patterns with `n` set bits, ascending.
pub fn sector(l: usize, n: usize) -> Vec<u32> {
    (0u32..1 << l).filter(|s| s.count_ones() as usize == n).collect()
}

/// Sign `(-1)^{#occupied sites below k}`.
fn parity_below(s: u32, k: usize) -> f64 {
    if (s & ((1u32 << k) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `c†_i c_j |s⟩` as `(sign, new pattern)`, if nonzero.
pub fn hop(s: u32, i: usize, j: usize) -> Option<(f64, u32)> {
    if s >> j & 1 == 0 {
        return None;
    }
    let sign_j = parity_below(s, j);
    let s1 = s & !(1 << j);
    if s1 >> i & 1 == 1 {
        return None;
    }
    let sign_i = parity_below(s1, i);
    Some((sign_i * sign_j, s1 | (1 << i)))
}

fn det(m: DMatrix<Complex64>) -> Complex64 {
    // Plain Laplace expansion is too slow beyond tiny sizes; use Gaussian elimination
    // with partial pivoting written out here.
    let n = m.nrows();
    let mut a = m;
    let mut d = Complex64::new(1.0, 0.0);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[(x, c)].norm().total_cmp(&a[(y, c)].norm()))
            .unwrap();
        if a[(p, c)].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if p != c {
            a.swap_rows(p, c);
            d = -d;
        }
        d *= a[(c, c)];
        for r in c + 1..n {
            let f = a[(r, c)] / a[(c, c)];
            for k in c..n {
                let x = a[(c, k)];
                a[(r, k)] -= f * x;
            }
        }
    }
    d
}

/// Fock amplitudes of `Π_k (Σ_i Φ_ik c†_i) |0⟩` with creation operators ordered by site.
pub fn slater_vector(phi: &DMatrix<Complex64>) -> DVector<Complex64> {
    let (l, n) = phi.shape();
    let states = sector(l, n);
    DVector::from_iterator(
        states.len(),
        states.iter().map(|&s| {
            let rows: Vec<usize> = (0..l).filter(|&k| s >> k & 1 == 1).collect();
            det(DMatrix::from_fn(n, n, |a, b| phi[(rows[a], b)]))
        }),
    )
}

pub fn index(states: &[u32], s: u32) -> usize {
    states.binary_search(&s).unwrap()
}

/// `⟨c†_i c_j⟩` from an explicit vector.
pub fn correlation(l: usize, n: usize, psi: &DVector<Complex64>) -> DMatrix<Complex64> {
    let states = sector(l, n);
    DMatrix::from_fn(l, l, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, &s) in states.iter().enumerate() {
            if let Some((sign, t)) = hop(s, i, j) {
                acc += psi[index(&states, t)].conj() * psi[a] * sign;
            }
        }
        acc
    })
}

/// Mean and variance of `Σ o_i n_i`.
pub fn diagonal_moments(l: usize, n: usize, psi: &DVector<Complex64>, o: &[f64]) -> (f64, f64) {
    let states = sector(l, n);
    let values: Vec<f64> = states
        .iter()
        .map(|&s| (0..l).filter(|&k| s >> k & 1 == 1).map(|k| o[k]).sum())
        .collect();
    let w: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
    let mean: f64 = w.iter().zip(&values).map(|(w, v)| w * v).sum();
    let second: f64 = w.iter().zip(&values).map(|(w, v)| w * v * v).sum();
    (mean, second - mean * mean)
}

/// `Σ_ij h_ij c†_i c_j + U Σ_i n_i n_{i+1 mod L}` on the `n`-particle sector.
pub fn many_body_matrix(h1: &DMatrix<f64>, n: usize, u: f64) -> DMatrix<f64> {
    let l = h1.nrows();
    let states = sector(l, n);
    let mut m = DMatrix::zeros(states.len(), states.len());
    for (a, &s) in states.iter().enumerate() {
        for i in 0..l {
            for j in 0..l {
                if h1[(i, j)] == 0.0 {
                    continue;
                }
                if let Some((sign, t)) = hop(s, i, j) {
                    m[(index(&states, t), a)] += h1[(i, j)] * sign;
                }
            }
            if s >> i & 1 == 1 && s >> ((i + 1) % l) & 1 == 1 {
                m[(a, a)] += u;
            }
        }
    }
    m
}

/// Cyclic Jacobi eigensolver; eigenvalues ascending, eigenvectors in columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() < 1e-14 * a.norm().max(1.0) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (values, vectors)
}

/// `e^{−iHt} ψ` through the Jacobi eigenbasis.
pub fn evolve(h: &DMatrix<f64>, psi: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
    let (e, q) = jacobi_eigen(h);
    let qc = q.map(|x| Complex64::new(x, 0.0));
    let mut c = qc.transpose() * psi;
    for (k, ek) in e.iter().enumerate() {
        c[k] *= Complex64::from_polar(1.0, -ek * t);
    }
    qc * c
}

/// Random `L × n` matrix with orthonormal complex columns.
pub fn random_orbitals(l: usize, n: usize, seed: u64) -> DMatrix<Complex64> {
    let mut r = rng(seed);
    let m = DMatrix::from_fn(l, n, |_, _| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    });
    // Modified Gram-Schmidt.
    let mut q = m.clone();
    for k in 0..n {
        for j in 0..k {
            let proj = q.column(j).dotc(&q.column(k));
            let col_j = q.column(j).into_owned();
            let mut col_k = q.column_mut(k);
            col_k.axpy(-proj, &col_j, Complex64::new(1.0, 0.0));
        }
        let norm = q.column(k).norm();
        q.column_mut(k).unscale_mut(norm);
    }
    q
}

pub fn random_real_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}
