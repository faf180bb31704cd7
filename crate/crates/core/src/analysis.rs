//! Peaks, power-law fits and collapse diagnostics for scans and time series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrology::FisherPoint;

/// `r²` below which the smallest size is dropped from an exponent fit.
pub const SMALLEST_SIZE_R2: f64 = 0.995;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub exponent_stderr: f64,
    pub r_squared: f64,
    /// `(x, y)` pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
    pub window: (f64, f64),
    /// Abscissae dropped after the first pass (see [`power_law_fit_excluding_smallest`]).
    #[serde(default)]
    pub excluded: Vec<f64>,
}

impl ScalingFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.amplitude * x.powf(self.exponent)
    }

    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.exponent - target).abs() <= tol
    }
}

/// Least squares of `log y` on `log x` over points with `x` inside `window` (inclusive).
pub fn power_law_fit(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let (lo, hi) = window;
    let points: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| (lo..=hi).contains(*x))
        .map(|(&x, &y)| (x, y))
        .collect();
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if let Some(&(x, value)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::NonPositiveData { x, value });
    }

    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sst: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ScalingFit {
        exponent: slope,
        amplitude: intercept.exp(),
        exponent_stderr: (ssr / (n - 2.0) / sxx).sqrt(),
        r_squared,
        points,
        window,
        excluded: Vec::new(),
    })
}

/// Fits all sizes, then refits without the smallest one if `r²` is below
/// [`SMALLEST_SIZE_R2`] and at least three points remain.
pub fn power_law_fit_excluding_smallest(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    let window = (f64::MIN_POSITIVE, f64::INFINITY);
    let full = power_law_fit(xs, ys, window)?;
    if full.r_squared >= SMALLEST_SIZE_R2 || full.points.len() < 4 {
        return Ok(full);
    }
    let smallest = full
        .points
        .iter()
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let (kx, ky): (Vec<f64>, Vec<f64>) = full
        .points
        .iter()
        .filter(|p| p.0 != smallest)
        .copied()
        .unzip();
    let mut refit = power_law_fit(&kx, &ky, window)?;
    refit.excluded.push(smallest);
    Ok(refit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: f64,
    pub value: f64,
}

/// Vertex of the parabola through three points (any spacing).
fn parabola_vertex(p: [(f64, f64); 3]) -> Peak {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if a >= 0.0 {
        return Peak { x: x1, value: y1 };
    }
    let b = d01 - a * (x0 + x1);
    let c = y0 - a * x0 * x0 - b * x0;
    let x = -b / (2.0 * a);
    Peak {
        x,
        value: c - b * b / (4.0 * a),
    }
}

/// Refined maximum of sampled data. The maximum sample must not sit on either end.
pub fn find_peak_xy(xs: &[f64], ys: &[f64]) -> Result<Peak> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
    }
    let (i, _) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if i == 0 || i == xs.len() - 1 {
        return Err(Error::PeakOnBoundary(xs[i]));
    }
    Ok(parabola_vertex([
        (xs[i - 1], ys[i - 1]),
        (xs[i], ys[i]),
        (xs[i + 1], ys[i + 1]),
    ]))
}

/// Which number of a [`FisherPoint`] to maximise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", content = "label", rename_all = "snake_case")]
pub enum FisherField {
    Qfi,
    Cfi(String),
    Ofi(String),
}

impl FisherField {
    pub fn value(&self, p: &FisherPoint) -> Option<f64> {
        match self {
            Self::Qfi => Some(p.f_q),
            Self::Cfi(label) => p.f_c.get(label).copied(),
            Self::Ofi(label) => p.f_o.get(label).copied(),
        }
    }
}

pub fn find_peak(points: &[FisherPoint], field: impl Fn(&FisherPoint) -> f64) -> Result<Peak> {
    let xs: Vec<f64> = points.iter().map(|p| p.v).collect();
    let ys: Vec<f64> = points.iter().map(field).collect();
    find_peak_xy(&xs, &ys)
}

/// Grid search that repeatedly narrows onto the bracket around the best sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomConfig {
    pub points: usize,
    pub levels: usize,
}

impl Default for ZoomConfig {
    fn default() -> Self {
        Self {
            points: 21,
            levels: 3,
        }
    }
}

/// Maximum of `f` on `[lo, hi]`, with every sample it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomPeak {
    pub peak: Peak,
    pub samples: Vec<(f64, f64)>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

pub fn zoom_peak<F>(f: F, lo: f64, hi: f64, cfg: &ZoomConfig) -> Result<ZoomPeak>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    if cfg.points < 5 {
        return Err(Error::InvalidArgument("zoom needs at least 5 points per level".into()));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let (mut a, mut b) = (lo, hi);
    let mut peak = None;
    for level in 0..=cfg.levels {
        let xs = linspace(a, b, cfg.points);
        let ys = crate::par::try_map(&xs, |&x| f(x))?;
        samples.extend(xs.iter().copied().zip(ys.iter().copied()));
        let found = find_peak_xy(&xs, &ys);
        let p = match (found, level) {
            (Ok(p), _) => p,
            // Inner levels bracket the previous best sample, so an edge hit only
            // means the bracket was tight; keep the best sample.
            (Err(Error::PeakOnBoundary(_)), l) if l > 0 => {
                let (i, _) = ys
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.total_cmp(y.1))
                    .expect("non-empty");
                Peak {
                    x: xs[i],
                    value: ys[i],
                }
            }
            (Err(e), _) => return Err(e),
        };
        let step = (b - a) / (cfg.points - 1) as f64;
        a = (p.x - step).max(lo);
        b = (p.x + step).min(hi);
        peak = Some(p);
    }
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(ZoomPeak {
        peak: peak.expect("at least one level"),
        samples,
    })
}

/// Largest relative spread `(max − min)/mean` of `value / L^α` across sizes, over
/// every common abscissa.
pub fn collapse_check(curves: &BTreeMap<usize, Vec<(f64, f64)>>, alpha: f64) -> Result<f64> {
    collapse_check_window(curves, alpha, (f64::NEG_INFINITY, f64::INFINITY))
}

/// [`collapse_check`] restricted to abscissae inside `window` (inclusive).
pub fn collapse_check_window(
    curves: &BTreeMap<usize, Vec<(f64, f64)>>,
    alpha: f64,
    window: (f64, f64),
) -> Result<f64> {
    let mut iter = curves.values();
    let first = iter.next().ok_or(Error::TooFewPoints { needed: 1, got: 0 })?;
    for c in iter {
        if c.len() != first.len() || c.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(Error::MismatchedGrids);
        }
    }
    let mut worst = 0.0f64;
    for (k, &(t, _)) in first.iter().enumerate() {
        if !(window.0..=window.1).contains(&t) {
            continue;
        }
        let scaled: Vec<f64> = curves
            .iter()
            .map(|(&l, c)| c[k].1 / (l as f64).powf(alpha))
            .collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
        if max == min {
            continue;
        }
        worst = worst.max((max - min) / mean.abs());
    }
    Ok(worst)
}
