//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns JSON (or a plain `Float64Array`) so the page needs no glue
//! beyond what `wasm-bindgen --target web` generates. Sizes are capped to keep the
//! page responsive on a single thread.

use locsense::dynamics::{quench_time_grid, InitialState};
use locsense::experiments::quench_series;
use locsense::metrology::{adiabatic_point, cdw_observable, CDW_LABEL, H2_LABEL};
use locsense::model::LatticeSpec;
use locsense::{correlation_matrix, ground_state, Error, FdConfig, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest ring the page may request.
pub const MAX_DEMO_SIZE: usize = 377;
const MAX_DEMO_POINTS: usize = 400;

fn demo_spec(l: usize) -> Result<LatticeSpec> {
    if l > MAX_DEMO_SIZE {
        return Err(Error::InvalidArgument(format!(
            "demo rings are limited to L <= {MAX_DEMO_SIZE}"
        )));
    }
    LatticeSpec::fibonacci(l)
}

fn check_points(points: usize) -> Result<()> {
    if !(2..=MAX_DEMO_POINTS).contains(&points) {
        return Err(Error::InvalidArgument(format!(
            "points must lie in 2..={MAX_DEMO_POINTS}"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Scan {
    pub l: usize,
    pub n_f: usize,
    pub v: Vec<f64>,
    pub f_q: Vec<f64>,
    pub f_cdw: Vec<f64>,
    pub o_cdw: Vec<f64>,
}

pub fn scan(l: usize, n_f: usize, v_start: f64, v_stop: f64, points: usize) -> Result<Scan> {
    check_points(points)?;
    if !(v_start < v_stop) {
        return Err(Error::InvalidArgument("need v_start < v_stop".into()));
    }
    let spec = demo_spec(l)?;
    let obs = [cdw_observable(l, n_f)];
    let cfg = FdConfig::default();
    let mut out = Scan {
        l,
        n_f,
        v: Vec::with_capacity(points),
        f_q: Vec::with_capacity(points),
        f_cdw: Vec::with_capacity(points),
        o_cdw: Vec::with_capacity(points),
    };
    for k in 0..points {
        let v = v_start + (v_stop - v_start) * k as f64 / (points - 1) as f64;
        let p = adiabatic_point(&spec, n_f, v, &obs, &[], &cfg)?;
        out.v.push(v);
        out.f_q.push(p.f_q);
        out.f_cdw.push(p.f_o[CDW_LABEL]);
        out.o_cdw.push(p.expectations[CDW_LABEL]);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub l: usize,
    pub n_f: usize,
    pub t: Vec<f64>,
    pub f_q: Vec<f64>,
    pub f_cdw: Vec<f64>,
    pub f_h2: Vec<f64>,
}

/// `initial` is `"cdw"` or `"ground"` (half-filled ground state at `v_i`).
pub fn curve(l: usize, initial: &str, v_i: f64, v_f: f64, t_max: f64, points: usize) -> Result<Curve> {
    check_points(points)?;
    if !(t_max > 0.01) {
        return Err(Error::InvalidArgument("t_max must exceed 0.01".into()));
    }
    let spec = demo_spec(l)?;
    let initial = match initial {
        "cdw" => InitialState::CdwProduct,
        "ground" => InitialState::GroundState {
            v_i,
            n_f: spec.half_fillings()[1],
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown initial state `{other}` (use cdw or ground)"
            )))
        }
    };
    let times = quench_time_grid(0.01, t_max, t_max, points, 0);
    let s = quench_series(&spec, initial, v_f, times, &FdConfig::with_delta(1e-3))?;
    let pick = |label: &str| s.ofi(label).unwrap_or_default();
    Ok(Curve {
        l,
        n_f: s.n_f,
        t: s.times(),
        f_q: s.qfi(),
        f_cdw: pick(CDW_LABEL),
        f_h2: pick(H2_LABEL),
    })
}

/// `⟨n_i⟩` of the `n_f`-fermion ground state, site by site.
pub fn density(l: usize, v: f64, n_f: usize) -> Result<Vec<f64>> {
    let spec = demo_spec(l)?;
    let c = correlation_matrix(&ground_state(&spec, v, n_f)?);
    Ok(c.c.diagonal().iter().map(|z| z.re).collect())
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// QFI, CDW OFI and `⟨O_cdw⟩` along a uniform `V` grid; JSON.
#[wasm_bindgen]
pub fn adiabatic_scan(
    l: usize,
    n_f: usize,
    v_start: f64,
    v_stop: f64,
    points: usize,
) -> std::result::Result<String, JsError> {
    js(scan(l, n_f, v_start, v_stop, points))
}

/// Dynamic QFI and OFIs after a sudden quench on a geometric time grid; JSON.
#[wasm_bindgen]
pub fn quench_curve(
    l: usize,
    initial: &str,
    v_i: f64,
    v_f: f64,
    t_max: f64,
    points: usize,
) -> std::result::Result<String, JsError> {
    js(curve(l, initial, v_i, v_f, t_max, points))
}

#[wasm_bindgen]
pub fn orbital_density(l: usize, v: f64, n_f: usize) -> std::result::Result<Vec<f64>, JsError> {
    density(l, v, n_f).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn fibonacci_sizes() -> Vec<u32> {
    locsense::model::ODD_FIBONACCI_SIZES
        .iter()
        .filter(|&&l| l <= MAX_DEMO_SIZE)
        .map(|&l| l as u32)
        .collect()
}
