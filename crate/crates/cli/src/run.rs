//! Executes a config: plan work units, resolve each through the cache on a bounded
//! worker pool, then assemble tables and the JSON summary in canonical order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use locsense::analysis::{
    collapse_check, find_peak_xy, power_law_fit, power_law_fit_excluding_smallest, Peak,
    ScalingFit,
};
use locsense::dynamics::{quench_time_grid, window_average, InitialState};
use locsense::experiments::{
    half_filled_peaks, quench_series, scaled_qfi_curves, single_particle_peaks, HalfFilledPeaks,
    QuenchSeries, SingleParticlePeaks,
};
use locsense::manybody::mb_fisher_point;
use locsense::metrology::{
    adiabatic_point, cdw_observable, h2_observable, FisherPoint, LinearObservable,
    MeasurementModel, CDW_LABEL, H2_LABEL, SITE_RESOLVED_LABEL,
};
use locsense::model::LatticeSpec;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cache::Cache;
use crate::config::{ExperimentConfig, Filling, FinalAmplitude, InitialKind, Kind, Named};
use crate::error::{CliError, Result};
use crate::table::{format_float, Cell, Table};

pub const RESULT_SCHEMA: &str = "locsense-result/1";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub cache_dir: PathBuf,
    /// Overrides the config's `workers`; `None` falls back to it, then to all cores.
    pub workers: Option<usize>,
    pub force: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitStats {
    pub total: usize,
    pub cached: usize,
    pub computed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub excluded: Vec<f64>,
}

impl From<&ScalingFit> for FitSummary {
    fn from(f: &ScalingFit) -> Self {
        Self {
            exponent: f.exponent,
            exponent_stderr: f.exponent_stderr,
            amplitude: f.amplitude,
            r_squared: f.r_squared,
            window: f.window,
            points: f.points.len(),
            excluded: f.excluded.clone(),
        }
    }
}

/// Machine-readable record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: String,
    pub kind: Kind,
    pub config_hash: String,
    pub library_version: String,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub units: UnitStats,
    pub wall_time_s: f64,
    pub fits: BTreeMap<String, FitSummary>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    cache: Cache,
    pool: rayon::ThreadPool,
    total: std::sync::atomic::AtomicUsize,
}

impl Ctx<'_> {
    /// Resolves every unit through the cache; results come back in `coords` order.
    fn execute<T, F>(&self, coords: &[String], f: F) -> Result<Vec<T>>
    where
        T: Serialize + DeserializeOwned + Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        self.total
            .fetch_add(coords.len(), std::sync::atomic::Ordering::Relaxed);
        let results: Vec<Result<T>> = self.pool.install(|| {
            coords
                .par_iter()
                .enumerate()
                .map(|(i, c)| self.cache.get_or_compute(c, || f(i)))
                .collect()
        });
        let mut out = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (r, c) in results.into_iter().zip(coords) {
            match r {
                Ok(v) => out.push(v),
                Err(e @ (CliError::Checksum(_) | CliError::CacheFormat { .. } | CliError::Io { .. })) => {
                    return Err(e)
                }
                Err(e) => failures.push(format!("[{c}] {e}")),
            }
        }
        if !failures.is_empty() {
            return Err(CliError::Workers {
                count: failures.len(),
                details: failures.join("; "),
            });
        }
        Ok(out)
    }
}

fn coord_float(x: f64) -> String {
    format_float(x)
}

fn observables(cfg: &ExperimentConfig, spec: &LatticeSpec, n_f: usize) -> Vec<LinearObservable> {
    cfg.observable_labels()
        .iter()
        .map(|label| match label.as_str() {
            CDW_LABEL => cdw_observable(spec.l, n_f),
            _ => h2_observable(spec),
        })
        .collect()
}

fn measurements(cfg: &ExperimentConfig, l: usize) -> Vec<MeasurementModel> {
    cfg.measurements
        .iter()
        .map(|m| match m.as_str() {
            SITE_RESOLVED_LABEL => MeasurementModel::site_resolved(l),
            _ => MeasurementModel::parity_binned(l),
        })
        .collect()
}

/// Output of [`run`] before it is written anywhere.
#[derive(Default)]
struct Assembled {
    tables: Vec<Table>,
    fits: BTreeMap<String, FitSummary>,
    metrics: BTreeMap<String, f64>,
    notes: Vec<String>,
}

impl Assembled {
    fn fit_sizes(&mut self, name: &str, sizes: &[f64], values: &[f64]) {
        let pairs: Vec<(f64, f64)> = sizes
            .iter()
            .zip(values)
            .filter(|(_, v)| v.is_finite() && **v > 0.0)
            .map(|(&l, &v)| (l, v))
            .collect();
        if pairs.len() < 3 {
            self.notes
                .push(format!("{name}: fewer than 3 sizes with a peak; no scaling fit"));
            return;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        match power_law_fit_excluding_smallest(&xs, &ys) {
            Ok(fit) => {
                if !fit.excluded.is_empty() {
                    self.notes.push(format!(
                        "{name}: excluded L={:?} (r² below threshold with it)",
                        fit.excluded
                    ));
                }
                self.fits.insert(name.into(), (&fit).into());
            }
            Err(e) => self.notes.push(format!("{name}: fit failed: {e}")),
        }
    }
}

/// Self-consistent fillings, computed only when some part of the config asks for them.
fn resolve_half_filled(ctx: &Ctx) -> Result<BTreeMap<usize, HalfFilledPeaks>> {
    let cfg = ctx.cfg;
    let coords: Vec<String> = cfg.sizes.iter().map(|l| format!("half_filled L={l}")).collect();
    let fd = cfg.fd_config();
    let peaks = ctx.execute(&coords, |i| {
        Ok(half_filled_peaks(&cfg.spec(cfg.sizes[i])?, &cfg.search, &fd)?)
    })?;
    Ok(peaks.into_iter().map(|p| (p.l, p)).collect())
}

fn needs_half_filled(cfg: &ExperimentConfig) -> bool {
    let auto = cfg.filling() == Filling::Named(Named::Auto);
    match cfg.kind {
        Kind::HalffilledAdiabatic | Kind::InteractingEd => auto,
        Kind::Quench => {
            let q = cfg.quench.as_ref().expect("validated");
            (q.initial == InitialKind::GroundState && auto)
                || q.v_f.iter().any(|v| matches!(v, FinalAmplitude::Named(Named::Peak)))
        }
        Kind::SingleAdiabatic | Kind::ScalingSummary => false,
    }
}

fn filling_table(half: &BTreeMap<usize, HalfFilledPeaks>) -> Table {
    let mut t = Table::new(
        "fillings",
        &["L", "n_f", "V_star", "F_Q_star", "negative_count", "selected"],
    );
    for p in half.values() {
        for c in &p.candidates {
            t.push(vec![
                p.l.into(),
                c.n_f.into(),
                c.qfi.x.into(),
                c.qfi.value.into(),
                c.negative_count.into(),
                (c.n_f == p.n_f).into(),
            ]);
        }
    }
    t
}

fn n_f_for(cfg: &ExperimentConfig, l: usize, half: &BTreeMap<usize, HalfFilledPeaks>) -> usize {
    match cfg.filling() {
        Filling::Fixed(n) => n,
        Filling::Named(_) => half[&l].n_f,
    }
}

fn grid_peak(xs: &[f64], ys: &[f64]) -> Option<Peak> {
    find_peak_xy(xs, ys).ok()
}

fn run_adiabatic(ctx: &Ctx, out: &mut Assembled) -> Result<()> {
    let cfg = ctx.cfg;
    let grid = cfg.grid.expect("validated").values();
    let half = if needs_half_filled(cfg) {
        let h = resolve_half_filled(ctx)?;
        out.tables.push(filling_table(&h));
        h
    } else {
        BTreeMap::new()
    };
    let us: Vec<Option<f64>> = if cfg.kind == Kind::InteractingEd {
        cfg.u.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };

    let mut jobs = Vec::new();
    for &l in &cfg.sizes {
        let n_f = n_f_for(cfg, l, &half);
        for &u in &us {
            for &v in &grid {
                jobs.push((l, n_f, u, v));
            }
        }
    }
    let coords: Vec<String> = jobs
        .iter()
        .map(|&(l, n_f, u, v)| match u {
            Some(u) => format!("ed L={l} n_f={n_f} U={} V={}", coord_float(u), coord_float(v)),
            None => format!("point L={l} n_f={n_f} V={}", coord_float(v)),
        })
        .collect();
    let fd = cfg.fd_config();
    let points: Vec<FisherPoint> = ctx.execute(&coords, |i| {
        let (l, n_f, u, v) = jobs[i];
        let spec = cfg.spec(l)?;
        let obs = observables(cfg, &spec, n_f);
        Ok(match u {
            Some(u) => mb_fisher_point(&spec, v, u, n_f, &obs, &fd)?,
            None => adiabatic_point(&spec, n_f, v, &obs, &measurements(cfg, l), &fd)?,
        })
    })?;

    let labels = cfg.observable_labels();
    let models: Vec<String> = if cfg.kind == Kind::InteractingEd {
        Vec::new()
    } else {
        cfg.measurements.clone()
    };
    let mut header: Vec<String> = vec!["L".into(), "n_f".into()];
    if cfg.kind == Kind::InteractingEd {
        header.push("U".into());
    }
    header.extend(["V".into(), "F_Q".into()]);
    header.extend(models.iter().map(|m| format!("F_C_{m}")));
    header.extend(labels.iter().map(|o| format!("F_O_{o}")));
    header.extend(labels.iter().map(|o| format!("O_{o}")));
    header.extend(["delta_v".into(), "stencil_error".into()]);
    let mut table = Table::with_header("fisher_points", header);
    for (p, &(_, _, u, _)) in points.iter().zip(&jobs) {
        let mut row: Vec<Cell> = vec![p.l.into(), p.n_f.into()];
        if let Some(u) = u {
            row.push(u.into());
        }
        row.extend([p.v.into(), p.f_q.into()]);
        row.extend(models.iter().map(|m| p.f_c.get(m).copied().into()));
        row.extend(labels.iter().map(|o| p.f_o.get(o).copied().into()));
        row.extend(labels.iter().map(|o| p.expectations.get(o).copied().into()));
        row.extend([p.delta_v_used.into(), p.stencil_error.into()]);
        table.push(row);
    }
    out.tables.push(table);

    // Grid maxima per (L, U).
    let mut header: Vec<String> = vec!["L".into(), "n_f".into()];
    if cfg.kind == Kind::InteractingEd {
        header.push("U".into());
    }
    header.extend(["V_Q".into(), "F_Q_max".into()]);
    for o in &labels {
        header.extend([format!("V_{o}"), format!("F_{o}_max")]);
    }
    let mut peaks = Table::with_header("peaks", header);
    let mut series: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (k, chunk) in points.chunks(grid.len()).enumerate() {
        let (l, n_f, u, _) = jobs[k * grid.len()];
        let xs: Vec<f64> = chunk.iter().map(|p| p.v).collect();
        let suffix = u.map(|u| format!("[U={u}]")).unwrap_or_default();
        let mut row: Vec<Cell> = vec![l.into(), n_f.into()];
        if let Some(u) = u {
            row.push(u.into());
        }
        let mut record = |name: String, ys: Vec<f64>, row: &mut Vec<Cell>| {
            let peak = grid_peak(&xs, &ys);
            row.extend([peak.map(|p| p.x).into(), peak.map(|p| p.value).into()]);
            let entry = series.entry(format!("{name}{suffix}")).or_default();
            entry.0.push(l as f64);
            entry.1.push(peak.map_or(f64::NAN, |p| p.value));
            if peak.is_none() {
                out.notes.push(format!("{name}{suffix} at L={l}: maximum on the grid boundary"));
            }
        };
        record("F_Q_max".into(), chunk.iter().map(|p| p.f_q).collect(), &mut row);
        for o in &labels {
            let ys = chunk.iter().map(|p| p.f_o.get(o).copied().unwrap_or(f64::NAN)).collect();
            record(format!("F_{o}_max"), ys, &mut row);
        }
        peaks.push(row);
    }
    out.tables.push(peaks);
    if cfg.sizes.len() >= 3 {
        for (name, (xs, ys)) in &series {
            out.fit_sizes(name, xs, ys);
        }
    }

    // Zoomed maxima of the self-consistent filling are more precise than the grid.
    if cfg.kind == Kind::HalffilledAdiabatic && !half.is_empty() {
        let mut t = Table::new("halffilled_peaks", &["L", "n_f", "V_star", "F_Q_star", "F_H2_at_V_star"]);
        for p in half.values() {
            t.push(vec![p.l.into(), p.n_f.into(), p.qfi.x.into(), p.qfi.value.into(), p.f_h2.into()]);
        }
        out.tables.push(t);
        if cfg.sizes.len() >= 3 {
            let xs: Vec<f64> = half.keys().map(|&l| l as f64).collect();
            let fq: Vec<f64> = half.values().map(|p| p.qfi.value).collect();
            let fh: Vec<f64> = half.values().map(|p| p.f_h2).collect();
            out.fit_sizes("F_Q_star(zoom)", &xs, &fq);
            out.fit_sizes("F_H2_star(zoom)", &xs, &fh);
        }
    }
    Ok(())
}

fn run_scaling(ctx: &Ctx, out: &mut Assembled) -> Result<()> {
    let cfg = ctx.cfg;
    let coords: Vec<String> = cfg.sizes.iter().map(|l| format!("single_peaks L={l}")).collect();
    let fd = cfg.fd_config();
    let peaks: Vec<SingleParticlePeaks> = ctx.execute(&coords, |i| {
        Ok(single_particle_peaks(&cfg.spec(cfg.sizes[i])?, &cfg.search, &fd)?)
    })?;
    let mut t = Table::new("scaling", &["L", "V_star", "F_Q_star", "V_cdw_star", "F_cdw_star"]);
    for p in &peaks {
        t.push(vec![p.l.into(), p.qfi.x.into(), p.qfi.value.into(), p.cdw.x.into(), p.cdw.value.into()]);
    }
    out.tables.push(t);
    let xs: Vec<f64> = peaks.iter().map(|p| p.l as f64).collect();
    out.fit_sizes("F_Q_star", &xs, &peaks.iter().map(|p| p.qfi.value).collect::<Vec<_>>());
    out.fit_sizes("F_cdw_star", &xs, &peaks.iter().map(|p| p.cdw.value).collect::<Vec<_>>());
    Ok(())
}

fn run_quench(ctx: &Ctx, out: &mut Assembled) -> Result<()> {
    let cfg = ctx.cfg;
    let q = cfg.quench.as_ref().expect("validated");
    let half = if needs_half_filled(cfg) {
        let h = resolve_half_filled(ctx)?;
        out.tables.push(filling_table(&h));
        h
    } else {
        BTreeMap::new()
    };
    let times = quench_time_grid(q.t_min, q.t_split, q.t_max, q.n_geometric, q.n_linear);

    let mut jobs = Vec::new();
    for &l in &cfg.sizes {
        let initial = match q.initial {
            InitialKind::Cdw => InitialState::CdwProduct,
            InitialKind::GroundState => InitialState::GroundState {
                v_i: q.v_i.expect("validated"),
                n_f: n_f_for(cfg, l, &half),
            },
        };
        for v_f in &q.v_f {
            let value = match v_f {
                FinalAmplitude::Value(v) => *v,
                FinalAmplitude::Named(_) => half[&l].qfi.x,
            };
            jobs.push((l, initial, v_f.label(), value));
        }
    }
    let coords: Vec<String> = jobs
        .iter()
        .map(|(l, init, _, v_f)| {
            format!(
                "quench L={l} initial={} V_f={}",
                serde_json::to_string(init).expect("serializable"),
                coord_float(*v_f)
            )
        })
        .collect();
    let fd = cfg.fd_config();
    let series: Vec<QuenchSeries> = ctx.execute(&coords, |i| {
        let (l, init, _, v_f) = &jobs[i];
        Ok(quench_series(&cfg.spec(*l)?, *init, *v_f, times.clone(), &fd)?)
    })?;

    let mut t = Table::new(
        "quench",
        &["L", "n_f", "V_f", "t", "F_Q", "F_Q_generator", "F_O_cdw", "F_O_h2", "F_Q_over_Lt2", "stencil_error"],
    );
    for s in &series {
        for x in &s.samples {
            t.push(vec![
                s.l.into(),
                s.n_f.into(),
                s.v_f.into(),
                x.t.into(),
                x.f_q.into(),
                x.f_q_generator.into(),
                x.f_o.get(CDW_LABEL).copied().into(),
                x.f_o.get(H2_LABEL).copied().into(),
                (x.f_q / (s.l as f64 * x.t * x.t)).into(),
                x.stencil_error.into(),
            ]);
        }
    }
    out.tables.push(t);

    let mut fits = Table::new(
        "quench_fits",
        &["L", "V_f", "quantity", "exponent", "exponent_stderr", "r_squared", "long_time_average"],
    );
    for (s, (_, _, label, _)) in series.iter().zip(&jobs) {
        let ts = s.times();
        let quantities = [
            ("F_Q", Some(s.qfi())),
            ("F_cdw", s.ofi(CDW_LABEL)),
            ("F_H2", s.ofi(H2_LABEL)),
        ];
        for (name, ys) in quantities {
            let Some(ys) = ys else { continue };
            let pairs: Vec<(f64, f64)> = ts.iter().copied().zip(ys.iter().copied()).collect();
            let long = window_average(&pairs, q.long_window.0, q.long_window.1);
            let key = format!("{name}[L={},V_f={label}]", s.l);
            let fit = power_law_fit(&ts, &ys, q.fit_window);
            match &fit {
                Ok(f) => {
                    out.fits.insert(key.clone(), f.into());
                }
                Err(e) => out.notes.push(format!("{key}: no transient fit: {e}")),
            }
            if let Some(avg) = long {
                out.metrics.insert(format!("long_time_average {key}"), avg);
            }
            let f = fit.ok();
            fits.push(vec![
                s.l.into(),
                s.v_f.into(),
                name.into(),
                f.as_ref().map(|f| f.exponent).into(),
                f.as_ref().map(|f| f.exponent_stderr).into(),
                f.as_ref().map(|f| f.r_squared).into(),
                long.into(),
            ]);
        }
    }
    out.tables.push(fits);

    // Collapse of F_Q / (L t²) across sizes, per final amplitude.
    if cfg.sizes.len() >= 2 {
        for label in q.v_f.iter().map(FinalAmplitude::label) {
            let group: Vec<QuenchSeries> = series
                .iter()
                .zip(&jobs)
                .filter(|(_, j)| j.2 == label)
                .map(|(s, _)| s.clone())
                .collect();
            let spread = collapse_check(&scaled_qfi_curves(&group), 1.0)?;
            out.metrics.insert(format!("collapse_spread F_Q/(L t^2) [V_f={label}]"), spread);
        }
    }
    Ok(())
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

/// Number of work units a config expands to, when it can be known without running.
pub fn planned_units(cfg: &ExperimentConfig) -> usize {
    let half = if needs_half_filled(cfg) { cfg.sizes.len() } else { 0 };
    let n = cfg.sizes.len();
    half + match cfg.kind {
        Kind::SingleAdiabatic | Kind::HalffilledAdiabatic => n * cfg.grid.map_or(0, |g| g.points),
        Kind::InteractingEd => n * cfg.u.len() * cfg.grid.map_or(0, |g| g.points),
        Kind::Quench => n * cfg.quench.as_ref().map_or(0, |q| q.v_f.len()),
        Kind::ScalingSummary => n,
    }
}

/// Runs a config and writes its tables and `summary.json` into the output directory.
pub fn run(cfg: &ExperimentConfig, config_path: &Path, opts: &RunOptions) -> Result<ResultRecord> {
    let start = Instant::now();
    let hash = cfg.hash();
    let ctx = Ctx {
        cfg,
        cache: Cache::new(&opts.cache_dir, &hash, opts.force),
        pool: build_pool(opts.workers.or(cfg.workers))?,
        total: Default::default(),
    };
    let mut out = Assembled::default();
    match cfg.kind {
        Kind::SingleAdiabatic | Kind::HalffilledAdiabatic | Kind::InteractingEd => {
            run_adiabatic(&ctx, &mut out)?
        }
        Kind::ScalingSummary => run_scaling(&ctx, &mut out)?,
        Kind::Quench => run_quench(&ctx, &mut out)?,
    }

    let dir = cfg.output_dir(config_path);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut files = Vec::new();
    for t in &out.tables {
        t.write(&dir)?;
        files.push(t.file_name());
    }
    files.push(SUMMARY_FILE.into());
    let record = ResultRecord {
        schema: RESULT_SCHEMA.into(),
        kind: cfg.kind,
        config_hash: hash,
        library_version: locsense::VERSION.into(),
        output_dir: dir.clone(),
        files,
        units: UnitStats {
            total: ctx.total.load(std::sync::atomic::Ordering::Relaxed),
            cached: ctx.cache.hits(),
            computed: ctx.cache.misses(),
        },
        wall_time_s: start.elapsed().as_secs_f64(),
        fits: out.fits,
        metrics: out.metrics,
        notes: out.notes,
        config: cfg.clone(),
    };
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&record)?).map_err(|e| CliError::io(&path, e))?;
    Ok(record)
}
