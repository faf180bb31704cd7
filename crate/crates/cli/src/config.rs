//! TOML experiment configs.

use std::path::{Path, PathBuf};

use locsense::experiments::{PeakSearch, LONG_TIME_WINDOW, TRANSIENT_WINDOW};
use locsense::manybody::MAX_SITES;
use locsense::metrology::{CDW_LABEL, H2_LABEL, PARITY_LABEL, SITE_RESOLVED_LABEL};
use locsense::model::{LatticeSpec, OmegaConvention, ODD_FIBONACCI_SIZES};
use locsense::FdConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    SingleAdiabatic,
    HalffilledAdiabatic,
    Quench,
    InteractingEd,
    ScalingSummary,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::SingleAdiabatic => "single_adiabatic",
            Kind::HalffilledAdiabatic => "halffilled_adiabatic",
            Kind::Quench => "quench",
            Kind::InteractingEd => "interacting_ed",
            Kind::ScalingSummary => "scaling_summary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Named {
    Auto,
    Peak,
}

/// Either an explicit particle number or `"auto"` (self-consistent half filling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Filling {
    Fixed(usize),
    Named(Named),
}

/// A final amplitude, or `"peak"` for the half-filled QFI maximum of each size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FinalAmplitude {
    Value(f64),
    Named(Named),
}

impl FinalAmplitude {
    pub fn label(&self) -> String {
        match self {
            FinalAmplitude::Value(v) => format!("{v}"),
            FinalAmplitude::Named(_) => "peak".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.start + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSection {
    pub delta_v: f64,
    pub richardson: bool,
    pub adaptive: bool,
    pub target_infidelity: (f64, f64),
}

impl Default for FdSection {
    fn default() -> Self {
        let d = FdConfig::default();
        Self {
            delta_v: d.delta_v,
            richardson: d.richardson,
            adaptive: d.adaptive,
            target_infidelity: d.target_infidelity,
        }
    }
}

impl From<FdSection> for FdConfig {
    fn from(s: FdSection) -> Self {
        FdConfig {
            delta_v: s.delta_v,
            adaptive: s.adaptive,
            target_infidelity: s.target_infidelity,
            richardson: s.richardson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Cdw,
    GroundState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchSection {
    pub initial: InitialKind,
    /// Amplitude of the initial ground state.
    pub v_i: Option<f64>,
    pub v_f: Vec<FinalAmplitude>,
    pub t_min: f64,
    pub t_split: f64,
    pub t_max: f64,
    pub n_geometric: usize,
    pub n_linear: usize,
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
    #[serde(default = "default_long_window")]
    pub long_window: (f64, f64),
}

fn default_fit_window() -> (f64, f64) {
    TRANSIENT_WINDOW
}

fn default_long_window() -> (f64, f64) {
    LONG_TIME_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub omega: OmegaConvention,
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_f: Option<Filling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default)]
    pub measurements: Vec<String>,
    /// Interaction strengths (interacting runs only).
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub fd: FdSection,
    #[serde(default)]
    pub search: PeakSearch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench: Option<QuenchSection>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn spec(&self, l: usize) -> Result<LatticeSpec> {
        Ok(LatticeSpec::fibonacci_with(l, self.omega)?)
    }

    pub fn fd_config(&self) -> FdConfig {
        self.fd.into()
    }

    pub fn filling(&self) -> Filling {
        self.n_f.unwrap_or(match self.kind {
            Kind::SingleAdiabatic | Kind::ScalingSummary => Filling::Fixed(1),
            _ => Filling::Named(Named::Auto),
        })
    }

    /// Observables with the defaults of each kind filled in.
    pub fn observable_labels(&self) -> Vec<String> {
        if !self.observables.is_empty() {
            return self.observables.clone();
        }
        match self.kind {
            Kind::SingleAdiabatic => vec![CDW_LABEL.into()],
            _ => vec![CDW_LABEL.into(), H2_LABEL.into()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(invalid("`sizes` must not be empty"));
        }
        let mut sorted = self.sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != self.sizes {
            return Err(invalid("`sizes` must be strictly increasing"));
        }
        for &l in &self.sizes {
            self.spec(l).map_err(|e| invalid(format!("size {l}: {e}")))?;
        }
        if self.workers == Some(0) {
            return Err(invalid("`workers` must be positive"));
        }
        self.fd_config()
            .validate()
            .map_err(|e| invalid(format!("[fd]: {e}")))?;
        if !(self.search.lo < self.search.hi) || self.search.zoom.points < 5 {
            return Err(invalid("[search] needs lo < hi and at least 5 points"));
        }
        for o in &self.observables {
            if o != CDW_LABEL && o != H2_LABEL {
                return Err(invalid(format!("unknown observable `{o}` (use cdw, h2)")));
            }
        }
        for m in &self.measurements {
            if m != SITE_RESOLVED_LABEL && m != PARITY_LABEL {
                return Err(invalid(format!("unknown measurement `{m}` (use site, parity)")));
            }
        }
        if let Some(Filling::Named(Named::Peak)) = self.n_f {
            return Err(invalid("`n_f` must be an integer or \"auto\""));
        }
        if let Some(Filling::Fixed(n)) = self.n_f {
            if let Some(&l) = self.sizes.iter().find(|&&l| n == 0 || n > l) {
                return Err(invalid(format!("n_f={n} does not fit L={l}")));
            }
        }
        match self.kind {
            Kind::SingleAdiabatic | Kind::HalffilledAdiabatic | Kind::InteractingEd => {
                let grid = self
                    .grid
                    .ok_or_else(|| invalid(format!("{} needs a [grid] table", self.kind.as_str())))?;
                if grid.points < 3 || !(grid.start < grid.stop) || !grid.start.is_finite() {
                    return Err(invalid("[grid] needs start < stop and at least 3 points"));
                }
            }
            Kind::Quench | Kind::ScalingSummary => {}
        }
        match self.kind {
            Kind::SingleAdiabatic => {
                if self.filling() != Filling::Fixed(1) && !self.measurements.is_empty() {
                    return Err(invalid("measurement models need n_f = 1"));
                }
            }
            Kind::HalffilledAdiabatic => {
                if !self.measurements.is_empty() {
                    return Err(invalid("measurement models need n_f = 1"));
                }
            }
            Kind::InteractingEd => {
                if self.u.is_empty() {
                    return Err(invalid("interacting_ed needs a non-empty `u` list"));
                }
                if self.u.iter().any(|u| !u.is_finite()) {
                    return Err(invalid("`u` values must be finite"));
                }
                if let Some(&l) = self.sizes.iter().find(|&&l| l > MAX_SITES) {
                    return Err(invalid(format!(
                        "interacting_ed supports L <= {MAX_SITES}, got {l}"
                    )));
                }
            }
            Kind::ScalingSummary => {
                if let Some(&l) = self.sizes.iter().find(|l| !ODD_FIBONACCI_SIZES.contains(l)) {
                    return Err(invalid(format!(
                        "scaling_summary sizes must be odd Fibonacci numbers {ODD_FIBONACCI_SIZES:?}, got {l}"
                    )));
                }
            }
            Kind::Quench => {
                let q = self
                    .quench
                    .as_ref()
                    .ok_or_else(|| invalid("quench needs a [quench] table"))?;
                if q.v_f.is_empty() {
                    return Err(invalid("[quench] v_f must not be empty"));
                }
                if q.v_f.iter().any(|v| matches!(v, FinalAmplitude::Named(Named::Auto))) {
                    return Err(invalid("[quench] v_f entries are numbers or \"peak\""));
                }
                if q.initial == InitialKind::GroundState && q.v_i.is_none() {
                    return Err(invalid("ground_state quench needs v_i"));
                }
                if !(q.t_min > 0.0 && q.t_min <= q.t_split && q.t_split <= q.t_max) {
                    return Err(invalid("[quench] needs 0 < t_min <= t_split <= t_max"));
                }
                if q.n_geometric + q.n_linear == 0 {
                    return Err(invalid("[quench] needs at least one time"));
                }
            }
        }
        Ok(())
    }

    /// Hash of everything that affects numbers; output location and worker count are
    /// excluded. Parsing then re-serializing through sorted maps makes the hash
    /// independent of field order and formatting in the source file.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("workers");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }

    pub fn output_dir(&self, config_path: &Path) -> PathBuf {
        let base = config_path.parent().unwrap_or(Path::new("."));
        match &self.output_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => base.join(p),
            None => {
                let stem = config_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".into());
                base.join("results").join(stem)
            }
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
kind = "single_adiabatic"
sizes = [21, 55]
measurements = ["site"]
[grid]
start = 1.5
stop = 2.5
points = 11
"#;

    #[test]
    fn hash_ignores_order_and_formatting() {
        let a = ExperimentConfig::from_toml(BASE).unwrap();
        let b = ExperimentConfig::from_toml(
            r#"
measurements = [ "site" ]
sizes = [21,55]
kind = "single_adiabatic"
output_dir = "elsewhere"
workers = 3
[grid]
points = 11
stop = 2.50
start = 1.5e0
"#,
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml(&BASE.replace("points = 11", "points = 12")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn schema_errors() {
        let bad = [
            BASE.replace("single_adiabatic", "adiabatic"),
            BASE.replace("[21, 55]", "[55, 21]"),
            BASE.replace("[21, 55]", "[22]"),
            BASE.replace("\"site\"", "\"momentum\""),
            BASE.replace("points = 11", "points = 2"),
            format!("{BASE}\nunknown = 1"),
            BASE.replace("kind = \"single_adiabatic\"", "kind = \"quench\""),
            BASE.replace("kind = \"single_adiabatic\"", "kind = \"interacting_ed\""),
            BASE.replace("kind = \"single_adiabatic\"", "kind = \"scaling_summary\"")
                .replace("[21, 55]", "[21, 34]"),
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn fillings_parse() {
        let auto = ExperimentConfig::from_toml(&format!(
            "n_f = \"auto\"\n{}",
            BASE.replace("single_adiabatic", "halffilled_adiabatic")
                .replace("measurements = [\"site\"]", "")
        ))
        .unwrap();
        assert_eq!(auto.filling(), Filling::Named(Named::Auto));
        let fixed = ExperimentConfig::from_toml(&format!("n_f = 1\n{BASE}")).unwrap();
        assert_eq!(fixed.filling(), Filling::Fixed(1));
    }

    #[test]
    fn default_output_dir_sits_next_to_config() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(
            cfg.output_dir(Path::new("/tmp/x/fig1.toml")),
            PathBuf::from("/tmp/x/results/fig1")
        );
    }
}
