//! JSON run configuration.
//!
//! Every section is optional except `model.features` and `model.kernel`.
//! Missing values are filled in by [`RunConfig::normalize`], so a serialized
//! normalized config records everything a run depended on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Schedule;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{
    build_named_kernel, DivisionLaw, FeatureSet, GrowthLaw, Kernel, Model, NamedKernel,
};
use crate::spectral::PowerOptions;

pub const DEFAULT_HALF_COUNT: usize = 2501;
pub const DEFAULT_RESOLUTION: usize = 200;
pub const DESK_HALF_COUNT: usize = 600;
pub const DESK_RESOLUTION: usize = 50;
pub const DEFAULT_A: f64 = 30.0;
pub const DEFAULT_B_EXP: f64 = 60.0;

/// Grid presets. `full` is the fine grid, `desk` the smallest grid on which
/// the three-trait growth rates are reproduced to within 2%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Full,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub half_count: Option<usize>,
    #[serde(rename = "k", default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
}

/// Either a named family (with `p` for the one-way families) or an inline
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

fn default_growth() -> GrowthLaw {
    GrowthLaw::Linear
}

fn default_division() -> DivisionLaw {
    DivisionLaw::Power {
        coefficient: 1.0,
        exponent: 2.0,
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub features: Vec<f64>,
    #[serde(default = "default_growth")]
    pub growth: GrowthLaw,
    #[serde(default = "default_division")]
    pub division: DivisionLaw,
    pub kernel: KernelConfig,
    #[serde(default = "one")]
    pub death_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_record_dt")]
    pub record_dt: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_t_end() -> f64 {
    40.0
}

fn default_record_dt() -> f64 {
    0.01
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t_end: default_t_end(),
            record_dt: default_record_dt(),
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b_exp")]
    pub b_exp: f64,
}

fn default_a() -> f64 {
    DEFAULT_A
}

fn default_b_exp() -> f64 {
    DEFAULT_B_EXP
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            a: DEFAULT_A,
            b_exp: DEFAULT_B_EXP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    PowerOptions::default().tol
}

fn default_max_iter() -> usize {
    PowerOptions::default().max_iter
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_true")]
    pub emit_snapshots: bool,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            emit_snapshots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub grid: GridConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Reads, normalizes and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    // serde_json reports the line and column, and names unknown or missing
    // fields.
    let mut config: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.normalize();
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Config for the given traits and kernel with every other value at its
    /// default.
    pub fn new(features: Vec<f64>, kernel: KernelConfig) -> Self {
        let mut config = Self {
            preset: Preset::Full,
            grid: GridConfig::default(),
            model: ModelConfig {
                features,
                growth: default_growth(),
                division: default_division(),
                kernel,
                death_factor: 1.0,
            },
            schedule: ScheduleConfig::default(),
            initial: InitialConfig::default(),
            eigen: EigenConfig::default(),
            output: OutputConfig::default(),
        };
        config.normalize();
        config
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.preset = preset;
        self.grid = GridConfig::default();
        self.normalize();
        self
    }

    /// Fills grid values left open from the preset.
    pub fn normalize(&mut self) {
        let (n, k) = match self.preset {
            Preset::Full => (DEFAULT_HALF_COUNT, DEFAULT_RESOLUTION),
            Preset::Desk => (DESK_HALF_COUNT, DESK_RESOLUTION),
        };
        self.grid.half_count.get_or_insert(n);
        self.grid.resolution.get_or_insert(k);
    }

    /// Checks every invariant that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let grid = self.grid()?;
        model.check_on_grid(&grid).map_err(|e| match e {
            Error::Length { got, expected } => Error::Config(format!(
                "tabulated law has {got} values per feature, the grid has {expected} nodes"
            )),
            e => e,
        })?;
        self.schedule().validate()?;
        crate::dynamics::initial_profile(&grid, 1, self.initial.a, self.initial.b_exp)?;
        if !(self.eigen.tol > 0.0 && self.eigen.tol.is_finite()) {
            return Err(Error::Range {
                name: "eigen.tol",
                value: self.eigen.tol,
                expected: "finite and positive",
            });
        }
        if self.eigen.max_iter == 0 {
            return Err(Error::Config("eigen.max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let n = self.grid.half_count.unwrap_or(DEFAULT_HALF_COUNT);
        let k = self.grid.resolution.unwrap_or(DEFAULT_RESOLUTION);
        Grid::new(n, k)
    }

    /// The named family, if the kernel is given by name.
    pub fn kernel_family(&self) -> Result<Option<NamedKernel>> {
        let kc = &self.model.kernel;
        match (&kc.family, &kc.matrix) {
            (Some(name), None) => Ok(Some(NamedKernel::parse(name, kc.p)?)),
            (None, Some(_)) => {
                if kc.p.is_some() {
                    return Err(Error::Config(
                        "model.kernel.p only applies to a named family".into(),
                    ));
                }
                Ok(None)
            }
            (Some(_), Some(_)) => Err(Error::Config(
                "model.kernel takes either family or matrix, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "model.kernel needs a family or a matrix".into(),
            )),
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let m = self.model.features.len();
        match self.kernel_family()? {
            Some(family) => build_named_kernel(family, m),
            None => {
                let rows = self.model.kernel.matrix.as_deref().unwrap_or_default();
                if let Some(row) = rows.iter().find(|r| r.len() != m) {
                    return Err(Error::KernelDimension {
                        rows: rows.len(),
                        cols: row.len(),
                        features: m,
                    });
                }
                if rows.len() != m {
                    return Err(Error::KernelDimension {
                        rows: rows.len(),
                        cols: m,
                        features: m,
                    });
                }
                Kernel::from_rows(rows)
            }
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            FeatureSet::new(self.model.features.clone())?,
            self.model.growth.clone(),
            self.model.division.clone(),
            self.kernel()?,
            self.model.death_factor,
        )
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            t_end: self.schedule.t_end,
            record_dt: self.schedule.record_dt,
            snapshot_times: if self.output.emit_snapshots {
                self.schedule.snapshot_times.clone()
            } else {
                Vec::new()
            },
        }
    }

    pub fn power_options(&self) -> PowerOptions {
        PowerOptions {
            tol: self.eigen.tol,
            max_iter: self.eigen.max_iter,
        }
    }

    /// Compact JSON of the normalized config.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_irreducible_config() {
        let c = parse_config_str(
            r#"{"model": {"features": [1, 2, 3], "kernel": {"family": "irreducible"}}}"#,
        )
        .unwrap();
        assert_eq!(c.grid.half_count, Some(2501));
        assert_eq!(c.grid.resolution, Some(200));
        assert_eq!((c.initial.a, c.initial.b_exp), (30.0, 60.0));
        let model = c.model().unwrap();
        assert_eq!(model.kernel().row(0), &[0.7, 0.2, 0.1]);
        assert_eq!(model.growth(), &GrowthLaw::Linear);
        assert_eq!(model.death_factor(), 1.0);
    }

    #[test]
    fn desk_preset() {
        let c = parse_config_str(
            r#"{"preset": "desk", "model": {"features": [1, 2, 3], "kernel": {"family": "reducible"}}}"#,
        )
        .unwrap();
        assert_eq!(c.grid().unwrap().half_count(), 600);
        assert_eq!(c.grid().unwrap().resolution(), 50);
        let c = parse_config_str(
            r#"{"preset": "desk", "grid": {"k": 40}, "model": {"features": [1], "kernel": {"family": "reducible"}}}"#,
        )
        .unwrap();
        assert_eq!((c.grid.half_count, c.grid.resolution), (Some(600), Some(40)));
    }

    #[test]
    fn dimension_error() {
        let err = parse_config_str(
            r#"{"model": {"features": [1, 2], "kernel": {"matrix": [[0.5, 0.5, 0], [0, 1, 0]]}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::KernelDimension { rows: 2, cols: 3, features: 2 }));
        assert!(err.is_config());
    }

    #[test]
    fn range_error() {
        let err = parse_config_str(
            r#"{"model": {"features": [1, 2], "kernel": {"family": "fast_to_slow", "p": 1.5}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Range { name: "p", .. }));
        let err = parse_config_str(
            r#"{"model": {"features": [1], "kernel": {"family": "reducible"}, "death_factor": 1.5}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Range { name: "death_factor", .. }));
    }

    #[test]
    fn unknown_field_names_field_and_line() {
        let err = parse_config_str("{\n \"model\": {\"features\": [1], \"kernel\": {\"family\": \"reducible\"}},\n \"colour\": 3\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("colour") && err.contains("line 3"), "{err}");
        let err = parse_config_str(r#"{"model": {"features": [1], "kernel": {"family": "reducible", "q": 1}}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("`q`"), "{err}");
    }

    #[test]
    fn inline_laws_and_roundtrip() {
        let text = r#"{"grid": {"N": 100, "k": 10},
            "model": {"features": [0.5, 1.5], "growth": {"kind": "power", "exponent": 0.5},
                      "division": {"kind": "power_cutoff", "coefficient": 2, "exponent": 1, "threshold": 0.1},
                      "kernel": {"matrix": [[0.9, 0.1], [0.2, 0.8]]}, "death_factor": 0.8},
            "schedule": {"t_end": 5, "record_dt": 0.1, "snapshot_times": [1, 2]},
            "output": {"directory": "runs/a", "emit_snapshots": false}}"#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.model().unwrap().death_factor(), 0.8);
        assert!(c.schedule().snapshot_times.is_empty());
        let back = parse_config_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn kernel_spec_errors() {
        for text in [
            r#"{"model": {"features": [1, 2], "kernel": {}}}"#,
            r#"{"model": {"features": [1, 2], "kernel": {"family": "reducible", "matrix": [[1, 0], [0, 1]]}}}"#,
            r#"{"model": {"features": [1, 2], "kernel": {"matrix": [[1, 0], [0, 1]], "p": 0.5}}}"#,
            r#"{"model": {"features": [1, 2], "kernel": {"family": "fast_to_slow"}}}"#,
            r#"{"model": {"features": [2, 1], "kernel": {"family": "reducible"}}}"#,
            r#"{"model": {"features": [1, 2], "kernel": {"matrix": [[0.5, 0.4], [0, 1]]}}}"#,
        ] {
            let err = parse_config_str(text).unwrap_err();
            assert!(err.is_config(), "{text}: {err:?}");
        }
    }
}
