//! Experiment configuration: one JSON file per run plus `--set key=value`
//! overrides of individual (dotted) fields.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cirlt_core::convergence::LeftReference;
use cirlt_core::local_time::{BinSpec, FitWindow};
use cirlt_core::path::TimeGrid;
use cirlt_core::sde::SchemeChoice;
use cirlt_core::{ModelParams, DEFAULT_SEED};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Simulate,
    VerifyMain,
    RegimeCheck,
    TransformRoundtrip,
    ConvergeRight,
    ConvergeLeft,
    DistTest,
}

impl Tag {
    pub const ALL: [Tag; 7] = [
        Tag::Simulate,
        Tag::VerifyMain,
        Tag::RegimeCheck,
        Tag::TransformRoundtrip,
        Tag::ConvergeRight,
        Tag::ConvergeLeft,
        Tag::DistTest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Simulate => "simulate",
            Tag::VerifyMain => "verify-main",
            Tag::RegimeCheck => "regime-check",
            Tag::TransformRoundtrip => "transform-roundtrip",
            Tag::ConvergeRight => "converge-right",
            Tag::ConvergeLeft => "converge-left",
            Tag::DistTest => "dist-test",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment tag `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

impl GridConfig {
    pub fn time_grid(&self) -> Result<TimeGrid, HarnessError> {
        Ok(TimeGrid::uniform(self.horizon, self.steps)?)
    }
}

/// Settings of the exact-transition distribution test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsConfig {
    /// Starting value of each transition.
    pub x: f64,
    pub dts: Vec<f64>,
    pub samples: usize,
}

impl Default for KsConfig {
    fn default() -> Self {
        Self {
            x: 1.0,
            dts: vec![0.1, 1.0],
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tag: Tag,
    pub params: ModelParams,
    pub grid: GridConfig,
    #[serde(default)]
    pub scheme: SchemeChoice,
    pub replications: usize,
    pub seed: u64,
    /// First generator substream; replication `r` uses `first_stream + r`.
    #[serde(default)]
    pub first_stream: u64,
    pub eps_ladder: Vec<f64>,
    pub delta_ladder: Vec<f64>,
    #[serde(default)]
    pub bins: BinSpec,
    /// `L̂` integrates up to `cap_factor · max Y`.
    #[serde(default = "default_cap")]
    pub cap_factor: f64,
    #[serde(default)]
    pub fit_window: FitWindow,
    /// Every `output_stride`-th node goes into series CSVs.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_floor")]
    pub excursion_floor: f64,
    #[serde(default)]
    pub left_reference: LeftReference,
    #[serde(default)]
    pub ks: KsConfig,
    /// CSV with a `dW` column replacing the random increments of path 0.
    #[serde(default)]
    pub increments_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

fn default_cap() -> f64 {
    1.5
}
fn default_stride() -> usize {
    64
}
fn default_floor() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// Desk-scale defaults for `tag`.
    pub fn default_for(tag: Tag) -> Self {
        let low = ModelParams::new(0.5, 0.5, 2.0, 1.0).expect("valid defaults");
        let halves: Vec<f64> = (1..=6).map(|i| 2f64.powi(-i)).collect();
        let mut cfg = Self {
            tag,
            params: low,
            grid: GridConfig {
                horizon: 1.0,
                steps: 1 << 17,
            },
            scheme: SchemeChoice::FullTruncationEuler,
            replications: 1,
            seed: DEFAULT_SEED,
            first_stream: 0,
            eps_ladder: vec![1e-3, 1e-4, 1e-5],
            delta_ladder: halves,
            bins: BinSpec::default(),
            cap_factor: default_cap(),
            fit_window: FitWindow::default(),
            output_stride: default_stride(),
            excursion_floor: default_floor(),
            left_reference: LeftReference::default(),
            ks: KsConfig::default(),
            increments_file: None,
            output_dir: PathBuf::from(format!("out/{tag}")),
        };
        match tag {
            Tag::ConvergeRight | Tag::ConvergeLeft => {
                cfg.params = ModelParams::new(1.0, 0.0, 2.0, 1.0).expect("valid defaults");
                cfg.grid.steps = 1 << 16;
                cfg.replications = 50;
            }
            Tag::TransformRoundtrip => {
                cfg.params = ModelParams::new(0.046875, 0.0, 0.5, 4.0).expect("valid defaults");
                cfg.grid.steps = 1 << 14;
            }
            Tag::DistTest => {
                cfg.params = ModelParams::new(0.5, 0.5, 2.0, 1.0).expect("valid defaults");
            }
            _ => {}
        }
        cfg
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Applies `key=value` overrides; `key` may be dotted (`params.a`).
    /// Values are parsed as JSON, falling back to a plain string.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self, HarnessError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override `{s}` is not key=value")))?;
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_dotted(&mut v, key, value)?;
        }
        serde_json::from_value(v).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.grid
            .time_grid()
            .map_err(|e| HarnessError::Config(format!("grid: {e}")))?;
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be at least 1".into()));
        }
        if self.output_stride == 0 {
            return Err(HarnessError::Config("output_stride must be at least 1".into()));
        }
        if self.eps_ladder.iter().any(|&e| !(e > 0.0)) {
            return Err(HarnessError::Config("eps_ladder entries must be positive".into()));
        }
        if self.eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(HarnessError::Config("eps_ladder must be strictly decreasing".into()));
        }
        Ok(())
    }
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), HarnessError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(HarnessError::Config(format!("empty override key `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        for tag in Tag::ALL {
            let c = ExperimentConfig::default_for(tag);
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_json(), c.to_json());
            assert_eq!(tag.as_str().parse::<Tag>().unwrap(), tag);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let c = ExperimentConfig::default_for(Tag::Simulate);
        let mut v = serde_json::to_value(&c).unwrap();
        v["colour"] = Value::from(3);
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(HarnessError::Config(_))));
        assert!(c.with_overrides(&["params.c=1".into()]).is_err());
        assert!(c.with_overrides(&["bins.nope=1".into()]).is_err());
    }

    #[test]
    fn dotted_overrides() {
        let c = ExperimentConfig::default_for(Tag::Simulate);
        let o = c
            .with_overrides(&["params.a=0.25".into(), "grid.steps=1024".into(), "output_dir=elsewhere".into()])
            .unwrap();
        assert_eq!(o.params.a(), 0.25);
        assert_eq!(o.grid.steps, 1024);
        assert_eq!(o.output_dir, PathBuf::from("elsewhere"));
        assert!(c.with_overrides(&["params.a=-1".into()]).is_err());
        assert!(c.with_overrides(&["noequals".into()]).is_err());
    }
}
