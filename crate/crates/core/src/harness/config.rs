//! TOML config files for single runs and sweeps.
//!
//! A file is a sweep when it has any of `dt_values`, `ns_values`, `trials`,
//! `output_dir` or a `[base]` table; otherwise it is a flat training config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, write_text, HarnessError};
use crate::trainer::{TrainConfig, TrainError};

/// A sweep over the `(Δt, N_s)` matrix with repeated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub dt_values: Vec<f64>,
    pub ns_values: Vec<usize>,
    pub trials: usize,
    pub output_dir: PathBuf,
    /// Settings shared by every cell; `dt`, `ns` and `seed` are overridden
    /// per cell.
    pub base: TrainConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            dt_values: dt_ladder(DtLadder::Scaled),
            ns_values: vec![1, 4, 10, 40, 100, 400],
            trials: 3,
            output_dir: PathBuf::from("sweep_out"),
            base: TrainConfig::default(),
        }
    }
}

/// The two readings of the dyadic `Δt` ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtLadder {
    /// `2^p × 10⁻⁴`, `p = 0..9`: spans the scale where the error is smallest.
    Scaled,
    /// `2^p`, `p = 0..9`, taken literally.
    Literal,
}

impl std::str::FromStr for DtLadder {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scaled" => Ok(Self::Scaled),
            "literal" => Ok(Self::Literal),
            other => Err(HarnessError::Usage(format!(
                "unknown dt ladder `{other}` (expected scaled or literal)"
            ))),
        }
    }
}

pub fn dt_ladder(kind: DtLadder) -> Vec<f64> {
    let base = match kind {
        DtLadder::Scaled => 1e-4,
        DtLadder::Literal => 1.0,
    };
    (0..10).map(|p| base * f64::from(1u32 << p)).collect()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, reason: String| HarnessError::Invalid {
            field: field.into(),
            reason,
        };
        if self.dt_values.is_empty() {
            return Err(bad("dt_values", "must not be empty".into()));
        }
        if let Some(v) = self.dt_values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(bad("dt_values", format!("entries must be positive, got {v}")));
        }
        if self.ns_values.is_empty() {
            return Err(bad("ns_values", "must not be empty".into()));
        }
        if self.ns_values.contains(&0) {
            return Err(bad("ns_values", "entries must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1".into()));
        }
        self.base.validate().map_err(|e| prefix_base(e))
    }

    /// Restores the full-size settings: 1.5×10⁵ iterations, three hidden
    /// layers of 200, ten trials and a 1001-node evaluation grid.
    pub fn paper_scale(mut self) -> Self {
        self.trials = 10;
        self.base = paper_scale_config(self.base);
        self
    }
}

/// Full-size training settings for a single run.
pub fn paper_scale_config(mut c: TrainConfig) -> TrainConfig {
    c.iterations = 150_000;
    c.hidden = vec![200, 200, 200];
    c.eval_grid = 1001;
    c
}

fn prefix_base(e: TrainError) -> HarnessError {
    match e {
        TrainError::InvalidConfig { field, reason } => HarnessError::Invalid {
            field: format!("base.{field}"),
            reason,
        },
        other => other.into(),
    }
}

fn from_train(e: TrainError) -> HarnessError {
    match e {
        TrainError::InvalidConfig { field, reason } => HarnessError::Invalid {
            field: field.into(),
            reason,
        },
        other => other.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Train(TrainConfig),
    Sweep(SweepSpec),
}

impl ConfigFile {
    pub fn to_toml(&self) -> String {
        match self {
            ConfigFile::Train(c) => toml::to_string(c),
            ConfigFile::Sweep(s) => toml::to_string(s),
        }
        .expect("configs serialize to TOML")
    }
}

const SWEEP_KEYS: [&str; 5] = ["dt_values", "ns_values", "trials", "output_dir", "base"];

/// Parses and validates config text; `origin` labels errors.
pub fn parse_config(text: &str, origin: &Path) -> Result<ConfigFile, HarnessError> {
    let parse_err = |e: toml::de::Error| HarnessError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    };
    let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
    if SWEEP_KEYS.iter().any(|k| table.contains_key(*k)) {
        let spec: SweepSpec = toml::from_str(text).map_err(parse_err)?;
        spec.validate()?;
        Ok(ConfigFile::Sweep(spec))
    } else {
        let c: TrainConfig = toml::from_str(text).map_err(parse_err)?;
        c.validate().map_err(from_train)?;
        Ok(ConfigFile::Train(c))
    }
}

pub fn load_config(path: &Path) -> Result<ConfigFile, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path)
}

/// Writes every field, defaults included.
pub fn save_config(path: &Path, config: &ConfigFile) -> Result<(), HarnessError> {
    write_text(path, &config.to_toml())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::ProblemKind;
    use crate::walker::WalkMode;

    fn parse(text: &str) -> Result<ConfigFile, HarnessError> {
        parse_config(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let ConfigFile::Train(c) = parse("problem = \"poisson\"\nm = 1\n").unwrap() else {
            panic!("expected a training config")
        };
        assert_eq!(c.problem, ProblemKind::Poisson);
        assert_eq!((c.nr, c.nb), (2000, 400));
        assert_eq!((c.beta1, c.beta2), (0.99, 0.99));
        assert_eq!(c, TrainConfig::default());
    }

    #[test]
    fn errors_name_the_field_or_line() {
        match parse("dt = -0.1\n") {
            Err(HarnessError::Invalid { field, .. }) => assert_eq!(field, "dt"),
            other => panic!("{other:?}"),
        }
        match parse("trials = 2\n[base]\nns = 0\n") {
            Err(HarnessError::Invalid { field, .. }) => assert_eq!(field, "base.ns"),
            other => panic!("{other:?}"),
        }
        let e = parse("m = 1\nwalkers = 3\n").unwrap_err().to_string();
        assert!(e.contains("walkers") && e.contains("line 2"), "{e}");
        let e = parse("m = 1\ndt = \n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn round_trips() {
        let c = TrainConfig {
            dt: 3.2e-3,
            mode: WalkMode::BProcess,
            hidden: vec![16, 8],
            lr: 1.0 / 3.0,
            ..Default::default()
        };
        let f = ConfigFile::Train(c);
        assert_eq!(parse(&f.to_toml()).unwrap(), f);
        let s = ConfigFile::Sweep(SweepSpec::default());
        assert_eq!(parse(&s.to_toml()).unwrap(), s);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        save_config(&p, &s).unwrap();
        assert_eq!(load_config(&p).unwrap(), s);
    }

    #[test]
    fn ladders_and_presets() {
        let l = dt_ladder(DtLadder::Scaled);
        assert_eq!(l.len(), 10);
        assert_eq!(l[0], 1e-4);
        assert!((l[9] - 5.12e-2).abs() < 1e-15);
        assert_eq!(dt_ladder(DtLadder::Literal)[9], 512.0);
        let p = SweepSpec::default().paper_scale();
        assert_eq!((p.trials, p.base.iterations, p.base.eval_grid), (10, 150_000, 1001));
        assert_eq!(p.base.hidden, vec![200, 200, 200]);
        let s = SweepSpec {
            dt_values: vec![],
            ..Default::default()
        };
        assert!(matches!(s.validate(), Err(HarnessError::Invalid { field, .. }) if field == "dt_values"));
    }
}
