use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::dyadic_checkpoints;
use crate::error::{Error, Result};
use crate::matops::{deserialize_reals, Matrix};
use crate::model::{NoiseKind, NoiseModel, SwitchedSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub modes: Vec<Matrix>,
    #[serde(deserialize_with = "deserialize_reals")]
    pub switch_pmf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<SwitchedSystem> {
        SwitchedSystem::new(self.modes.clone(), self.switch_pmf.clone(), self.x0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Matrix>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::GaussianIid,
            covariance: None,
        }
    }
}

impl NoiseSpec {
    pub fn build(&self, n: usize) -> Result<NoiseModel> {
        let cov = self.covariance.clone().unwrap_or_else(|| Matrix::identity(n));
        if cov.rows() != n || cov.cols() != n {
            return Err(Error::Config(format!(
                "noise covariance is {}x{}, state dimension is {n}",
                cov.rows(),
                cov.cols()
            )));
        }
        NoiseModel::new(self.kind.clone(), cov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            ridge: None,
            quantiles: default_quantiles(),
        }
    }
}

fn default_quantiles() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_runs() -> usize {
    30
}

/// One JSON document describing a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub horizon: usize,
    /// Defaults to powers of two from 2⁷ plus the horizon itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub options: Options,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks every invariant and builds the system and noise model.
    pub fn build(&self) -> Result<(SwitchedSystem, NoiseModel)> {
        let sys = self.system.build()?;
        let noise = self.noise.build(sys.n())?;
        Ok((sys, noise))
    }

    pub fn validate(&self) -> Result<()> {
        self.build()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let Some(cps) = &self.checkpoints {
            if cps.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("checkpoints must be strictly increasing".into()));
            }
            if let Some(c) = cps.iter().find(|&&c| c == 0 || c > self.horizon) {
                return Err(Error::Config(format!(
                    "checkpoint {c} outside [1, {}]",
                    self.horizon
                )));
            }
        }
        if let Some(q) = self.options.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(Error::Config(format!("quantile {q} outside (0, 1)")));
        }
        if let Some(r) = self.options.ridge {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("ridge must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn resolved_checkpoints(&self) -> Vec<usize> {
        match &self.checkpoints {
            Some(cps) => cps.clone(),
            None => {
                let mut cps = dyadic_checkpoints(self.horizon);
                if cps.last() != Some(&self.horizon) {
                    cps.push(self.horizon);
                }
                cps
            }
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of run `run`: the first 8 bytes (little endian) of
/// `SHA-256(master_seed.to_le_bytes() ‖ run.to_le_bytes())`, both as u64.
pub fn derive_run_seed(master_seed: u64, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "system": {"modes": [[[0.5]]], "switch_pmf": [1.0]},
        "horizon": 512
    }"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.runs, 30);
        assert_eq!(c.options.quantiles, vec![0.25, 0.5, 0.75]);
        assert_eq!(c.noise, NoiseSpec::default());
        assert_eq!(c.resolved_checkpoints(), vec![128, 256, 512]);
        let mut c2 = c.clone();
        c2.horizon = 30000;
        assert_eq!(c2.resolved_checkpoints().last(), Some(&30000));
        assert_eq!(c2.resolved_checkpoints().len(), 9);
    }

    #[test]
    fn noise_kinds_parse() {
        let text = r#"{
            "system": {"modes": [[[0.5, 0], [0, 0.1]]], "switch_pmf": ["1.0"], "x0": [1, 0]},
            "noise": {"kind": "student_t_iid", "dof": 4, "covariance": [[2, 0], [0, 1]]},
            "horizon": 100
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.noise.kind, NoiseKind::StudentTIid { dof: 4.0 });
        let text = r#"{
            "system": {"modes": [[[0.5]]], "switch_pmf": [1]},
            "noise": {"kind": "scheduled_gaussian", "schedule": [1, 2]},
            "horizon": 100
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(c.noise.kind, NoiseKind::ScheduledGaussian { .. }));
        let again = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn validation_errors() {
        let bad = [
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 100, "checkpoints": [50, 200]}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 100, "checkpoints": [0]}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 100, "checkpoints": [20, 10]}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 100, "runs": 0}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 0}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 10, "options": {"quantiles": [1.0]}}"#,
            r#"{"system": {"modes": [[[0.5]], [[0.2]]], "switch_pmf": [1.0, 0.0]}, "horizon": 10}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 10, "extra": 1}"#,
            r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "noise": {"kind": "gaussian_iid", "covariance": [[1, 0], [0, 1]]}, "horizon": 10}"#,
        ];
        for text in bad {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }

    #[test]
    fn run_seeds_are_stable() {
        assert_eq!(derive_run_seed(7, 3), derive_run_seed(7, 3));
        assert_ne!(derive_run_seed(7, 3), derive_run_seed(7, 4));
        assert_ne!(derive_run_seed(7, 3), derive_run_seed(8, 3));
    }
}
