use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Dgf;
use crate::network::NetworkSpec;
use crate::solver::NoiseModel;

pub const SCHEMA_VERSION: u32 = 1;

/// A complete experiment description. See `configs/` for examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub epsilon: f64,
    /// Seeds the oracle noise. Problem data and the starting point come from
    /// the problem's own seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_override: Option<usize>,
    #[serde(default)]
    pub geometry: GeometryChoice,
    /// Record wall-clock times; off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub network: NetworkSpec,
    pub mode: ModeSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryChoice {
    #[default]
    Euclidean,
    Entropy,
}

impl GeometryChoice {
    pub fn dgf(self) -> Dgf {
        match self {
            GeometryChoice::Euclidean => Dgf::SquaredEuclidean,
            GeometryChoice::Entropy => Dgf::NegativeEntropy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    MatchingPennies {
        #[serde(default)]
        seed: u64,
    },
    RandomMatrixGame {
        dx: usize,
        dy: usize,
        seed: u64,
    },
    L1Saddle {
        dx: usize,
        dy: usize,
        radius: f64,
        seed: u64,
    },
    /// An instance file; relative paths resolve against the config file.
    File {
        path: PathBuf,
        #[serde(default)]
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn seed(&self) -> u64 {
        match self {
            ProblemSpec::MatchingPennies { seed }
            | ProblemSpec::RandomMatrixGame { seed, .. }
            | ProblemSpec::L1Saddle { seed, .. }
            | ProblemSpec::File { seed, .. } => *seed,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ProblemSpec::MatchingPennies { .. } => "matching_pennies",
            ProblemSpec::RandomMatrixGame { .. } => "random_matrix_game",
            ProblemSpec::L1Saddle { .. } => "l1_saddle",
            ProblemSpec::File { .. } => "file",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    TruncatedGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    Deterministic,
    /// Noisy operator; the run targets accuracy `p ε` in expectation so that
    /// the gap is below `ε` with probability at least `1 - p`.
    Stochastic { sigma: f64, noise: NoiseKind, p: f64 },
}

impl ModeSpec {
    pub fn noise_model(&self) -> NoiseModel {
        match *self {
            ModeSpec::Deterministic => NoiseModel::None,
            ModeSpec::Stochastic { sigma, .. } if sigma == 0.0 => NoiseModel::None,
            ModeSpec::Stochastic {
                sigma,
                noise: NoiseKind::Uniform,
                ..
            } => NoiseModel::Uniform { sigma },
            ModeSpec::Stochastic {
                sigma,
                noise: NoiseKind::TruncatedGaussian,
                ..
            } => NoiseModel::TruncatedGaussian { sigma },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            );
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", format!("must be finite and > 0, got {}", self.epsilon));
        }
        if self.network.m == 0 {
            return bad("network.m", "must be >= 1".into());
        }
        if self.n_override == Some(0) {
            return bad("n_override", "must be >= 1".into());
        }
        if let ModeSpec::Stochastic { sigma, p, .. } = self.mode {
            if !(p > 0.0 && p < 1.0) {
                return bad("mode.p", format!("must lie in (0, 1), got {p}"));
            }
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return bad("mode.sigma", format!("must be finite and >= 0, got {sigma}"));
            }
        }
        match &self.problem {
            ProblemSpec::RandomMatrixGame { dx, dy, .. } | ProblemSpec::L1Saddle { dx, dy, .. }
                if *dx == 0 || *dy == 0 =>
            {
                return bad("problem.dx/dy", "dimensions must be >= 1".into());
            }
            ProblemSpec::L1Saddle { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => {
                return bad("problem.radius", format!("must be finite and > 0, got {radius}"));
            }
            _ => {}
        }
        if self.geometry == GeometryChoice::Entropy
            && matches!(self.problem, ProblemSpec::L1Saddle { .. })
        {
            return bad("geometry", "entropy needs simplex sets; l1_saddle lives on boxes".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates a config; a relative instance path is rebased on
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let ProblemSpec::File { path: inst, .. } = &mut cfg.problem {
            if inst.is_relative() {
                if let Some(dir) = path.parent() {
                    *inst = dir.join(&*inst);
                }
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Topology;

    pub(crate) fn sample() -> RunConfig {
        RunConfig {
            schema_version: 1,
            epsilon: 0.05,
            seed: 3,
            n_override: None,
            geometry: GeometryChoice::Euclidean,
            timing: false,
            out: None,
            problem: ProblemSpec::MatchingPennies { seed: 0 },
            network: NetworkSpec {
                topology: Topology::Ring,
                m: 4,
            },
            mode: ModeSpec::Stochastic {
                sigma: 0.1,
                noise: NoiseKind::Uniform,
                p: 0.25,
            },
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let cfg = sample();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut cfg = sample();
        cfg.epsilon = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
        let mut cfg = sample();
        cfg.mode = ModeSpec::Stochastic {
            sigma: 0.1,
            noise: NoiseKind::Uniform,
            p: 1.0,
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("mode.p"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = sample().to_toml().unwrap() + "\nbogus = 1\n";
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn zero_sigma_is_silent() {
        let m = ModeSpec::Stochastic {
            sigma: 0.0,
            noise: NoiseKind::TruncatedGaussian,
            p: 0.5,
        };
        assert_eq!(m.noise_model(), NoiseModel::None);
    }
}
