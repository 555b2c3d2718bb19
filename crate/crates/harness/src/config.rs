//! JSON experiment configs: which game, which update law, how long, where
//! the logs go. A config is self-contained and hashable, so a run can be
//! tied back to the exact inputs that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use halypo_core::games::markov::{self, MarkovSpec, TabularMarkovGame};
use halypo_core::games::{BilinearRotationGame, QuadraticGame};
use halypo_core::{OptimizerConfig, RunGame};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Which game the run drives. Quadratic matrices are row-major nested lists;
/// Markov games come either from a bundled fixture name or an inline table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    Bilinear,
    Quadratic {
        q_i: Vec<Vec<Vec<f64>>>,
        b_i: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        block_dims: Vec<usize>,
    },
    Markov {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixture: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<MarkovSpec>,
    },
}

fn to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError::Invalid(format!("{name} has no rows")));
    }
    let ncols = rows[0].len();
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(ConfigError::Invalid(format!(
                "{name} is ragged: row 0 has {ncols} entries, row {r} has {}",
                row.len()
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl GameSpec {
    pub fn build(&self) -> Result<RunGame, ConfigError> {
        match self {
            GameSpec::Bilinear => Ok(RunGame::Bilinear(BilinearRotationGame::new())),
            GameSpec::Quadratic { q_i, b_i, q, b, block_dims } => {
                let q_i = q_i
                    .iter()
                    .enumerate()
                    .map(|(i, m)| to_matrix(m, &format!("q_i[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let b_i = b_i.iter().map(|v| DVector::from_column_slice(v)).collect();
                let game = QuadraticGame::new(
                    q_i,
                    b_i,
                    to_matrix(q, "q")?,
                    DVector::from_column_slice(b),
                    block_dims.clone(),
                )
                .map_err(|e| ConfigError::Invalid(format!("quadratic game: {e}")))?;
                Ok(RunGame::Quadratic(game))
            }
            GameSpec::Markov { fixture, spec } => match (fixture, spec) {
                (Some(name), None) => match name.as_str() {
                    "two_state" => Ok(RunGame::Markov(markov::two_state())),
                    "single_state_bandit" => Ok(RunGame::Markov(markov::single_state_bandit())),
                    other => Err(ConfigError::Invalid(format!(
                        "unknown markov fixture {other:?}; bundled fixtures are \
                         \"two_state\" and \"single_state_bandit\""
                    ))),
                },
                (None, Some(spec)) => TabularMarkovGame::new(spec.clone())
                    .map(RunGame::Markov)
                    .map_err(|e| ConfigError::Invalid(format!("markov spec: {e}"))),
                _ => Err(ConfigError::Invalid(
                    "markov game needs exactly one of `fixture` or `spec`".into(),
                )),
            },
        }
    }
}

/// Initial joint parameters: given outright, or drawn once from an isotropic
/// Gaussian with a fixed seed so the run stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Theta0 {
    Explicit { values: Vec<f64> },
    RandomGaussian { scale: f64, seed: u64 },
}

impl Theta0 {
    pub fn realize(&self, dim: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            Theta0::Explicit { values } => {
                if values.len() != dim {
                    return Err(ConfigError::Invalid(format!(
                        "theta0 has {} entries but the game has dimension {dim}",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
            Theta0::RandomGaussian { scale, seed } => {
                let normal = Normal::new(0.0, *scale)
                    .map_err(|e| ConfigError::Invalid(format!("theta0 scale: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..dim).map(|_| normal.sample(&mut rng)).collect())
            }
        }
    }
}

/// Where a run's outputs land; any subset may be omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn default_log_every() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameSpec,
    pub optimizer: OptimizerConfig,
    pub n_steps: usize,
    pub theta0: Theta0,
    /// Keep every `log_every`-th step record (the final step always stays).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json_str(&text)
    }

    /// Builds the game and checks every cross-field constraint the serde
    /// layer cannot see (dimensions, positivity, optimizer invariants).
    pub fn validate(&self) -> Result<RunGame, ConfigError> {
        if self.n_steps == 0 {
            return Err(ConfigError::Invalid("n_steps must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(ConfigError::Invalid("log_every must be >= 1".into()));
        }
        self.optimizer
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("optimizer: {e}")))?;
        if let Theta0::RandomGaussian { scale, .. } = &self.theta0 {
            if !scale.is_finite() || *scale <= 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "theta0 scale must be positive, got {scale}"
                )));
            }
        }
        let game = self.game.build()?;
        let dim = game.as_game().layout().dim();
        self.theta0.realize(dim)?;
        Ok(game)
    }

    /// SHA-256 of the config's canonical JSON, hex-encoded. Two runs share a
    /// fingerprint exactly when they were launched from the same config.
    #[must_use]
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use halypo_core::{Game, Schedule, Variant};

    fn bilinear_json() -> String {
        r#"{
            "game": {"kind": "bilinear"},
            "optimizer": {
                "variant": "halypo",
                "schedule": {"kind": "constant", "eta": 0.1}
            },
            "n_steps": 200,
            "theta0": {"kind": "explicit", "values": [1.0, 0.0]}
        }"#
        .to_string()
    }

    #[test]
    fn parses_a_minimal_config_with_defaults() {
        let cfg = RunConfig::from_json_str(&bilinear_json()).unwrap();
        assert_eq!(cfg.log_every, 1);
        assert_eq!(cfg.optimizer.variant, Variant::Halypo);
        assert_eq!(cfg.optimizer.sigma, 1.0);
        assert!(cfg.output.csv.is_none());
        assert!(matches!(cfg.game.build().unwrap(), RunGame::Bilinear(_)));
    }

    #[test]
    fn rejects_unknown_fields_by_name() {
        let bad = bilinear_json().replace("\"n_steps\"", "\"n_stpes\"");
        let err = RunConfig::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("n_stpes"), "got: {err}");
    }

    #[test]
    fn rejects_mismatched_theta0_dimension() {
        let bad = bilinear_json().replace("[1.0, 0.0]", "[1.0, 0.0, 0.0]");
        let err = RunConfig::from_json_str(&bad).unwrap_err();
        assert!(err.to_string().contains("dimension 2"), "got: {err}");
    }

    #[test]
    fn markov_spec_needs_exactly_one_source() {
        let neither = GameSpec::Markov { fixture: None, spec: None };
        assert!(neither.build().is_err());
        let named = GameSpec::Markov { fixture: Some("two_state".into()), spec: None };
        let game = named.build().unwrap();
        assert_eq!(game.as_game().layout().dim(), 8);
        let unknown = GameSpec::Markov { fixture: Some("three_state".into()), spec: None };
        let err = unknown.build().unwrap_err();
        assert!(err.to_string().contains("three_state"), "got: {err}");
    }

    #[test]
    fn quadratic_spec_round_trips_the_worked_example() {
        let spec = GameSpec::Quadratic {
            q_i: vec![
                vec![vec![-1.0, 2.0], vec![2.0, 0.0]],
                vec![vec![0.0, -2.0], vec![-2.0, -1.0]],
            ],
            b_i: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            q: vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            b: vec![0.0, 0.0],
            block_dims: vec![1, 1],
        };
        let RunGame::Quadratic(g) = spec.build().unwrap() else {
            panic!("expected a quadratic game")
        };
        assert_eq!(g.exact_smoothness(), Some(4.0));
    }

    #[test]
    fn ragged_matrix_is_rejected_with_the_row_index() {
        let spec = GameSpec::Quadratic {
            q_i: vec![vec![vec![1.0, 0.0], vec![0.0]]],
            b_i: vec![vec![0.0, 0.0]],
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![0.0, 0.0],
            block_dims: vec![2],
        };
        let err = spec.build().unwrap_err();
        assert!(err.to_string().contains("row 1"), "got: {err}");
    }

    #[test]
    fn gaussian_theta0_is_seed_deterministic() {
        let t = Theta0::RandomGaussian { scale: 0.5, seed: 7 };
        let a = t.realize(6).unwrap();
        let b = t.realize(6).unwrap();
        assert_eq!(a, b);
        let other = Theta0::RandomGaussian { scale: 0.5, seed: 8 }.realize(6).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn fingerprint_tracks_content_not_formatting() {
        let a = RunConfig::from_json_str(&bilinear_json()).unwrap();
        let spaced = bilinear_json().replace("200", " 200 ");
        let b = RunConfig::from_json_str(&spaced).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let changed = bilinear_json().replace("200", "201");
        let c = RunConfig::from_json_str(&changed).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn schedule_variants_parse_from_tagged_json() {
        let cfg = RunConfig::from_json_str(
            &bilinear_json().replace(
                r#"{"kind": "constant", "eta": 0.1}"#,
                r#"{"kind": "robbins_monro", "eta0": 0.5, "p": 1.0}"#,
            ),
        )
        .unwrap();
        assert_eq!(cfg.optimizer.schedule, Schedule::RobbinsMonro { eta0: 0.5, p: 1.0 });
    }
}
