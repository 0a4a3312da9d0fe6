//! Versioned JSON container for trained state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "dpcmf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    /// Number of completed iterations.
    pub iteration: usize,
    pub seed: u64,
    pub items: DenseMatrix,
    pub features: DenseMatrix,
    /// Never written in private modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<DenseMatrix>,
}

impl Checkpoint {
    pub fn new(
        config: TrainConfig,
        iteration: usize,
        items: DenseMatrix,
        features: DenseMatrix,
        users: Option<DenseMatrix>,
    ) -> Self {
        let users = if config.mode.is_private() { None } else { users };
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            seed: config.seed,
            config,
            iteration,
            items,
            features,
            users,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported container {:?} version {}",
                ck.format, ck.version
            )));
        }
        if ck.config.mode.is_private() && ck.users.is_some() {
            return Err(Error::Checkpoint("private checkpoint holds user embeddings".into()));
        }
        Ok(ck)
    }

    /// Whether training under `config` can continue from this state.
    pub fn check_compatible(&self, config: &TrainConfig, num_items: usize) -> Result<()> {
        if self.items.rows() != num_items || self.items.cols() != config.dim {
            return Err(Error::Checkpoint(format!(
                "item embeddings are {}x{}, run expects {num_items}x{}",
                self.items.rows(),
                self.items.cols(),
                config.dim
            )));
        }
        if self.iteration > config.iters {
            return Err(Error::Checkpoint(format!(
                "checkpoint is at iteration {}, run stops at {}",
                self.iteration, config.iters
            )));
        }
        // The privacy budget is spread over all `iters` iterations, so a private
        // run may only continue under the exact config it started with.
        let mut expected = self.config.clone();
        if !config.mode.is_private() {
            expected.iters = config.iters;
        }
        if self.seed != config.seed || expected != *config {
            return Err(Error::Checkpoint(
                "checkpoint was written under a different config".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Mode;

    #[test]
    fn private_checkpoints_drop_users() {
        let cfg = TrainConfig::private(Mode::Dpcmf, 1.0, 1e-5, 5.0, 1.0);
        let ck = Checkpoint::new(
            cfg,
            3,
            DenseMatrix::zeros(2, 16),
            DenseMatrix::zeros(1, 16),
            Some(DenseMatrix::zeros(4, 16)),
        );
        assert!(ck.users.is_none());
    }

    #[test]
    fn save_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let items = DenseMatrix::from_rows(&[[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]]).unwrap();
        let cfg = TrainConfig {
            dim: 2,
            ..TrainConfig::default()
        };
        let ck = Checkpoint::new(cfg, 2, items, DenseMatrix::zeros(0, 2), Some(DenseMatrix::identity(2)));
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);

        std::fs::write(&path, r#"{"format":"other"}"#).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn private_resume_needs_identical_config() {
        let cfg = TrainConfig::private(Mode::Dpals, 1.0, 1e-5, 5.0, 1.0);
        let ck = Checkpoint::new(cfg.clone(), 2, DenseMatrix::zeros(3, 16), DenseMatrix::zeros(0, 16), None);
        assert!(ck.check_compatible(&cfg, 3).is_ok());
        let longer = TrainConfig { iters: 20, ..cfg.clone() };
        assert!(ck.check_compatible(&longer, 3).is_err());
        let other_eps = TrainConfig { epsilon: Some(2.0), ..cfg };
        assert!(ck.check_compatible(&other_eps, 3).is_err());

        let plain = TrainConfig::default();
        let ck = Checkpoint::new(plain.clone(), 2, DenseMatrix::zeros(3, 16), DenseMatrix::zeros(0, 16), None);
        assert!(ck.check_compatible(&TrainConfig { iters: 30, ..plain.clone() }, 3).is_ok());
        assert!(ck.check_compatible(&TrainConfig { lambda: 2.0, ..plain }, 3).is_err());
    }
}
