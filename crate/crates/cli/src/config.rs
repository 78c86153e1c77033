//! Run configuration: a strict JSON file plus command-line and environment
//! overrides.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file, the
//! `CXRNET_DATASET_ROOT` environment variable, command-line flags.

use std::path::{Path, PathBuf};

use cxrnet::datapipe::AugmentConfig;
use cxrnet::layers::DEFAULT_IMAGE_SIZE;
use cxrnet::{AdamConfig, Error, PlateauConfig, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DATASET_ROOT_ENV: &str = "CXRNET_DATASET_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory holding `train/`, `val/` and `test/`, each with `NORMAL/`
    /// and `PNEUMONIA/` subdirectories.
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    /// Checkpoint read by `evaluate` and `predict`; defaults to
    /// `<output_dir>/model.cxrn`.
    pub checkpoint: Option<PathBuf>,
    /// Side of the square network input.
    pub image_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            dataset_root: PathBuf::from("data/chest_xray"),
            output_dir: PathBuf::from("runs/default"),
            checkpoint: None,
            image_size: DEFAULT_IMAGE_SIZE,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: t.seed,
            augment: t.augment,
            adam: t.adam,
            plateau: t.plateau,
        }
    }
}

/// Values given on the command line; `None` leaves the file value alone.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// The command reads a checkpoint: its default location follows the
    /// configured output directory, not `out`.
    pub reads_checkpoint: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Loads and merges every source, then validates the result.
    pub fn resolve(path: Option<&Path>, env_root: Option<PathBuf>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::read(p)?,
            None => Self::default(),
        };
        if let Some(root) = env_root {
            cfg.dataset_root = root;
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = overrides.epochs {
            cfg.epochs = epochs;
        }
        if overrides.reads_checkpoint && cfg.checkpoint.is_none() {
            cfg.checkpoint = Some(cfg.checkpoint_path());
        }
        if let Some(out) = &overrides.out {
            cfg.output_dir = out.clone();
        }
        if let Some(ck) = &overrides.checkpoint {
            cfg.checkpoint = Some(ck.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "image_size must be a positive multiple of 4, got {}",
                self.image_size
            )));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            augment: self.augment,
            adam: self.adam,
            plateau: self.plateau,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model.cxrn"))
    }

    /// Serialized with fixed field order, so equal configs hash equally.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"epochs": 3, "learning_rat": 0.1}"#).unwrap_err();
        assert_eq!(err.category(), "config");
        let err =
            RunConfig::from_json(r#"{"plateau": {"patience": 3, "factor": 0.1, "min_lr": 1e-5, "x": 1}}"#).unwrap_err();
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"seed": 1, "epochs": 5, "dataset_root": "from-file", "output_dir": "o"}"#,
        )
        .unwrap();
        let cfg = RunConfig::resolve(Some(&path), None, &Overrides::default()).unwrap();
        assert_eq!((cfg.seed, cfg.epochs), (1, 5));
        assert_eq!(cfg.dataset_root, PathBuf::from("from-file"));
        let over = Overrides {
            seed: Some(7),
            out: Some("elsewhere".into()),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(Some(&path), Some("from-env".into()), &over).unwrap();
        assert_eq!((cfg.seed, cfg.epochs), (7, 5));
        assert_eq!(cfg.dataset_root, PathBuf::from("from-env"));
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("elsewhere/model.cxrn"));
        let reader = Overrides {
            reads_checkpoint: true,
            ..over
        };
        let cfg = RunConfig::resolve(Some(&path), None, &reader).unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("o/model.cxrn"));
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            r#"{"batch_size": 0}"#,
            r#"{"image_size": 30}"#,
            r#"{"learning_rate": -1}"#,
        ] {
            let cfg = RunConfig::from_json(bad).unwrap();
            assert_eq!(cfg.validate().unwrap_err().category(), "config", "{bad}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.seed = 1;
        assert_ne!(a.sha256(), b.sha256());
        assert_eq!(a.sha256().len(), 64);
    }
}
