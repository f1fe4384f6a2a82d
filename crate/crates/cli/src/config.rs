//! Training run configuration (TOML).
//!
//! ```toml
//! train_manifest = "train.tsv"   # relative paths resolve against this file's directory
//! out_dir = "runs/log-fbank-masking"
//! method = "log-fbank masking"
//! layers = 2
//! cells = 64
//! epochs = 50
//! learning_rate = 0.001
//! momentum = 0.9
//! batch_size = 4
//! clip_norm = 5.0
//! seed = 0
//! checkpoint_every = 0
//! ```
//! Only `method` is required in the file; the paths may come from flags instead.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sepf::training::TrainingConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub train_manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub training: TrainingConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            msg: e.message().to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.train_manifest, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_config_dir() {
        let cfg = RunConfig::parse(
            "train_manifest = \"data/train.tsv\"\nout_dir = \"/abs/run\"\nmethod = \"fft masking\"\nepochs = 7\n",
            Path::new("/work/run.toml"),
        )
        .unwrap();
        assert_eq!(cfg.train_manifest.unwrap(), PathBuf::from("/work/data/train.tsv"));
        assert_eq!(cfg.out_dir.unwrap(), PathBuf::from("/abs/run"));
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.seed, 0);
    }

    #[test]
    fn bad_method_lists_valid_names() {
        let err = RunConfig::parse("method = \"fbank mapping\"\n", Path::new("run.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("run.toml"), "{msg}");
        for m in sepf::MethodConfig::ALL {
            assert!(msg.contains(&m.name()), "{msg}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::parse("method = \"log-fft SA\"\nseed = 4\n", Path::new("r.toml")).unwrap();
        let again = RunConfig::parse(&cfg.to_toml(), Path::new("r.toml")).unwrap();
        assert_eq!(again.training, cfg.training);
    }
}
