//! Run configuration: defaults, TOML file, environment and flag overrides.
//!
//! Precedence, lowest first: built-in defaults, the `--config` file, the
//! `XRAYCLIP_DATA_ROOT` environment variable, command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::splits::DEFAULT_VAL_FRACTION;
use crate::error::{Error, Result};
use crate::model::backend::BackendDescriptor;
use crate::model::freeze::FreezePolicy;
use crate::model::prompts::PromptSet;
use crate::model::stub::StubConfig;
use crate::train::{AdaptationConfig, FewShotConfig};

pub const DATA_ROOT_ENV: &str = "XRAYCLIP_DATA_ROOT";

const FIXTURE_PRESET: &str = include_str!("../../assets/fixture.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Real,
    Stub,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "real" => Ok(BackendKind::Real),
            "stub" => Ok(BackendKind::Stub),
            other => Err(format!("unknown backend {other:?} (expected real or stub)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub backend: BackendKind,
    pub weights_path: Option<PathBuf>,
    /// Run seed. Overrides the seeds of the adaptation, few-shot and stub
    /// sections.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Fraction of train/val patients held out for validation.
    pub val_fraction: f64,
    /// Prompt temperature; the encoder's logit scale when absent.
    pub temperature: Option<f64>,
    pub freeze: FreezePolicy,
    pub adaptation: AdaptationConfig,
    pub fewshot: FewShotConfig,
    pub prompts: PromptSet,
    pub stub: StubConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            backend: BackendKind::Stub,
            weights_path: None,
            seed: crate::seed::DEFAULT_SEED,
            output_dir: PathBuf::from("runs"),
            val_fraction: DEFAULT_VAL_FRACTION,
            temperature: None,
            freeze: FreezePolicy::default(),
            adaptation: AdaptationConfig::default(),
            fewshot: FewShotConfig::default(),
            prompts: PromptSet::default(),
            stub: StubConfig::default(),
        }
    }
}

/// Values supplied on the command line; `None` leaves the lower layer alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub data_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub weights_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    /// Settings tuned for the synthetic fixture and the stub backend.
    pub fn fixture_preset() -> Self {
        let mut cfg = Self::from_toml(FIXTURE_PRESET).expect("bundled preset parses");
        cfg.propagate_seed();
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Layers file, environment and flags over the defaults, then validates.
    pub fn resolve(overrides: &Overrides, env_data_root: Option<String>) -> Result<Self> {
        let mut cfg = match &overrides.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::Config(vec![format!("config file {} not found", path.display())]),
                    _ => Error::file(path, e),
                })?;
                Self::from_toml(&text).map_err(|e| match e {
                    Error::Config(p) => Error::Config(p.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
                    other => other,
                })?
            }
            None => Self::default(),
        };
        if let Some(root) = env_data_root.filter(|s| !s.is_empty()) {
            log::info!("data_root taken from {DATA_ROOT_ENV}={root}");
            cfg.data_root = PathBuf::from(root);
        }
        if let Some(v) = &overrides.data_root {
            cfg.data_root = v.clone();
        }
        if let Some(v) = overrides.seed {
            cfg.seed = v;
        }
        if let Some(v) = &overrides.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = overrides.backend {
            cfg.backend = v;
        }
        if let Some(v) = &overrides.weights_path {
            cfg.weights_path = Some(v.clone());
        }
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn propagate_seed(&mut self) {
        self.adaptation.seed = self.seed;
        self.fewshot.seed = self.seed;
        self.stub.seed = self.seed;
    }

    /// Every problem at once, as one `Error::Config`.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.backend == BackendKind::Real && self.weights_path.is_none() {
            problems.push("backend = \"real\" requires weights_path".to_string());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            problems.push(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                problems.push(format!("temperature {t} must be positive"));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            problems.push("output_dir is empty".to_string());
        }
        if self.stub.embed_dim == 0 || self.stub.n_blocks == 0 {
            problems.push("stub embed_dim and n_blocks must be positive".to_string());
        }
        if let Err(Error::Config(p)) = self.prompts.validate() {
            problems.extend(p);
        }
        problems.extend(self.adaptation.problems());
        problems.extend(self.fewshot.problems());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn backend_descriptor(&self) -> Result<BackendDescriptor> {
        match self.backend {
            BackendKind::Stub => Ok(BackendDescriptor::Stub(self.stub.clone())),
            BackendKind::Real => Ok(BackendDescriptor::Real {
                weights_path: self
                    .weights_path
                    .clone()
                    .ok_or_else(|| Error::Config(vec!["backend = \"real\" requires weights_path".into()]))?,
            }),
        }
    }

    /// SHA-256 over the canonical JSON form, ignoring `output_dir`.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.output_dir.join(stage)
    }

    pub fn data_path(&self, name: &str) -> PathBuf {
        self.data_root.join(name)
    }

    pub fn with_data_root(mut self, root: &Path) -> Self {
        self.data_root = root.to_path_buf();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::resolve(&Overrides::default(), None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.adaptation.batch_size, 32);
        assert_eq!(cfg.fewshot.batch_size, 16);
    }

    #[test]
    fn real_backend_needs_weights_and_all_errors_are_listed() {
        let cfg = RunConfig {
            backend: BackendKind::Real,
            val_fraction: 2.0,
            ..RunConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config(p)) => {
                assert_eq!(p.len(), 2, "{p:?}");
                assert!(p[0].contains("weights_path"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precedence_file_env_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "data_root = \"from_file\"\nseed = 3\n[adaptation]\nmax_epochs = 4\n").unwrap();
        let mut ov = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(&ov, None).unwrap();
        assert_eq!(cfg.data_root, PathBuf::from("from_file"));
        assert_eq!((cfg.seed, cfg.adaptation.seed, cfg.fewshot.seed), (3, 3, 3));
        assert_eq!(cfg.adaptation.max_epochs, 4);
        let cfg = RunConfig::resolve(&ov, Some("from_env".into())).unwrap();
        assert_eq!(cfg.data_root, PathBuf::from("from_env"));
        ov.data_root = Some("from_flag".into());
        ov.seed = Some(11);
        let cfg = RunConfig::resolve(&ov, Some("from_env".into())).unwrap();
        assert_eq!(cfg.data_root, PathBuf::from("from_flag"));
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn fixture_preset_is_valid() {
        let cfg = RunConfig::fixture_preset();
        cfg.validate().unwrap();
        assert_eq!(cfg.adaptation.head_lr, 3e-3);
        assert_eq!(cfg.adaptation.augmentation.hflip_prob, 0.0);
        assert_eq!(cfg.fewshot, FewShotConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..RunConfig::default()
        };
        let c = RunConfig {
            seed: 8,
            ..RunConfig::default()
        };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
