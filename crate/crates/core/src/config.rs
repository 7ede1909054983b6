//! Versioned TOML experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::AlsConfig;
use crate::confidence::ConfidenceKind;
use crate::dataset::SplitKind;
use crate::diagnostics::{C1Thresholds, DEFAULT_FRACTIONS};
use crate::error::{Error, Result};
use crate::exceptions::DEFAULT_BINARIZATION;
use crate::recal::RecalConfig;
use crate::stats::LogisticOptions;
use crate::synthetic::{Preregistration, WorldSpec};

pub const CONFIG_VERSION: u32 = 1;

/// Default dataset location, relative to the data directory.
pub const DEFAULT_DATA_PATH: &str = "ml-100k/u.data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub backbone: AlsConfig,
    #[serde(default)]
    pub confidence: ConfidenceConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bands: Bands,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            backbone: AlsConfig::default(),
            confidence: ConfidenceConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            adaptive: AdaptiveConfig::default(),
            synthetic: SyntheticConfig::default(),
            output: OutputConfig::default(),
            bands: Bands::default(),
        }
    }
}

/// Either a ratings file or a simulated world exported as ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Relative paths resolve against the data directory.
    pub path: PathBuf,
    pub synthetic: Option<WorldSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from(DEFAULT_DATA_PATH),
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub kinds: Vec<SplitKind>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            kinds: SplitKind::ALL.to_vec(),
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfidenceConfig {
    pub kinds: Vec<ConfidenceKind>,
    pub ensemble_seeds: Vec<u64>,
    pub half_split_seed: u64,
    pub random_seed: u64,
    pub window_days: f64,
    pub logistic_l2: f64,
    pub logistic_max_iter: usize,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            kinds: ConfidenceKind::ALL.to_vec(),
            ensemble_seeds: (0..5).collect(),
            half_split_seed: 0,
            random_seed: 0,
            window_days: 30.0,
            logistic_l2: 1.0,
            logistic_max_iter: 200,
        }
    }
}

impl ConfidenceConfig {
    pub fn logistic(&self) -> LogisticOptions {
        LogisticOptions {
            l2: self.logistic_l2,
            max_iter: self.logistic_max_iter,
            ..LogisticOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub fractions: Vec<f64>,
    pub c2_bins: usize,
    pub ece_bins: usize,
    /// A rating prediction counts as accurate when within this many stars.
    pub accuracy_tolerance: f64,
    pub c1: C1Thresholds,
    pub binarization: Vec<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            c2_bins: 10,
            ece_bins: 10,
            accuracy_tolerance: 1.0,
            c1: C1Thresholds::default(),
            binarization: DEFAULT_BINARIZATION.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    pub n_blocks: usize,
    /// Most recent train ratings used as the first block's window.
    pub train_tail: usize,
    /// Abstention fraction at which static and adaptive RMSE are compared.
    pub compare_fraction: f64,
    pub recal: RecalConfig,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            n_blocks: 4,
            train_tail: 5000,
            compare_fraction: 0.15,
            recal: RecalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub structural: WorldSpec,
    pub contextual: WorldSpec,
    pub seeds: Vec<u64>,
    pub preregistration: Preregistration,
    pub sweep_sigmas: Vec<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let pre = Preregistration::default();
        Self {
            structural: WorldSpec::default(),
            contextual: WorldSpec::default().with_drift(0.5),
            seeds: (0..pre.n_seeds).collect(),
            preregistration: pre,
            sweep_sigmas: vec![0.0, 0.1, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Expected ranges for headline numbers on MovieLens 100K. A miss prints a
/// WARN line and does not change the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bands {
    pub mf_rmse_temporal: [f64; 2],
    pub global_mean_rmse_temporal: [f64; 2],
    pub ks_stat_temporal: [f64; 2],
    pub auc_train: [f64; 2],
    pub auc_test: [f64; 2],
    pub min_exception_rate_ratio: f64,
}

impl Default for Bands {
    fn default() -> Self {
        Self {
            mf_rmse_temporal: [1.007, 1.047],
            global_mean_rmse_temporal: [1.109, 1.129],
            ks_stat_temporal: [0.155, 0.215],
            auc_train: [0.68, 0.74],
            auc_test: [0.59, 0.65],
            min_exception_rate_ratio: 2.5,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return bad("split.test_fraction must lie in (0, 1)".into());
        }
        if self.split.kinds.is_empty() {
            return bad("split.kinds is empty".into());
        }
        if self.backbone.rank == 0 || !(self.backbone.lambda > 0.0) {
            return bad("backbone needs rank >= 1 and lambda > 0".into());
        }
        let f = &self.diagnostics.fractions;
        if f.is_empty() || f.iter().any(|x| !(0.0..1.0).contains(x)) || f.windows(2).any(|w| w[0] >= w[1]) {
            return bad("diagnostics.fractions must be increasing values in [0, 1)".into());
        }
        if self.diagnostics.c2_bins == 0 || self.diagnostics.ece_bins == 0 {
            return bad("bin counts must be >= 1".into());
        }
        if self.confidence.kinds.contains(&ConfidenceKind::Ensemble) && self.confidence.ensemble_seeds.len() < 2 {
            return bad("confidence.ensemble_seeds needs at least 2 seeds".into());
        }
        if !(self.confidence.window_days > 0.0) {
            return bad("confidence.window_days must be > 0".into());
        }
        if self.adaptive.n_blocks == 0 || self.adaptive.recal.n_bins == 0 {
            return bad("adaptive.n_blocks and adaptive.recal.n_bins must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.adaptive.recal.alpha) {
            return bad("adaptive.recal.alpha must lie in [0, 1]".into());
        }
        if let Some(w) = &self.data.synthetic {
            w.validate()?;
        }
        self.synthetic.structural.validate()?;
        self.synthetic.contextual.validate()?;
        Ok(())
    }

    /// Replaces every seed with values derived from `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.backbone.seed = seed;
        self.confidence.half_split_seed = seed;
        self.confidence.random_seed = seed;
        let n = self.confidence.ensemble_seeds.len() as u64;
        self.confidence.ensemble_seeds = (seed..seed + n).collect();
        let n = self.synthetic.seeds.len() as u64;
        self.synthetic.seeds = (seed..seed + n).collect();
        if let Some(w) = &mut self.data.synthetic {
            w.seed = seed;
        }
    }

    pub fn data_path(&self, data_dir: &Path) -> PathBuf {
        if self.data.path.is_absolute() {
            self.data.path.clone()
        } else {
            data_dir.join(&self.data.path)
        }
    }

    /// Every seed the run consumes, by role.
    pub fn seeds(&self) -> serde_json::Value {
        serde_json::json!({
            "split": self.split.seed,
            "backbone": self.backbone.seed,
            "ensemble": self.confidence.ensemble_seeds,
            "half_split": self.confidence.half_split_seed,
            "random_control": self.confidence.random_seed,
            "synthetic": self.synthetic.seeds,
            "synthetic_data": self.data.synthetic.map(|w| w.seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_toml_str("version = 1").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_toml_str("version = 1\n[backbone]\nrnak = 3\n").unwrap_err();
        assert!(e.to_string().contains("rnak"), "{e}");
        let e = ExperimentConfig::from_toml_str("version = 1\nbogus = true\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn version_is_checked() {
        assert!(ExperimentConfig::from_toml_str("version = 2").is_err());
        assert!(ExperimentConfig::from_toml_str("").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.data.synthetic = Some(WorldSpec::default().with_drift(0.2));
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seed_override_reaches_every_role() {
        let mut c = ExperimentConfig::default();
        c.override_seed(7);
        assert_eq!(c.split.seed, 7);
        assert_eq!(c.backbone.seed, 7);
        assert_eq!(c.confidence.ensemble_seeds, vec![7, 8, 9, 10, 11]);
        assert_eq!(c.synthetic.seeds[0], 7);
    }

    #[test]
    fn bad_fractions_rejected() {
        let e = ExperimentConfig::from_toml_str("version = 1\n[diagnostics]\nfractions = [0.1, 0.05]\n");
        assert!(e.is_err());
    }
}
