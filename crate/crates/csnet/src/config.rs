//! Run configuration: model, training and metric settings merged from a
//! flat dotted-key text file plus command-line overrides. Unknown keys
//! are rejected with the offending path named, so typos fail loudly.

use crate::error::{CsError, Result};
use crate::metrics::MetricConfig;
use crate::model::CsNetConfig;
use crate::train::TrainConfig;
use std::path::Path;

/// The merged configuration driving a run.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub model: CsNetConfig,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
}

impl RunConfig {
    /// Desk-scale profile (small clouds, narrow layers, small batches).
    pub fn desk() -> RunConfig {
        RunConfig {
            model: CsNetConfig::desk(),
            train: TrainConfig::desk(),
            metrics: MetricConfig::default(),
        }
    }

    /// Parse a config file: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CsError::Config(format!(
                "{} line {}: expected 'key = value', got '{}'",
                path.display(),
                lineno + 1,
                line
            )))?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                CsError::Config(format!("{} line {}: {}", path.display(), lineno + 1, e))
            })?;
        }
        Ok(())
    }

    /// Apply `key=value` command-line overrides, which win over file
    /// values because they are applied after the file.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                CsError::Config(format!("override '{}': expected key=value", item))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one field by dotted path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str, kind: &str) -> Result<T> {
            value.parse().map_err(|_| {
                CsError::Config(format!("key '{}': '{}' is not a valid {}", key, value, kind))
            })
        }
        let int = |v: &str| parse::<usize>(key, v, "integer");
        let num = |v: &str| parse::<f64>(key, v, "number");
        let boolean = |v: &str| parse::<bool>(key, v, "boolean (true/false)");
        let opt_int = |v: &str| -> Result<Option<usize>> {
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                parse::<usize>(key, v, "integer or 'none'").map(Some)
            }
        };
        match key {
            "model.m_blocks" => self.model.m_blocks = int(value)?,
            "model.n_points" => self.model.n_points = int(value)?,
            "model.k_neighbors" => self.model.k_neighbors = int(value)?,
            "model.coarse_branching" => self.model.coarse_branching = int(value)?,
            "model.width_multiplier" => self.model.width_multiplier = num(value)?,
            "model.f_prime_width" => self.model.f_prime_width = opt_int(value)?,
            "model.f_double_width" => self.model.f_double_width = opt_int(value)?,
            "model.alpha1" => self.model.alpha1 = num(value)?,
            "model.alpha2" => self.model.alpha2 = num(value)?,
            "model.enable_label_mult_fps" => self.model.enable_label_mult_fps = boolean(value)?,
            "model.enable_knn_refine" => self.model.enable_knn_refine = boolean(value)?,
            "model.enable_feature_sharing" => {
                self.model.enable_feature_sharing = boolean(value)?
            }
            "model.enable_segmentation" => self.model.enable_segmentation = boolean(value)?,
            "model.enable_completion" => self.model.enable_completion = boolean(value)?,
            "train.learning_rate" => self.train.learning_rate = num(value)?,
            "train.batch_size" => self.train.batch_size = int(value)?,
            "train.epochs" => self.train.epochs = int(value)?,
            "train.seed" => self.train.seed = parse::<u64>(key, value, "integer")?,
            "train.beta1" => self.train.beta1 = num(value)?,
            "train.beta2" => self.train.beta2 = num(value)?,
            "train.epsilon" => self.train.epsilon = num(value)?,
            "train.checkpoint_interval" => self.train.checkpoint_interval = int(value)?,
            "train.max_steps" => self.train.max_steps = int(value)?,
            "metrics.cd_squared" => self.metrics.cd_squared = boolean(value)?,
            "metrics.dcd_alpha" => self.metrics.dcd_alpha = num(value)?,
            "metrics.fscore_tau_small" => self.metrics.fscore_tau_small = num(value)?,
            "metrics.fscore_tau_large" => self.metrics.fscore_tau_large = num(value)?,
            "metrics.seg_threshold" => self.metrics.seg_threshold = num(value)?,
            other => {
                return Err(CsError::Config(format!("unknown configuration key '{}'", other)))
            }
        }
        Ok(())
    }

    /// Load a full configuration: profile defaults, then the optional
    /// file, then overrides; finally validated.
    pub fn load(desk: bool, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = if desk { RunConfig::desk() } else { RunConfig::default() };
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.metrics.dcd_alpha <= 0.0 {
            return Err(CsError::Config("metrics.dcd_alpha must be > 0".into()));
        }
        if self.metrics.fscore_tau_small <= 0.0 || self.metrics.fscore_tau_large <= 0.0 {
            return Err(CsError::Config("metrics F-score thresholds must be > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_field_is_addressable() {
        let mut cfg = RunConfig::default();
        let pairs = [
            ("model.m_blocks", "4"),
            ("model.n_points", "128"),
            ("model.k_neighbors", "6"),
            ("model.coarse_branching", "2"),
            ("model.width_multiplier", "0.5"),
            ("model.f_prime_width", "32"),
            ("model.f_double_width", "none"),
            ("model.alpha1", "0.02"),
            ("model.alpha2", "2.0"),
            ("model.enable_label_mult_fps", "false"),
            ("model.enable_knn_refine", "false"),
            ("model.enable_feature_sharing", "false"),
            ("model.enable_segmentation", "true"),
            ("model.enable_completion", "true"),
            ("train.learning_rate", "0.001"),
            ("train.batch_size", "2"),
            ("train.epochs", "3"),
            ("train.seed", "9"),
            ("train.beta1", "0.8"),
            ("train.beta2", "0.99"),
            ("train.epsilon", "1e-7"),
            ("train.checkpoint_interval", "5"),
            ("train.max_steps", "100"),
            ("metrics.cd_squared", "true"),
            ("metrics.dcd_alpha", "500"),
            ("metrics.fscore_tau_small", "0.0002"),
            ("metrics.fscore_tau_large", "0.002"),
            ("metrics.seg_threshold", "0.4"),
        ];
        for (k, v) in pairs {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(cfg.model.m_blocks, 4);
        assert_eq!(cfg.model.f_prime_width, Some(32));
        assert_eq!(cfg.model.f_double_width, None);
        assert!(!cfg.model.enable_label_mult_fps);
        assert_eq!(cfg.train.seed, 9);
        assert!(cfg.metrics.cd_squared);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_names_the_path() {
        let err = RunConfig::default().set("model.m_block", "3").unwrap_err();
        assert!(err.to_string().contains("model.m_block"), "{}", err);
    }

    #[test]
    fn bad_value_names_key_and_value() {
        let err = RunConfig::default().set("train.epochs", "many").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.epochs") && msg.contains("many"), "{}", msg);
    }

    #[test]
    fn file_then_overrides_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nmodel.m_blocks = 2\ntrain.epochs = 7\n\nmetrics.dcd_alpha = 50\n",
        )
        .unwrap();
        let cfg = RunConfig::load(
            true,
            Some(&path),
            &["train.epochs=9".to_string()],
        )
        .unwrap();
        assert_eq!(cfg.model.m_blocks, 2);
        assert_eq!(cfg.train.epochs, 9); // override beats file
        assert_eq!(cfg.metrics.dcd_alpha, 50.0);
        assert_eq!(cfg.model.n_points, 256); // desk profile base
    }

    #[test]
    fn malformed_file_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "model.m_blocks 3\n").unwrap();
        let err = RunConfig::default().apply_file(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{}", err);
    }
}
