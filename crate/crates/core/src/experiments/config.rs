use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingKind;
use crate::error::{Error, Result};
use crate::nn::LrSchedule;
use crate::rules::RuleId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    RuleOnly,
    RulePlusParticipation,
}

impl LossMode {
    pub fn uses_participation(self) -> bool {
        self == LossMode::RulePlusParticipation
    }
}

fn default_m() -> usize {
    7
}
fn default_voters() -> usize {
    29
}
fn default_train_profiles() -> usize {
    4800
}
fn default_validation_profiles() -> usize {
    480
}
fn default_test_profiles() -> usize {
    1000
}
fn default_batch_size() -> usize {
    32
}
fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    10
}
fn default_factor() -> f64 {
    0.5
}
fn default_min_lr() -> f64 {
    1e-5
}
fn default_loss_mode() -> LossMode {
    LossMode::RuleOnly
}
fn default_guard_band() -> f64 {
    0.1
}

/// One training run. Every field except `rule` and `embedding` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub rule: RuleId,
    pub embedding: EmbeddingKind,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Voters per training, validation and test profile.
    #[serde(default = "default_voters")]
    pub n_train: usize,
    #[serde(default = "default_train_profiles")]
    pub train_profiles: usize,
    #[serde(default = "default_validation_profiles")]
    pub validation_profiles: usize,
    #[serde(default = "default_test_profiles")]
    pub test_profiles: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default = "default_min_lr")]
    pub min_lr: f64,
    #[serde(default = "default_loss_mode")]
    pub loss_mode: LossMode,
    /// Largest tolerated rise in test rule loss during participation retraining.
    #[serde(default = "default_guard_band")]
    pub guard_band: f64,
    /// Relabel the candidates of every training profile at random each epoch.
    #[serde(default)]
    pub relabel_augmentation: bool,
}

impl TrainConfig {
    /// Rule learning at the default scale.
    pub fn new(rule: RuleId, embedding: EmbeddingKind) -> Self {
        TrainConfig {
            rule,
            embedding,
            m: default_m(),
            n_train: default_voters(),
            train_profiles: default_train_profiles(),
            validation_profiles: default_validation_profiles(),
            test_profiles: default_test_profiles(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            seed: 0,
            lr: default_lr(),
            patience: default_patience(),
            factor: default_factor(),
            min_lr: default_min_lr(),
            loss_mode: default_loss_mode(),
            guard_band: default_guard_band(),
            relabel_augmentation: false,
        }
    }

    /// Participation retraining: 900 profiles with 9 voters, combined loss,
    /// 160 test profiles.
    pub fn retraining(rule: RuleId, embedding: EmbeddingKind) -> Self {
        TrainConfig {
            n_train: 9,
            train_profiles: 900,
            validation_profiles: 100,
            test_profiles: 160,
            loss_mode: LossMode::RulePlusParticipation,
            ..TrainConfig::new(rule, embedding)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let config: TrainConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m < 2 {
            return fail(format!("m must be at least 2 (got {})", self.m));
        }
        if self.n_train == 0 {
            return fail("n_train must be positive".into());
        }
        if self.loss_mode.uses_participation() && self.n_train < 2 {
            return fail("participation loss needs n_train >= 2".into());
        }
        if self.train_profiles == 0 || self.validation_profiles == 0 || self.test_profiles == 0 {
            return fail("profile counts must be positive".into());
        }
        if self.batch_size == 0 || self.batch_size > self.train_profiles {
            return fail(format!(
                "batch_size must be in 1..={} (got {})",
                self.train_profiles, self.batch_size
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive (got {})", self.lr));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return fail(format!("factor must be in (0, 1) (got {})", self.factor));
        }
        if !(self.min_lr >= 0.0 && self.min_lr.is_finite()) {
            return fail(format!("min_lr must be non-negative (got {})", self.min_lr));
        }
        if self.guard_band.is_nan() || self.guard_band < 0.0 {
            return fail(format!("guard_band must be non-negative (got {})", self.guard_band));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(self.lr, self.patience, self.factor, self.min_lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = TrainConfig::from_json(r#"{"rule": "plurality", "embedding": "T_RF"}"#).unwrap();
        assert_eq!(c, TrainConfig::new(RuleId::Plurality, EmbeddingKind::RankFrequency));
        assert_eq!((c.m, c.n_train, c.train_profiles, c.epochs), (7, 29, 4800, 200));
    }

    #[test]
    fn missing_rule_names_the_key() {
        let err = TrainConfig::from_json(r#"{"embedding": "T_T"}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("rule"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = TrainConfig::from_json(r#"{"rule": "borda", "embedding": "T_T", "epoch": 3}"#)
            .unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        let mut c = TrainConfig::new(RuleId::Borda, EmbeddingKind::Tournament);
        c.train_profiles = 10;
        c.batch_size = 11;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = TrainConfig::new(RuleId::Borda, EmbeddingKind::Tournament);
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::retraining(RuleId::Borda, EmbeddingKind::Tournament);
        c.n_train = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn retraining_defaults() {
        let c = TrainConfig::retraining(RuleId::Plurality, EmbeddingKind::RankFrequency);
        assert_eq!((c.m, c.n_train, c.train_profiles, c.test_profiles), (7, 9, 900, 160));
        assert_eq!(c.loss_mode, LossMode::RulePlusParticipation);
        assert_eq!(c.batch_size, 32);
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_json() {
        let c = TrainConfig::retraining(RuleId::Schulze, EmbeddingKind::WeightedTournament);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), c);
    }
}
