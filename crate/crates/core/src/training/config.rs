use std::path::Path;

use crate::cohort::{PerturbConfig, SplitRatios};
use crate::config::{ConfigError, KvConfig};
use crate::model::EmbedderTraining;

/// Training hyperparameters. Every field has a default and can be set from
/// a `key = value` file using the field name as key.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Windows per optimiser step.
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the language cross-entropy in the loss.
    pub w_lang: f64,
    /// Gradient reversal coefficient.
    pub lambda_rev: f64,
    /// Epochs without a new best validation score before stopping.
    pub patience: usize,
    pub time_inverse: bool,
    /// Perturbed replicas of minority-class windows, computed once.
    pub oversample: bool,
    /// Fresh gain/noise perturbation of every clip at batch assembly.
    pub perturb: bool,
    pub perturb_gain_db: f64,
    pub perturb_snr_db: f64,
    pub embedder: EmbedderTraining,
    pub embed_dim: usize,
    pub hidden: usize,
    pub language_head: bool,
    pub split_train: f64,
    pub split_validation: f64,
    pub split_test: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            w_lang: 0.1,
            lambda_rev: 1.0,
            patience: 8,
            time_inverse: true,
            oversample: true,
            perturb: false,
            perturb_gain_db: 6.0,
            perturb_snr_db: 30.0,
            embedder: EmbedderTraining::Frozen,
            embed_dim: 128,
            hidden: 64,
            language_head: true,
            split_train: 0.7,
            split_validation: 0.1,
            split_test: 0.2,
        }
    }
}

fn bad(key: &str, message: &str) -> ConfigError {
    ConfigError::BadValue { key: key.into(), message: message.into() }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KvConfig::parse(text)?;
        let mut c = Self::default();
        kv.take("seed", &mut c.seed)?;
        kv.take("epochs", &mut c.epochs)?;
        kv.take("batch_size", &mut c.batch_size)?;
        kv.take("lr", &mut c.lr)?;
        kv.take("w_lang", &mut c.w_lang)?;
        kv.take("lambda_rev", &mut c.lambda_rev)?;
        kv.take("patience", &mut c.patience)?;
        kv.take("time_inverse", &mut c.time_inverse)?;
        kv.take("oversample", &mut c.oversample)?;
        kv.take("perturb", &mut c.perturb)?;
        kv.take("perturb_gain_db", &mut c.perturb_gain_db)?;
        kv.take("perturb_snr_db", &mut c.perturb_snr_db)?;
        let mut mode = c.embedder.as_str().to_string();
        kv.take("embedder", &mut mode)?;
        c.embedder = EmbedderTraining::parse(&mode).ok_or_else(|| bad("embedder", "expected frozen, projection or joint"))?;
        kv.take("embed_dim", &mut c.embed_dim)?;
        kv.take("hidden", &mut c.hidden)?;
        kv.take("language_head", &mut c.language_head)?;
        kv.take("split_train", &mut c.split_train)?;
        kv.take("split_validation", &mut c.split_validation)?;
        kv.take("split_test", &mut c.split_test)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| bad("file", &e.to_string()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, v) in [("epochs", self.epochs), ("batch_size", self.batch_size), ("patience", self.patience), ("embed_dim", self.embed_dim), ("hidden", self.hidden)] {
            if v == 0 {
                return Err(bad(k, "must be positive"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(bad("lr", "must be positive"));
        }
        for (k, v) in [("w_lang", self.w_lang), ("lambda_rev", self.lambda_rev), ("perturb_gain_db", self.perturb_gain_db)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(k, "must be non-negative"));
            }
        }
        for (k, v) in [("split_train", self.split_train), ("split_validation", self.split_validation), ("split_test", self.split_test)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(k, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios { train: self.split_train, validation: self.split_validation, test: self.split_test }
    }

    pub fn perturb_config(&self) -> PerturbConfig {
        PerturbConfig { gain_db_range: (-self.perturb_gain_db, self.perturb_gain_db), snr_db: self.perturb_snr_db }
    }

    /// The configuration as a file `parse` accepts.
    pub fn to_text(&self) -> String {
        format!(
            "seed = {}\nepochs = {}\nbatch_size = {}\nlr = {}\nw_lang = {}\nlambda_rev = {}\npatience = {}\ntime_inverse = {}\noversample = {}\nperturb = {}\nperturb_gain_db = {}\nperturb_snr_db = {}\nembedder = {}\nembed_dim = {}\nhidden = {}\nlanguage_head = {}\nsplit_train = {}\nsplit_validation = {}\nsplit_test = {}\n",
            self.seed,
            self.epochs,
            self.batch_size,
            self.lr,
            self.w_lang,
            self.lambda_rev,
            self.patience,
            self.time_inverse,
            self.oversample,
            self.perturb,
            self.perturb_gain_db,
            self.perturb_snr_db,
            self.embedder.as_str(),
            self.embed_dim,
            self.hidden,
            self.language_head,
            self.split_train,
            self.split_validation,
            self.split_test
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = TrainConfig { epochs: 3, embedder: EmbedderTraining::Projection, ..TrainConfig::default() };
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(TrainConfig::parse("").unwrap(), TrainConfig::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert_eq!(TrainConfig::parse("epoch = 3").unwrap_err(), ConfigError::UnknownKey("epoch".into()));
        assert!(matches!(TrainConfig::parse("batch_size = 0"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(TrainConfig::parse("embedder = vggish"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(TrainConfig::parse("lr = -1"), Err(ConfigError::BadValue { .. })));
    }
}
