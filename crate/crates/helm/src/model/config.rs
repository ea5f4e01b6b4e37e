//! Model and training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::loss::LossKind;

use super::ModelError;

/// Pre-training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mlm,
    Clm,
}

/// Which end of the tree the λ = exp(−α·h) weights are anchored to.
/// `Leaf` (the default) sets h = 0 at the codon leaves so the fine-grained
/// level carries full weight; `Root` sets h = 0 at the root so the coarse
/// levels do.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaAnchor {
    #[default]
    Leaf,
    Root,
}

/// Full model + optimization configuration. The special-token block always
/// occupies the last six vocabulary ids (pad, mask, unk, bos, eos, cls).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden_size: usize,
    pub heads: usize,
    pub intermediate_size: usize,
    pub context_length: usize,
    pub vocab_size: usize,
    pub objective: Objective,
    pub loss: LossKind,
    /// Exponential decay rate for the hierarchical level weights.
    pub alpha: f64,
    /// Anchoring convention for the level weights (leaf by default).
    #[serde(default)]
    pub lambda_anchor: LambdaAnchor,
    /// MLM masking probability per non-special position.
    pub mask_rate: f64,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_fraction: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, hidden 64, 4 heads, context 128.
    pub fn desk(objective: Objective, loss: LossKind) -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden_size: 64,
            heads: 4,
            intermediate_size: 256,
            context_length: 128,
            vocab_size: 70,
            objective,
            loss,
            alpha: 0.2,
            lambda_anchor: LambdaAnchor::Leaf,
            mask_rate: 0.15,
            seed: 1,
            epochs: 2,
            batch_size: 16,
            learning_rate: 1e-3,
            min_learning_rate: 1e-5,
            weight_decay: 0.01,
            warmup_fraction: 0.06,
        }
    }

    /// Tiny configuration used by gradient checks: 1 layer, hidden 8,
    /// 2 heads, context 8.
    pub fn tiny(objective: Objective, loss: LossKind) -> ModelConfig {
        ModelConfig {
            layers: 1,
            hidden_size: 8,
            heads: 2,
            intermediate_size: 16,
            context_length: 8,
            batch_size: 2,
            epochs: 1,
            ..Self::desk(objective, loss)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.heads
    }

    pub fn pad_id(&self) -> u32 {
        (self.vocab_size - 6) as u32
    }

    pub fn mask_id(&self) -> u32 {
        (self.vocab_size - 5) as u32
    }

    pub fn unk_id(&self) -> u32 {
        (self.vocab_size - 4) as u32
    }

    pub fn bos_id(&self) -> u32 {
        (self.vocab_size - 3) as u32
    }

    pub fn eos_id(&self) -> u32 {
        (self.vocab_size - 2) as u32
    }

    pub fn is_special(&self, id: u32) -> bool {
        id as usize >= self.vocab_size - 6
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadConfig(msg));
        if self.layers == 0 {
            return bad("layers must be >= 1".into());
        }
        if self.hidden_size == 0 || self.heads == 0 || self.hidden_size % self.heads != 0 {
            return bad(format!(
                "hiddenSize {} must be a positive multiple of heads {}",
                self.hidden_size, self.heads
            ));
        }
        if self.intermediate_size == 0 {
            return bad("intermediateSize must be >= 1".into());
        }
        if self.context_length < 2 {
            return bad("contextLength must be >= 2".into());
        }
        if self.vocab_size < 7 {
            return bad("vocabSize must leave room for six special tokens".into());
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return bad(format!("maskRate {} outside [0, 1]", self.mask_rate));
        }
        if self.objective == Objective::Mlm && self.mask_rate == 0.0 {
            return bad("maskRate must be > 0 for the MLM objective".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batchSize must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !(self.min_learning_rate >= 0.0) {
            return bad("learningRate must be > 0 and minLearningRate >= 0".into());
        }
        if self.min_learning_rate > self.learning_rate {
            return bad("minLearningRate exceeds learningRate".into());
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad(format!(
                "warmupFraction {} outside [0, 1]",
                self.warmup_fraction
            ));
        }
        if self.weight_decay < 0.0 {
            return bad("weightDecay must be >= 0".into());
        }
        if self.alpha < 0.0 {
            return bad("alpha must be >= 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid_and_round_trips_json() {
        let cfg = ModelConfig::desk(Objective::Mlm, LossKind::Hxe);
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"hiddenSize\":64"));
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn special_ids_match_codon_vocabulary() {
        let cfg = ModelConfig::desk(Objective::Clm, LossKind::Xe);
        let specials = crate::tokenizer::Vocabulary::codon().specials();
        assert_eq!(cfg.pad_id(), specials.pad);
        assert_eq!(cfg.mask_id(), specials.mask);
        assert_eq!(cfg.bos_id(), specials.bos);
        assert_eq!(cfg.eos_id(), specials.eos);
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut cfg = ModelConfig::desk(Objective::Mlm, LossKind::Hxe);
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk(Objective::Mlm, LossKind::Hxe);
        cfg.mask_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk(Objective::Mlm, LossKind::Hxe);
        cfg.warmup_fraction = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let cfg = ModelConfig::desk(Objective::Mlm, LossKind::Hxe);
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["mystery"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    }
}
