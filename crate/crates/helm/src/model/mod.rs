//! Micro-transformer language model over the codon vocabulary.
//!
//! Forward and backward passes are written out by hand in f64; parameters
//! and optimizer moments are kept on the f32 grid so checkpoints round-trip
//! exactly. Training supports masked (MLM) and causal (CLM) objectives with
//! either flat or hierarchical cross-entropy from [`crate::loss`].

mod checkpoint;
mod config;
mod math;
mod net;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{LambdaAnchor, ModelConfig, Objective};
pub use math::Mat;
pub use net::{backward, forward, AttentionMode, ForwardCache, Params};
pub use optim::{adamw_step, lr_at, AdamState};
pub use train::{frame_sequence, mask_batch, train, LogEntry, MaskedBatch, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::genetic_code::{amino_acid_of, is_stop, NUM_CODONS};
use crate::loss::LossError;
use crate::tokenizer::{Scheme, TokenSequence};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: u64 },
    #[error("operation requires a different objective: {0}")]
    WrongObjective(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Everything needed to continue or reproduce a training run: config,
/// parameters, Adam moments, the step counter, and the RNG position.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Params,
    pub opt: AdamState,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl ModelState {
    /// A freshly initialized, untrained model.
    pub fn new(config: ModelConfig) -> Result<ModelState, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::init(&config, &mut rng);
        let opt = AdamState::new(&config);
        Ok(ModelState {
            config,
            params,
            opt,
            step: 0,
            rng,
        })
    }

    fn attention_mode(&self) -> AttentionMode {
        match self.config.objective {
            Objective::Mlm => AttentionMode::Bidirectional,
            Objective::Clm => AttentionMode::Causal,
        }
    }

    /// Mean of the final hidden states over non-PAD positions.
    pub fn embed(&self, tokens: &[u32]) -> Result<Vec<f64>, ModelError> {
        let (_, cache) = forward(&self.params, &self.config, tokens, self.attention_mode())?;
        let hidden = cache.final_hidden();
        let pad = self.config.pad_id();
        let kept: Vec<usize> = (0..tokens.len()).filter(|&t| tokens[t] != pad).collect();
        if kept.is_empty() {
            return Err(ModelError::BadInput("all positions are PAD".into()));
        }
        let mut mean = vec![0.0; self.config.hidden_size];
        for &t in &kept {
            for (m, v) in mean.iter_mut().zip(hidden.row(t)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= kept.len() as f64;
        }
        Ok(mean)
    }

    /// Final-LayerNorm hidden state per position (T rows of H values),
    /// used as frozen features by the analysis probe.
    pub fn hidden_states(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>, ModelError> {
        let (_, cache) = forward(&self.params, &self.config, tokens, self.attention_mode())?;
        let hidden = cache.final_hidden();
        Ok((0..tokens.len()).map(|t| hidden.row(t).to_vec()).collect())
    }

    /// Autoregressive temperature sampling; CLM models only. Generation
    /// stops at EOS, at `max_new` tokens, or at the context boundary.
    /// Returns the full token sequence including the prefix.
    pub fn sample(
        &self,
        prefix: &[u32],
        temperature: f64,
        max_new: usize,
        seed: u64,
    ) -> Result<TokenSequence, ModelError> {
        if self.config.objective != Objective::Clm {
            return Err(ModelError::WrongObjective(
                "sampling requires a causal (CLM) model".into(),
            ));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(ModelError::BadInput(format!(
                "temperature {temperature} must be finite and > 0"
            )));
        }
        let mut tokens: Vec<u32> = if prefix.is_empty() {
            vec![self.config.bos_id()]
        } else {
            prefix.to_vec()
        };
        if tokens.len() > self.config.context_length {
            return Err(ModelError::BadInput("prefix exceeds context length".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_new {
            if tokens.len() >= self.config.context_length {
                break;
            }
            let (logits, _) = forward(&self.params, &self.config, &tokens, AttentionMode::Causal)?;
            let last = logits.row(logits.rows - 1);
            let scaled: Vec<f64> = last.iter().map(|z| z / temperature).collect();
            let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let mut draw = rng.gen::<f64>() * total;
            let mut next = exps.len() - 1;
            for (i, e) in exps.iter().enumerate() {
                draw -= e;
                if draw <= 0.0 {
                    next = i;
                    break;
                }
            }
            let next = next as u32;
            tokens.push(next);
            if next == self.config.eos_id() {
                break;
            }
        }
        Ok(TokenSequence {
            source_length: tokens.iter().filter(|&&t| (t as usize) < NUM_CODONS).count() * 3,
            ids: tokens,
            scheme: Scheme::Codon,
        })
    }
}

/// Translates a codon token sequence to a one-letter amino-acid string.
/// BOS/EOS/PAD/CLS are skipped; MASK or UNK is an error; the first stop
/// codon emits `*` and ends translation.
pub fn translate(seq: &TokenSequence) -> Result<String, ModelError> {
    if seq.scheme != Scheme::Codon {
        return Err(ModelError::BadInput(format!(
            "translate expects codon tokens, got {:?}",
            seq.scheme
        )));
    }
    let specials = crate::tokenizer::Vocabulary::codon().specials();
    let mut out = String::new();
    for &id in &seq.ids {
        if (id as usize) < NUM_CODONS {
            out.push(amino_acid_of(id as usize).letter());
            if is_stop(id as usize) {
                break;
            }
        } else if id == specials.mask || id == specials.unk {
            return Err(ModelError::BadInput(format!(
                "cannot translate special token id {id}"
            )));
        }
        // PAD/BOS/EOS/CLS are framing, not sequence content.
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
