//! Batching, masking, and the training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hierarchy::{build_standard_tree, LambdaWeights};
use crate::loss::{batch_loss, LossKind};
use crate::tokenizer::TokenSequence;

use super::config::{ModelConfig, Objective};
use super::math::Mat;
use super::net::{backward, forward, AttentionMode, Params};
use super::optim::{adamw_step, lr_at, AdamState};
use super::{ModelError, ModelState};

/// Frames a codon id sequence as BOS + ids + EOS, truncated to the context
/// length. Padding happens per batch.
pub fn frame_sequence(cfg: &ModelConfig, ids: &[u32]) -> Vec<u32> {
    let mut row = Vec::with_capacity(ids.len() + 2);
    row.push(cfg.bos_id());
    row.extend_from_slice(ids);
    row.push(cfg.eos_id());
    row.truncate(cfg.context_length);
    row
}

/// An MLM minibatch after masking: `inputs` feed the model, `targets` hold
/// the original ids, `supervised` marks the masked positions.
#[derive(Debug, Clone)]
pub struct MaskedBatch {
    pub inputs: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
    pub supervised: Vec<Vec<bool>>,
}

/// Masks each non-special position independently with probability
/// `mask_rate`, replacing it with the MASK token. Rows that would otherwise
/// have no masked position get one forced pick so every row contributes
/// supervision. Special tokens (PAD/BOS/EOS/...) are never masked.
pub fn mask_batch(
    rows: &[Vec<u32>],
    mask_rate: f64,
    seed: u64,
    cfg: &ModelConfig,
) -> MaskedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(rows.len());
    let mut supervised = Vec::with_capacity(rows.len());
    for row in rows {
        let mut inp = row.clone();
        let mut sup = vec![false; row.len()];
        let eligible: Vec<usize> = (0..row.len())
            .filter(|&i| !cfg.is_special(row[i]))
            .collect();
        let mut any = false;
        for &i in &eligible {
            if rng.gen::<f64>() < mask_rate {
                inp[i] = cfg.mask_id();
                sup[i] = true;
                any = true;
            }
        }
        if !any && !eligible.is_empty() {
            let pick = eligible[rng.gen_range(0..eligible.len())];
            inp[pick] = cfg.mask_id();
            sup[pick] = true;
        }
        inputs.push(inp);
        supervised.push(sup);
    }
    MaskedBatch {
        inputs,
        targets: rows.to_vec(),
        supervised,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogEntry {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Summary of a training run; `log` has one entry per optimizer step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub steps: u64,
    pub tokens_seen: u64,
    pub wall_seconds: f64,
    pub log: Vec<LogEntry>,
}

impl TrainReport {
    /// Writes the per-step log as CSV with a `step,lr,loss` header.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| ModelError::BadInput(e.to_string()))?;
        w.write_record(["step", "lr", "loss"])
            .map_err(|e| ModelError::BadInput(e.to_string()))?;
        for e in &self.log {
            w.write_record([e.step.to_string(), format!("{:.10e}", e.lr), format!("{:.8}", e.loss)])
                .map_err(|e| ModelError::BadInput(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains a fresh model on a codon-tokenized corpus. Deterministic for a
/// fixed config: all randomness flows from `cfg.seed` through one ChaCha8
/// stream. Aborts with [`ModelError::NonFiniteLoss`] if the loss diverges.
pub fn train(
    cfg: &ModelConfig,
    corpus: &[TokenSequence],
) -> Result<(ModelState, TrainReport), ModelError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::BadInput("empty training corpus".into()));
    }
    if cfg.loss == LossKind::Hxe && cfg.vocab_size != 70 {
        return Err(ModelError::BadConfig(
            "hierarchical loss requires the 70-symbol codon vocabulary".into(),
        ));
    }
    for (i, seq) in corpus.iter().enumerate() {
        if let Some(&bad) = seq.ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(ModelError::BadInput(format!(
                "corpus sequence {i} has token id {bad} outside vocabulary"
            )));
        }
        if seq.ids.is_empty() {
            return Err(ModelError::BadInput(format!("corpus sequence {i} is empty")));
        }
    }

    let tree = build_standard_tree();
    let weights = match cfg.lambda_anchor {
        crate::model::LambdaAnchor::Leaf => LambdaWeights::for_tree(&tree, cfg.alpha),
        crate::model::LambdaAnchor::Root => LambdaWeights::root_anchored(&tree, cfg.alpha),
    }
    .map_err(|e| ModelError::BadConfig(e.to_string()))?;
    let rows: Vec<Vec<u32>> = corpus.iter().map(|s| frame_sequence(cfg, &s.ids)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::init(cfg, &mut rng);
    let mut opt = AdamState::new(cfg);

    let batches_per_epoch = (rows.len() + cfg.batch_size - 1) / cfg.batch_size;
    let total_steps = (cfg.epochs * batches_per_epoch) as u64;
    let mode = match cfg.objective {
        Objective::Mlm => AttentionMode::Bidirectional,
        Objective::Clm => AttentionMode::Causal,
    };

    let started = std::time::Instant::now();
    let mut step: u64 = 0;
    let mut tokens_seen: u64 = 0;
    let mut log = Vec::with_capacity(total_steps as usize);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| rows[i].clone()).collect();
            let max_len = batch.iter().map(Vec::len).max().unwrap();
            let padded: Vec<Vec<u32>> = batch
                .into_iter()
                .map(|mut r| {
                    r.resize(max_len, cfg.pad_id());
                    r
                })
                .collect();

            // Build (inputs, targets, supervised) per objective.
            let (inputs, targets, supervised) = match cfg.objective {
                Objective::Mlm => {
                    let mask_seed: u64 = rng.gen();
                    let mb = mask_batch(&padded, cfg.mask_rate, mask_seed, cfg);
                    (mb.inputs, mb.targets, mb.supervised)
                }
                Objective::Clm => {
                    let mut inputs = Vec::with_capacity(padded.len());
                    let mut targets = Vec::with_capacity(padded.len());
                    let mut sup = Vec::with_capacity(padded.len());
                    for r in &padded {
                        let inp: Vec<u32> = r[..r.len() - 1].to_vec();
                        let tgt: Vec<u32> = r[1..].to_vec();
                        let s: Vec<bool> = inp
                            .iter()
                            .zip(&tgt)
                            .map(|(&a, &b)| a != cfg.pad_id() && b != cfg.pad_id())
                            .collect();
                        inputs.push(inp);
                        targets.push(tgt);
                        sup.push(s);
                    }
                    (inputs, targets, sup)
                }
            };

            // Forward all rows, flatten positions for the batch loss.
            let mut caches = Vec::with_capacity(inputs.len());
            let mut flat_logits: Vec<Vec<f64>> = Vec::new();
            let mut flat_targets: Vec<u32> = Vec::new();
            let mut flat_mask: Vec<bool> = Vec::new();
            for (row, (tgt, sup)) in inputs.iter().zip(targets.iter().zip(&supervised)) {
                let (logits, cache) = forward(&params, cfg, row, mode)?;
                tokens_seen += row.len() as u64;
                for t in 0..row.len() {
                    flat_logits.push(logits.row(t).to_vec());
                    flat_targets.push(tgt[t]);
                    flat_mask.push(sup[t]);
                }
                caches.push(cache);
            }
            let (loss, flat_grads) =
                batch_loss(&flat_logits, &flat_targets, &flat_mask, cfg.loss, &tree, &weights)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, step });
            }

            // Backward per row, accumulating into one gradient set.
            let mut grads = Params::zeros(cfg);
            let mut offset = 0;
            for (row, cache) in inputs.iter().zip(&caches) {
                let t_len = row.len();
                let mut dlogits = Mat::zeros(t_len, cfg.vocab_size);
                for t in 0..t_len {
                    dlogits.row_mut(t).copy_from_slice(&flat_grads[offset + t]);
                }
                offset += t_len;
                backward(&params, cfg, cache, &dlogits, &mut grads);
            }

            let lr = lr_at(cfg, step, total_steps);
            adamw_step(&mut params, &grads, &mut opt, cfg, step, lr);
            epoch_loss += loss;
            log.push(LogEntry { step, lr, loss });
        }
        epoch_losses.push(epoch_loss / batches_per_epoch as f64);
    }

    let final_loss = log.last().map(|e| e.loss).unwrap_or(f64::NAN);
    let report = TrainReport {
        epoch_losses,
        final_loss,
        steps: step,
        tokens_seen,
        wall_seconds: started.elapsed().as_secs_f64(),
        log,
    };
    let state = ModelState {
        config: cfg.clone(),
        params,
        opt,
        step,
        rng,
    };
    Ok((state, report))
}
