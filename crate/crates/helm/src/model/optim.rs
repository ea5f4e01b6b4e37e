//! AdamW optimizer and the linear-warmup / cosine-decay schedule.

use super::config::ModelConfig;
use super::net::Params;

/// Learning rate at 1-based `step` out of `total_steps`. Warmup steps are
/// `round(warmupFraction · total)`, clamped to at least one when the fraction
/// is positive; the cosine segment lands exactly on `min` at the final step.
pub fn lr_at(cfg: &ModelConfig, step: u64, total_steps: u64) -> f64 {
    assert!(step >= 1 && step <= total_steps);
    let peak = cfg.learning_rate;
    let min = cfg.min_learning_rate;
    let mut warmup = (cfg.warmup_fraction * total_steps as f64).round() as u64;
    if cfg.warmup_fraction > 0.0 {
        warmup = warmup.max(1);
    }
    warmup = warmup.min(total_steps);
    if step <= warmup {
        return peak * step as f64 / warmup as f64;
    }
    if total_steps == warmup {
        return peak;
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    min + 0.5 * (peak - min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adam first/second moment tensors, shaped exactly like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
}

impl AdamState {
    pub fn new(cfg: &ModelConfig) -> AdamState {
        AdamState {
            m: Params::zeros(cfg),
            v: Params::zeros(cfg),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One decoupled-weight-decay Adam step at 1-based `step`. Decay applies only
/// to decay-flagged tensors (projection matrices and token embeddings).
/// Parameters and moments are quantized to f32 afterwards so that saved
/// checkpoints reproduce the in-memory state bit for bit.
pub fn adamw_step(
    params: &mut Params,
    grads: &Params,
    opt: &mut AdamState,
    cfg: &ModelConfig,
    step: u64,
    lr: f64,
) {
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    let gs = grads.tensors();
    let ms = opt.m.tensors_mut();
    let vs = opt.v.tensors_mut();
    for ((((name, decay, p), (gn, _, g)), (_, _, m)), (_, _, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(gs)
        .zip(ms)
        .zip(vs)
    {
        debug_assert_eq!(name, gn);
        for i in 0..p.data.len() {
            let grad = g.data[i];
            m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * grad;
            v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * grad * grad;
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            let mut val = p.data[i] - lr * mhat / (vhat.sqrt() + ADAM_EPS);
            if decay {
                val -= lr * cfg.weight_decay * p.data[i];
            }
            p.data[i] = val;
        }
        p.quantize_f32();
        m.quantize_f32();
        v.quantize_f32();
    }
}
