//! Hierarchical and standard cross-entropy over the 70-way codon softmax,
//! with exact analytic gradients.
//!
//! The hierarchical loss factorizes the probability of a codon leaf along
//! its path to the root as ratios of subtree leaf masses, then reweights
//! each level. All subtree masses are computed in log space; the top-level
//! denominator is the mass of the 64 codon leaves, so the special-token
//! coordinates cancel out of every conditional. Targets that are special
//! tokens fall back to plain cross-entropy over the full softmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::genetic_code::NUM_CODONS;
use crate::hierarchy::{CodonTree, LambdaWeights, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Xe,
    Hxe,
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("logits contain a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("target {0} is out of range for {1} logits")]
    TargetOutOfRange(u32, usize),
    #[error("target {0} is a special token; the hierarchy covers only codons")]
    SpecialTarget(u32),
    #[error("batch has no supervised positions")]
    EmptySupervision,
    #[error("batch shapes disagree: {0}")]
    ShapeMismatch(String),
}

/// Loss value and its exact gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
}

/// One level of the factorized path: the node, its conditional probability
/// given its parent, and the level's λ weight.
#[derive(Debug, Clone)]
pub struct ProbLevel {
    pub node: NodeId,
    pub conditional: f64,
    pub log_conditional: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ProbPath {
    pub target: u32,
    pub levels: Vec<ProbLevel>,
}

fn check_finite(logits: &[f64]) -> Result<(), LossError> {
    match logits.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LossError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Numerically stable log-softmax over the full logit vector.
pub fn softmax_log_probs(logits: &[f64]) -> Result<Vec<f64>, LossError> {
    check_finite(logits)?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    Ok(logits.iter().map(|&v| v - log_z).collect())
}

/// log Σ exp(logits[i]) over a subset of coordinates.
fn log_sum_exp_over(logits: &[f64], idx: &[u32]) -> f64 {
    let max = idx
        .iter()
        .map(|&i| logits[i as usize])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = idx.iter().map(|&i| (logits[i as usize] - max).exp()).sum();
    sum.ln() + max
}

/// Factorized conditional probabilities along the target's leaf-to-root path.
pub fn conditional_probs(
    logits: &[f64],
    tree: &CodonTree,
    weights: &LambdaWeights,
    target: u32,
) -> Result<ProbPath, LossError> {
    check_finite(logits)?;
    if (target as usize) >= logits.len() {
        return Err(LossError::TargetOutOfRange(target, logits.len()));
    }
    if !tree.covers_token(target) {
        return Err(LossError::SpecialTarget(target));
    }
    let path = tree.path_of(target).expect("codon token");
    let masses: Vec<f64> = path
        .iter()
        .map(|&n| log_sum_exp_over(logits, &tree.node(n).leaf_tokens))
        .collect();
    let levels = (0..tree.depth() as usize)
        .map(|l| {
            let log_conditional = masses[l] - masses[l + 1];
            ProbLevel {
                node: path[l],
                conditional: log_conditional.exp(),
                log_conditional,
                weight: weights.weight(l),
            }
        })
        .collect();
    Ok(ProbPath { target, levels })
}

/// Hierarchical cross-entropy (value and exact gradient).
///
/// Codon targets use the factorized path loss; special-token targets fall
/// back to plain cross-entropy over the full softmax.
pub fn hxe_loss(
    logits: &[f64],
    target: u32,
    tree: &CodonTree,
    weights: &LambdaWeights,
) -> Result<LossOutput, LossError> {
    check_finite(logits)?;
    if (target as usize) >= logits.len() {
        return Err(LossError::TargetOutOfRange(target, logits.len()));
    }
    if !tree.covers_token(target) {
        return xe_loss(logits, target);
    }
    let path = tree.path_of(target).expect("codon token");
    let depth = tree.depth() as usize;
    let masses: Vec<f64> = path
        .iter()
        .map(|&n| log_sum_exp_over(logits, &tree.node(n).leaf_tokens))
        .collect();

    let mut loss = 0.0;
    for l in 0..depth {
        loss -= weights.weight(l) * (masses[l] - masses[l + 1]);
    }

    // d loss/dz_i = -λ0·q^0_i + Σ_{l=1..D-1} (λ_{l-1}-λ_l)·q^l_i + λ_{D-1}·q^D_i,
    // where q^l is the softmax restricted to the leaf set of C^(l).
    let mut grad = vec![0.0; logits.len()];
    let add_restricted_softmax = |grad: &mut [f64], node: NodeId, coeff: f64| {
        if coeff == 0.0 {
            return;
        }
        let leaves = &tree.node(node).leaf_tokens;
        let lse = log_sum_exp_over(logits, leaves);
        for &i in leaves {
            grad[i as usize] += coeff * (logits[i as usize] - lse).exp();
        }
    };
    add_restricted_softmax(&mut grad, path[0], -weights.weight(0));
    for l in 1..depth {
        add_restricted_softmax(&mut grad, path[l], weights.weight(l - 1) - weights.weight(l));
    }
    add_restricted_softmax(&mut grad, path[depth], weights.weight(depth - 1));

    Ok(LossOutput { loss, grad_logits: grad })
}

/// Standard cross-entropy over the full softmax (value and exact gradient).
pub fn xe_loss(logits: &[f64], target: u32) -> Result<LossOutput, LossError> {
    let log_probs = softmax_log_probs(logits)?;
    if (target as usize) >= logits.len() {
        return Err(LossError::TargetOutOfRange(target, logits.len()));
    }
    let loss = -log_probs[target as usize];
    let mut grad: Vec<f64> = log_probs.iter().map(|&lp| lp.exp()).collect();
    grad[target as usize] -= 1.0;
    Ok(LossOutput { loss, grad_logits: grad })
}

/// Mean loss over supervised positions; unsupervised positions contribute a
/// zero gradient. Codon and special targets are dispatched per position.
pub fn batch_loss(
    logits_batch: &[Vec<f64>],
    targets: &[u32],
    mask: &[bool],
    kind: LossKind,
    tree: &CodonTree,
    weights: &LambdaWeights,
) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    if logits_batch.len() != targets.len() || targets.len() != mask.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} logits, {} targets, {} mask entries",
            logits_batch.len(),
            targets.len(),
            mask.len()
        )));
    }
    let supervised = mask.iter().filter(|&&m| m).count();
    if supervised == 0 {
        return Err(LossError::EmptySupervision);
    }
    let scale = 1.0 / supervised as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits_batch.len());
    for ((logits, &target), &m) in logits_batch.iter().zip(targets).zip(mask) {
        if !m {
            grads.push(vec![0.0; logits.len()]);
            continue;
        }
        let out = match kind {
            LossKind::Xe => xe_loss(logits, target)?,
            LossKind::Hxe => hxe_loss(logits, target, tree, weights)?,
        };
        total += out.loss * scale;
        grads.push(out.grad_logits.into_iter().map(|g| g * scale).collect());
    }
    Ok((total, grads))
}

/// Finite-difference verification report, serialized as
/// `{"kind","alpha","trials","maxRelErr"}`.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub kind: LossKind,
    pub alpha: f64,
    pub trials: usize,
    #[serde(rename = "maxRelErr")]
    pub max_rel_err: f64,
}

/// Compares analytic gradients against central finite differences
/// (step 1e−5, double precision) on random logits and random codon targets.
pub fn grad_check(
    kind: LossKind,
    tree: &CodonTree,
    weights: &LambdaWeights,
    trials: usize,
    seed: u64,
) -> GradCheckReport {
    assert!(trials >= 1);
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 70;
    let mut max_rel_err: f64 = 0.0;
    let eval = |logits: &[f64], target: u32| -> LossOutput {
        match kind {
            LossKind::Xe => xe_loss(logits, target).unwrap(),
            LossKind::Hxe => hxe_loss(logits, target, tree, weights).unwrap(),
        }
    };
    for _ in 0..trials {
        let mut logits: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let target = rng.gen_range(0..NUM_CODONS as u32);
        let analytic = eval(&logits, target).grad_logits;
        for i in 0..dim {
            let orig = logits[i];
            logits[i] = orig + STEP;
            let plus = eval(&logits, target).loss;
            logits[i] = orig - STEP;
            let minus = eval(&logits, target).loss;
            logits[i] = orig;
            let fd = (plus - minus) / (2.0 * STEP);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            max_rel_err = max_rel_err.max((analytic[i] - fd).abs() / denom);
        }
    }
    GradCheckReport {
        kind,
        alpha: weights.alpha(),
        trials,
        max_rel_err,
    }
}
