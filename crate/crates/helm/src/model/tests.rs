use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hierarchy::{build_standard_tree, LambdaWeights};
use crate::loss::{batch_loss, LossKind};
use crate::tokenizer::{TokenSequence, Vocabulary};

use super::*;

fn tiny(objective: Objective, loss: LossKind) -> ModelConfig {
    ModelConfig::tiny(objective, loss)
}

fn toy_corpus(n: usize, len: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..64)).collect();
            TokenSequence::from_codon_ids(ids)
        })
        .collect()
}

/// End-to-end finite-difference check: perturb every parameter of the tiny
/// model and compare the loss slope against the analytic backward pass.
fn end_to_end_grad_check(objective: Objective, loss_kind: LossKind) -> f64 {
    let cfg = tiny(objective, loss_kind);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = Params::init(&cfg, &mut rng);
    let tree = build_standard_tree();
    let weights = LambdaWeights::for_tree(&tree, cfg.alpha).unwrap();

    let tokens: Vec<u32> = vec![cfg.bos_id(), 14, 32, 33, 5, 60, cfg.eos_id()];
    let targets: Vec<u32> = vec![3, 40, 9, 33, 5, 61, cfg.eos_id()];
    let mask = vec![false, true, true, false, true, true, true, false];
    let mask = &mask[..tokens.len()];
    let mode = match objective {
        Objective::Mlm => AttentionMode::Bidirectional,
        Objective::Clm => AttentionMode::Causal,
    };

    let loss_of = |p: &Params| -> f64 {
        let (logits, _) = forward(p, &cfg, &tokens, mode).unwrap();
        let flat: Vec<Vec<f64>> = (0..tokens.len()).map(|t| logits.row(t).to_vec()).collect();
        batch_loss(&flat, &targets, mask, loss_kind, &tree, &weights)
            .unwrap()
            .0
    };

    // Analytic gradients.
    let (logits, cache) = forward(&params, &cfg, &tokens, mode).unwrap();
    let flat: Vec<Vec<f64>> = (0..tokens.len()).map(|t| logits.row(t).to_vec()).collect();
    let (_, dflat) = batch_loss(&flat, &targets, mask, loss_kind, &tree, &weights).unwrap();
    let mut dlogits = Mat::zeros(tokens.len(), cfg.vocab_size);
    for t in 0..tokens.len() {
        dlogits.row_mut(t).copy_from_slice(&dflat[t]);
    }
    let mut grads = Params::zeros(&cfg);
    backward(&params, &cfg, &cache, &dlogits, &mut grads);

    // Finite differences over every parameter.
    let h = 1e-5;
    let n_tensors = params.tensors().len();
    let mut max_rel = 0.0f64;
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].2.data.len();
        for i in 0..len {
            let orig = params.tensors()[ti].2.data[i];
            params.tensors_mut()[ti].2.data[i] = orig + h;
            let up = loss_of(&params);
            params.tensors_mut()[ti].2.data[i] = orig - h;
            let down = loss_of(&params);
            params.tensors_mut()[ti].2.data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.tensors()[ti].2.data[i];
            let denom = an.abs().max(fd.abs()).max(1e-4);
            max_rel = max_rel.max((an - fd).abs() / denom);
        }
    }
    max_rel
}

#[test]
fn gradients_match_finite_differences_mlm_hxe() {
    let err = end_to_end_grad_check(Objective::Mlm, LossKind::Hxe);
    assert!(err < 1e-3, "max rel err {err}");
}

#[test]
fn gradients_match_finite_differences_clm_xe() {
    let err = end_to_end_grad_check(Objective::Clm, LossKind::Xe);
    assert!(err < 1e-3, "max rel err {err}");
}

#[test]
fn causal_attention_ignores_future_tokens() {
    let cfg = tiny(Objective::Clm, LossKind::Xe);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = Params::init(&cfg, &mut rng);
    let a = vec![10u32, 20, 30, 40, 50];
    let mut b = a.clone();
    b[4] = 63;
    let (la, _) = forward(&params, &cfg, &a, AttentionMode::Causal).unwrap();
    let (lb, _) = forward(&params, &cfg, &b, AttentionMode::Causal).unwrap();
    for t in 0..4 {
        assert_eq!(la.row(t), lb.row(t), "position {t} saw the future");
    }
    assert_ne!(la.row(4), lb.row(4));
    // Bidirectional attention must react at earlier positions.
    let (ba, _) = forward(&params, &cfg, &a, AttentionMode::Bidirectional).unwrap();
    let (bb, _) = forward(&params, &cfg, &b, AttentionMode::Bidirectional).unwrap();
    assert_ne!(ba.row(0), bb.row(0));
}

#[test]
fn pad_keys_are_invisible_to_real_positions() {
    let cfg = tiny(Objective::Mlm, LossKind::Xe);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = Params::init(&cfg, &mut rng);
    let short = vec![10u32, 20, 30];
    let mut padded = short.clone();
    padded.extend([cfg.pad_id(); 3]);
    let (ls, _) = forward(&params, &cfg, &short, AttentionMode::Bidirectional).unwrap();
    let (lp, _) = forward(&params, &cfg, &padded, AttentionMode::Bidirectional).unwrap();
    for t in 0..short.len() {
        for j in 0..cfg.vocab_size {
            assert!(
                (ls.at(t, j) - lp.at(t, j)).abs() < 1e-12,
                "padding changed logits at position {t}"
            );
        }
    }
    // Logits at PAD positions stay finite.
    for t in short.len()..padded.len() {
        assert!(lp.row(t).iter().all(|v| v.is_finite()));
    }
}

#[test]
fn forward_rejects_bad_inputs() {
    let cfg = tiny(Objective::Mlm, LossKind::Xe);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = Params::init(&cfg, &mut rng);
    assert!(forward(&params, &cfg, &[], AttentionMode::Bidirectional).is_err());
    assert!(forward(&params, &cfg, &[0; 9], AttentionMode::Bidirectional).is_err());
    assert!(forward(&params, &cfg, &[70], AttentionMode::Bidirectional).is_err());
}

#[test]
fn mask_batch_respects_rate_specials_and_forcing() {
    let cfg = tiny(Objective::Mlm, LossKind::Hxe);
    let rows = vec![
        vec![cfg.bos_id(), 1, 2, 3, cfg.eos_id(), cfg.pad_id()],
        vec![cfg.bos_id(), 10, cfg.eos_id()],
    ];
    // Rate 1.0: every codon masked, no special ever masked.
    let mb = mask_batch(&rows, 1.0, 5, &cfg);
    assert_eq!(mb.inputs[0], vec![cfg.bos_id(), 65, 65, 65, cfg.eos_id(), cfg.pad_id()]);
    assert_eq!(mb.supervised[0], vec![false, true, true, true, false, false]);
    assert_eq!(mb.targets, rows);
    // Tiny rate: forcing guarantees at least one supervised codon per row.
    let mb = mask_batch(&rows, 1e-9, 5, &cfg);
    for sup in &mb.supervised {
        assert_eq!(sup.iter().filter(|&&s| s).count(), 1);
    }
    // Deterministic in the seed.
    let a = mask_batch(&rows, 0.5, 42, &cfg);
    let b = mask_batch(&rows, 0.5, 42, &cfg);
    assert_eq!(a.inputs, b.inputs);
}

#[test]
fn frame_sequence_adds_bos_eos_and_truncates() {
    let cfg = tiny(Objective::Clm, LossKind::Xe);
    let framed = frame_sequence(&cfg, &[1, 2, 3]);
    assert_eq!(framed, vec![cfg.bos_id(), 1, 2, 3, cfg.eos_id()]);
    let long = frame_sequence(&cfg, &(0..20).collect::<Vec<u32>>());
    assert_eq!(long.len(), cfg.context_length);
    assert_eq!(long[0], cfg.bos_id());
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let mut cfg = tiny(Objective::Mlm, LossKind::Hxe);
    cfg.epochs = 3;
    cfg.batch_size = 4;
    let corpus = toy_corpus(16, 6, 99);
    let (s1, r1) = train(&cfg, &corpus).unwrap();
    let (s2, r2) = train(&cfg, &corpus).unwrap();
    assert_eq!(s1.params, s2.params);
    assert_eq!(r1.log.len(), r2.log.len());
    for (a, b) in r1.log.iter().zip(&r2.log) {
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.lr, b.lr);
    }
    assert_eq!(r1.steps, (cfg.epochs * 4) as u64);
    // Mean loss over the last epoch should beat the first epoch.
    assert!(
        r1.epoch_losses.last().unwrap() < r1.epoch_losses.first().unwrap(),
        "loss did not decrease: {:?}",
        r1.epoch_losses
    );
}

#[test]
fn clm_training_runs_and_supervises_shifted_targets() {
    let mut cfg = tiny(Objective::Clm, LossKind::Xe);
    cfg.epochs = 2;
    cfg.batch_size = 4;
    let corpus = toy_corpus(12, 5, 123);
    let (state, report) = train(&cfg, &corpus).unwrap();
    assert!(report.final_loss.is_finite());
    assert_eq!(state.step, report.steps);
}

#[test]
fn checkpoint_round_trips_exactly() {
    let mut cfg = tiny(Objective::Mlm, LossKind::Hxe);
    cfg.epochs = 1;
    let corpus = toy_corpus(8, 5, 4);
    let (state, _) = train(&cfg, &corpus).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&state, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(state.config, loaded.config);
    assert_eq!(state.step, loaded.step);
    assert_eq!(state.rng.get_word_pos(), loaded.rng.get_word_pos());
    assert_eq!(state.params, loaded.params);
    assert_eq!(state.opt.m, loaded.opt.m);
    assert_eq!(state.opt.v, loaded.opt.v);
    // Identical behavior after reload.
    let tokens = [cfg.bos_id(), 3, 14, cfg.eos_id()];
    assert_eq!(state.embed(&tokens).unwrap(), loaded.embed(&tokens).unwrap());
}

#[test]
fn checkpoint_rejects_corruption() {
    let cfg = tiny(Objective::Mlm, LossKind::Xe);
    let state = ModelState::new(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&state, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    // Bad magic.
    let mut bad = bytes.clone();
    bad[0] ^= 0xFF;
    std::fs::write(&path, &bad).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("magic"), "{err}");

    // Truncated payload.
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("truncated"), "{err}");

    // Trailing garbage.
    let mut long = bytes.clone();
    long.extend([0u8; 4]);
    std::fs::write(&path, &long).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("trailing"), "{err}");
}

#[test]
fn sampling_is_seeded_and_stops_at_eos_or_budget() {
    let mut cfg = tiny(Objective::Clm, LossKind::Xe);
    cfg.epochs = 1;
    let corpus = toy_corpus(8, 4, 21);
    let (state, _) = train(&cfg, &corpus).unwrap();
    let a = state.sample(&[], 1.0, 5, 17).unwrap();
    let b = state.sample(&[], 1.0, 5, 17).unwrap();
    assert_eq!(a.ids, b.ids);
    let c = state.sample(&[], 1.0, 5, 18).unwrap();
    assert!(a.ids.len() <= 1 + 5 && a.ids.len() >= 2);
    assert!(c.ids.len() <= 1 + 5);
    if let Some(pos) = a.ids.iter().position(|&t| t == cfg.eos_id()) {
        assert_eq!(pos, a.ids.len() - 1, "generation continued past EOS");
    }
    // Temperature must be positive and finite.
    assert!(state.sample(&[], 0.0, 3, 1).is_err());
    assert!(state.sample(&[], f64::NAN, 3, 1).is_err());
}

#[test]
fn sampling_rejects_mlm_models() {
    let cfg = tiny(Objective::Mlm, LossKind::Xe);
    let state = ModelState::new(cfg).unwrap();
    let err = state.sample(&[], 1.0, 3, 0).unwrap_err();
    assert!(matches!(err, ModelError::WrongObjective(_)));
}

#[test]
fn embed_averages_non_pad_positions() {
    let cfg = tiny(Objective::Mlm, LossKind::Xe);
    let state = ModelState::new(cfg.clone()).unwrap();
    let short = [1u32, 2, 3];
    let padded = [1u32, 2, 3, cfg.pad_id(), cfg.pad_id()];
    let a = state.embed(&short).unwrap();
    let b = state.embed(&padded).unwrap();
    assert_eq!(a.len(), cfg.hidden_size);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(state.embed(&[cfg.pad_id()]).is_err());
}

#[test]
fn translate_maps_codons_to_amino_acids() {
    let vocab = Vocabulary::codon();
    let seq = vocab.encode("AUGGGAUAA", true).unwrap();
    assert_eq!(translate(&seq).unwrap(), "MG*");
    // Stop codon ends translation even with trailing codons.
    let seq = vocab.encode("AUGUAAGGG", true).unwrap();
    assert_eq!(translate(&seq).unwrap(), "M*");
    // Framing tokens are skipped; MASK is an error.
    let mut ids = seq.ids.clone();
    ids.insert(0, 67);
    ids.push(68);
    let framed = TokenSequence {
        ids,
        scheme: crate::tokenizer::Scheme::Codon,
        source_length: 9,
    };
    assert_eq!(translate(&framed).unwrap(), "M*");
    let masked = TokenSequence {
        ids: vec![14, 65],
        scheme: crate::tokenizer::Scheme::Codon,
        source_length: 6,
    };
    assert!(translate(&masked).is_err());
}

#[test]
fn train_report_csv_has_step_lr_loss_rows() {
    let mut cfg = tiny(Objective::Mlm, LossKind::Xe);
    cfg.epochs = 1;
    let corpus = toy_corpus(4, 4, 2);
    let (_, report) = train(&cfg, &corpus).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    report.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,lr,loss");
    assert_eq!(lines.count(), report.log.len());
}
