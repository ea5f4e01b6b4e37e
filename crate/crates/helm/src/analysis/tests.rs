use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::genetic_code::{codon_index, codons_of, synonyms_of, AminoAcid, NUM_CODONS};
use crate::loss::LossKind;
use crate::model::{translate, ModelConfig, ModelState, Objective};
use crate::tokenizer::{TokenSequence, Vocabulary};

use super::*;

fn seq_of(codons: &[&str]) -> TokenSequence {
    let ids = codons
        .iter()
        .map(|c| codon_index(c).unwrap() as u32)
        .collect();
    TokenSequence::from_codon_ids(ids)
}

// --- entropy -------------------------------------------------------------

#[test]
fn gly_entropy_uniform_four_is_two_bits() {
    let corpus = vec![seq_of(&["GGU", "GGC", "GGA", "GGG"])];
    let report = codon_usage_entropy(&corpus).unwrap();
    let gly = report
        .per_amino_acid
        .iter()
        .find(|r| r.amino_acid == 'G')
        .unwrap();
    assert_eq!(gly.entropy_bits, 2.0);
}

#[test]
fn gly_entropy_degenerate_and_two_way() {
    let report = codon_usage_entropy(&[seq_of(&["GGA", "GGA", "GGA"])]).unwrap();
    let gly = |r: &EntropyReport| {
        r.per_amino_acid
            .iter()
            .find(|x| x.amino_acid == 'G')
            .unwrap()
            .entropy_bits
    };
    assert_eq!(gly(&report), 0.0);
    let report = codon_usage_entropy(&[seq_of(&["GGA", "GGA", "GGU", "GGU"])]).unwrap();
    assert_eq!(gly(&report), 1.0);
}

#[test]
fn entropy_excludes_met_and_stops_and_bounds_hold() {
    let corpus = vec![seq_of(&["AUG", "GGA", "UUA", "CCC", "UAA"])];
    let report = codon_usage_entropy(&corpus).unwrap();
    assert!(report.per_amino_acid.iter().all(|r| r.amino_acid != 'M'));
    assert!(report.per_amino_acid.iter().all(|r| r.amino_acid != '*'));
    for row in &report.per_amino_acid {
        let aa = AminoAcid::from_letter(row.amino_acid as u8).unwrap();
        let cap = (codons_of(aa).len() as f64).log2();
        assert!(row.entropy_bits >= 0.0 && row.entropy_bits <= cap + 1e-12);
    }
    assert!(matches!(
        codon_usage_entropy(&[]),
        Err(AnalysisError::EmptyCorpus)
    ));
}

#[test]
fn top5_average_follows_occurrence_counts() {
    // Leu dominates, then Ala/Gly/Pro/Val; Ser rare.
    let mut codons = vec![];
    for _ in 0..10 {
        codons.extend(["UUA", "CUU", "GCU", "GCA", "GGU", "GGG", "CCU", "CCA", "GUU", "GUA"]);
    }
    codons.push("UCU");
    let report = codon_usage_entropy(&[seq_of(&codons)]).unwrap();
    let mut rows = report.per_amino_acid.clone();
    rows.sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then(a.amino_acid.cmp(&b.amino_acid)));
    let expect: f64 = rows.iter().take(5).map(|r| r.entropy_bits).sum::<f64>() / 5.0;
    assert!((report.top5_average - expect).abs() < 1e-12);
}

// --- synonymous variants -------------------------------------------------

#[test]
fn variants_preserve_translation_and_fixed_points() {
    let seq = seq_of(&["AUG", "GGA", "UUA", "UGG", "CGU", "UAA"]);
    let variants = synonymous_variants(&seq, 50, 9).unwrap();
    assert_eq!(variants.len(), 50);
    let protein = translate(&seq).unwrap();
    for v in &variants {
        assert_eq!(translate(v).unwrap(), protein);
        assert_eq!(v.ids[0], seq.ids[0], "AUG must be fixed");
        assert_eq!(v.ids[3], seq.ids[3], "UGG must be fixed");
        assert_eq!(v.ids[5], seq.ids[5], "stop must be fixed");
    }
    // Seeded determinism.
    let again = synonymous_variants(&seq, 50, 9).unwrap();
    for (a, b) in variants.iter().zip(&again) {
        assert_eq!(a.ids, b.ids);
    }
    // Something actually varies for 6-fold Leu/Arg over 50 draws.
    assert!(variants.iter().any(|v| v.ids != seq.ids));
}

#[test]
fn variants_with_no_synonyms_are_identical_and_unk_errors() {
    let seq = seq_of(&["AUG", "UGG", "UAA"]);
    for v in synonymous_variants(&seq, 10, 1).unwrap() {
        assert_eq!(v.ids, seq.ids);
    }
    let unk = Vocabulary::codon().specials().unk;
    let bad = TokenSequence::from_codon_ids(vec![14, unk]);
    assert!(synonymous_variants(&bad, 1, 0).is_err());
}

// --- kmeans + silhouette -------------------------------------------------

#[test]
fn kmeans_recovers_two_blobs_and_k1_mean() {
    let points: Vec<Vec<f64>> = vec![
        vec![0.0],
        vec![0.1],
        vec![-0.1],
        vec![10.0],
        vec![10.1],
        vec![9.9],
    ];
    let asg = kmeans(&points, 2, 0, 100).unwrap();
    assert_eq!(asg.labels[0], asg.labels[1]);
    assert_eq!(asg.labels[0], asg.labels[2]);
    assert_eq!(asg.labels[3], asg.labels[4]);
    assert_eq!(asg.labels[3], asg.labels[5]);
    assert_ne!(asg.labels[0], asg.labels[3]);

    let asg1 = kmeans(&points, 1, 0, 100).unwrap();
    let mean: f64 = points.iter().map(|p| p[0]).sum::<f64>() / 6.0;
    assert!((asg1.centers[0][0] - mean).abs() < 1e-12);

    assert!(kmeans(&points, 7, 0, 100).is_err());
}

#[test]
fn kmeans_handles_duplicate_points_without_crashing() {
    let points = vec![vec![1.0, 1.0]; 5];
    let asg = kmeans(&points, 2, 3, 50).unwrap();
    assert_eq!(asg.labels.len(), 5);
    assert!(asg.labels.iter().all(|&l| l < 2));
    assert!(asg.inertia >= 0.0);
}

#[test]
fn silhouette_hand_case_and_degenerates() {
    let points = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
    let labels = vec![0, 0, 1, 1];
    let s = silhouette(&points, &labels).unwrap();
    assert!((s - 0.98999975).abs() < 1e-3, "got {s}");
    // Identical points: 0/0 defined as 0.
    let same = vec![vec![1.0]; 4];
    assert_eq!(silhouette(&same, &labels).unwrap(), 0.0);
    // One cluster only: error.
    assert!(silhouette(&points, &[0, 0, 0, 0]).is_err());
    // Singletons score 0.
    let s = silhouette(&points, &[0, 1, 2, 3]).unwrap();
    assert_eq!(s, 0.0);
}

#[test]
fn silhouette_separated_gaussian_blobs_above_point_nine() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for fam in 0..6 {
        let center: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0) + fam as f64 * 30.0).collect();
        for _ in 0..10 {
            points.push(center.iter().map(|c| c + rng.gen_range(-1.0..1.0)).collect());
            labels.push(fam);
        }
    }
    assert!(silhouette(&points, &labels).unwrap() > 0.9);
}

// --- Gaussian + Fréchet --------------------------------------------------

#[test]
fn fit_gaussian_two_point_case() {
    let g = fit_gaussian(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    assert_eq!(g.mean, vec![1.0, 0.0]);
    assert_eq!(g.covariance[(0, 0)], 2.0);
    assert_eq!(g.covariance[(0, 1)], 0.0);
    assert_eq!(g.covariance[(1, 1)], 0.0);
    assert!(fit_gaussian(&[vec![1.0]]).is_err());
}

#[test]
fn fit_gaussian_invariant_under_duplication() {
    let data = vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]];
    let doubled: Vec<Vec<f64>> = data.iter().chain(&data).cloned().collect();
    let a = fit_gaussian(&data).unwrap();
    let b = fit_gaussian(&doubled).unwrap();
    for (x, y) in a.mean.iter().zip(&b.mean) {
        assert!((x - y).abs() < 1e-12);
    }
    // Unbiased covariance of the duplicated set differs only by the known
    // Bessel factor 2(n−1)/(2n−1).
    let n = data.len() as f64;
    let factor = 2.0 * (n - 1.0) / (2.0 * n - 1.0);
    for i in 0..2 {
        for j in 0..2 {
            assert!((a.covariance[(i, j)] * factor - b.covariance[(i, j)]).abs() < 1e-9);
        }
    }
}

fn gauss1(mean: f64, var: f64) -> GaussianSummary {
    GaussianSummary {
        mean: vec![mean],
        covariance: DMatrix::from_element(1, 1, var),
    }
}

#[test]
fn frechet_closed_form_one_dimensional_cases() {
    assert!(frechet_distance(&gauss1(0.0, 1.0), &gauss1(0.0, 1.0)).unwrap().abs() < 1e-8);
    assert!((frechet_distance(&gauss1(0.0, 1.0), &gauss1(3.0, 1.0)).unwrap() - 9.0).abs() < 1e-8);
    assert!((frechet_distance(&gauss1(0.0, 1.0), &gauss1(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn frechet_is_symmetric_nonnegative_and_rejects_dim_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let a = fit_gaussian(
            &(0..8)
                .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect::<Vec<Vec<f64>>>(),
        )
        .unwrap();
        let b = fit_gaussian(
            &(0..8)
                .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect::<Vec<Vec<f64>>>(),
        )
        .unwrap();
        let d1 = frechet_distance(&a, &b).unwrap();
        let d2 = frechet_distance(&b, &a).unwrap();
        assert!(d1 >= 0.0);
        assert!((d1 - d2).abs() < 1e-6);
    }
    let two = GaussianSummary {
        mean: vec![0.0, 0.0],
        covariance: DMatrix::identity(2, 2),
    };
    assert!(frechet_distance(&gauss1(0.0, 1.0), &two).is_err());
}

#[test]
fn fbd_identity_and_error_paths() {
    let real: Vec<TokenSequence> = (0..5)
        .map(|i| seq_of(&["AUG", "GGA", "UUA", "CCG", ["GCU", "GCA", "GCC", "GCG", "GGU"][i]]))
        .collect();
    let embedder = KmerCountEmbedder { hashed: true };
    let fbd = fbd_report(&real, &real, &embedder).unwrap();
    assert!(fbd.abs() < 1e-6);
    assert!(fbd_report(&[], &real, &embedder).is_err());
    // > 10% translation failures: sequences with MASK tokens.
    let broken: Vec<TokenSequence> = (0..5)
        .map(|_| TokenSequence::from_codon_ids(vec![14, 65]))
        .collect();
    assert!(matches!(
        fbd_report(&real, &broken, &embedder),
        Err(AnalysisError::TranslationFailures { .. })
    ));
}

#[test]
fn model_embedder_matches_state_embed_on_canonical_codons() {
    let state = ModelState::new(ModelConfig::tiny(Objective::Mlm, LossKind::Xe)).unwrap();
    let embedder = ModelEmbedder { state: &state };
    let via_embedder = embedder.embed_protein("MG").unwrap();
    // M -> AUG (14), G -> lexicographically smallest Gly codon GGA? ids from codons_of.
    let gly = codons_of(AminoAcid::Gly)[0] as u32;
    let direct = state.embed(&[14, gly]).unwrap();
    assert_eq!(via_embedder, direct);
}

// --- Spearman ------------------------------------------------------------

#[test]
fn spearman_hand_cases() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((rho - 0.8).abs() < 1e-12);
}

#[test]
fn spearman_monotone_invariance_and_errors() {
    let x = vec![0.3, -1.0, 2.5, 0.9, 7.0];
    let y = vec![1.0, 0.1, 5.0, 2.0, 9.0];
    let base = spearman(&x, &y).unwrap();
    let transformed: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    assert!((spearman(&x, &transformed).unwrap() - base).abs() < 1e-12);
    assert!(spearman(&x, &y[..4]).is_err());
    assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn spearman_average_ranks_for_ties() {
    // x ties at positions 0/1 -> ranks 1.5,1.5.
    let rho = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!(rho > 0.9 && rho < 1.0);
}

// --- probe ---------------------------------------------------------------

fn synthetic_probe_data(
    n: usize,
    t: usize,
    dim: usize,
    seed: u64,
) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label: f64 =
            w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.01..0.01);
        features.push(vec![v; t]);
        labels.push(label);
    }
    (features, labels)
}

#[test]
fn probe_learns_linearly_decodable_labels() {
    let (features, labels) = synthetic_probe_data(80, 6, 8, 11);
    let cfg = ProbeConfig::default();
    let (_, rho) = train_probe(&features, &labels, &cfg).unwrap();
    assert!(rho > 0.9, "validation Spearman {rho}");
}

#[test]
fn probe_on_shuffled_labels_is_near_zero() {
    let (features, labels) = synthetic_probe_data(80, 6, 8, 11);
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut shuffled = labels.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        let cfg = ProbeConfig {
            seed,
            ..ProbeConfig::default()
        };
        let (_, rho) = train_probe(&features, &shuffled, &cfg).unwrap();
        worst = worst.max(rho.abs());
    }
    assert!(worst < 0.5, "shuffled-label Spearman reached {worst}");
}

#[test]
fn probe_rejects_tiny_datasets_and_leaves_upstream_frozen() {
    let (features, labels) = synthetic_probe_data(8, 4, 4, 0);
    assert!(train_probe(&features, &labels, &ProbeConfig::default()).is_err());

    // Upstream freeze: model parameters identical before/after probing on
    // model-derived features.
    let state = ModelState::new(ModelConfig::tiny(Objective::Mlm, LossKind::Xe)).unwrap();
    let before = state.params.clone();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..20 {
        let ids: Vec<u32> = (0..6).map(|_| rng.gen_range(0..64)).collect();
        features.push(state.hidden_states(&ids).unwrap());
        labels.push(i as f64 + rng.gen_range(-0.1..0.1));
    }
    let cfg = ProbeConfig {
        epochs: 20,
        ..ProbeConfig::default()
    };
    train_probe(&features, &labels, &cfg).unwrap();
    assert_eq!(state.params, before);
}

// --- synonym confusion ---------------------------------------------------

#[test]
fn confusion_uniform_closed_form() {
    // Uniform distribution over the 64 codons, zero mass on specials:
    // every position errs (argmax is codon 0 unless target is 0) and the
    // synonym mass is (m−1)/64 for a target with m synonyms.
    let probs = {
        let mut p = vec![0.0; 70];
        for c in 0..NUM_CODONS {
            p[c] = 1.0 / NUM_CODONS as f64;
        }
        p
    };
    let mut acc = ConfusionAccum::new();
    // Under exact ties the argmax resolves to the last codon (63), so use
    // targets 0..63: every one of them is an "error".
    let targets: Vec<u32> = (0..NUM_CODONS as u32 - 1).collect();
    for &t in &targets {
        acc.add(&probs, t);
    }
    let report = acc.finish();
    let expect: f64 = targets
        .iter()
        .map(|&t| (synonyms_of(t as usize).len() as f64 - 1.0) / 64.0)
        .sum::<f64>()
        / targets.len() as f64;
    assert!((report.syn_mass_on_error - expect).abs() < 1e-12);
    assert_eq!(report.error_positions, targets.len());
}

#[test]
fn confusion_perfect_model_flagged_as_one() {
    let mut acc = ConfusionAccum::new();
    let mut probs = vec![0.0; 70];
    probs[5] = 1.0;
    acc.add(&probs, 5);
    let report = acc.finish();
    assert!(report.no_errors);
    assert_eq!(report.syn_mass_on_error, 1.0);
}

#[test]
fn confusion_runs_on_untrained_models_and_writes_wheel_csv() {
    let state = ModelState::new(ModelConfig::tiny(Objective::Clm, LossKind::Xe)).unwrap();
    let corpus: Vec<TokenSequence> = (0..4)
        .map(|i| TokenSequence::from_codon_ids(vec![14, 1 + i, 33, 50]))
        .collect();
    let report = synonym_confusion(&state, &corpus, 7).unwrap();
    assert!(report.supervised_positions > 0);
    assert!((0.0..=1.0).contains(&report.syn_mass_on_error));
    assert_eq!(report.wheel.len(), 64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wheel.csv");
    report.write_wheel_csv(&path, "tiny-clm").unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("aminoAcid,codon,meanProb,model\n"));
    assert_eq!(text.lines().count(), 65);

    // MLM path with deterministic masking.
    let mstate = ModelState::new(ModelConfig::tiny(Objective::Mlm, LossKind::Hxe)).unwrap();
    let a = synonym_confusion(&mstate, &corpus, 3).unwrap();
    let b = synonym_confusion(&mstate, &corpus, 3).unwrap();
    assert_eq!(a.syn_mass_on_error, b.syn_mass_on_error);
}
