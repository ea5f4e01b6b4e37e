//! Runs the evaluation metrics on synthetic data: codon-usage entropy,
//! synonymous-variant clustering with silhouette score, Fréchet biological
//! distance (FBD) with the 3-mer count embedder, Spearman correlation, and
//! the synonym-confusion metric of a trained model.
//!
//!     cargo run --release --example evaluate_metrics

use helm::analysis::{
    codon_usage_entropy, fbd_report, kmeans, silhouette, spearman, synonym_confusion,
    synonymous_variants, Embedder, KmerCountEmbedder,
};
use helm::model::train;
use helm::synthetic::synthetic_corpus;
use helm::{LossKind, ModelConfig, Objective};

fn main() {
    let corpus = synthetic_corpus(200, 24, 6, 5);

    // 1. Codon-usage entropy (bits). The generator skews synonym choice, so
    // entropies sit well below the uniform cap.
    let entropy = codon_usage_entropy(&corpus.sequences).unwrap();
    println!("entropy: top-5 average {:.4} bits", entropy.top5_average);
    for row in entropy.per_amino_acid.iter().take(4) {
        println!(
            "  {} ({:<3}) {:>5} occurrences  {:.4} bits",
            row.amino_acid, row.name, row.occurrences, row.entropy_bits
        );
    }

    // 2. Cluster synonymous variants of a few base sequences with a simple
    // 3-mer embedder; variants of the same protein should cluster together.
    // (Full 8000-dim counts here: the hashed variant can collide proteins.)
    let embedder = KmerCountEmbedder { hashed: false };
    let n_base = 5;
    // One base sequence per distinct template, so the 5 ground-truth
    // clusters really are 5 different proteins.
    let bases: Vec<&helm::TokenSequence> = {
        let mut seen = std::collections::HashSet::new();
        corpus
            .sequences
            .iter()
            .zip(&corpus.template_of)
            .filter(|&(_, &t)| seen.insert(t))
            .map(|(s, _)| s)
            .take(n_base)
            .collect()
    };
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (b, base) in bases.into_iter().enumerate() {
        for var in synonymous_variants(base, 20, b as u64).unwrap() {
            let protein = helm::model::translate(&var).unwrap();
            points.push(embedder.embed_protein(&protein).unwrap());
            truth.push(b);
        }
    }
    let clusters = kmeans(&points, n_base, 11, 100).unwrap();
    let score = silhouette(&points, &clusters.labels).unwrap();
    // Variants of the same base protein must land in the same cluster.
    for chunk in clusters.labels.chunks(20).zip(truth.chunks(20)) {
        assert!(chunk.0.iter().all(|&l| l == chunk.0[0]));
    }
    println!("clustering: k={n_base}, inertia {:.4}, silhouette {score:.4}", clusters.inertia);

    // 3. FBD between two halves of the same corpus (low) and between the
    // corpus and a shuffled-codon corpus (higher).
    let hashed = KmerCountEmbedder { hashed: true };
    let (a, b) = corpus.sequences.split_at(100);
    let fbd_same = fbd_report(a, b, &hashed).unwrap();
    let other = synthetic_corpus(100, 24, 6, 99);
    let fbd_other = fbd_report(a, &other.sequences, &hashed).unwrap();
    println!("fbd: same-distribution {fbd_same:.4}, different templates {fbd_other:.4}");

    // 4. Spearman rank correlation.
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    println!("spearman([1,2,3,4],[1,3,2,4]) = {rho:.4}");

    // 5. Synonym confusion of a quickly trained MLM: of the probability mass
    // at wrongly predicted positions, how much lands on synonyms?
    let mut cfg = ModelConfig::tiny(Objective::Mlm, LossKind::Hxe);
    cfg.epochs = 2;
    cfg.context_length = 16;
    let small = synthetic_corpus(48, 12, 4, 3);
    let (state, _) = train(&cfg, &small.sequences).unwrap();
    let confusion = synonym_confusion(&state, &small.sequences, 17).unwrap();
    println!(
        "synonym confusion: synMassOnError {:.4} over {} error positions",
        confusion.syn_mass_on_error, confusion.error_positions
    );
}
