//! Trains a tiny causal language model, samples new sequences at two
//! temperatures, and translates the samples to protein.
//!
//!     cargo run --release --example generate_clm

use helm::model::{train, translate};
use helm::synthetic::synthetic_corpus;
use helm::{LossKind, ModelConfig, Objective, Vocabulary};

fn main() {
    let mut cfg = ModelConfig::tiny(Objective::Clm, LossKind::Xe);
    cfg.epochs = 4;
    cfg.context_length = 16;
    let corpus = synthetic_corpus(64, 10, 3, 9);

    let (state, report) = train(&cfg, &corpus.sequences).unwrap();
    println!("trained {} steps, final loss {:.4}", report.steps, report.final_loss);

    let vocab = Vocabulary::codon();
    let bos = vocab.specials().bos;
    for temperature in [0.7, 1.2] {
        println!("temperature {temperature}:");
        for seed in 0..3u64 {
            let sample = state.sample(&[bos], temperature, 14, seed).unwrap();
            // Keep only codon ids; specials like EOS are framing, not sequence.
            let codons: Vec<u32> = sample.ids.iter().copied().filter(|&t| t < 64).collect();
            let seq = helm::tokenizer::TokenSequence::from_codon_ids(codons);
            let rna = vocab.decode(&seq).unwrap();
            let protein = translate(&seq).unwrap_or_else(|_| "?".into());
            println!("  seed {seed}: {rna}  ->  {protein}");
        }
    }
}
