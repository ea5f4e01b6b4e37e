//! Parses an in-memory FASTA snippet and encodes each record with the three
//! tokenization schemes: codon, nucleotide, and overlapping 6-mer.
//!
//!     cargo run --example tokenize_fasta

use std::io::BufReader;

use helm::tokenizer::FastaReader;
use helm::Vocabulary;

const FASTA: &str = "\
>rec1 toy transcript
AUGGGAGGU
UAA
>rec2 lowercase and DNA input are normalized
atgggtggatga
";

fn main() {
    let codon = Vocabulary::codon();
    let nucleotide = Vocabulary::nucleotide();
    let kmer = Vocabulary::kmer6(3).unwrap();

    for record in FastaReader::new(BufReader::new(FASTA.as_bytes())) {
        let record = record.unwrap();
        println!("{} ({} nt)", record.id, record.sequence.len());
        for vocab in [&codon, &nucleotide, &kmer] {
            let toks = vocab.encode(&record.sequence, true).unwrap();
            println!(
                "  {:?} (stride {}): {:?}",
                vocab.scheme(),
                vocab.stride(),
                toks.ids
            );
        }
        // Codon encoding round-trips to the normalized RNA text.
        let toks = codon.encode(&record.sequence, true).unwrap();
        let rna = helm::tokenizer::normalize(&record.sequence, true).unwrap();
        assert_eq!(codon.decode(&toks).unwrap(), rna);
        println!("  round-trip: {rna}");
    }

    println!(
        "codon vocabulary: {} symbols (64 codons + PAD/MASK/UNK/BOS/EOS/CLS), AUG = {}",
        codon.size(),
        codon.id_of("AUG").unwrap()
    );
}
