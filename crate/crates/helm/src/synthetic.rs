//! Seeded synthetic corpus generator used by the desk-scale evaluation
//! harness: a handful of protein templates realized as mRNA with skewed
//! synonymous-codon usage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::genetic_code::{codons_of, start_index, AminoAcid, STOP_CODONS};
use crate::tokenizer::TokenSequence;

/// A generated corpus plus its provenance: which template produced each
/// sequence and the per-amino-acid preferred codon used for skewing.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub sequences: Vec<TokenSequence>,
    pub template_of: Vec<usize>,
    pub templates: Vec<Vec<AminoAcid>>,
    /// Preferred codon id per amino acid (the skew target).
    pub preferred: Vec<(AminoAcid, usize)>,
}

/// Probability of drawing the preferred synonymous codon; the remainder is
/// spread uniformly over the other synonyms.
pub const SKEW: f64 = 0.7;

/// Generates `n` sequences of `len_codons` codons (AUG + coding body + stop)
/// from `n_templates` random protein templates. Codon choice per amino acid
/// is skewed toward one preferred synonym, mimicking codon-usage bias.
pub fn synthetic_corpus(
    n: usize,
    len_codons: usize,
    n_templates: usize,
    seed: u64,
) -> SyntheticCorpus {
    assert!(len_codons >= 3, "need room for start, body, and stop");
    assert!(n_templates >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Amino acids available for template bodies: coding, minus Met so the
    // start codon stays unique within a sequence.
    let body_alphabet: Vec<AminoAcid> = AminoAcid::all_coding()
        .iter()
        .copied()
        .filter(|&aa| aa != AminoAcid::Met)
        .collect();

    let preferred: Vec<(AminoAcid, usize)> = AminoAcid::all_coding()
        .iter()
        .map(|&aa| {
            let codons = codons_of(aa);
            (aa, codons[rng.gen_range(0..codons.len())])
        })
        .collect();
    let preferred_of = |aa: AminoAcid| preferred.iter().find(|&&(a, _)| a == aa).unwrap().1;

    let body_len = len_codons - 2;
    let templates: Vec<Vec<AminoAcid>> = (0..n_templates)
        .map(|_| {
            (0..body_len)
                .map(|_| body_alphabet[rng.gen_range(0..body_alphabet.len())])
                .collect()
        })
        .collect();

    let stop_ids: Vec<usize> = STOP_CODONS
        .iter()
        .map(|s| crate::genetic_code::codon_index(s).unwrap())
        .collect();

    let mut sequences = Vec::with_capacity(n);
    let mut template_of = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.gen_range(0..n_templates);
        template_of.push(t);
        let mut ids = Vec::with_capacity(len_codons);
        ids.push(start_index() as u32);
        for &aa in &templates[t] {
            let codons = codons_of(aa);
            let pick = if codons.len() == 1 || rng.gen::<f64>() < SKEW {
                preferred_of(aa)
            } else {
                let others: Vec<usize> = codons
                    .iter()
                    .copied()
                    .filter(|&c| c != preferred_of(aa))
                    .collect();
                others[rng.gen_range(0..others.len())]
            };
            ids.push(pick as u32);
        }
        ids.push(stop_ids[rng.gen_range(0..stop_ids.len())] as u32);
        sequences.push(TokenSequence::from_codon_ids(ids));
    }
    SyntheticCorpus {
        sequences,
        template_of,
        templates,
        preferred,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genetic_code::is_stop;
    use crate::model::translate;

    #[test]
    fn corpus_shape_and_determinism() {
        let a = synthetic_corpus(50, 60, 5, 42);
        let b = synthetic_corpus(50, 60, 5, 42);
        assert_eq!(a.sequences.len(), 50);
        assert_eq!(a.templates.len(), 5);
        for (x, y) in a.sequences.iter().zip(&b.sequences) {
            assert_eq!(x.ids, y.ids);
        }
        for seq in &a.sequences {
            assert_eq!(seq.ids.len(), 60);
            assert_eq!(seq.ids[0], 14, "starts with AUG");
            assert!(is_stop(*seq.ids.last().unwrap() as usize));
        }
    }

    #[test]
    fn same_template_means_same_protein() {
        let c = synthetic_corpus(100, 30, 3, 7);
        for (i, seq) in c.sequences.iter().enumerate() {
            for (j, other) in c.sequences.iter().enumerate().skip(i + 1) {
                if c.template_of[i] == c.template_of[j] {
                    assert_eq!(translate(seq).unwrap(), translate(other).unwrap());
                }
            }
        }
    }

    #[test]
    fn codon_usage_is_skewed_toward_preferred() {
        let c = synthetic_corpus(300, 60, 5, 11);
        let report = crate::analysis::codon_usage_entropy(&c.sequences).unwrap();
        // Skewed sampling keeps multi-codon entropies well below uniform cap.
        for row in &report.per_amino_acid {
            let aa = crate::genetic_code::AminoAcid::from_letter(row.amino_acid as u8).unwrap();
            let m = codons_of(aa).len();
            if m >= 4 && row.occurrences > 200 {
                let cap = (m as f64).log2();
                assert!(
                    row.entropy_bits < 0.92 * cap,
                    "{}: {} vs cap {}",
                    row.amino_acid,
                    row.entropy_bits,
                    cap
                );
            }
        }
    }
}
