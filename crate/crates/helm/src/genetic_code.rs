//! The standard genetic code over RNA codons.
//!
//! Codons are indexed lexicographically over the base order A < C < G < U,
//! so `AAA` is 0 and `UUU` is 63. These indices double as the codon token
//! ids of the codon-scheme vocabulary.

pub const BASES: [u8; 4] = [b'A', b'C', b'G', b'U'];
pub const NUM_CODONS: usize = 64;

/// Amino acid encoded at each codon index, `*` for the three stop codons.
/// Laid out in lexicographic codon order (AAA, AAC, ..., UUU).
const CODE: &[u8; 64] = b"KNKNTTTTRSRSIIMIQHQHPPPPRRRRLLLLEDEDAAAAGGGGVVVV*Y*YSSSS*CWCLFLF";

/// Amino acids of the standard code plus the stop signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AminoAcid {
    Ala,
    Arg,
    Asn,
    Asp,
    Cys,
    Gln,
    Glu,
    Gly,
    His,
    Ile,
    Leu,
    Lys,
    Met,
    Phe,
    Pro,
    Ser,
    Thr,
    Trp,
    Tyr,
    Val,
    Stop,
}

impl AminoAcid {
    pub fn from_letter(letter: u8) -> Option<AminoAcid> {
        use AminoAcid::*;
        Some(match letter {
            b'A' => Ala,
            b'R' => Arg,
            b'N' => Asn,
            b'D' => Asp,
            b'C' => Cys,
            b'Q' => Gln,
            b'E' => Glu,
            b'G' => Gly,
            b'H' => His,
            b'I' => Ile,
            b'L' => Leu,
            b'K' => Lys,
            b'M' => Met,
            b'F' => Phe,
            b'P' => Pro,
            b'S' => Ser,
            b'T' => Thr,
            b'W' => Trp,
            b'Y' => Tyr,
            b'V' => Val,
            b'*' => Stop,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        use AminoAcid::*;
        match self {
            Ala => 'A',
            Arg => 'R',
            Asn => 'N',
            Asp => 'D',
            Cys => 'C',
            Gln => 'Q',
            Glu => 'E',
            Gly => 'G',
            His => 'H',
            Ile => 'I',
            Leu => 'L',
            Lys => 'K',
            Met => 'M',
            Phe => 'F',
            Pro => 'P',
            Ser => 'S',
            Thr => 'T',
            Trp => 'W',
            Tyr => 'Y',
            Val => 'V',
            Stop => '*',
        }
    }

    pub fn name(self) -> &'static str {
        use AminoAcid::*;
        match self {
            Ala => "Alanine",
            Arg => "Arginine",
            Asn => "Asparagine",
            Asp => "Aspartate",
            Cys => "Cysteine",
            Gln => "Glutamine",
            Glu => "Glutamate",
            Gly => "Glycine",
            His => "Histidine",
            Ile => "Isoleucine",
            Leu => "Leucine",
            Lys => "Lysine",
            Met => "Methionine",
            Phe => "Phenylalanine",
            Pro => "Proline",
            Ser => "Serine",
            Thr => "Threonine",
            Trp => "Tryptophan",
            Tyr => "Tyrosine",
            Val => "Valine",
            Stop => "Stop",
        }
    }

    /// The 20 coding amino acids in alphabetical order of their full names.
    pub fn all_coding() -> &'static [AminoAcid] {
        use AminoAcid::*;
        &[
            Ala, Arg, Asn, Asp, Cys, Gln, Glu, Gly, His, Ile, Leu, Lys, Met, Phe, Pro, Ser, Thr,
            Trp, Tyr, Val,
        ]
    }
}

/// Codon index of a 3-letter RNA codon string, if well formed.
pub fn codon_index(codon: &str) -> Option<usize> {
    let b = codon.as_bytes();
    if b.len() != 3 {
        return None;
    }
    let mut idx = 0usize;
    for &c in b {
        idx = idx * 4 + BASES.iter().position(|&x| x == c)?;
    }
    Some(idx)
}

/// Codon string at a codon index (0..64).
pub fn codon_string(index: usize) -> String {
    assert!(index < NUM_CODONS);
    let mut s = String::with_capacity(3);
    for shift in [4usize, 2, 0] {
        s.push(BASES[(index >> shift) & 3] as char);
    }
    s
}

pub fn amino_acid_of(codon: usize) -> AminoAcid {
    AminoAcid::from_letter(CODE[codon]).unwrap()
}

pub const START_CODON: &str = "AUG";
pub const STOP_CODONS: [&str; 3] = ["UAA", "UAG", "UGA"];

pub fn start_index() -> usize {
    codon_index(START_CODON).unwrap()
}

pub fn is_stop(codon: usize) -> bool {
    amino_acid_of(codon) == AminoAcid::Stop
}

/// Codon indices encoding `aa`, in lexicographic order.
pub fn codons_of(aa: AminoAcid) -> Vec<usize> {
    (0..NUM_CODONS).filter(|&c| amino_acid_of(c) == aa).collect()
}

/// Synonymous codons of `codon` (same amino acid, including itself).
pub fn synonyms_of(codon: usize) -> Vec<usize> {
    codons_of(amino_acid_of(codon))
}
