//! Nucleotide text to token ids and back, plus FASTA / JSONL corpus IO.
//!
//! Three schemes are supported: codon (the default everywhere else in the
//! toolkit), single nucleotide, and 6-mer with a configurable stride. The
//! codon vocabulary is exactly 70 symbols: the 64 codons at ids 0..63 so
//! hierarchy lookups stay array-indexable, then the 6 specials.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genetic_code::{codon_string, NUM_CODONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Codon,
    Nucleotide,
    Kmer6,
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid character {ch:?} at position {pos}")]
    InvalidCharacter { ch: char, pos: usize },
    #[error("sequence length {len} is not compatible with {what}")]
    LengthNotDivisible { len: usize, what: String },
    #[error("unknown chunk {0:?}")]
    UnknownChunk(String),
    #[error("token id {0} cannot be decoded (MASK/UNK present)")]
    Undecodable(u32),
    #[error("token id {0} is out of vocabulary range")]
    OutOfRange(u32),
    #[error("FASTA format error: {0}")]
    FastaFormat(String),
    #[error("kmer stride must be in 1..=6, got {0}")]
    BadStride(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ids of the six special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specials {
    pub pad: u32,
    pub mask: u32,
    pub unk: u32,
    pub bos: u32,
    pub eos: u32,
    pub cls: u32,
}

const SPECIAL_TOKENS: [&str; 6] = ["<pad>", "<mask>", "<unk>", "<bos>", "<eos>", "<cls>"];

#[derive(Debug, Clone)]
pub struct Vocabulary {
    scheme: Scheme,
    /// For kmer6 only: offset between consecutive windows, 1..=6.
    stride: usize,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    specials: Specials,
}

impl Vocabulary {
    /// The 70-symbol codon vocabulary: codons 0..63, specials 64..69.
    pub fn codon() -> Vocabulary {
        let tokens: Vec<String> = (0..NUM_CODONS).map(codon_string).collect();
        Self::build(Scheme::Codon, 3, tokens)
    }

    pub fn nucleotide() -> Vocabulary {
        let tokens = vec!["A".into(), "C".into(), "G".into(), "U".into()];
        Self::build(Scheme::Nucleotide, 1, tokens)
    }

    pub fn kmer6(stride: usize) -> Result<Vocabulary, TokenizerError> {
        if !(1..=6).contains(&stride) {
            return Err(TokenizerError::BadStride(stride));
        }
        let mut tokens = Vec::with_capacity(4096);
        let bases = ["A", "C", "G", "U"];
        for i in 0..4096usize {
            let mut s = String::with_capacity(6);
            for shift in (0..6).rev() {
                s.push_str(bases[(i >> (2 * shift)) & 3]);
            }
            tokens.push(s);
        }
        let mut v = Self::build(Scheme::Kmer6, 6, tokens);
        v.stride = stride;
        Ok(v)
    }

    fn build(scheme: Scheme, unit: usize, mut tokens: Vec<String>) -> Vocabulary {
        let base = tokens.len() as u32;
        tokens.extend(SPECIAL_TOKENS.iter().map(|s| s.to_string()));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            scheme,
            stride: unit,
            tokens,
            index,
            specials: Specials {
                pad: base,
                mask: base + 1,
                unk: base + 2,
                bos: base + 3,
                eos: base + 4,
                cls: base + 5,
            },
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn is_special(&self, id: u32) -> bool {
        id >= self.specials.pad
    }

    /// JSON dump (`helm-vocab/1`).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": "helm-vocab/1",
            "scheme": self.scheme,
            "stride": self.stride,
            "tokens": self.tokens,
            "specials": self.specials,
        })
    }

    /// Tokenizes a normalized sequence. In lenient mode unknown chunks map
    /// to UNK; strict mode rejects them. No framing tokens are added.
    pub fn encode(&self, seq: &str, strict: bool) -> Result<TokenSequence, TokenizerError> {
        if seq.is_empty() {
            return Err(TokenizerError::EmptyInput);
        }
        let unit = match self.scheme {
            Scheme::Codon => 3,
            Scheme::Nucleotide => 1,
            Scheme::Kmer6 => 6,
        };
        let len = seq.len();
        let starts: Vec<usize> = match self.scheme {
            Scheme::Kmer6 => {
                if len < 6 || (len - 6) % self.stride != 0 {
                    return Err(TokenizerError::LengthNotDivisible {
                        len,
                        what: format!("6-mer windows at stride {}", self.stride),
                    });
                }
                (0..=len - 6).step_by(self.stride).collect()
            }
            _ => {
                if len % unit != 0 {
                    return Err(TokenizerError::LengthNotDivisible {
                        len,
                        what: format!("chunks of {unit}"),
                    });
                }
                (0..len).step_by(unit).collect()
            }
        };
        let mut ids = Vec::with_capacity(starts.len());
        for s in starts {
            let chunk = &seq[s..s + unit];
            match self.index.get(chunk) {
                Some(&id) => ids.push(id),
                None if strict => return Err(TokenizerError::UnknownChunk(chunk.into())),
                None => ids.push(self.specials.unk),
            }
        }
        Ok(TokenSequence {
            ids,
            scheme: self.scheme,
            source_length: len,
        })
    }

    /// Inverse of [`encode`](Self::encode). PAD/BOS/EOS/CLS are skipped;
    /// MASK or UNK make the sequence undecodable.
    pub fn decode(&self, seq: &TokenSequence) -> Result<String, TokenizerError> {
        let mut out = String::new();
        let mut first_content = true;
        for &id in &seq.ids {
            if id == self.specials.mask || id == self.specials.unk {
                return Err(TokenizerError::Undecodable(id));
            }
            if self.is_special(id) {
                continue;
            }
            let token = self
                .token_of(id)
                .ok_or(TokenizerError::OutOfRange(id))?;
            if self.scheme == Scheme::Kmer6 && !first_content {
                out.push_str(&token[6 - self.stride..]);
            } else {
                out.push_str(token);
            }
            first_content = false;
        }
        Ok(out)
    }
}

/// Token ids plus framing metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub scheme: Scheme,
    /// Nucleotide count of the source text.
    pub source_length: usize,
}

impl TokenSequence {
    pub fn from_codon_ids(ids: Vec<u32>) -> TokenSequence {
        let n = ids.len();
        TokenSequence {
            ids,
            scheme: Scheme::Codon,
            source_length: 3 * n,
        }
    }
}

/// Uppercases, maps T to U, and strips all whitespace. In strict mode any
/// other character is rejected; in lenient mode it becomes `N`, which
/// encodes to UNK downstream.
pub fn normalize(raw: &str, strict: bool) -> Result<String, TokenizerError> {
    if raw.trim().is_empty() {
        return Err(TokenizerError::EmptyInput);
    }
    let mut out = String::with_capacity(raw.len());
    for (pos, ch) in raw.chars().enumerate() {
        if ch.is_whitespace() {
            continue;
        }
        match ch.to_ascii_uppercase() {
            'T' => out.push('U'),
            c @ ('A' | 'C' | 'G' | 'U') => out.push(c),
            _ if strict => return Err(TokenizerError::InvalidCharacter { ch, pos }),
            _ => out.push('N'),
        }
    }
    Ok(out)
}

/// One sequence with an identifier, as parsed from FASTA or JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub sequence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<BTreeMap<String, String>>,
}

/// Streaming FASTA reader; one record per header line.
pub struct FastaReader<R: BufRead> {
    lines: std::io::Lines<R>,
    pending_header: Option<String>,
    strict: bool,
    done: bool,
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(reader: R) -> FastaReader<R> {
        FastaReader {
            lines: reader.lines(),
            pending_header: None,
            strict: true,
            done: false,
        }
    }

    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<SequenceRecord, TokenizerError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut body = String::new();
        loop {
            match self.lines.next() {
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(line)) => {
                    let line = line.trim_end();
                    if line.is_empty() {
                        continue;
                    }
                    if let Some(header) = line.strip_prefix('>') {
                        match self.pending_header.replace(header.trim().to_string()) {
                            None => {
                                if !body.is_empty() {
                                    self.done = true;
                                    return Some(Err(TokenizerError::FastaFormat(
                                        "sequence body before any header".into(),
                                    )));
                                }
                            }
                            Some(prev) => {
                                if body.is_empty() {
                                    self.done = true;
                                    return Some(Err(TokenizerError::FastaFormat(format!(
                                        "record {prev:?} has an empty body"
                                    ))));
                                }
                                return Some(finish_record(prev, &body, self.strict));
                            }
                        }
                    } else {
                        if self.pending_header.is_none() {
                            self.done = true;
                            return Some(Err(TokenizerError::FastaFormat(
                                "sequence body before any header".into(),
                            )));
                        }
                        body.push_str(line);
                    }
                }
                None => {
                    self.done = true;
                    return match self.pending_header.take() {
                        Some(header) if body.is_empty() => Some(Err(TokenizerError::FastaFormat(
                            format!("record {header:?} has an empty body"),
                        ))),
                        Some(header) => Some(finish_record(header, &body, self.strict)),
                        None => None,
                    };
                }
            }
        }
    }
}

fn finish_record(
    id: String,
    body: &str,
    strict: bool,
) -> Result<SequenceRecord, TokenizerError> {
    Ok(SequenceRecord {
        id,
        sequence: normalize(body, strict)?,
        annotations: None,
    })
}

/// One line of the JSONL corpus format shared by all pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub sequence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
}

/// Reads a JSONL corpus file, one object per line.
pub fn read_jsonl_corpus(path: &std::path::Path) -> Result<Vec<CorpusRecord>, anyhow::Error> {
    use std::io::BufReader;
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("line {}: {e}", lineno + 1))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl_corpus(
    path: &std::path::Path,
    records: &[CorpusRecord],
) -> Result<(), anyhow::Error> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut file, rec)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genetic_code::codon_index;
    use proptest::prelude::*;

    #[test]
    fn normalize_rules() {
        assert_eq!(normalize("atgGGAtaa", true).unwrap(), "AUGGGAUAA");
        assert_eq!(normalize("AUG GGA", true).unwrap(), "AUGGGA");
        assert_eq!(normalize("  acgt\n", true).unwrap(), "ACGU");
        assert!(matches!(
            normalize("AUGN", true),
            Err(TokenizerError::InvalidCharacter { ch: 'N', pos: 3 })
        ));
        assert_eq!(normalize("AUGN", false).unwrap(), "AUGN");
        assert!(matches!(normalize("  ", true), Err(TokenizerError::EmptyInput)));
    }

    #[test]
    fn codon_vocabulary_is_seventy_symbols() {
        let v = Vocabulary::codon();
        assert_eq!(v.size(), 70);
        assert_eq!(v.id_of("AAA"), Some(0));
        assert_eq!(v.id_of("UUU"), Some(63));
        assert_eq!(v.specials().pad, 64);
        assert_eq!(v.specials().cls, 69);
        for id in 0..70u32 {
            let tok = v.token_of(id).unwrap();
            assert_eq!(v.id_of(tok), Some(id));
        }
    }

    #[test]
    fn encode_codon_scheme() {
        let v = Vocabulary::codon();
        let ts = v.encode("AUGGGAUAA", true).unwrap();
        assert_eq!(
            ts.ids,
            vec![
                codon_index("AUG").unwrap() as u32,
                codon_index("GGA").unwrap() as u32,
                codon_index("UAA").unwrap() as u32
            ]
        );
        assert_eq!(ts.source_length, 9);
        assert!(matches!(
            v.encode("AUGGA", true),
            Err(TokenizerError::LengthNotDivisible { len: 5, .. })
        ));
        // lenient: unknown chunk becomes UNK
        let ts = v.encode("AUGNNN", false).unwrap();
        assert_eq!(ts.ids[1], v.specials().unk);
        assert!(v.encode("AUGNNN", true).is_err());
    }

    #[test]
    fn encode_kmer6() {
        let v = Vocabulary::kmer6(6).unwrap();
        let ts = v.encode("AUGGCAUGGCAU", true).unwrap();
        assert_eq!(ts.ids.len(), 2);
        assert_eq!(v.decode(&ts).unwrap(), "AUGGCAUGGCAU");

        let v2 = Vocabulary::kmer6(3).unwrap();
        let ts2 = v2.encode("AUGGCAUGG", true).unwrap();
        assert_eq!(ts2.ids.len(), 2); // windows at 0 and 3
        assert_eq!(v2.decode(&ts2).unwrap(), "AUGGCAUGG");
        assert!(Vocabulary::kmer6(0).is_err());
        assert!(Vocabulary::kmer6(7).is_err());
    }

    #[test]
    fn decode_rules() {
        let v = Vocabulary::codon();
        let s = v.specials();
        let ts = TokenSequence {
            ids: vec![s.bos, codon_index("AUG").unwrap() as u32, s.eos],
            scheme: Scheme::Codon,
            source_length: 3,
        };
        assert_eq!(v.decode(&ts).unwrap(), "AUG");
        let bad = TokenSequence {
            ids: vec![codon_index("AUG").unwrap() as u32, s.mask],
            scheme: Scheme::Codon,
            source_length: 6,
        };
        assert!(matches!(v.decode(&bad), Err(TokenizerError::Undecodable(_))));
    }

    #[test]
    fn fasta_parsing() {
        let input = ">a\nAUG\nGGA\n>b\nUUU\n";
        let records: Result<Vec<_>, _> =
            FastaReader::new(std::io::Cursor::new(input)).collect();
        let records = records.unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, "a");
        assert_eq!(records[0].sequence, "AUGGGA");
        assert_eq!(records[1].id, "b");

        let empty_body = ">a\n>b\nAUG\n";
        let first = FastaReader::new(std::io::Cursor::new(empty_body))
            .next()
            .unwrap();
        assert!(matches!(first, Err(TokenizerError::FastaFormat(_))));

        let headerless = "AUG\n";
        let first = FastaReader::new(std::io::Cursor::new(headerless))
            .next()
            .unwrap();
        assert!(matches!(first, Err(TokenizerError::FastaFormat(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let records = vec![
            CorpusRecord {
                id: "x".into(),
                sequence: "AUGGGA".into(),
                label: Some(1.5),
            },
            CorpusRecord {
                id: "y".into(),
                sequence: "UUUCCC".into(),
                label: None,
            },
        ];
        write_jsonl_corpus(&path, &records).unwrap();
        assert_eq!(read_jsonl_corpus(&path).unwrap(), records);
    }

    fn random_codon_string() -> impl Strategy<Value = String> {
        proptest::collection::vec(0usize..64, 1..60)
            .prop_map(|v| v.into_iter().map(codon_string).collect::<String>())
    }

    proptest! {
        #[test]
        fn round_trip_codon(seq in random_codon_string()) {
            let v = Vocabulary::codon();
            let ts = v.encode(&seq, true).unwrap();
            prop_assert_eq!(ts.source_length, 3 * ts.ids.len());
            prop_assert_eq!(v.decode(&ts).unwrap(), seq);
        }

        #[test]
        fn codon_and_nucleotide_decodes_agree(seq in random_codon_string()) {
            let vc = Vocabulary::codon();
            let vn = Vocabulary::nucleotide();
            let a = vc.decode(&vc.encode(&seq, true).unwrap()).unwrap();
            let b = vn.decode(&vn.encode(&seq, true).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
