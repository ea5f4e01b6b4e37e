//! OAS-style antibody-record curation: filter, deduplicate, balance.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::normalize;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("cannot balance: chain class {0:?} is empty")]
    EmptyClass(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    Heavy,
    Light,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OasRecord {
    /// Normalized RNA text (uppercase, T→U).
    pub sequence: String,
    pub anarci_status: String,
    pub v_identity: f64,
    pub j_identity: f64,
    pub productive: bool,
    pub complete_vdj: bool,
    pub species: String,
    pub chain: Chain,
    pub isotype: Option<String>,
}

/// Column-name mapping from logical fields to TSV header names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ColumnMap {
    pub sequence: String,
    pub anarci_status: String,
    pub v_identity: String,
    pub j_identity: String,
    pub productive: String,
    pub complete_vdj: String,
    pub species: String,
    pub chain: String,
    pub isotype: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> ColumnMap {
        ColumnMap {
            sequence: "sequence".into(),
            anarci_status: "anarci_status".into(),
            v_identity: "v_identity".into(),
            j_identity: "j_identity".into(),
            productive: "productive".into(),
            complete_vdj: "complete_vdj".into(),
            species: "species".into(),
            chain: "chain".into(),
            isotype: Some("isotype".into()),
        }
    }
}

/// Parses a TSV stream with a header row. In strict mode any malformed row
/// is an error; in lenient mode malformed rows are counted and skipped.
/// Returns the records plus the number of skipped rows.
pub fn parse_records<R: Read>(
    reader: R,
    columns: &ColumnMap,
    strict: bool,
) -> Result<(Vec<OasRecord>, usize), CurationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, CurationError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CurationError::MissingColumn(name.to_string()))
    };
    let seq_i = find(&columns.sequence)?;
    let anarci_i = find(&columns.anarci_status)?;
    let vid_i = find(&columns.v_identity)?;
    let jid_i = find(&columns.j_identity)?;
    let prod_i = find(&columns.productive)?;
    let vdj_i = find(&columns.complete_vdj)?;
    let species_i = find(&columns.species)?;
    let chain_i = find(&columns.chain)?;
    let isotype_i = match &columns.isotype {
        Some(name) => headers.iter().position(|h| h == name.as_str()),
        None => None,
    };

    let mut out = Vec::new();
    let mut skipped = 0;
    for (row_idx, row) in rdr.records().enumerate() {
        let row_no = row_idx + 2; // 1-based, after the header
        let parse_row = || -> Result<OasRecord, String> {
            let row = row.as_ref().map_err(|e| e.to_string())?;
            let get = |i: usize| row.get(i).ok_or_else(|| format!("missing field {i}"));
            let real = |i: usize, what: &str| -> Result<f64, String> {
                get(i)?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad {what} value {:?}", get(i).unwrap_or("")))
            };
            let boolean = |i: usize, what: &str| -> Result<bool, String> {
                match get(i)?.trim().to_ascii_lowercase().as_str() {
                    "true" | "t" | "yes" | "1" => Ok(true),
                    "false" | "f" | "no" | "0" => Ok(false),
                    other => Err(format!("bad {what} value {other:?}")),
                }
            };
            let sequence = normalize(get(seq_i)?, false).map_err(|e| e.to_string())?;
            if sequence.is_empty() {
                return Err("empty sequence".into());
            }
            let v_identity = real(vid_i, "vIdentity")?;
            let j_identity = real(jid_i, "jIdentity")?;
            for (v, what) in [(v_identity, "vIdentity"), (j_identity, "jIdentity")] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("{what} {v} outside [0,1]"));
                }
            }
            let chain = match get(chain_i)?.trim().to_ascii_lowercase().as_str() {
                "heavy" | "h" => Chain::Heavy,
                "light" | "l" | "kappa" | "lambda" => Chain::Light,
                other => return Err(format!("bad chain value {other:?}")),
            };
            let isotype = isotype_i
                .and_then(|i| row.get(i))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            Ok(OasRecord {
                sequence,
                anarci_status: get(anarci_i)?.trim().to_string(),
                v_identity,
                j_identity,
                productive: boolean(prod_i, "productive")?,
                complete_vdj: boolean(vdj_i, "completeVdj")?,
                species: get(species_i)?.trim().to_ascii_lowercase(),
                chain,
                isotype,
            })
        };
        match parse_row() {
            Ok(rec) => out.push(rec),
            Err(message) if strict => {
                return Err(CurationError::BadRow {
                    row: row_no,
                    message,
                })
            }
            Err(_) => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Filter rules; defaults follow the curation conventions: identities
/// > 0.7, productive and complete-VDJ required, human only, ANARCI status
/// free of the flag substrings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FilterRules {
    pub min_v_identity: f64,
    pub min_j_identity: f64,
    pub require_productive: bool,
    pub require_complete_vdj: bool,
    pub species: String,
    pub anarci_flags: Vec<String>,
}

impl Default for FilterRules {
    fn default() -> FilterRules {
        FilterRules {
            min_v_identity: 0.7,
            min_j_identity: 0.7,
            require_productive: true,
            require_complete_vdj: true,
            species: "human".into(),
            anarci_flags: vec![
                "unusual".into(),
                "indel".into(),
                "truncation".into(),
                "missing conserved cysteine".into(),
            ],
        }
    }
}

/// Returns pass/fail plus the first failed rule's name.
pub fn filter_record(r: &OasRecord, rules: &FilterRules) -> (bool, Option<&'static str>) {
    if !(r.v_identity > rules.min_v_identity) {
        return (false, Some("vIdentity"));
    }
    if !(r.j_identity > rules.min_j_identity) {
        return (false, Some("jIdentity"));
    }
    if rules.require_productive && !r.productive {
        return (false, Some("productive"));
    }
    if rules.require_complete_vdj && !r.complete_vdj {
        return (false, Some("completeVdj"));
    }
    if r.species != rules.species {
        return (false, Some("species"));
    }
    let status = r.anarci_status.to_ascii_lowercase();
    if rules.anarci_flags.iter().any(|f| status.contains(f.as_str())) {
        return (false, Some("anarciStatus"));
    }
    (true, None)
}

/// Nucleotide 8-mer set for Jaccard similarity.
fn kmer_set(seq: &str, k: usize) -> HashSet<&[u8]> {
    let bytes = seq.as_bytes();
    if bytes.len() < k {
        return HashSet::new();
    }
    bytes.windows(k).collect()
}

/// Jaccard similarity between nucleotide 8-mer sets; exposed for the
/// brute-force dedup oracle in tests.
pub fn kmer_jaccard(a: &str, b: &str, k: usize) -> f64 {
    let sa = kmer_set(a, k);
    let sb = kmer_set(b, k);
    if sa.is_empty() && sb.is_empty() {
        return if a == b { 1.0 } else { 0.0 };
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub const DEDUP_KMER: usize = 8;

/// Greedy single-pass clustering: each record joins the first representative
/// with 8-mer Jaccard ≥ threshold, otherwise becomes a new representative.
/// Returns the surviving representatives and, per input index, the index of
/// its representative in the survivor list.
pub fn dedup(
    records: &[OasRecord],
    threshold: f64,
) -> Result<(Vec<OasRecord>, Vec<usize>), CurationError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CurationError::BadParameter(format!(
            "dedup threshold {threshold} outside (0, 1]"
        )));
    }
    let mut survivors: Vec<OasRecord> = Vec::new();
    let mut cluster_of = Vec::with_capacity(records.len());
    for rec in records {
        let found = survivors
            .iter()
            .position(|rep| kmer_jaccard(&rep.sequence, &rec.sequence, DEDUP_KMER) >= threshold);
        match found {
            Some(c) => cluster_of.push(c),
            None => {
                survivors.push(rec.clone());
                cluster_of.push(survivors.len() - 1);
            }
        }
    }
    Ok((survivors, cluster_of))
}

#[derive(Debug, Clone, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurationStats {
    pub input_records: usize,
    pub malformed_skipped: usize,
    pub rejections_per_rule: BTreeMap<String, usize>,
    pub passed_filter: usize,
    pub dedup_clusters: usize,
    pub dedup_removed: usize,
    pub heavy_before_balance: usize,
    pub light_before_balance: usize,
    pub heavy_after_balance: usize,
    pub light_after_balance: usize,
    pub balance_removed: usize,
    pub isotype_breakdown: BTreeMap<String, usize>,
    pub output_records: usize,
}

/// Downsamples the larger chain class uniformly at random (seeded) to the
/// size of the smaller.
pub fn balance(
    records: &[OasRecord],
    seed: u64,
) -> Result<(Vec<OasRecord>, usize, usize), CurationError> {
    let heavy: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].chain == Chain::Heavy)
        .collect();
    let light: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].chain == Chain::Light)
        .collect();
    if heavy.is_empty() {
        return Err(CurationError::EmptyClass("heavy".into()));
    }
    if light.is_empty() {
        return Err(CurationError::EmptyClass("light".into()));
    }
    let target = heavy.len().min(light.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |idx: &Vec<usize>, rng: &mut ChaCha8Rng| -> Vec<usize> {
        if idx.len() == target {
            idx.clone()
        } else {
            let mut chosen = idx.clone();
            chosen.shuffle(rng);
            chosen.truncate(target);
            chosen.sort_unstable(); // keep input order in the output
            chosen
        }
    };
    let kept_heavy = pick(&heavy, &mut rng);
    let kept_light = pick(&light, &mut rng);
    let mut keep: Vec<usize> = kept_heavy.iter().chain(&kept_light).copied().collect();
    keep.sort_unstable();
    let out = keep.iter().map(|&i| records[i].clone()).collect();
    Ok((out, heavy.len(), light.len()))
}

/// Full pipeline: filter → dedup → balance, with conservation accounting.
pub fn curate(
    records: Vec<OasRecord>,
    rules: &FilterRules,
    dedup_threshold: f64,
    seed: u64,
) -> Result<(Vec<OasRecord>, CurationStats), CurationError> {
    let mut stats = CurationStats {
        input_records: records.len(),
        ..CurationStats::default()
    };
    let mut passed = Vec::new();
    for rec in records {
        match filter_record(&rec, rules) {
            (true, _) => passed.push(rec),
            (false, Some(rule)) => {
                *stats.rejections_per_rule.entry(rule.to_string()).or_default() += 1;
            }
            (false, None) => unreachable!("failed filter must name a rule"),
        }
    }
    stats.passed_filter = passed.len();
    let (survivors, clusters) = dedup(&passed, dedup_threshold)?;
    stats.dedup_clusters = survivors.len();
    stats.dedup_removed = passed.len() - survivors.len();
    let _ = clusters;
    let (balanced, heavy_before, light_before) = balance(&survivors, seed)?;
    stats.heavy_before_balance = heavy_before;
    stats.light_before_balance = light_before;
    stats.heavy_after_balance = balanced.iter().filter(|r| r.chain == Chain::Heavy).count();
    stats.light_after_balance = balanced.iter().filter(|r| r.chain == Chain::Light).count();
    stats.balance_removed = survivors.len() - balanced.len();
    for rec in &balanced {
        let key = rec.isotype.clone().unwrap_or_else(|| "unknown".into());
        *stats.isotype_breakdown.entry(key).or_default() += 1;
    }
    stats.output_records = balanced.len();
    Ok((balanced, stats))
}
