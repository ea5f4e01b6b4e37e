//! Evaluation battery: codon-usage entropy, synonymous variants, k-means
//! with silhouette, Fréchet-distance generative scoring, Spearman
//! correlation, a convolutional regression probe, and synonym confusion.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::genetic_code::{
    amino_acid_of, codon_string, is_stop, start_index, synonyms_of, AminoAcid, NUM_CODONS,
};
use crate::model::{mask_batch, translate, AttentionMode, ModelState, Objective};
use crate::tokenizer::{Scheme, TokenSequence};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{failed} of {total} sequences failed translation (> 10%)")]
    TranslationFailures { failed: usize, total: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

// ---------------------------------------------------------------------------
// Codon-usage entropy (§4.2 / Appendix A.5)
// ---------------------------------------------------------------------------

/// Per-amino-acid codon counts accumulated over a corpus.
#[derive(Debug, Clone, Serialize)]
pub struct CodonUsageTable {
    /// Raw counts per codon id (0..64).
    pub counts: Vec<u64>,
}

impl CodonUsageTable {
    pub fn from_corpus(corpus: &[TokenSequence]) -> CodonUsageTable {
        let mut counts = vec![0u64; NUM_CODONS];
        for seq in corpus {
            for &id in &seq.ids {
                if (id as usize) < NUM_CODONS {
                    counts[id as usize] += 1;
                }
            }
        }
        CodonUsageTable { counts }
    }

    /// Synonymous-codon frequencies for one amino acid; sums to 1 when the
    /// amino acid occurs at all.
    pub fn frequencies(&self, aa: AminoAcid) -> Vec<(usize, f64)> {
        let codons = crate::genetic_code::codons_of(aa);
        let total: u64 = codons.iter().map(|&c| self.counts[c]).sum();
        codons
            .into_iter()
            .map(|c| {
                let f = if total > 0 {
                    self.counts[c] as f64 / total as f64
                } else {
                    0.0
                };
                (c, f)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AaEntropy {
    pub amino_acid: char,
    pub name: String,
    pub occurrences: u64,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EntropyReport {
    pub per_amino_acid: Vec<AaEntropy>,
    pub top5_average: f64,
}

/// Base-2 entropy of the synonymous-codon distribution per amino acid.
/// Met (AUG, the start codon) and stop codons are excluded; `top5_average`
/// is the mean entropy of the five most frequent amino acids.
pub fn codon_usage_entropy(corpus: &[TokenSequence]) -> Result<EntropyReport, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let table = CodonUsageTable::from_corpus(corpus);
    let mut rows = Vec::new();
    for &aa in AminoAcid::all_coding() {
        if aa == AminoAcid::Met {
            continue; // start codon, excluded from usage statistics
        }
        let freqs = table.frequencies(aa);
        let occurrences: u64 = freqs
            .iter()
            .map(|&(c, _)| table.counts[c])
            .sum();
        let entropy_bits = -freqs
            .iter()
            .map(|&(_, f)| if f > 0.0 { f * f.log2() } else { 0.0 })
            .sum::<f64>();
        rows.push(AaEntropy {
            amino_acid: aa.letter(),
            name: aa.name().to_string(),
            occurrences,
            entropy_bits,
        });
    }
    // Five most frequent amino acids; ties broken by letter for determinism.
    let mut by_count = rows.clone();
    by_count.sort_by(|a, b| {
        b.occurrences
            .cmp(&a.occurrences)
            .then(a.amino_acid.cmp(&b.amino_acid))
    });
    let top5: Vec<&AaEntropy> = by_count.iter().take(5).collect();
    let top5_average = top5.iter().map(|r| r.entropy_bits).sum::<f64>() / top5.len() as f64;
    Ok(EntropyReport {
        per_amino_acid: rows,
        top5_average,
    })
}

// ---------------------------------------------------------------------------
// Synonymous variants (§4.2 / Fig. 3)
// ---------------------------------------------------------------------------

/// Replaces every coding codon independently with a uniformly random
/// synonymous codon (identity included). AUG, UGG, and stop codons are
/// fixed points, so every variant translates identically to the input.
pub fn synonymous_variants(
    seq: &TokenSequence,
    n: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>, AnalysisError> {
    if seq.scheme != Scheme::Codon {
        return Err(AnalysisError::BadInput("codon scheme required".into()));
    }
    let unk = crate::tokenizer::Vocabulary::codon().specials().unk;
    if seq.ids.contains(&unk) {
        return Err(AnalysisError::BadInput("sequence contains UNK".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = start_index() as u32;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ids: Vec<u32> = seq
            .ids
            .iter()
            .map(|&id| {
                let c = id as usize;
                if c >= NUM_CODONS || id == start || is_stop(c) {
                    return id;
                }
                let syns = synonyms_of(c);
                syns[rng.gen_range(0..syns.len())] as u32
            })
            .collect();
        out.push(TokenSequence {
            ids,
            scheme: Scheme::Codon,
            source_length: seq.source_length,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// k-means and silhouette (§4.2 / Table 3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
/// reseeding the center to the point farthest from its assigned center.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment, AnalysisError> {
    if points.is_empty() || k == 0 || k > points.len() {
        return Err(AnalysisError::Degenerate(format!(
            "k = {k} with {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(AnalysisError::DimensionMismatch(
            "points have mixed dimensions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut draw = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                draw -= d;
                if draw <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; points.len()];
    for _ in 0..max_iters.max(1) {
        // Assignment.
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c, sq_dist(p, center)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // Update with empty-cluster repair.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Final inertia under the final centers.
    let inertia: f64 = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    Ok(ClusterAssignment {
        labels,
        centers,
        inertia,
    })
}

/// Mean silhouette over all points; singleton clusters score 0 and 0/0 is
/// defined as 0. Errors when fewer than two clusters are present.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64, AnalysisError> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(AnalysisError::BadInput(
            "points and labels must be equal-length and non-empty".into(),
        ));
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(AnalysisError::Degenerate(
            "silhouette requires at least two clusters".into(),
        ));
    }
    let dist = |a: usize, b: usize| sq_dist(&points[a], &points[b]).sqrt();
    let mut total = 0.0;
    for (&label, members) in &clusters {
        for &i in members {
            if members.len() == 1 {
                continue; // singleton scores 0
            }
            let a = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(i, j))
                .sum::<f64>()
                / (members.len() - 1) as f64;
            let b = clusters
                .iter()
                .filter(|(&l, _)| l != label)
                .map(|(_, other)| {
                    other.iter().map(|&j| dist(i, j)).sum::<f64>() / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            total += if denom == 0.0 { 0.0 } else { (b - a) / denom };
        }
    }
    Ok(total / points.len() as f64)
}

// ---------------------------------------------------------------------------
// Gaussian fitting and Fréchet distance (§4.3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

/// Sample mean and unbiased sample covariance, symmetrized as (S+Sᵀ)/2.
pub fn fit_gaussian(embeddings: &[Vec<f64>]) -> Result<GaussianSummary, AnalysisError> {
    if embeddings.len() < 2 {
        return Err(AnalysisError::Degenerate(
            "fit_gaussian requires at least two vectors".into(),
        ));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(AnalysisError::DimensionMismatch(
            "embedding vectors have mixed dimensions".into(),
        ));
    }
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for e in embeddings {
        for i in 0..dim {
            let di = e[i] - mean[i];
            for j in 0..dim {
                cov[(i, j)] += di * (e[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianSummary {
        mean,
        covariance: cov,
    })
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// (numerical noise) are clamped to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        d[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
    }
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Squared 2-Wasserstein distance between Gaussians (FID convention):
/// ‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2(Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2}).
pub fn frechet_distance(g1: &GaussianSummary, g2: &GaussianSummary) -> Result<f64, AnalysisError> {
    if g1.mean.len() != g2.mean.len() {
        return Err(AnalysisError::DimensionMismatch(format!(
            "dims {} vs {}",
            g1.mean.len(),
            g2.mean.len()
        )));
    }
    let mean_term: f64 = g1
        .mean
        .iter()
        .zip(&g2.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let s1_half = sym_sqrt(&g1.covariance);
    let inner = &s1_half * &g2.covariance * &s1_half;
    let cross = sym_sqrt(&inner);
    let trace_term = g1.covariance.trace() + g2.covariance.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term).max(0.0))
}

// ---------------------------------------------------------------------------
// FBD report (§4.3)
// ---------------------------------------------------------------------------

/// Maps an amino-acid string to a fixed-length embedding.
pub trait Embedder {
    fn embed_protein(&self, protein: &str) -> Result<Vec<f64>, AnalysisError>;
    fn name(&self) -> &str;
}

const AA_LETTERS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

fn aa_index(letter: u8) -> Option<usize> {
    AA_LETTERS.iter().position(|&a| a == letter)
}

/// Deterministic amino-acid 3-mer count embedder: dimension 8000 (20³),
/// optionally hashed down to 256.
#[derive(Debug, Clone)]
pub struct KmerCountEmbedder {
    pub hashed: bool,
}

impl Embedder for KmerCountEmbedder {
    fn embed_protein(&self, protein: &str) -> Result<Vec<f64>, AnalysisError> {
        let clean: Vec<usize> = protein
            .bytes()
            .take_while(|&b| b != b'*')
            .map(|b| {
                aa_index(b).ok_or_else(|| {
                    AnalysisError::BadInput(format!("unknown amino acid {:?}", b as char))
                })
            })
            .collect::<Result<_, _>>()?;
        let dim = if self.hashed { 256 } else { 8000 };
        let mut v = vec![0.0; dim];
        for w in clean.windows(3) {
            let idx = w[0] * 400 + w[1] * 20 + w[2];
            v[if self.hashed { idx % 256 } else { idx }] += 1.0;
        }
        Ok(v)
    }

    fn name(&self) -> &str {
        if self.hashed {
            "aa3mer-hashed256"
        } else {
            "aa3mer-8000"
        }
    }
}

/// Embeds proteins with the toolkit's own frozen model: each amino acid is
/// back-translated to its lexicographically smallest codon, the codon ids
/// are mean-pooled through the model.
pub struct ModelEmbedder<'a> {
    pub state: &'a ModelState,
}

impl Embedder for ModelEmbedder<'_> {
    fn embed_protein(&self, protein: &str) -> Result<Vec<f64>, AnalysisError> {
        let mut ids = Vec::with_capacity(protein.len());
        for b in protein.bytes() {
            let aa = AminoAcid::from_letter(b)
                .ok_or_else(|| AnalysisError::BadInput(format!("unknown amino acid {:?}", b as char)))?;
            let canonical = *crate::genetic_code::codons_of(aa)
                .first()
                .expect("every amino acid has a codon");
            ids.push(canonical as u32);
        }
        if ids.is_empty() {
            return Err(AnalysisError::BadInput("empty protein".into()));
        }
        ids.truncate(self.state.config.context_length);
        Ok(self.state.embed(&ids)?)
    }

    fn name(&self) -> &str {
        "model-mean-pool"
    }
}

/// Translates both corpora, embeds, fits Gaussians, and returns the squared
/// Fréchet distance. Errors when more than 10% of either corpus fails to
/// translate.
pub fn fbd_report(
    real: &[TokenSequence],
    generated: &[TokenSequence],
    embedder: &dyn Embedder,
) -> Result<f64, AnalysisError> {
    if real.is_empty() || generated.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let embed_all = |seqs: &[TokenSequence]| -> Result<Vec<Vec<f64>>, AnalysisError> {
        let mut out = Vec::with_capacity(seqs.len());
        let mut failed = 0;
        for s in seqs {
            match translate(s).map_err(AnalysisError::from).and_then(|p| {
                if p.is_empty() {
                    Err(AnalysisError::BadInput("empty translation".into()))
                } else {
                    embedder.embed_protein(&p)
                }
            }) {
                Ok(v) => out.push(v),
                Err(_) => failed += 1,
            }
        }
        if failed * 10 > seqs.len() {
            return Err(AnalysisError::TranslationFailures {
                failed,
                total: seqs.len(),
            });
        }
        Ok(out)
    };
    let real_emb = embed_all(real)?;
    let gen_emb = embed_all(generated)?;
    let g1 = fit_gaussian(&real_emb)?;
    let g2 = fit_gaussian(&gen_emb)?;
    frechet_distance(&g1, &g2)
}

// ---------------------------------------------------------------------------
// Spearman correlation
// ---------------------------------------------------------------------------

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Constant input is
/// an error (ρ undefined).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::DimensionMismatch(format!(
            "{} vs {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(AnalysisError::Degenerate("need at least two pairs".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(AnalysisError::Degenerate(
            "constant input: correlation undefined".into(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    Ok(num / (dx * dy).sqrt())
}

// ---------------------------------------------------------------------------
// Convolutional regression probe (Appendix A.3 analogue)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Convolution kernel width over positions.
    pub kernel: usize,
    pub channels: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fraction of items held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> ProbeConfig {
        ProbeConfig {
            kernel: 5,
            channels: 32,
            epochs: 200,
            learning_rate: 1e-2,
            val_fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeParams {
    /// channels × (kernel·featureDim) convolution weights.
    pub conv_w: Vec<Vec<f64>>,
    pub conv_b: Vec<f64>,
    pub lin_w: Vec<f64>,
    pub lin_b: f64,
}

struct ProbeForward {
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    pre_relu: Vec<Vec<f64>>,
    prediction: f64,
}

fn probe_forward(p: &ProbeParams, item: &[Vec<f64>], kernel: usize) -> ProbeForward {
    let t = item.len();
    let dim = item[0].len();
    let windows = t.saturating_sub(kernel - 1).max(1);
    let channels = p.conv_w.len();
    let mut pre_relu = vec![vec![0.0; windows]; channels];
    for c in 0..channels {
        for w in 0..windows {
            let mut acc = p.conv_b[c];
            for kk in 0..kernel {
                let pos = (w + kk).min(t - 1); // zero-ish padding via clamp for short items
                let row = &item[pos];
                let base = kk * dim;
                for j in 0..dim {
                    acc += p.conv_w[c][base + j] * row[j];
                }
            }
            pre_relu[c][w] = acc;
        }
    }
    let mut pooled = vec![0.0; channels];
    let mut argmax = vec![0usize; channels];
    for c in 0..channels {
        let (idx, &val) = pre_relu[c]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        pooled[c] = val.max(0.0);
        argmax[c] = idx;
    }
    let prediction =
        p.lin_b + pooled.iter().zip(&p.lin_w).map(|(a, b)| a * b).sum::<f64>();
    ProbeForward {
        pooled,
        argmax,
        pre_relu,
        prediction,
    }
}

/// Trains the convolutional probe (conv → ReLU-after-max-pool → linear) on
/// frozen position-wise features with plain Adam on MSE. Returns the probe
/// parameters and the validation Spearman.
pub fn train_probe(
    features: &[Vec<Vec<f64>>],
    labels: &[f64],
    cfg: &ProbeConfig,
) -> Result<(ProbeParams, f64), AnalysisError> {
    if features.len() != labels.len() {
        return Err(AnalysisError::DimensionMismatch(format!(
            "{} feature items vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < 10 {
        return Err(AnalysisError::Degenerate(
            "probe training needs at least 10 labeled items".into(),
        ));
    }
    let dim = features[0][0].len();
    if features
        .iter()
        .any(|f| f.is_empty() || f.iter().any(|r| r.len() != dim))
    {
        return Err(AnalysisError::DimensionMismatch(
            "feature items must be non-empty with a uniform feature dimension".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let n_val = ((features.len() as f64 * cfg.val_fraction).round() as usize)
        .clamp(2, features.len() - 2);
    let (val_idx, train_idx) = order.split_at(n_val);

    let fan_in = cfg.kernel * dim;
    let s = (6.0 / (fan_in + cfg.channels) as f64).sqrt();
    let mut p = ProbeParams {
        conv_w: (0..cfg.channels)
            .map(|_| (0..fan_in).map(|_| rng.gen_range(-s..s)).collect())
            .collect(),
        conv_b: vec![0.0; cfg.channels],
        lin_w: (0..cfg.channels)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect(),
        lin_b: 0.0,
    };
    // Flat Adam state over all probe parameters.
    let n_params = cfg.channels * fan_in + cfg.channels + cfg.channels + 1;
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut step = 0u64;

    for _ in 0..cfg.epochs {
        for &i in train_idx {
            let item = &features[i];
            let fw = probe_forward(&p, item, cfg.kernel);
            let err = fw.prediction - labels[i];
            // Gradients.
            let mut g = vec![0.0; n_params];
            let lin_w_off = cfg.channels * fan_in + cfg.channels;
            for c in 0..cfg.channels {
                g[lin_w_off + c] = err * fw.pooled[c];
            }
            g[n_params - 1] = err; // lin_b
            let t = item.len();
            for c in 0..cfg.channels {
                if fw.pre_relu[c][fw.argmax[c]] <= 0.0 {
                    continue; // ReLU gate closed
                }
                let dpool = err * p.lin_w[c];
                let w0 = fw.argmax[c];
                g[cfg.channels * fan_in + c] += dpool; // conv_b
                for kk in 0..cfg.kernel {
                    let pos = (w0 + kk).min(t - 1);
                    let row = &item[pos];
                    let base = c * fan_in + kk * dim;
                    for j in 0..dim {
                        g[base + j] += dpool * row[j];
                    }
                }
            }
            // Adam update.
            step += 1;
            let bc1 = 1.0 - b1.powi(step as i32);
            let bc2 = 1.0 - b2.powi(step as i32);
            let mut apply = |idx: usize, param: &mut f64| {
                m[idx] = b1 * m[idx] + (1.0 - b1) * g[idx];
                v[idx] = b2 * v[idx] + (1.0 - b2) * g[idx] * g[idx];
                *param -= cfg.learning_rate * (m[idx] / bc1) / ((v[idx] / bc2).sqrt() + eps);
            };
            for c in 0..cfg.channels {
                for j in 0..fan_in {
                    apply(c * fan_in + j, &mut p.conv_w[c][j]);
                }
            }
            for c in 0..cfg.channels {
                apply(cfg.channels * fan_in + c, &mut p.conv_b[c]);
            }
            for c in 0..cfg.channels {
                apply(lin_w_off + c, &mut p.lin_w[c]);
            }
            apply(n_params - 1, &mut p.lin_b);
        }
    }

    let preds: Vec<f64> = val_idx
        .iter()
        .map(|&i| probe_forward(&p, &features[i], cfg.kernel).prediction)
        .collect();
    let truth: Vec<f64> = val_idx.iter().map(|&i| labels[i]).collect();
    let rho = spearman(&preds, &truth)?;
    Ok((p, rho))
}

// ---------------------------------------------------------------------------
// Synonym confusion (Fig. 1 right)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WheelRow {
    pub amino_acid: char,
    pub codon: String,
    pub mean_prob: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfusionReport {
    /// Mean probability mass on the target's synonyms (target excluded) at
    /// positions where the prediction was wrong; 1.0 when no errors occur.
    pub syn_mass_on_error: f64,
    pub error_positions: usize,
    pub supervised_positions: usize,
    /// Degenerate perfect-model case: no errors, metric pinned to 1.0.
    pub no_errors: bool,
    pub wheel: Vec<WheelRow>,
}

impl ConfusionReport {
    /// Writes the codon-wheel table as CSV: aminoAcid,codon,meanProb,model.
    pub fn write_wheel_csv(&self, path: &std::path::Path, model: &str) -> std::io::Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "aminoAcid,codon,meanProb,model")?;
        for row in &self.wheel {
            writeln!(
                f,
                "{},{},{:.8},{}",
                row.amino_acid, row.codon, row.mean_prob, model
            )?;
        }
        f.flush()
    }
}

/// Accumulator shared by [`synonym_confusion`] and its closed-form tests.
pub(crate) struct ConfusionAccum {
    syn_mass: f64,
    errors: usize,
    supervised: usize,
    prob_sums: [f64; NUM_CODONS],
}

impl ConfusionAccum {
    pub(crate) fn new() -> ConfusionAccum {
        ConfusionAccum {
            syn_mass: 0.0,
            errors: 0,
            supervised: 0,
            prob_sums: [0.0; NUM_CODONS],
        }
    }

    /// `probs` is a full-vocabulary probability vector; `target` a codon id.
    pub(crate) fn add(&mut self, probs: &[f64], target: u32) {
        self.supervised += 1;
        for c in 0..NUM_CODONS {
            self.prob_sums[c] += probs[c];
        }
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        if argmax != target as usize {
            self.errors += 1;
            let syn: f64 = synonyms_of(target as usize)
                .into_iter()
                .filter(|&c| c != target as usize)
                .map(|c| probs[c])
                .sum();
            self.syn_mass += syn;
        }
    }

    pub(crate) fn finish(self) -> ConfusionReport {
        let no_errors = self.errors == 0;
        let syn_mass_on_error = if no_errors {
            1.0
        } else {
            self.syn_mass / self.errors as f64
        };
        let wheel = (0..NUM_CODONS)
            .map(|c| WheelRow {
                amino_acid: amino_acid_of(c).letter(),
                codon: codon_string(c),
                mean_prob: if self.supervised > 0 {
                    self.prob_sums[c] / self.supervised as f64
                } else {
                    0.0
                },
            })
            .collect();
        ConfusionReport {
            syn_mass_on_error,
            error_positions: self.errors,
            supervised_positions: self.supervised,
            no_errors,
            wheel,
        }
    }
}

/// Evaluates synonym confusion on a corpus: MLM models are probed at masked
/// positions (masking drawn from `seed`), CLM models at next-token
/// positions.
pub fn synonym_confusion(
    state: &ModelState,
    corpus: &[TokenSequence],
    seed: u64,
) -> Result<ConfusionReport, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let cfg = &state.config;
    let rows: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| crate::model::frame_sequence(cfg, &s.ids))
        .collect();
    let mut acc = ConfusionAccum::new();
    match cfg.objective {
        Objective::Mlm => {
            let mb = mask_batch(&rows, cfg.mask_rate, seed, cfg);
            for (inp, (tgt, sup)) in mb
                .inputs
                .iter()
                .zip(mb.targets.iter().zip(&mb.supervised))
            {
                let (logits, _) = crate::model::forward(
                    &state.params,
                    cfg,
                    inp,
                    AttentionMode::Bidirectional,
                )?;
                for t in 0..inp.len() {
                    if sup[t] && (tgt[t] as usize) < NUM_CODONS {
                        let probs = softmax(logits.row(t));
                        acc.add(&probs, tgt[t]);
                    }
                }
            }
        }
        Objective::Clm => {
            for row in &rows {
                if row.len() < 2 {
                    continue;
                }
                let inp = &row[..row.len() - 1];
                let (logits, _) =
                    crate::model::forward(&state.params, cfg, inp, AttentionMode::Causal)?;
                for t in 0..inp.len() {
                    let target = row[t + 1];
                    if (target as usize) < NUM_CODONS {
                        let probs = softmax(logits.row(t));
                        acc.add(&probs, target);
                    }
                }
            }
        }
    }
    if acc.supervised == 0 {
        return Err(AnalysisError::Degenerate(
            "no supervised codon positions".into(),
        ));
    }
    Ok(acc.finish())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests;
