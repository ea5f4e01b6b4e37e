//! HELM: hierarchy-aware language-model pre-training for mRNA.
//!
//! The toolkit builds the codon hierarchy tree, computes the hierarchical
//! cross-entropy loss with exact gradients, tokenizes nucleotide text at the
//! codon level, trains a small transformer under MLM or CLM objectives,
//! samples sequences at a chosen temperature, and evaluates models with
//! codon-usage entropy, synonymous-sequence clustering, Fréchet-distance
//! generative scoring, and Spearman probing. A curation pipeline filters
//! OAS-style antibody mRNA records.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `helm` binary for the batch pipelines.

pub mod analysis;
pub mod cli;
pub mod curation;
pub mod genetic_code;
pub mod hierarchy;
pub mod loss;
pub mod model;
pub mod synthetic;
pub mod tokenizer;

pub use hierarchy::{build_standard_tree, CodonTree, LambdaWeights};
pub use model::{ModelConfig, ModelState, Objective};
pub use loss::{hxe_loss, xe_loss, LossKind, LossOutput};
pub use tokenizer::{Scheme, TokenSequence, Vocabulary};
