//! Compares the hierarchical cross-entropy (HXE) against flat cross-entropy
//! on the same logits, and shows how HXE — unlike XE — distinguishes
//! errors that put probability mass on synonyms of the target codon from
//! errors on unrelated codons. The direction of the preference depends on
//! which end of the tree the λ weights are anchored to; both conventions
//! are shown.
//!
//!     cargo run --example hxe_vs_xe

use helm::genetic_code::{codon_index, synonyms_of};
use helm::{build_standard_tree, hxe_loss, xe_loss, LambdaWeights};

fn main() {
    let tree = build_standard_tree();
    let weights = LambdaWeights::for_tree(&tree, 0.2).unwrap();

    // Uniform logits over the 70-symbol vocabulary.
    let uniform = vec![0.0; 70];
    let gga = codon_index("GGA").unwrap() as u32;
    let xe = xe_loss(&uniform, gga).unwrap();
    let hxe = hxe_loss(&uniform, gga, &tree, &weights).unwrap();
    println!("uniform logits, target GGA:");
    println!("  XE  = {:.12}  (ln 70 = {:.12})", xe.loss, (70f64).ln());
    println!("  HXE = {:.12}", hxe.loss);

    // Two wrong-but-confident predictions with the same XE: one puts the
    // extra mass on a synonym of GGA (GGC, also Gly), the other on an
    // unrelated codon (UUU, Phe). HXE distinguishes them; XE cannot.
    let ggc = codon_index("GGC").unwrap();
    let uuu = codon_index("UUU").unwrap();
    assert!(synonyms_of(gga as usize).contains(&ggc));
    assert!(!synonyms_of(gga as usize).contains(&uuu));

    let mut on_synonym = vec![0.0; 70];
    on_synonym[ggc] = 4.0;
    let mut off_synonym = vec![0.0; 70];
    off_synonym[uuu] = 4.0;

    let xe_syn = xe_loss(&on_synonym, gga).unwrap().loss;
    let xe_off = xe_loss(&off_synonym, gga).unwrap().loss;
    println!("confident mass on a synonym (GGC) vs unrelated codon (UUU), target GGA:");
    println!(
        "  XE           : synonym {xe_syn:.6}  unrelated {xe_off:.6}  (identical: {})",
        (xe_syn - xe_off).abs() < 1e-12
    );
    // Leaf-anchored λ (default): the fine-grained level carries full weight,
    // so diluting the within-amino-acid conditional costs the most.
    // Root-anchored λ: the coarse levels carry full weight, so keeping mass
    // inside the right amino-acid subtree is rewarded.
    let root = LambdaWeights::root_anchored(&tree, 0.2).unwrap();
    for (label, w) in [("HXE (leaf λ)", &weights), ("HXE (root λ)", &root)] {
        let syn = hxe_loss(&on_synonym, gga, &tree, w).unwrap().loss;
        let off = hxe_loss(&off_synonym, gga, &tree, w).unwrap().loss;
        println!("  {label:<13}: synonym {syn:.6}  unrelated {off:.6}");
    }

    // α = 0 gives equal weight to every level of the factorization.
    let flat = LambdaWeights::for_tree(&tree, 0.0).unwrap();
    let hxe0 = hxe_loss(&uniform, gga, &tree, &flat).unwrap();
    println!(
        "alpha = 0, uniform logits: HXE = {:.12} (ln 64 = {:.12})",
        hxe0.loss,
        (64f64).ln()
    );
}
