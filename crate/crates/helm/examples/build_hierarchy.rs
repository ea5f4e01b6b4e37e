//! Builds the four-level codon hierarchy (root → amino-acid class → amino
//! acid → codon) and prints the λ level weights for a few α settings, plus
//! the hierarchy path of one codon.
//!
//!     cargo run --example build_hierarchy

use helm::genetic_code::codon_index;
use helm::{build_standard_tree, LambdaWeights};

fn main() {
    let tree = build_standard_tree();
    println!(
        "tree: {} nodes, depth {}",
        tree.nodes().len(),
        tree.depth()
    );
    let problems = tree.validate();
    println!("structural validation: {} problems", problems.len());

    // Path of GGA (Gly) from leaf up to the root.
    let gga = codon_index("GGA").unwrap() as u32;
    let path = tree.path_of(gga).unwrap();
    print!("path of GGA:");
    for node in path {
        let n = tree.node(node);
        print!(" {}(h={})", n.label, n.height);
    }
    println!();

    // λ_h = exp(−α·h), h = height above the leaves; α = 0 recovers flat XE
    // weighting and larger α discounts coarse levels more steeply.
    for alpha in [0.0, 0.2, 0.5] {
        let w = LambdaWeights::for_tree(&tree, alpha).unwrap();
        let levels: Vec<String> = (0..w.levels())
            .map(|h| format!("λ_{h}={:.6}", w.weight(h)))
            .collect();
        println!("alpha {alpha}: {}", levels.join("  "));
    }
}
