//! Verifies the analytic loss gradients against central finite differences
//! for both loss functions across a sweep of α values.
//!
//!     cargo run --example grad_check

use helm::loss::grad_check;
use helm::{build_standard_tree, LambdaWeights, LossKind};

fn main() {
    let tree = build_standard_tree();
    println!("{:<6} {:>6} {:>14}", "loss", "alpha", "maxRelErr");
    for (kind, alpha) in [
        (LossKind::Xe, 0.0),
        (LossKind::Hxe, 0.0),
        (LossKind::Hxe, 0.2),
        (LossKind::Hxe, 0.5),
        (LossKind::Hxe, 1.0),
    ] {
        let weights = LambdaWeights::for_tree(&tree, alpha).unwrap();
        let report = grad_check(kind, &tree, &weights, 25, 7);
        println!(
            "{:<6} {:>6} {:>14.3e}",
            format!("{:?}", kind),
            alpha,
            report.max_rel_err
        );
        assert!(report.max_rel_err < 1e-4, "gradient check failed");
    }
    println!("all analytic gradients match finite differences (< 1e-4)");
}
