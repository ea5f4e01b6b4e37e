//! The codon hierarchy tree and its per-level loss weights.
//!
//! The tree has a fixed shape: root splits into coding and non-coding,
//! non-coding splits into start (AUG) and stop (UAA/UAG/UGA), and the coding
//! side holds one node per amino acid that still owns a codon once AUG is
//! assigned to start. Every leaf is a codon at depth 3.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::genetic_code::{
    self, codon_index, codon_string, AminoAcid, NUM_CODONS,
};

/// Handle to a node inside a [`CodonTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyNode {
    pub id: NodeId,
    pub label: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub height: u32,
    /// Codon token ids of all leaves in this subtree, sorted ascending.
    pub leaf_tokens: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("token {0} is not a codon token (codon ids are 0..64)")]
    UnknownToken(u32),
    #[error("alpha must be non-negative, got {0}")]
    NegativeAlpha(f64),
}

#[derive(Debug, Clone)]
pub struct CodonTree {
    nodes: Vec<HierarchyNode>,
    root: NodeId,
    leaf_of_token: [NodeId; NUM_CODONS],
    depth: u32,
}

impl CodonTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn node(&self, id: NodeId) -> &HierarchyNode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn leaf_of_token(&self, token: u32) -> Option<NodeId> {
        self.leaf_of_token.get(token as usize).copied()
    }

    /// True iff `token` is one of the 64 codon token ids the tree covers.
    pub fn covers_token(&self, token: u32) -> bool {
        (token as usize) < NUM_CODONS
    }

    /// The chain from the leaf of `token` up to the root, leaf first.
    pub fn path_of(&self, token: u32) -> Result<[NodeId; 4], HierarchyError> {
        let leaf = self
            .leaf_of_token(token)
            .ok_or(HierarchyError::UnknownToken(token))?;
        let mut path = [leaf; 4];
        let mut cur = leaf;
        for slot in path.iter_mut().skip(1) {
            cur = self.node(cur).parent.expect("validated tree has full paths");
            *slot = cur;
        }
        debug_assert_eq!(cur, self.root);
        Ok(path)
    }

    /// Checks every structural invariant; returns one description per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let leaves: Vec<&HierarchyNode> =
            self.nodes.iter().filter(|n| n.children.is_empty()).collect();
        if leaves.len() != NUM_CODONS {
            violations.push(format!("expected 64 leaves, found {}", leaves.len()));
        }
        for node in &self.nodes {
            if (node.height == 0) != node.children.is_empty() {
                violations.push(format!(
                    "node {} ({}): height 0 iff leaf violated (height {}, {} children)",
                    node.id.0,
                    node.label,
                    node.height,
                    node.children.len()
                ));
            }
            if node.children.is_empty() {
                if codon_index(&node.label).is_none() {
                    violations.push(format!(
                        "leaf {} has label {:?}, not a valid RNA codon",
                        node.id.0, node.label
                    ));
                }
                // leaf depth from root
                let mut depth = 0;
                let mut cur = node.id;
                while let Some(p) = self.node(cur).parent {
                    depth += 1;
                    cur = p;
                }
                if depth != 3 {
                    violations.push(format!(
                        "leaf {} ({}): depth {} != 3 from root",
                        node.id.0, node.label, depth
                    ));
                }
            } else {
                let mut union = BTreeSet::new();
                let mut total = 0usize;
                for &c in &node.children {
                    let child = self.node(c);
                    if child.parent != Some(node.id) {
                        violations.push(format!(
                            "node {} ({}): child {} does not point back to it",
                            node.id.0, node.label, c.0
                        ));
                    }
                    total += child.leaf_tokens.len();
                    union.extend(child.leaf_tokens.iter().copied());
                }
                if union.len() != total {
                    violations.push(format!(
                        "node {} ({}): children leaf sets are not disjoint",
                        node.id.0, node.label
                    ));
                }
                let own: BTreeSet<u32> = node.leaf_tokens.iter().copied().collect();
                if own != union {
                    violations.push(format!(
                        "node {} ({}): leafTokens differ from union of children",
                        node.id.0, node.label
                    ));
                }
            }
        }
        // leaf_of_token must be a bijection onto the leaves
        let mut seen = BTreeSet::new();
        for (token, &leaf) in self.leaf_of_token.iter().enumerate() {
            let node = self.node(leaf);
            if !node.children.is_empty() || node.leaf_tokens != vec![token as u32] {
                violations.push(format!(
                    "leafOfToken not bijective at codon token {token}"
                ));
            }
            seen.insert(leaf);
        }
        if seen.len() != NUM_CODONS {
            violations.push("leafOfToken not bijective: duplicate leaf handles".into());
        }
        // root structure
        let root = self.node(self.root);
        if root.children.len() != 2 {
            violations.push(format!("root has {} children, expected 2", root.children.len()));
        }
        if let Some(nc) = self
            .nodes
            .iter()
            .find(|n| n.label == "non-coding" && n.parent == Some(self.root))
        {
            if nc.children.len() != 2 {
                violations.push("non-coding node must have exactly 2 children".into());
            }
            for &c in &nc.children {
                let child = self.node(c);
                let expect: Option<Vec<u32>> = match child.label.as_str() {
                    "start" => Some(vec![codon_index("AUG").unwrap() as u32]),
                    "stop" => Some(
                        genetic_code::STOP_CODONS
                            .iter()
                            .map(|s| codon_index(s).unwrap() as u32)
                            .collect(),
                    ),
                    _ => None,
                };
                match expect {
                    Some(mut want) => {
                        want.sort_unstable();
                        if child.leaf_tokens != want {
                            violations.push(format!(
                                "{} subtree has wrong leaf set {:?}",
                                child.label, child.leaf_tokens
                            ));
                        }
                    }
                    None => violations.push(format!(
                        "non-coding child {:?} is neither start nor stop",
                        child.label
                    )),
                }
            }
        } else {
            violations.push("missing non-coding node under root".into());
        }
        violations
    }

    /// JSON export (`helm-tree/1`) for documentation and debugging.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "id": n.id.0,
                    "label": n.label,
                    "parent": n.parent.map(|p| p.0),
                    "height": n.height,
                })
            })
            .collect();
        serde_json::json!({
            "schema": "helm-tree/1",
            "root": self.root.0,
            "depth": self.depth,
            "nodes": nodes,
        })
    }
}

/// Builds the fixed codon hierarchy over the standard genetic code.
///
/// AUG lives solely under start; the methionine group would be empty and is
/// omitted, leaving 19 amino-acid nodes and 88 nodes in total.
pub fn build_standard_tree() -> CodonTree {
    let mut nodes: Vec<HierarchyNode> = Vec::with_capacity(88);
    let push = |nodes: &mut Vec<HierarchyNode>, label: String, parent: Option<NodeId>, height: u32| {
        let id = NodeId(nodes.len() as u32);
        nodes.push(HierarchyNode {
            id,
            label,
            parent,
            children: Vec::new(),
            height,
            leaf_tokens: Vec::new(),
        });
        id
    };

    let root = push(&mut nodes, "root".into(), None, 3);
    let coding = push(&mut nodes, "coding".into(), Some(root), 2);
    let non_coding = push(&mut nodes, "non-coding".into(), Some(root), 2);
    nodes[root.index()].children = vec![coding, non_coding];

    let mut leaf_of_token = [root; NUM_CODONS];
    let aug = codon_index("AUG").unwrap();

    // coding side: one node per amino acid with a surviving codon, alphabetical
    let mut coding_children = Vec::new();
    for &aa in AminoAcid::all_coding() {
        let codons: Vec<usize> = genetic_code::codons_of(aa)
            .into_iter()
            .filter(|&c| c != aug)
            .collect();
        if codons.is_empty() {
            continue; // methionine: AUG belongs to start
        }
        let group = push(&mut nodes, aa.name().into(), Some(coding), 1);
        let mut leaves = Vec::new();
        for c in codons {
            let leaf = push(&mut nodes, codon_string(c), Some(group), 0);
            nodes[leaf.index()].leaf_tokens = vec![c as u32];
            leaf_of_token[c] = leaf;
            nodes[group.index()].children.push(leaf);
            leaves.push(c as u32);
        }
        leaves.sort_unstable();
        nodes[group.index()].leaf_tokens = leaves;
        coding_children.push(group);
    }
    nodes[coding.index()].children = coding_children;

    // non-coding side: start then stop
    let start = push(&mut nodes, "start".into(), Some(non_coding), 1);
    let start_leaf = push(&mut nodes, "AUG".into(), Some(start), 0);
    nodes[start_leaf.index()].leaf_tokens = vec![aug as u32];
    leaf_of_token[aug] = start_leaf;
    nodes[start.index()].children = vec![start_leaf];
    nodes[start.index()].leaf_tokens = vec![aug as u32];

    let stop = push(&mut nodes, "stop".into(), Some(non_coding), 1);
    let mut stop_tokens = Vec::new();
    for s in genetic_code::STOP_CODONS {
        let c = codon_index(s).unwrap();
        let leaf = push(&mut nodes, s.into(), Some(stop), 0);
        nodes[leaf.index()].leaf_tokens = vec![c as u32];
        leaf_of_token[c] = leaf;
        nodes[stop.index()].children.push(leaf);
        stop_tokens.push(c as u32);
    }
    stop_tokens.sort_unstable();
    nodes[stop.index()].leaf_tokens = stop_tokens;
    nodes[non_coding.index()].children = vec![start, stop];

    // cached leaf sets for the upper levels
    for inner in [coding, non_coding, root] {
        let mut acc: Vec<u32> = nodes[inner.index()]
            .children
            .iter()
            .flat_map(|c| nodes[c.index()].leaf_tokens.clone())
            .collect();
        acc.sort_unstable();
        nodes[inner.index()].leaf_tokens = acc;
    }

    let tree = CodonTree {
        nodes,
        root,
        leaf_of_token,
        depth: 3,
    };
    debug_assert!(tree.validate().is_empty());
    tree
}

/// Per-height loss weights λ(h) = exp(−α·h), leaves at height 0.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaWeights {
    alpha: f64,
    weights: Vec<f64>,
}

impl LambdaWeights {
    /// Weights for heights `0..tree.depth()`, with the leaf level at height
    /// 0 carrying full weight: λ(h) = exp(−α·h).
    pub fn for_tree(tree: &CodonTree, alpha: f64) -> Result<LambdaWeights, HierarchyError> {
        if !(alpha >= 0.0) {
            return Err(HierarchyError::NegativeAlpha(alpha));
        }
        let weights = (0..tree.depth())
            .map(|h| (-alpha * h as f64).exp())
            .collect();
        Ok(LambdaWeights { alpha, weights })
    }

    /// Alternative height convention that measures a node's height as its
    /// edge distance to the root: λ(h) = exp(−α·(depth − h)). The leaf-level
    /// term is discounted the most, so confusions between synonymous codons
    /// cost less than confusions across amino acids.
    pub fn root_anchored(tree: &CodonTree, alpha: f64) -> Result<LambdaWeights, HierarchyError> {
        if !(alpha >= 0.0) {
            return Err(HierarchyError::NegativeAlpha(alpha));
        }
        let depth = tree.depth();
        let weights = (0..depth)
            .map(|h| (-alpha * (depth - h) as f64).exp())
            .collect();
        Ok(LambdaWeights { alpha, weights })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self, height: usize) -> f64 {
        self.weights[height]
    }

    pub fn levels(&self) -> usize {
        self.weights.len()
    }
}
