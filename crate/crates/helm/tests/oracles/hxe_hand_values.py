#!/usr/bin/env python3
"""Independent scalar oracle for the hierarchical cross-entropy hand values.

Computes, from the standard genetic code alone (no shared code with the
library), the HXE loss for uniform logits over a 70-token vocabulary with
alpha weighting, for a handful of target codons. Run:

    python3 tests/oracles/hxe_hand_values.py
"""
import math
from itertools import product

BASES = "ACGU"
CODONS = ["".join(p) for p in product(BASES, repeat=3)]
CODON_TABLE = {
    "UUU": "Phe", "UUC": "Phe", "UUA": "Leu", "UUG": "Leu",
    "CUU": "Leu", "CUC": "Leu", "CUA": "Leu", "CUG": "Leu",
    "AUU": "Ile", "AUC": "Ile", "AUA": "Ile", "AUG": "Met",
    "GUU": "Val", "GUC": "Val", "GUA": "Val", "GUG": "Val",
    "UCU": "Ser", "UCC": "Ser", "UCA": "Ser", "UCG": "Ser",
    "CCU": "Pro", "CCC": "Pro", "CCA": "Pro", "CCG": "Pro",
    "ACU": "Thr", "ACC": "Thr", "ACA": "Thr", "ACG": "Thr",
    "GCU": "Ala", "GCC": "Ala", "GCA": "Ala", "GCG": "Ala",
    "UAU": "Tyr", "UAC": "Tyr", "UAA": "Stop", "UAG": "Stop",
    "CAU": "His", "CAC": "His", "CAA": "Gln", "CAG": "Gln",
    "AAU": "Asn", "AAC": "Asn", "AAA": "Lys", "AAG": "Lys",
    "GAU": "Asp", "GAC": "Asp", "GAA": "Glu", "GAG": "Glu",
    "UGU": "Cys", "UGC": "Cys", "UGA": "Stop", "UGG": "Trp",
    "CGU": "Arg", "CGC": "Arg", "CGA": "Arg", "CGG": "Arg",
    "AGU": "Ser", "AGC": "Ser", "AGA": "Arg", "AGG": "Arg",
    "GGU": "Gly", "GGC": "Gly", "GGA": "Gly", "GGG": "Gly",
}

def leaves_along_path(codon):
    """Leaf sets for C^(0)..C^(3) under the standard codon tree shape."""
    if codon == "AUG":
        group = ["AUG"]                                  # start
        side = ["AUG", "UAA", "UAG", "UGA"]              # non-coding
    elif CODON_TABLE[codon] == "Stop":
        group = [c for c in CODONS if CODON_TABLE[c] == "Stop"]
        side = ["AUG", "UAA", "UAG", "UGA"]
    else:
        aa = CODON_TABLE[codon]
        group = [c for c in CODONS if CODON_TABLE[c] == aa and c != "AUG"]
        side = [c for c in CODONS if CODON_TABLE[c] not in ("Stop",) and c != "AUG"]
    return [[codon], group, side, list(CODONS)]

def hxe_uniform(codon, alpha):
    # uniform 70-way logits: every codon leaf has identical mass, so leaf
    # sums reduce to set cardinalities.
    path = leaves_along_path(codon)
    loss = 0.0
    for level in range(3):
        cond = len(path[level]) / len(path[level + 1])
        loss += math.exp(-alpha * level) * -math.log(cond)
    return loss

if __name__ == "__main__":
    for codon in ("GGA", "UAA", "UUA", "AUG", "UGG"):
        print(f"hxe(uniform, {codon}, alpha=0.2) = {hxe_uniform(codon, 0.2):.6f}")
    print(f"hxe(uniform, GGA, alpha=0.0) = {hxe_uniform('GGA', 0.0):.6f}  (ln 64 = {math.log(64):.6f})")
    print(f"xe uniform 70-way            = {math.log(70):.6f}")
