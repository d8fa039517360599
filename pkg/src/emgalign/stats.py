"""Friedman test and Nemenyi critical difference over per-subject accuracies."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ArgumentError

# Critical values q_alpha of the Nemenyi test (studentized range / sqrt(2)),
# as tabulated by Demsar (2006), indexed by the number of methods k.
NEMENYI_Q = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780, 9: 2.855, 10: 2.920},
}


@dataclass(frozen=True, eq=False)
class RankTable:
    methods: tuple
    blocks: tuple
    ranks: np.ndarray  # (n_blocks, n_methods), 1 = best

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)


def average_ranks(scores, descending: bool = True) -> np.ndarray:
    """Ranks 1..k of one block; tied scores share the mean of their positions."""
    scores = np.asarray(scores, dtype=np.float64)
    key = -scores if descending else scores
    order = np.argsort(key, kind="stable")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and key[order[j + 1]] == key[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_table(methods, blocks, scores) -> RankTable:
    """`scores` is (n_blocks, n_methods); higher is better."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(blocks), len(methods)):
        raise ArgumentError("score matrix shape does not match methods x blocks")
    ranks = np.vstack([average_ranks(row) for row in scores]) if len(blocks) else np.zeros((0, len(methods)))
    return RankTable(tuple(methods), tuple(blocks), ranks)


def rank_methods(results) -> RankTable:
    """Rank experiment results block-wise (one block per unit).

    `results` is a mapping ``name -> ExperimentResult`` or a list of results
    (named by their mode). All must share the same unit keys.
    """
    if isinstance(results, dict):
        names, res = list(results), list(results.values())
    else:
        res = list(results)
        names = [r.name for r in res]
    if len(res) < 2:
        raise ArgumentError("need at least two methods to rank")
    keys = list(res[0].per_unit_accuracy)
    for r in res[1:]:
        if set(r.per_unit_accuracy) != set(keys):
            raise ArgumentError("results do not share the same unit keys")
    scores = [[r.per_unit_accuracy[k] for r in res] for k in keys]
    return rank_table(names, keys, scores)


def friedman_test(r: RankTable):
    """``(chi_square, degrees_of_freedom)`` of the Friedman rank test."""
    N, k = r.ranks.shape
    if N < 2 or k < 2:
        raise ArgumentError(f"Friedman test needs >= 2 blocks and >= 2 methods, got N={N}, k={k}")
    R = r.mean_ranks
    chi2 = 12.0 * N / (k * (k + 1)) * (np.sum(R**2) - k * (k + 1) ** 2 / 4.0)
    return float(chi2), k - 1


def nemenyi_cd(k: int, N: int, alpha: float = 0.05) -> float:
    """Critical difference ``q_alpha(k) * sqrt(k (k + 1) / (6 N))``."""
    if alpha not in NEMENYI_Q:
        raise ArgumentError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    table = NEMENYI_Q[alpha]
    if k not in table:
        raise ArgumentError(f"k={k} outside the tabulated range 2..10")
    if N < 1:
        raise ArgumentError("N must be >= 1")
    return table[k] * np.sqrt(k * (k + 1) / (6.0 * N))


def connected_pairs(r: RankTable, alpha: float = 0.05):
    """Pairs of method names whose mean ranks differ by less than the CD."""
    cd = nemenyi_cd(len(r.methods), len(r.blocks), alpha)
    R = r.mean_ranks
    return [
        (r.methods[i], r.methods[j])
        for i, j in combinations(range(len(r.methods)), 2)
        if abs(R[i] - R[j]) < cd
    ]


def significantly_different(r: RankTable, a: str, b: str, alpha: float = 0.05) -> bool:
    cd = nemenyi_cd(len(r.methods), len(r.blocks), alpha)
    R = dict(zip(r.methods, r.mean_ranks))
    return abs(R[a] - R[b]) >= cd
