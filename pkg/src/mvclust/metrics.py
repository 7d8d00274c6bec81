"""Clustering evaluation: contingency tables, mutual information, NMI, inertia."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import FeatureView, Partition

__all__ = ["ContingencyTable", "contingency", "nmi", "inertia"]


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # k_u x k_v nonnegative integers
    n: int


def _assignments(p) -> np.ndarray:
    if isinstance(p, Partition):
        return p.assignments
    return np.asarray(p, dtype=np.int64)


def contingency(u, v) -> ContingencyTable:
    """counts[a][b] = number of samples assigned to cluster a by u and b by v."""
    ua, va = _assignments(u), _assignments(v)
    if ua.shape != va.shape:
        raise ValueError(f"partition length mismatch: {ua.shape[0]} vs {va.shape[0]}")
    ku = int(ua.max()) + 1
    kv = int(va.max()) + 1
    counts = np.zeros((ku, kv), dtype=np.int64)
    np.add.at(counts, (ua, va), 1)
    return ContingencyTable(counts=counts, n=int(ua.shape[0]))


def _entropy(counts, n: int) -> float:
    # fsum gives the correctly rounded sum regardless of term order, so the
    # value depends only on the multiset of counts (relabeling-proof)
    return -math.fsum((c / n) * math.log(c / n) for c in counts if c > 0)


def nmi(u, v) -> float:
    """Normalized mutual information, normalized by the arithmetic mean of entropies.

    MI is computed as H(U) + H(V) - H(U,V), which makes symmetry, relabel
    invariance, and nmi(u, u) = 1 hold exactly in floating point (the joint
    entropy of identical partitions shares the marginal's count multiset).
    Conventions: 1.0 when both partitions are the single trivial cluster,
    0.0 when exactly one entropy is zero. Result is clamped to [0, 1].
    The value does not depend on the logarithm base (it cancels).
    """
    table = contingency(u, v)
    counts, n = table.counts, table.n
    hu = _entropy(counts.sum(axis=1), n)
    hv = _entropy(counts.sum(axis=0), n)
    if hu == 0.0 and hv == 0.0:
        return 1.0
    if hu == 0.0 or hv == 0.0:
        return 0.0
    huv = _entropy(counts.ravel(), n)
    mi = hu + hv - huv
    value = mi / ((hu + hv) / 2.0)
    return min(1.0, max(0.0, value))


def inertia(data, partition, centroids: np.ndarray) -> float:
    """Sum over samples of squared Euclidean distance to the assigned centroid."""
    x = data.data if isinstance(data, FeatureView) else np.asarray(data, dtype=np.float64)
    a = _assignments(partition)
    c = np.asarray(centroids, dtype=np.float64)
    if x.shape[0] != a.shape[0]:
        raise ValueError(f"data has {x.shape[0]} rows but partition has {a.shape[0]}")
    if c.ndim != 2 or c.shape[1] != x.shape[1]:
        raise ValueError(f"centroid shape {c.shape} incompatible with data dim {x.shape[1]}")
    if a.max() >= c.shape[0]:
        raise ValueError(f"assignment index {a.max()} out of range for {c.shape[0]} centroids")
    diff = x - c[a]
    return float(np.einsum("ij,ij->", diff, diff))
