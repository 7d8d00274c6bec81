"""Classical clustering primitives: KMeans and agglomerative linkage.

Everything here is deterministic given its seed. Ties in merge or assignment
decisions always break toward the lowest index, so results are reproducible
and testable bit-for-bit. Linkage is the naive O(n^3) algorithm, which is
fine at the sample counts this toolkit targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .dataio import FeatureView, Partition
from .seeding import spawn_seeds

__all__ = [
    "KMeansConfig",
    "KMeansResult",
    "LinkageConfig",
    "WARD",
    "AVERAGE",
    "kmeans",
    "agglomerative_features",
    "agglomerative_distance",
]

WARD = "ward-on-features"
AVERAGE = "average-on-distance"


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.n_init < 1 or self.max_iter < 1:
            raise ValueError("n_init and max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass(frozen=True)
class KMeansResult:
    partition: Partition
    centroids: np.ndarray
    inertia: float
    iterations_run: int


@dataclass(frozen=True)
class LinkageConfig:
    k: int
    linkage: str = WARD

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.linkage not in (WARD, AVERAGE):
            raise ValueError(f"unknown linkage {self.linkage!r}")


def _matrix(data) -> np.ndarray:
    x = data.data if isinstance(data, FeatureView) else np.asarray(data, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in data")
    return x


def _seed_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ D^2 sampling; first center uniform."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = rng.choice(n, p=d2 / total)
        else:
            pick = int(rng.integers(n))  # all points coincide with chosen centers
        centers[j] = x[pick]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    """One Lloyd run. Returns (assign, centers, iterations, inertia_history)."""
    n, k = x.shape[0], centers.shape[0]
    prev_assign = None
    prev_inertia = np.inf
    history = []
    iterations = 0
    for _ in range(max_iter):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)
        # repair empty clusters: donate the point farthest from its centroid,
        # never draining a donor cluster to zero members
        counts = np.bincount(assign, minlength=k)
        own = dists[np.arange(n), assign].copy()
        for j in np.flatnonzero(counts == 0):
            candidates = np.where(counts[assign] > 1, own, -np.inf)
            far = int(candidates.argmax())
            counts[assign[far]] -= 1
            counts[j] += 1
            assign[far] = j
            own[far] = -np.inf
        iterations += 1
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        for j in range(k):
            centers[j] = x[assign == j].mean(axis=0)
        diff = x - centers[assign]
        inertia = float(np.einsum("ij,ij->", diff, diff))
        history.append(inertia)
        if prev_inertia - inertia < tol * prev_inertia:
            prev_assign = assign
            break
        prev_assign = assign
        prev_inertia = inertia
    return prev_assign if prev_assign is not None else assign, centers, iterations, history


def kmeans(data, config: KMeansConfig) -> KMeansResult:
    """Best-of-n_init KMeans: k-means++ seeding then Lloyd refinement."""
    x = _matrix(data)
    n = x.shape[0]
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds sample count {n}")
    best = None
    for seed in spawn_seeds(config.seed, config.n_init):
        rng = np.random.default_rng(seed)
        centers = _seed_centers(x, config.k, rng)
        assign, centers, iterations, _ = _lloyd(x, centers, config.max_iter, config.tol)
        inertia = metrics.inertia(x, assign, centers)
        if best is None or inertia < best[0]:
            best = (inertia, assign, centers, iterations)
    inertia, assign, centers, iterations = best
    return KMeansResult(
        partition=Partition(assignments=assign, k=config.k),
        centroids=centers,
        inertia=inertia,
        iterations_run=iterations,
    )


def _cut(member_slot: np.ndarray, active: np.ndarray) -> Partition:
    """Compress active slots (in slot order) to dense cluster ids."""
    slots = np.flatnonzero(active)
    remap = {int(s): i for i, s in enumerate(slots)}
    labels = np.array([remap[int(s)] for s in member_slot], dtype=np.int64)
    return Partition(assignments=labels, k=len(slots))


def _merge_pairs(cost: np.ndarray, active: np.ndarray):
    """Lowest-cost active pair; ties break on the smallest (i, j)."""
    masked = cost.copy()
    masked[~active, :] = np.inf
    masked[:, ~active] = np.inf
    np.fill_diagonal(masked, np.inf)
    flat = int(masked.argmin())  # row-major argmin = lexicographic tie-break
    i, j = divmod(flat, cost.shape[0])
    return (i, j) if i < j else (j, i)


def agglomerative_features(data, config: LinkageConfig) -> Partition:
    """Bottom-up Ward clustering: each merge minimizes the variance increase."""
    if config.linkage != WARD:
        raise ValueError(f"agglomerative_features requires {WARD!r}, got {config.linkage!r}")
    x = _matrix(data)
    n = x.shape[0]
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds sample count {n}")
    sizes = np.ones(n)
    means = x.copy()
    active = np.ones(n, dtype=bool)
    member_slot = np.arange(n)

    def ward_cost_row(i: int) -> np.ndarray:
        d2 = ((means - means[i]) ** 2).sum(axis=1)
        return sizes * sizes[i] / (sizes + sizes[i]) * d2

    cost = np.empty((n, n))
    for i in range(n):
        cost[i] = ward_cost_row(i)

    remaining = n
    while remaining > config.k:
        i, j = _merge_pairs(cost, active)
        si, sj = sizes[i], sizes[j]
        means[i] = (si * means[i] + sj * means[j]) / (si + sj)
        sizes[i] = si + sj
        active[j] = False
        member_slot[member_slot == j] = i
        row = ward_cost_row(i)
        cost[i, :] = row
        cost[:, i] = row
        remaining -= 1
    return _cut(member_slot, active)


def agglomerative_distance(dist: np.ndarray, config: LinkageConfig) -> Partition:
    """Average-linkage (UPGMA) clustering of a precomputed distance matrix."""
    if config.linkage != AVERAGE:
        raise ValueError(f"agglomerative_distance requires {AVERAGE!r}, got {config.linkage!r}")
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.array_equal(d, d.T):
        raise ValueError("distance matrix is asymmetric")
    if (d < 0).any():
        raise ValueError("distance matrix has negative entries")
    if np.diagonal(d).any():
        raise ValueError("distance matrix diagonal must be zero")
    n = d.shape[0]
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds sample count {n}")
    d = d.copy()
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    member_slot = np.arange(n)
    remaining = n
    while remaining > config.k:
        i, j = _merge_pairs(d, active)
        si, sj = sizes[i], sizes[j]
        merged = (si * d[i, :] + sj * d[j, :]) / (si + sj)
        d[i, :] = merged
        d[:, i] = merged
        d[i, i] = 0.0
        sizes[i] = si + sj
        active[j] = False
        member_slot[member_slot == j] = i
        remaining -= 1
    return _cut(member_slot, active)
