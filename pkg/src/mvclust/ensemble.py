"""Multi-view baselines: concatenate+cluster (CC) and co-association consensus (MVEC)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import deepclust, flatclust
from .dataio import FeatureView, MultiViewDataset, Partition
from .deepclust import DecState
from .nnet import MlpSpec, TrainConfig
from .seeding import named_seed

__all__ = [
    "CoassociationMatrix",
    "ClustererSpec",
    "concat_views",
    "cc",
    "coassociation",
    "complement_distance",
    "mvec",
    "run_clusterer",
]

KMEANS = "kmeans"
AGGLOMERATIVE_WARD = "agglomerative-ward"
IDEC = "idec"
_ALGORITHMS = (KMEANS, AGGLOMERATIVE_WARD, IDEC)


@dataclass(frozen=True)
class CoassociationMatrix:
    """Pairwise co-clustering frequency across a set of partitions."""

    values: np.ndarray  # n x n symmetric, entries in {0, 1/m, ..., 1}
    m_partitions: int


@dataclass(frozen=True)
class ClustererSpec:
    """A pluggable base clusterer for the multi-view baselines."""

    algorithm: str = KMEANS
    kmeans_config: flatclust.KMeansConfig | None = None
    train_config: TrainConfig | None = None
    dec_state: DecState | None = None
    hidden_dims: tuple[int, ...] = (32, 16)

    def __post_init__(self):
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(f"unknown clusterer {self.algorithm!r}; expected one of {_ALGORITHMS}")


def run_clusterer(spec: ClustererSpec, view: FeatureView, k: int, seed: int) -> Partition:
    """Apply the configured base clusterer to one view."""
    if spec.algorithm == KMEANS:
        config = spec.kmeans_config or flatclust.KMeansConfig(k=k)
        config = replace(config, k=k, seed=seed)
        return flatclust.kmeans(view, config).partition
    if spec.algorithm == AGGLOMERATIVE_WARD:
        return flatclust.agglomerative_features(view, flatclust.LinkageConfig(k=k, linkage=flatclust.WARD))
    config = spec.train_config or TrainConfig()
    config = replace(config, seed=seed)
    encoder = MlpSpec(layer_dims=(view.dim, *spec.hidden_dims, k))
    state = spec.dec_state or DecState()
    return deepclust.idec_train(view, k, encoder, config, state).partition


def concat_views(dataset: MultiViewDataset) -> FeatureView:
    """Column-stack all views in view order into one wide view."""
    data = np.hstack([v.data for v in dataset.views])
    return FeatureView(name="concat", data=data)


def cc(dataset: MultiViewDataset, clusterer: ClustererSpec, k: int, seed: int = 0) -> Partition:
    """Concatenate + cluster: the naive multi-view baseline."""
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds sample count {dataset.n}")
    return run_clusterer(clusterer, concat_views(dataset), k, seed)


def coassociation(partitions: list[Partition]) -> CoassociationMatrix:
    """values[i][j] = fraction of partitions that place samples i and j together."""
    if not partitions:
        raise ValueError("need at least one partition")
    n = partitions[0].n
    for p in partitions[1:]:
        if p.n != n:
            raise ValueError(f"partition length mismatch: {n} vs {p.n}")
    acc = np.zeros((n, n))
    for p in partitions:
        a = p.assignments
        acc += a[:, None] == a[None, :]
    return CoassociationMatrix(values=acc / len(partitions), m_partitions=len(partitions))


def complement_distance(cam: CoassociationMatrix) -> np.ndarray:
    """The standard evidence-accumulation transform: D = 1 - CAM."""
    dist = 1.0 - cam.values
    np.fill_diagonal(dist, 0.0)
    return dist


def mvec(dataset: MultiViewDataset, clusterer: ClustererSpec, k: int, seed: int = 0,
         distance_transform=complement_distance) -> Partition:
    """Multi-view ensemble clustering: per-view partitions -> co-association
    matrix -> average-linkage consensus on a CAM-derived distance (1 - CAM
    unless another transform is supplied).

    Per-view seeds derive from the view name, so the result is invariant
    under any permutation of the views.
    """
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds sample count {dataset.n}")
    partitions = [
        run_clusterer(clusterer, view, k, named_seed(seed, view.name)) for view in dataset.views
    ]
    dist = distance_transform(coassociation(partitions))
    return flatclust.agglomerative_distance(
        dist, flatclust.LinkageConfig(k=k, linkage=flatclust.AVERAGE)
    )
