"""Multi-branch embedding network and the staged multi-view training procedure.

The network runs one independent MLP per view, concatenates the branch
outputs in view order, and feeds a head MLP. Training is staged: each branch
is pretrained on its own view with the deep clustering objective, the head is
pretrained on the concatenated branch embeddings, and (for the full variant)
the whole assembly is then refined end-to-end on the clustering loss alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .dataio import FeatureView, MultiViewDataset, Partition
from .deepclust import DecState, dec_finetune, idec_train
from .nnet import (
    MlpModel,
    MlpSpec,
    TrainConfig,
    TrainingDivergedError,
    _backward,
    _forward_cached,
    forward,
    init,
)
from .seeding import named_seed

__all__ = [
    "MvNetSpec",
    "MvNetModel",
    "StageRow",
    "DmvcResult",
    "SMALL_HIDDEN",
    "FULL_HIDDEN",
    "mvnet_spec",
    "mvnet_forward",
    "embed",
    "dmvc_fix",
    "dmvc",
    "dmvc_scratch",
]

SMALL_HIDDEN = (32, 16)
FULL_HIDDEN = (500, 500, 2000)


@dataclass(frozen=True)
class MvNetSpec:
    branch_specs: tuple[MlpSpec, ...]
    head_spec: MlpSpec

    def __post_init__(self):
        branches = tuple(self.branch_specs)
        if not branches:
            raise ValueError("need at least one branch")
        total = sum(s.output_dim for s in branches)
        if self.head_spec.input_dim != total:
            raise ValueError(
                f"head input dim {self.head_spec.input_dim} != sum of branch output dims {total}"
            )
        object.__setattr__(self, "branch_specs", branches)


def mvnet_spec(view_dims, k: int, hidden: tuple[int, ...] = SMALL_HIDDEN) -> MvNetSpec:
    """Branch shapes d_i-...-k and a head (m*k)-...-k with the given hidden profile."""
    branches = tuple(MlpSpec(layer_dims=(d, *hidden, k)) for d in view_dims)
    head = MlpSpec(layer_dims=(len(branches) * k, *hidden, k))
    return MvNetSpec(branch_specs=branches, head_spec=head)


@dataclass
class MvNetModel:
    branches: list[MlpModel]
    head: MlpModel

    def parameters(self) -> list[np.ndarray]:
        params = []
        for branch in self.branches:
            params.extend(branch.parameters())
        params.extend(self.head.parameters())
        return params

    def finetune_adapter(self, data):
        return _MvNetAdapter(self, data)


def _view_matrices(model: MvNetModel, batch) -> list[np.ndarray]:
    if isinstance(batch, MultiViewDataset):
        batch = [v.data for v in batch.views]
    mats = [np.asarray(b, dtype=np.float64) for b in batch]
    if len(mats) != len(model.branches):
        raise ValueError(f"expected {len(model.branches)} views, got {len(mats)}")
    rows = {m.shape[0] for m in mats}
    if len(rows) != 1:
        raise ValueError(f"misaligned view row counts: {sorted(rows)}")
    return mats


def mvnet_forward(model: MvNetModel, batch) -> np.ndarray:
    """Per-branch forward, concatenation in branch order, head forward."""
    mats = _view_matrices(model, batch)
    parts = [forward(branch, m) for branch, m in zip(model.branches, mats)]
    return forward(model.head, np.hstack(parts))


def embed(model: MvNetModel, dataset: MultiViewDataset) -> FeatureView:
    """Final-layer embeddings of the whole dataset, as a clusterable view."""
    return FeatureView(name="mvnet-embedding", data=mvnet_forward(model, dataset))


class _MvNetAdapter:
    """Embedding/backprop adapter so dec_finetune can train the whole network."""

    def __init__(self, model: MvNetModel, data):
        self.model = model
        self.mats = _view_matrices(model, data)
        self._branch_acts = None
        self._head_acts = None

    @property
    def n(self) -> int:
        return self.mats[0].shape[0]

    def parameters(self):
        return self.model.parameters()

    def embed_all(self) -> np.ndarray:
        return mvnet_forward(self.model, self.mats)

    def embed_batch(self, idx: np.ndarray) -> np.ndarray:
        parts, self._branch_acts = [], []
        for branch, m in zip(self.model.branches, self.mats):
            out, acts = _forward_cached(branch, m[idx])
            parts.append(out)
            self._branch_acts.append(acts)
        z, self._head_acts = _forward_cached(self.model.head, np.hstack(parts))
        return z

    def backward_batch(self, dz: np.ndarray):
        head_res = _backward(self.model.head, self._head_acts, dz)
        grads = []
        offset = 0
        for branch, acts in zip(self.model.branches, self._branch_acts):
            width = branch.spec.output_dim
            dpart = head_res.input_grads[:, offset:offset + width]
            offset += width
            grads.extend(_backward(branch, acts, dpart).parameter_grads())
        grads.extend(head_res.parameter_grads())
        return grads


@dataclass
class StageRow:
    stage: str
    nmi: float | None
    seconds: float
    log_rows: list = field(default_factory=list)


@dataclass
class DmvcResult:
    partition: Partition
    model: MvNetModel
    report: list[StageRow]
    centroids: np.ndarray


def _stage_nmi(partition: Partition, dataset: MultiViewDataset) -> float | None:
    if dataset.labels is None:
        return None
    return metrics.nmi(partition.assignments, dataset.labels)


def dmvc_fix(dataset: MultiViewDataset, k: int, specs: MvNetSpec, config: TrainConfig,
             state: DecState | None = None) -> DmvcResult:
    """Staged training without end-to-end refinement.

    Stage 1 pretrains every branch on its own view; stage 2 embeds each view
    with its branch, concatenates, and pretrains the head on that
    concatenation. The head's partition is the final one.
    """
    if len(specs.branch_specs) != dataset.m:
        raise ValueError(f"spec has {len(specs.branch_specs)} branches for {dataset.m} views")
    for view, spec in zip(dataset.views, specs.branch_specs):
        if spec.input_dim != view.dim:
            raise ValueError(f"branch for {view.name!r} expects dim {spec.input_dim}, view has {view.dim}")
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds sample count {dataset.n}")
    state = state or DecState()
    report: list[StageRow] = []
    branches = []
    parts = []
    for view, spec in zip(dataset.views, specs.branch_specs):
        t0 = time.perf_counter()
        res = idec_train(view, k, spec, replace(config, seed=named_seed(config.seed, "branch:" + view.name)), state)
        report.append(StageRow(
            stage=f"branch:{view.name}",
            nmi=_stage_nmi(res.partition, dataset),
            seconds=time.perf_counter() - t0,
            log_rows=res.log_rows,
        ))
        branches.append(res.encoder)
        parts.append(forward(res.encoder, view.data))
    concat = FeatureView(name="branch-concat", data=np.hstack(parts))
    t0 = time.perf_counter()
    head_res = idec_train(concat, k, specs.head_spec,
                          replace(config, seed=named_seed(config.seed, "head")), state)
    report.append(StageRow(
        stage="head",
        nmi=_stage_nmi(head_res.partition, dataset),
        seconds=time.perf_counter() - t0,
        log_rows=head_res.log_rows,
    ))
    model = MvNetModel(branches=branches, head=head_res.encoder)
    return DmvcResult(partition=head_res.partition, model=model, report=report,
                      centroids=head_res.centroids)


def dmvc_scratch(dataset: MultiViewDataset, k: int, specs: MvNetSpec, config: TrainConfig,
                 state: DecState | None = None) -> DmvcResult:
    """Diagnostic: train the whole network end-to-end from random weights,
    skipping the staged pretraining. Expected to underperform the staged
    procedure; kept for comparison runs.
    """
    if len(specs.branch_specs) != dataset.m:
        raise ValueError(f"spec has {len(specs.branch_specs)} branches for {dataset.m} views")
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds sample count {dataset.n}")
    state = state or DecState()
    model = MvNetModel(
        branches=[init(spec, named_seed(config.seed, "scratch-branch:" + view.name))
                  for view, spec in zip(dataset.views, specs.branch_specs)],
        head=init(specs.head_spec, named_seed(config.seed, "scratch-head")),
    )
    t0 = time.perf_counter()
    res = dec_finetune(model, dataset, k,
                       replace(config, seed=named_seed(config.seed, "scratch-train")), state)
    report = [StageRow(stage="scratch", nmi=_stage_nmi(res.partition, dataset),
                       seconds=time.perf_counter() - t0, log_rows=res.log_rows)]
    return DmvcResult(partition=res.partition, model=model, report=report,
                      centroids=res.centroids)


def dmvc(dataset: MultiViewDataset, k: int, specs: MvNetSpec, config: TrainConfig,
         state: DecState | None = None, refine_updates: int | None = None) -> DmvcResult:
    """Staged training followed by end-to-end refinement of the whole network.

    Refinement continues from the head-stage centroids, so with
    refine_updates=0 the result is identical to dmvc_fix.
    """
    state = state or DecState()
    fix = dmvc_fix(dataset, k, specs, config, state)
    refine_config = replace(config, seed=named_seed(config.seed, "refine"))
    if refine_updates is not None:
        refine_config = replace(refine_config, max_updates=refine_updates)
    t0 = time.perf_counter()
    try:
        res = dec_finetune(fix.model, dataset, k, refine_config,
                           replace(state, centroids=fix.centroids))
    except TrainingDivergedError as e:
        raise TrainingDivergedError("end-to-end refinement diverged", e.iteration) from e
    report = fix.report + [StageRow(
        stage="refine",
        nmi=_stage_nmi(res.partition, dataset),
        seconds=time.perf_counter() - t0,
        log_rows=res.log_rows,
    )]
    return DmvcResult(partition=res.partition, model=fix.model, report=report,
                      centroids=res.centroids)
