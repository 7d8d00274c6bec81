"""End-to-end clustering on a feature view, DEC/IDEC style.

The model embeds samples, a Student-t kernel turns distances to trainable
centroids into soft assignments q, and a sharpened target distribution p
(refreshed periodically from the full dataset) drives a KL loss. idec_train
adds the autoencoder reconstruction term; dec_finetune is the
clustering-loss-only variant used for end-to-end refinement, and accepts any
model that can expose an embedding/backprop adapter (plain MLPs and the
multi-branch network both do).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import flatclust
from .dataio import FeatureView, MultiViewDataset, Partition
from .nnet import (
    MlpModel,
    MlpSpec,
    TrainConfig,
    TrainingDivergedError,
    _backward,
    _forward_cached,
    adam_init,
    adam_step,
    forward,
    grad,
    mse_loss,
    train_autoencoder,
)
from .seeding import spawn_seeds

__all__ = [
    "DecState",
    "SoftAssignment",
    "IdecResult",
    "FinetuneResult",
    "soft_assign",
    "target_distribution",
    "kl_cluster_loss",
    "idec_train",
    "dec_finetune",
]


@dataclass(frozen=True)
class DecState:
    """Centroids plus the clustering-objective hyperparameters.

    update_interval=None means one refresh per epoch (ceil(n / batch_size));
    stop_delta is the label-change fraction under which training stops.
    """

    centroids: np.ndarray | None = None
    alpha: float = 1.0
    gamma: float = 0.1
    update_interval: int | None = None
    stop_delta: float = 1e-3

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.update_interval is not None and self.update_interval < 1:
            raise ValueError("update_interval must be >= 1")
        if self.stop_delta < 0:
            raise ValueError("stop_delta must be >= 0")
        if self.centroids is not None:
            c = np.array(self.centroids, dtype=np.float64)
            if c.ndim != 2 or not np.isfinite(c).all():
                raise ValueError("centroids must be a finite k x e matrix")
            object.__setattr__(self, "centroids", c)


@dataclass(frozen=True)
class SoftAssignment:
    q: np.ndarray  # n x k, row-stochastic

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 2:
            raise ValueError("q must be a matrix")
        if not np.allclose(q.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("q rows must sum to 1")
        object.__setattr__(self, "q", q)


def _student_t(embeddings: np.ndarray, centroids: np.ndarray, alpha: float):
    """Returns (q, kernel) where kernel[i,j] = 1 / (1 + |z_i - mu_j|^2 / alpha)."""
    diff = embeddings[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    kernel = 1.0 / (1.0 + d2 / alpha)
    u = kernel ** ((alpha + 1.0) / 2.0)
    q = u / u.sum(axis=1, keepdims=True)
    return q, kernel


def soft_assign(embeddings: np.ndarray, state: DecState) -> SoftAssignment:
    """Row-stochastic Student-t similarities between embeddings and centroids."""
    z = np.asarray(embeddings, dtype=np.float64)
    if state.centroids is None:
        raise ValueError("state has no centroids")
    if z.ndim != 2 or z.shape[1] != state.centroids.shape[1]:
        raise ValueError(f"embedding dim {z.shape} incompatible with centroids {state.centroids.shape}")
    q, _ = _student_t(z, state.centroids, state.alpha)
    return SoftAssignment(q=q)


def target_distribution(q) -> np.ndarray:
    """Sharpened target: square q, divide by column mass, renormalize rows.

    Written as q * (q / f) so that the single-row fixed point (f = q) stays
    exact up to the final normalization's last ulp.
    """
    qm = q.q if isinstance(q, SoftAssignment) else np.asarray(q, dtype=np.float64)
    w = qm * (qm / qm.sum(axis=0, keepdims=True))
    return w / w.sum(axis=1, keepdims=True)


def kl_cluster_loss(p, q) -> float:
    """KL divergence sum_i sum_j p_ij log(p_ij / q_ij), with 0 log 0 = 0."""
    pm = p.q if isinstance(p, SoftAssignment) else np.asarray(p, dtype=np.float64)
    qm = q.q if isinstance(q, SoftAssignment) else np.asarray(q, dtype=np.float64)
    if pm.shape != qm.shape:
        raise ValueError(f"shape mismatch: {pm.shape} vs {qm.shape}")
    mask = pm > 0
    if (qm[mask] == 0).any():
        raise ValueError("q has zero mass where p is positive")
    return float((pm[mask] * np.log(pm[mask] / qm[mask])).sum())


def _cluster_grads(z: np.ndarray, centroids: np.ndarray, p: np.ndarray, alpha: float):
    """Loss and gradients of the summed KL term, with p treated as constant.

    d/dz_i = ((alpha+1)/alpha) * sum_j (p_ij - q_ij) * kernel_ij * (z_i - mu_j)
    and the centroid gradient is its negative, summed over samples.
    """
    q, kernel = _student_t(z, centroids, alpha)
    loss = kl_cluster_loss(p, q)
    coeff = ((alpha + 1.0) / alpha) * (p - q) * kernel
    diff = z[:, None, :] - centroids[None, :, :]
    dz = (coeff[:, :, None] * diff).sum(axis=1)
    dmu = -(coeff[:, :, None] * diff).sum(axis=0)
    return loss, dz, dmu


@dataclass
class IdecResult:
    partition: Partition
    encoder: MlpModel
    centroids: np.ndarray
    log_rows: list[tuple] = field(default_factory=list)  # (update, recon, cluster, change_frac)


@dataclass
class FinetuneResult:
    partition: Partition
    model: object
    centroids: np.ndarray
    log_rows: list[tuple] = field(default_factory=list)


def _hard_labels(z: np.ndarray, centroids: np.ndarray, alpha: float) -> np.ndarray:
    q, _ = _student_t(z, centroids, alpha)
    return q.argmax(axis=1)


def idec_train(view, k: int, encoder_spec: MlpSpec, config: TrainConfig, state: DecState | None = None) -> IdecResult:
    """Autoencoder pretraining, kmeans centroid init, then joint optimization
    of reconstruction + gamma * clustering loss with periodic target refreshes.
    """
    x = view.data if isinstance(view, FeatureView) else np.asarray(view, dtype=np.float64)
    n = x.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds sample count {n}")
    state = state or DecState()
    ae_seed, km_seed, loop_seed = spawn_seeds(config.seed, 3)
    ae = train_autoencoder(x, encoder_spec, replace(config, seed=ae_seed))
    encoder, decoder = ae.encoder, ae.decoder
    km = flatclust.kmeans(forward(encoder, x), flatclust.KMeansConfig(k=k, seed=km_seed))
    if state.gamma == 0.0:
        # degenerate weight: the clustering term never contributes, so the
        # result is exactly kmeans on the pretrained embeddings
        return IdecResult(partition=km.partition, encoder=encoder, centroids=km.centroids.copy())

    centroids = km.centroids.copy()
    params = encoder.parameters() + decoder.parameters() + [centroids]
    opt = adam_init(params, config.beta1, config.beta2, config.eps)
    interval = state.update_interval or max(1, math.ceil(n / config.batch_size))
    rng = np.random.default_rng(loop_seed)
    log_rows: list[tuple] = []
    p_full = None
    prev_labels = None
    update = 0
    stop = False
    while not stop and update < config.max_updates:
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            if update >= config.max_updates:
                break
            if update % interval == 0:
                z_full = forward(encoder, x)
                q_full, _ = _student_t(z_full, centroids, state.alpha)
                labels = q_full.argmax(axis=1)
                p_full = target_distribution(q_full)
                recon_full = float(((forward(decoder, z_full) - x) ** 2).mean())
                cluster_full = kl_cluster_loss(p_full, q_full)
                change = 1.0 if prev_labels is None else float((labels != prev_labels).mean())
                log_rows.append((update, recon_full, cluster_full, change))
                if prev_labels is not None and change < state.stop_delta:
                    stop = True
                    break
                prev_labels = labels
            idx = order[start:start + config.batch_size]
            xb = x[idx]
            zb, enc_acts = _forward_cached(encoder, xb)
            dec_res = grad(decoder, zb, mse_loss(xb))
            closs, dz_c, dmu = _cluster_grads(zb, centroids, p_full[idx], state.alpha)
            b = xb.shape[0]
            total = dec_res.loss + state.gamma * closs / b
            update += 1
            if not np.isfinite(total):
                raise TrainingDivergedError("combined loss diverged", update)
            enc_res = _backward(encoder, enc_acts, dec_res.input_grads + state.gamma * dz_c / b)
            grads = enc_res.parameter_grads() + dec_res.parameter_grads() + [state.gamma * dmu / b]
            adam_step(params, grads, opt, config.finetune_learning_rate)
    labels = _hard_labels(forward(encoder, x), centroids, state.alpha)
    return IdecResult(
        partition=Partition(assignments=labels, k=k),
        encoder=encoder,
        centroids=centroids,
        log_rows=log_rows,
    )


class _MlpAdapter:
    """Embedding/backprop adapter over a single-branch MLP."""

    def __init__(self, model: MlpModel, data):
        self.model = model
        self.x = data.data if isinstance(data, FeatureView) else np.asarray(data, dtype=np.float64)
        self._acts = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def parameters(self):
        return self.model.parameters()

    def embed_all(self) -> np.ndarray:
        return forward(self.model, self.x)

    def embed_batch(self, idx: np.ndarray) -> np.ndarray:
        z, self._acts = _forward_cached(self.model, self.x[idx])
        return z

    def backward_batch(self, dz: np.ndarray):
        return _backward(self.model, self._acts, dz).parameter_grads()


def _adapter_for(model, data):
    if isinstance(model, MlpModel):
        if isinstance(data, MultiViewDataset):
            raise ValueError("a single-branch MLP fine-tunes on one view, not a dataset")
        return _MlpAdapter(model, data)
    if hasattr(model, "finetune_adapter"):
        return model.finetune_adapter(data)
    raise TypeError(f"cannot fine-tune model of type {type(model).__name__}")


def dec_finetune(model, data, k: int, config: TrainConfig, state: DecState | None = None) -> FinetuneResult:
    """Clustering-loss-only fine-tuning of an embedding model.

    When state.centroids is provided, fine-tuning continues from them
    (zero updates then reproduces the incoming assignment exactly);
    otherwise centroids start from kmeans on the current embeddings.
    """
    state = state or DecState()
    adapter = _adapter_for(model, data)
    n = adapter.n
    if k > n:
        raise ValueError(f"k={k} exceeds sample count {n}")
    km_seed, loop_seed = spawn_seeds(config.seed, 2)
    if state.centroids is not None:
        centroids = state.centroids.copy()
        if centroids.shape[0] != k:
            raise ValueError(f"state has {centroids.shape[0]} centroids, expected k={k}")
    else:
        z_full = adapter.embed_all()
        centroids = flatclust.kmeans(z_full, flatclust.KMeansConfig(k=k, seed=km_seed)).centroids.copy()

    params = adapter.parameters() + [centroids]
    opt = adam_init(params, config.beta1, config.beta2, config.eps)
    interval = state.update_interval or max(1, math.ceil(n / config.batch_size))
    rng = np.random.default_rng(loop_seed)
    log_rows: list[tuple] = []
    p_full = None
    prev_labels = None
    update = 0
    stop = False
    while not stop and update < config.max_updates:
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            if update >= config.max_updates:
                break
            if update % interval == 0:
                z_full = adapter.embed_all()
                q_full, _ = _student_t(z_full, centroids, state.alpha)
                labels = q_full.argmax(axis=1)
                p_full = target_distribution(q_full)
                cluster_full = kl_cluster_loss(p_full, q_full)
                change = 1.0 if prev_labels is None else float((labels != prev_labels).mean())
                log_rows.append((update, None, cluster_full, change))
                if prev_labels is not None and change < state.stop_delta:
                    stop = True
                    break
                prev_labels = labels
            idx = order[start:start + config.batch_size]
            zb = adapter.embed_batch(idx)
            closs, dz_c, dmu = _cluster_grads(zb, centroids, p_full[idx], state.alpha)
            b = idx.shape[0]
            update += 1
            if not np.isfinite(closs):
                raise TrainingDivergedError("clustering loss diverged", update)
            grads = adapter.backward_batch(dz_c / b) + [dmu / b]
            adam_step(params, grads, opt, config.finetune_learning_rate)
    labels = _hard_labels(adapter.embed_all(), centroids, state.alpha)
    return FinetuneResult(
        partition=Partition(assignments=labels, k=k),
        model=model,
        centroids=centroids,
        log_rows=log_rows,
    )
