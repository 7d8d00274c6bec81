"""Minimal neural substrate: fully connected MLPs with analytic gradients.

Layers are affine with ReLU on every hidden layer and a linear output.
All math runs in 64-bit floats so finite-difference gradient checks can be
tight. Training is single-threaded and bit-reproducible given a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import FeatureView
from .seeding import spawn_seeds

__all__ = [
    "MlpSpec",
    "MlpModel",
    "TrainConfig",
    "GradResult",
    "AdamState",
    "AutoencoderResult",
    "TrainingDivergedError",
    "init",
    "forward",
    "grad",
    "adam_init",
    "adam_step",
    "mse_loss",
    "train_autoencoder",
    "mirrored_spec",
    "save_model",
    "load_model",
]


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths, input first and output last. Hidden ReLU, linear output."""

    layer_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("spec needs at least input and output dims")
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: list[np.ndarray]  # weights[l]: (d_in, d_out)
    biases: list[np.ndarray]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by pretraining and clustering fine-tuning."""

    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 500
    max_updates: int = 2000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.finetune_learning_rate < 0:
            raise ValueError("learning rates must be positive (fine-tune may be 0)")
        if self.batch_size < 1 or self.epochs < 1 or self.max_updates < 0:
            raise ValueError("batch_size and epochs must be >= 1, max_updates >= 0")


def init(spec: MlpSpec, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases; deterministic given seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-limit, limit, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpModel(spec=spec, weights=weights, biases=biases)


def _forward_cached(model: MlpModel, batch: np.ndarray):
    """Returns (output, activations) where activations[l] is the input of layer l."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ValueError(f"batch shape {x.shape} incompatible with input dim {model.spec.input_dim}")
    activations = [x]
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w + b
        activations.append(z if l == last else np.maximum(z, 0.0))
    return activations[-1], activations


def forward(model: MlpModel, batch) -> np.ndarray:
    """Row-wise forward pass: affine+ReLU stack with a linear final layer."""
    if isinstance(batch, FeatureView):
        batch = batch.data
    out, _ = _forward_cached(model, batch)
    return out


@dataclass
class GradResult:
    loss: float
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grads: np.ndarray

    def parameter_grads(self) -> list[np.ndarray]:
        return [*self.weight_grads, *self.bias_grads]


def _backward(model: MlpModel, activations: list[np.ndarray], dout: np.ndarray) -> GradResult:
    wgrads = [None] * len(model.weights)
    bgrads = [None] * len(model.biases)
    delta = dout
    for l in range(len(model.weights) - 1, -1, -1):
        if l < len(model.weights) - 1:
            delta = delta * (activations[l + 1] > 0)  # ReLU subgradient, 0 at the kink
        wgrads[l] = activations[l].T @ delta
        bgrads[l] = delta.sum(axis=0)
        delta = delta @ model.weights[l].T
    return GradResult(loss=0.0, weight_grads=wgrads, bias_grads=bgrads, input_grads=delta)


def grad(model: MlpModel, batch, loss_fn) -> GradResult:
    """Backpropagate a scalar loss.

    loss_fn maps the output matrix to (loss, dloss/doutputs). Parameter
    gradients and input gradients are both returned; the latter feed
    multi-branch architectures where a head's gradient flows into branches.
    """
    if isinstance(batch, FeatureView):
        batch = batch.data
    out, activations = _forward_cached(model, batch)
    loss, dout = loss_fn(out)
    result = _backward(model, activations, np.asarray(dout, dtype=np.float64))
    result.loss = float(loss)
    return result


def mse_loss(target: np.ndarray):
    """Mean squared error over all entries, as a loss_fn for grad()."""
    target = np.asarray(target, dtype=np.float64)

    def fn(out: np.ndarray):
        diff = out - target
        return float((diff * diff).mean()), 2.0 * diff / diff.size

    return fn


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(
        step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, applied in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def mirrored_spec(spec: MlpSpec) -> MlpSpec:
    return MlpSpec(layer_dims=tuple(reversed(spec.layer_dims)))


@dataclass
class AutoencoderResult:
    encoder: MlpModel
    decoder: MlpModel
    final_mse: float
    epoch_mse: list[float] = field(default_factory=list)


def train_autoencoder(view, encoder_spec: MlpSpec, config: TrainConfig) -> AutoencoderResult:
    """Joint encoder/decoder training on the reconstruction loss.

    The decoder mirrors the encoder spec. Mini-batches are reshuffled every
    epoch; the truncated final batch is kept. epoch_mse holds the
    full-dataset reconstruction error after each epoch.
    """
    x = view.data if isinstance(view, FeatureView) else np.asarray(view, dtype=np.float64)
    if encoder_spec.input_dim != x.shape[1]:
        raise ValueError(f"encoder input dim {encoder_spec.input_dim} != data dim {x.shape[1]}")
    enc_seed, dec_seed, shuffle_seed = spawn_seeds(config.seed, 3)
    encoder = init(encoder_spec, enc_seed)
    decoder = init(mirrored_spec(encoder_spec), dec_seed)
    params = encoder.parameters() + decoder.parameters()
    opt = adam_init(params, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(shuffle_seed)
    n = x.shape[0]
    epoch_mse = []
    update = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            xb = x[order[start:start + config.batch_size]]
            z, enc_acts = _forward_cached(encoder, xb)
            dec_res = grad(decoder, z, mse_loss(xb))
            update += 1
            if not np.isfinite(dec_res.loss):
                raise TrainingDivergedError("autoencoder loss diverged", update)
            enc_res = _backward(encoder, enc_acts, dec_res.input_grads)
            adam_step(params, enc_res.parameter_grads() + dec_res.parameter_grads(), opt, config.learning_rate)
        recon = forward(decoder, forward(encoder, x))
        epoch_mse.append(float(((recon - x) ** 2).mean()))
    return AutoencoderResult(encoder=encoder, decoder=decoder, final_mse=epoch_mse[-1], epoch_mse=epoch_mse)


_CKPT_MAGIC = b"MVNN"
_CKPT_HEADER = struct.Struct("<4sHHQ")


def save_model(model: MlpModel, path) -> None:
    """Checkpoint: header with layer dims, then float64 LE parameter blocks."""
    dims = model.spec.layer_dims
    parts = [_CKPT_HEADER.pack(_CKPT_MAGIC, 1, 0, len(dims))]
    parts.append(np.asarray(dims, dtype="<u8").tobytes())
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f8").tobytes(order="C"))
        parts.append(b.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> MlpModel:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: unrecognized checkpoint format")
    magic, version, _reserved, ndims = _CKPT_HEADER.unpack_from(raw)
    if magic != _CKPT_MAGIC or version != 1:
        raise ValueError(f"{path}: unrecognized checkpoint format")
    offset = _CKPT_HEADER.size
    dims = np.frombuffer(raw, dtype="<u8", count=ndims, offset=offset).astype(int)
    offset += 8 * ndims
    spec = MlpSpec(layer_dims=tuple(dims))
    weights, biases = [], []
    for d_in, d_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=d_in * d_out, offset=offset).reshape(d_in, d_out)
        offset += 8 * d_in * d_out
        b = np.frombuffer(raw, dtype="<f8", count=d_out, offset=offset)
        offset += 8 * d_out
        weights.append(w.copy())
        biases.append(b.copy())
    if offset != len(raw):
        raise ValueError(f"{path}: checkpoint has trailing bytes")
    return MlpModel(spec=spec, weights=weights, biases=biases)
