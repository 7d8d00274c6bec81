"""Multi-view dataset model, the MVCV on-disk view format, and validation.

A dataset is an aligned collection of feature views: row k of every view
describes the same underlying sample. Alignment is positional; nothing here
ever reorders rows.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FeatureView",
    "MultiViewDataset",
    "Partition",
    "Manifest",
    "ManifestView",
    "save_view",
    "load_view",
    "save_labels",
    "load_labels",
    "save_manifest",
    "load_manifest",
    "load_dataset",
]

#: MVCV header: magic, version u16, reserved u16, n u64, d u64 (little-endian).
_MAGIC = b"MVCV"
_VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureView:
    """One view of the dataset: an n x d matrix of per-sample feature vectors."""

    name: str
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"view {self.name!r}: expected n x d matrix with n,d >= 1, got shape {data.shape}")
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            r, c = bad[0]
            raise ValueError(f"view {self.name!r}: non-finite value at ({r},{c})")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MultiViewDataset:
    """Aligned views over one sample set, with optional ground-truth labels."""

    views: tuple[FeatureView, ...]
    labels: np.ndarray | None = None
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValueError("dataset needs at least one view")
        names = [v.name for v in views]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate view names: {names}")
        n = views[0].n
        for v in views[1:]:
            if v.n != n:
                raise ValueError(
                    f"sample count mismatch: {views[0].name}={n} {v.name}={v.n}"
                )
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError(f"labels length {labels.shape[0]} != sample count {n}")
            object.__setattr__(self, "labels", _frozen(labels))
        if self.sample_ids is not None:
            ids = tuple(self.sample_ids)
            if len(ids) != n:
                raise ValueError(f"sample_ids length {len(ids)} != sample count {n}")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self) -> int:
        return self.views[0].n

    @property
    def m(self) -> int:
        return len(self.views)

    def view(self, name: str) -> FeatureView:
        for v in self.views:
            if v.name == name:
                return v
        raise KeyError(f"no view named {name!r}; have {[v.name for v in self.views]}")


@dataclass(frozen=True)
class Partition:
    """Cluster assignment per sample: n indices in [0, k)."""

    assignments: np.ndarray
    k: int

    def __post_init__(self):
        a = np.array(self.assignments, dtype=np.int64)
        if a.ndim != 1 or a.shape[0] < 1:
            raise ValueError("assignments must be a non-empty 1-d sequence")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.k > a.shape[0]:
            raise ValueError(f"k={self.k} exceeds sample count {a.shape[0]}")
        if a.min() < 0 or a.max() >= self.k:
            raise ValueError(f"assignments must lie in [0, {self.k})")
        object.__setattr__(self, "assignments", _frozen(a))

    @property
    def n(self) -> int:
        return self.assignments.shape[0]


@dataclass
class ManifestView:
    name: str
    path: str
    n: int | None = None
    d: int | None = None


@dataclass
class Manifest:
    """Dataset descriptor: view files, optional labels file, seed, method configs."""

    name: str
    views: list[ManifestView]
    labels_path: str | None = None
    sample_ids_path: str | None = None
    seed: int = 0
    methods: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def save_view(view: FeatureView, path) -> None:
    """Write a view in the MVCV binary format (float32 LE payload, row-major)."""
    n, d = view.data.shape
    payload = view.data.astype("<f4").tobytes(order="C")
    header = _HEADER.pack(_MAGIC, _VERSION, 0, n, d)
    Path(path).write_bytes(header + payload)


def load_view(path, name: str | None = None) -> FeatureView:
    """Read an MVCV file; validates magic, version, shape, and finiteness."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: unrecognized format (file shorter than header)")
    magic, version, _reserved, n, d = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: unrecognized format (bad magic {magic!r})")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = n * d * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: truncated payload (header declares {n}x{d} = {expected} bytes, found {len(payload)})"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    return FeatureView(name=name or Path(path).stem, data=data)


def save_labels(tokens, path) -> None:
    """Write labels as UTF-8 text, one token per line."""
    Path(path).write_text("\n".join(str(t) for t in tokens) + "\n", encoding="utf-8")


def load_labels(path) -> tuple[np.ndarray, list[str]]:
    """Read a labels file; tokens map to dense ints in order of first appearance.

    Returns (labels, tokens) where tokens[i] is the original token for class i.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    tokens = [ln for ln in lines if ln != ""]
    index: dict[str, int] = {}
    labels = np.empty(len(tokens), dtype=np.int64)
    for i, tok in enumerate(tokens):
        if tok not in index:
            index[tok] = len(index)
        labels[i] = index[tok]
    ordered = sorted(index, key=index.get)
    return labels, ordered


def save_manifest(manifest: Manifest, path) -> None:
    doc = {
        "name": manifest.name,
        "views": [
            {k: v for k, v in dict(name=mv.name, path=mv.path, n=mv.n, d=mv.d).items() if v is not None}
            for mv in manifest.views
        ],
        "seed": manifest.seed,
        "methods": manifest.methods,
    }
    if manifest.labels_path is not None:
        doc["labels_path"] = manifest.labels_path
    if manifest.sample_ids_path is not None:
        doc["sample_ids_path"] = manifest.sample_ids_path
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path) -> Manifest:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from e
    try:
        views = [ManifestView(name=v["name"], path=v["path"], n=v.get("n"), d=v.get("d")) for v in doc["views"]]
        manifest = Manifest(
            name=doc["name"],
            views=views,
            labels_path=doc.get("labels_path"),
            sample_ids_path=doc.get("sample_ids_path"),
            seed=int(doc.get("seed", 0)),
            methods=doc.get("methods", {}),
            base_dir=p.parent,
        )
    except KeyError as e:
        raise ValueError(f"{path}: manifest missing required field {e}") from e
    if not manifest.views:
        raise ValueError(f"{path}: manifest declares no views")
    return manifest


def load_dataset(manifest: Manifest) -> MultiViewDataset:
    """Load all views declared by a manifest and verify their alignment."""
    views = []
    for mv in manifest.views:
        view = load_view(manifest.resolve(mv.path), name=mv.name)
        if mv.n is not None and view.n != mv.n:
            raise ValueError(f"view {mv.name!r}: file has n={view.n}, manifest declares n={mv.n}")
        if mv.d is not None and view.dim != mv.d:
            raise ValueError(f"view {mv.name!r}: file has d={view.dim}, manifest declares d={mv.d}")
        views.append(view)
    labels = None
    if manifest.labels_path is not None:
        labels, _ = load_labels(manifest.resolve(manifest.labels_path))
    sample_ids = None
    if manifest.sample_ids_path is not None:
        sample_ids = tuple(
            Path(manifest.resolve(manifest.sample_ids_path)).read_text(encoding="utf-8").splitlines()
        )
    return MultiViewDataset(views=tuple(views), labels=labels, sample_ids=sample_ids)
