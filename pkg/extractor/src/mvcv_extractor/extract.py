"""Penultimate-layer feature extraction with pretrained Keras CNNs.

Images are ordered lexicographically by filename; that order is the canonical
sample order shared by every emitted view and is recorded in images.txt.
Each architecture's features come from the activation just before its final
ImageNet classification layer: the global average pooling output for
ResNet50/InceptionV3/Xception, the last fully connected layer for the VGGs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .mvcv import write_manifest, write_view

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


@dataclass(frozen=True)
class Architecture:
    name: str
    input_size: int
    feature_width: int


#: Published penultimate-layer widths and input sizes.
ARCHITECTURES = {
    "vgg16": Architecture("vgg16", 224, 4096),
    "vgg19": Architecture("vgg19", 224, 4096),
    "resnet50": Architecture("resnet50", 224, 2048),
    "inceptionv3": Architecture("inceptionv3", 299, 2048),
    "xception": Architecture("xception", 299, 2048),
}


@dataclass(frozen=True)
class ExtractorConfig:
    image_dir: str
    architectures: tuple[str, ...]
    output_dir: str
    batch_size: int = 16
    weights: str = "imagenet"  # "imagenet" or "random" (seeded, offline)
    seed: int = 0

    def __post_init__(self):
        if not self.architectures:
            raise ValueError("need at least one architecture")
        unknown = [a for a in self.architectures if a not in ARCHITECTURES]
        if unknown:
            raise ValueError(f"unknown architectures {unknown}; expected {sorted(ARCHITECTURES)}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weights not in ("imagenet", "random"):
            raise ValueError("weights must be 'imagenet' or 'random'")


def list_images(image_dir) -> list[Path]:
    root = Path(image_dir)
    if not root.is_dir():
        raise ValueError(f"{image_dir}: not a directory")
    paths = sorted(
        (p for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.name,
    )
    if not paths:
        raise ValueError(f"no images found in {image_dir}")
    return paths


def load_batch(paths: list[Path], size: int) -> np.ndarray:
    batch = np.empty((len(paths), size, size, 3), dtype=np.float32)
    for i, path in enumerate(paths):
        try:
            with Image.open(path) as img:
                resized = img.convert("RGB").resize((size, size), Image.Resampling.LANCZOS)
        except (UnidentifiedImageError, OSError) as e:
            raise ValueError(f"cannot decode image {path.name}: {e}") from e
        batch[i] = np.asarray(resized, dtype=np.float32)
    return batch


def _arch_seed(seed: int, name: str) -> int:
    return (seed * 1000003 + zlib.crc32(name.encode())) % (2**31)


def _build_model(arch: Architecture, weights: str, seed: int):
    import tensorflow as tf

    tf.keras.utils.set_random_seed(_arch_seed(seed, arch.name))
    tf.config.experimental.enable_op_determinism()
    kw = None if weights == "random" else "imagenet"
    apps = tf.keras.applications
    try:
        if arch.name == "vgg16":
            base = apps.VGG16(weights=kw, include_top=True)
            model = tf.keras.Model(base.input, base.get_layer("fc2").output)
            preprocess = apps.vgg16.preprocess_input
        elif arch.name == "vgg19":
            base = apps.VGG19(weights=kw, include_top=True)
            model = tf.keras.Model(base.input, base.get_layer("fc2").output)
            preprocess = apps.vgg19.preprocess_input
        elif arch.name == "resnet50":
            model = apps.ResNet50(weights=kw, include_top=False, pooling="avg")
            preprocess = apps.resnet50.preprocess_input
        elif arch.name == "inceptionv3":
            model = apps.InceptionV3(weights=kw, include_top=False, pooling="avg")
            preprocess = apps.inception_v3.preprocess_input
        else:
            model = apps.Xception(weights=kw, include_top=False, pooling="avg")
            preprocess = apps.xception.preprocess_input
    except Exception as e:
        if weights == "imagenet":
            raise RuntimeError(f"weight download failure for {arch.name}: {e}") from e
        raise
    return model, preprocess


def extract_view(arch_name: str, image_paths: list[Path], batch_size: int,
                 weights: str, seed: int) -> np.ndarray:
    """Features for one architecture, rows in the given image order."""
    import tensorflow as tf

    arch = ARCHITECTURES[arch_name]
    model, preprocess = _build_model(arch, weights, seed)
    rows = []
    for start in range(0, len(image_paths), batch_size):
        chunk = image_paths[start:start + batch_size]
        batch = preprocess(load_batch(chunk, arch.input_size))
        rows.append(model(tf.constant(batch), training=False).numpy())
    features = np.vstack(rows).astype(np.float32)
    if features.shape != (len(image_paths), arch.feature_width):
        raise RuntimeError(
            f"{arch_name}: expected {(len(image_paths), arch.feature_width)} features, got {features.shape}"
        )
    return features


def extract(config: ExtractorConfig) -> Path:
    """Run every selected architecture; returns the manifest path."""
    image_paths = list_images(config.image_dir)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "images.txt").write_text("\n".join(p.name for p in image_paths) + "\n", encoding="utf-8")
    views = []
    for name in config.architectures:
        features = extract_view(name, image_paths, config.batch_size, config.weights, config.seed)
        filename = f"{name}.mvcv"
        write_view(features, out / filename)
        views.append({"name": name, "path": filename,
                      "n": features.shape[0], "d": features.shape[1]})
    manifest_path = out / "manifest.json"
    write_manifest(
        name=Path(config.image_dir).name,
        views=views,
        sample_ids_path="images.txt",
        methods={"extractor": {
            "architectures": list(config.architectures),
            "weights": config.weights,
            "seed": config.seed,
            "batch_size": config.batch_size,
        }},
        path=manifest_path,
    )
    return manifest_path
