"""Dataset ingestion, one-class splits, normalization, and the synthetic
disk/stripe benchmark used throughout the test suite.

All readers return float32 images in NCHW layout scaled to [-1, 1] and are
deterministic: directory contents are consumed in sorted-path order and the
synthetic generator is a pure function of its spec.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073

CLASS_IS_ANOMALY = "class_is_anomaly"
CLASS_IS_NORMAL = "class_is_normal"


@dataclass
class LabeledImages:
    """Images (N, C, H, W) with integer class labels and stable sample ids."""

    images: np.ndarray
    labels: list[int]
    ids: list[str]

    def __post_init__(self):
        n = self.images.shape[0]
        if len(self.labels) != n or len(self.ids) != n:
            raise DataFormatError(
                f"inconsistent sample counts: {n} images, "
                f"{len(self.labels)} labels, {len(self.ids)} ids"
            )

    def __len__(self):
        return self.images.shape[0]

    def take(self, indices) -> "LabeledImages":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledImages(
            images=self.images[idx],
            labels=[self.labels[i] for i in idx],
            ids=[self.ids[i] for i in idx],
        )


@dataclass
class OneClassSplit:
    """Anomaly-free training images plus a mixed, flagged test set."""

    train_normals: LabeledImages
    test: LabeledImages
    test_anomaly_flags: list[bool]


@dataclass
class SynthSpec:
    """Deterministic desk-scale benchmark: filled disks, striped anomalies.

    Normal images are a filled disk of random integer radius and center on a
    flat background plus bounded uniform noise. Anomalies additionally get a
    square patch of alternating-column stripes centered on the disk, which
    raises the image mean by exactly
    ``stripe_contrast * ceil(p/2) * p / size**2`` before noise.
    """

    image_size: int = 32
    n_normal: int = 2200
    n_anomaly: int = 200
    disk_radius: tuple[int, int] = (6, 9)
    disk_value: float = 0.7
    background: float = -0.6
    stripe_patch: int = 16
    stripe_contrast: float = 0.85
    noise_amplitude: float = 0.05
    seed: int = 0


# ----------------------------------------------------------------------
# IDX (MNIST-style) format
# ----------------------------------------------------------------------


def _read_exact(fh, n, path, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(
            f"{path}: truncated while reading {what}: expected {n} bytes, got {len(buf)}"
        )
    return buf


def read_idx(images_path, labels_path) -> LabeledImages:
    """Parse an IDX image/label file pair into [-1, 1] float images."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as fh:
        (magic,) = struct.unpack(">I", _read_exact(fh, 4, images_path, "magic"))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad magic 0x{magic:08X} at offset 0, "
                f"expected 0x{IDX_IMAGES_MAGIC:08X}"
            )
        n, h, w = struct.unpack(">III", _read_exact(fh, 12, images_path, "dimensions"))
        raw = _read_exact(fh, n * h * w, images_path, f"{n}x{h}x{w} pixels")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, h, w)

    with open(labels_path, "rb") as fh:
        (magic,) = struct.unpack(">I", _read_exact(fh, 4, labels_path, "magic"))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad magic 0x{magic:08X} at offset 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08X}"
            )
        (n_labels,) = struct.unpack(">I", _read_exact(fh, 4, labels_path, "count"))
        labels = np.frombuffer(_read_exact(fh, n_labels, labels_path, "labels"), dtype=np.uint8)

    if n_labels != n:
        raise DataFormatError(
            f"count mismatch: {images_path} holds {n} images but "
            f"{labels_path} holds {n_labels} labels"
        )
    images = pixels.astype(np.float32) / 127.5 - 1.0
    stem = images_path.name
    ids = [f"{stem}:{i:05d}" for i in range(n)]
    return LabeledImages(images=images, labels=[int(l) for l in labels], ids=ids)


def write_idx(data: LabeledImages, images_path, labels_path):
    """Write a fixture pair in IDX format (pixels quantized back to bytes)."""
    n, c, h, w = data.images.shape
    if c != 1:
        raise DataFormatError(f"IDX fixtures are single-channel, got {c} channels")
    pixels = np.clip(np.rint((data.images + 1.0) * 127.5), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(bytes(int(l) & 0xFF for l in data.labels))


# ----------------------------------------------------------------------
# CIFAR-10 binary batches
# ----------------------------------------------------------------------


def read_cifar10(directory) -> LabeledImages:
    """Read every ``*.bin`` batch under ``directory`` in sorted order."""
    directory = Path(directory)
    batches = sorted(directory.glob("*.bin"))
    if not batches:
        raise DataFormatError(f"{directory}: no CIFAR-10 .bin batch files found")
    chunks, labels, ids = [], [], []
    for path in batches:
        raw = path.read_bytes()
        if len(raw) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.extend(int(l) for l in records[:, 0])
        chunks.append(records[:, 1:].reshape(-1, 3, 32, 32))
        ids.extend(f"{path.name}:{i:05d}" for i in range(records.shape[0]))
    images = np.concatenate(chunks).astype(np.float32) / 127.5 - 1.0
    return LabeledImages(images=images, labels=labels, ids=ids)


def write_cifar10_batch(data: LabeledImages, path):
    """Write one CIFAR-10 style binary batch file."""
    n, c, h, w = data.images.shape
    if (c, h, w) != (3, 32, 32):
        raise DataFormatError(f"CIFAR-10 records are 3x32x32, got {c}x{h}x{w}")
    pixels = np.clip(np.rint((data.images + 1.0) * 127.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        for i in range(n):
            fh.write(bytes([int(data.labels[i]) & 0xFF]))
            fh.write(pixels[i].tobytes())


# ----------------------------------------------------------------------
# Image directories (PNG / PGM)
# ----------------------------------------------------------------------


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (C, H, W) with half-pixel-centered bilinear interpolation."""
    c, h, w = image.shape
    if (h, w) == (out_h, out_w):
        return image.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(image.dtype)[None, :, None]
    wx = (xs - x0).astype(image.dtype)[None, None, :]
    top = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bot = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def read_image_dir(directory, channels: int = 1, target_size: int = 32) -> LabeledImages:
    """Decode ``<root>/<label>/<file>`` PNG/PGM trees into [-1, 1] images.

    Label ids follow the sorted subdirectory names. Files sitting directly in
    the root get label 0 with a warning.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"{directory}: not a directory")
    subdirs = sorted(p for p in directory.iterdir() if p.is_dir())
    entries = []
    if subdirs:
        for label, sub in enumerate(subdirs):
            entries.extend((path, label) for path in sorted(sub.iterdir()) if path.is_file())
    loose = sorted(p for p in directory.iterdir() if p.is_file())
    if loose:
        warnings.warn(f"{directory}: {len(loose)} unlabeled files default to label 0")
        entries.extend((path, 0) for path in loose)
    if not entries:
        raise DataFormatError(f"{directory}: no image files found")

    images = np.empty((len(entries), channels, target_size, target_size), dtype=np.float32)
    labels, ids = [], []
    for i, (path, label) in enumerate(entries):
        try:
            with Image.open(path) as img:
                img = img.convert("L" if channels == 1 else "RGB")
                arr = np.asarray(img, dtype=np.float32)
        except (UnidentifiedImageError, OSError) as exc:
            raise DataFormatError(f"{path}: cannot decode image: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[None]
        else:
            arr = arr.transpose(2, 0, 1)
        images[i] = bilinear_resize(arr, target_size, target_size) / 127.5 - 1.0
        labels.append(label)
        ids.append(path.relative_to(directory).as_posix())
    return LabeledImages(images=images, labels=labels, ids=ids)


def write_image_dir(data: LabeledImages, directory):
    """Write a `<root>/<label>/<id>.png` tree (pixels quantized to bytes)."""
    directory = Path(directory)
    pixels = np.clip(np.rint((data.images + 1.0) * 127.5), 0, 255).astype(np.uint8)
    for i in range(len(data)):
        sub = directory / str(data.labels[i])
        sub.mkdir(parents=True, exist_ok=True)
        arr = pixels[i, 0] if pixels.shape[1] == 1 else pixels[i].transpose(1, 2, 0)
        mode = "L" if pixels.shape[1] == 1 else "RGB"
        Image.fromarray(arr, mode=mode).save(sub / f"{i:05d}.png")


# ----------------------------------------------------------------------
# One-class protocol
# ----------------------------------------------------------------------


def one_class_split(
    data: LabeledImages,
    held_class: int,
    polarity: str = CLASS_IS_ANOMALY,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> OneClassSplit:
    """Partition into normal-only training data and a flagged test set.

    With ``class_is_anomaly`` the held class is the anomaly and everything
    else is normal; ``class_is_normal`` inverts the roles. Normal samples are
    shuffled deterministically by ``seed``; anomalies always land in the test
    set.
    """
    labels = np.asarray(data.labels)
    if held_class not in labels:
        raise ConfigError(f"held class {held_class} absent from dataset labels")
    if polarity == CLASS_IS_ANOMALY:
        anomaly_mask = labels == held_class
    elif polarity == CLASS_IS_NORMAL:
        anomaly_mask = labels != held_class
    else:
        raise ConfigError(
            f"polarity must be {CLASS_IS_ANOMALY!r} or {CLASS_IS_NORMAL!r}, got {polarity!r}"
        )

    normal_idx = np.flatnonzero(~anomaly_mask)
    anomaly_idx = np.flatnonzero(anomaly_mask)
    rng = np.random.default_rng([seed, len(data)])
    perm = rng.permutation(normal_idx.size)
    n_train = int(round(train_fraction * normal_idx.size))
    train_idx = normal_idx[perm[:n_train]]
    heldout_normals = normal_idx[perm[n_train:]]

    test_idx = np.concatenate([heldout_normals, anomaly_idx])
    flags = [False] * heldout_normals.size + [True] * anomaly_idx.size
    return OneClassSplit(
        train_normals=data.take(train_idx),
        test=data.take(test_idx),
        test_anomaly_flags=flags,
    )


def normalize(data: LabeledImages, mode: str) -> LabeledImages:
    """Rescale pixels: ``tanh_range`` maps bytes to [-1, 1]; ``zscore``
    standardizes each image to zero mean, unit variance (eps 1e-6)."""
    if len(data) == 0:
        raise DataFormatError("normalize requires a nonempty dataset")
    x = data.images
    if mode == "tanh_range":
        out = x.astype(np.float32) / 127.5 - 1.0
    elif mode == "zscore":
        flat = x.reshape(x.shape[0], -1)
        mean = flat.mean(axis=1)[:, None, None, None]
        std = flat.std(axis=1)[:, None, None, None]
        out = ((x - mean) / (std + 1e-6)).astype(np.float32)
    else:
        raise ConfigError(f"unknown normalization mode {mode!r}")
    return replace(data, images=out)


# ----------------------------------------------------------------------
# Synthetic generator
# ----------------------------------------------------------------------


def synth_generate(spec: SynthSpec) -> LabeledImages:
    """Generate the disk/stripe benchmark, normals first then anomalies."""
    size = spec.image_size
    rmin, rmax = spec.disk_radius
    if rmin < 1 or rmax >= size // 2 or rmin > rmax:
        raise ConfigError(f"disk radius range {spec.disk_radius} does not fit {size}x{size}")
    if not 1 <= spec.stripe_patch <= size:
        raise ConfigError(f"stripe patch edge {spec.stripe_patch} does not fit {size}x{size}")

    rng = np.random.default_rng([spec.seed, size])
    total = spec.n_normal + spec.n_anomaly
    images = np.empty((total, 1, size, size), dtype=np.float32)
    grid_y, grid_x = np.mgrid[0:size, 0:size]

    for i in range(total):
        radius = int(rng.integers(rmin, rmax + 1))
        cy = int(rng.integers(radius, size - radius))
        cx = int(rng.integers(radius, size - radius))
        disk = (grid_y - cy) ** 2 + (grid_x - cx) ** 2 <= radius * radius
        img = np.full((size, size), spec.background, dtype=np.float32)
        img[disk] += spec.disk_value
        if spec.noise_amplitude > 0:
            img += rng.uniform(
                -spec.noise_amplitude, spec.noise_amplitude, size=(size, size)
            ).astype(np.float32)
        if i >= spec.n_normal:
            p = spec.stripe_patch
            ty = min(max(cy - p // 2, 0), size - p)
            tx = min(max(cx - p // 2, 0), size - p)
            patch = img[ty : ty + p, tx : tx + p]
            patch[:, ::2] += spec.stripe_contrast
        images[i, 0] = img

    labels = [0] * spec.n_normal + [1] * spec.n_anomaly
    ids = [f"synth:{i:05d}" for i in range(total)]
    return LabeledImages(images=images, labels=labels, ids=ids)


def stripe_mean_shift(spec: SynthSpec) -> float:
    """Exact mean-intensity increase a stripe patch adds to one image."""
    striped_cols = (spec.stripe_patch + 1) // 2
    return spec.stripe_contrast * striped_cols * spec.stripe_patch / spec.image_size**2
