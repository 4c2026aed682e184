"""Anomaly scoring, threshold-free evaluation, and the ablation harness.

The anomaly score of a sample is the latent mismatch between its encoding
and the re-encoding of its reconstruction; pixel-space reconstruction error
is kept alongside for comparison. AUC is computed exactly from average
ranks, never from a sampled curve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .data import OneClassSplit
from .errors import ConfigError, DataFormatError
from .losses import LossWeights
from .networks import NetworkSpec, NetworkState
from .svd import svd
from .trainer import TrainConfig, train

ABLATION_VARIANTS = ("irec+adv", "irec+adv+rank", "irec+adv+zrec", "full")


@dataclass
class ScoreRecord:
    """Both anomaly scores of one evaluated sample."""

    sample_id: str
    anomaly: bool
    latent_score: float
    pixel_score: float


@dataclass
class RocCurve:
    """Operating points ordered from conservative to permissive."""

    points: list[tuple[float, float, float]]
    auc: float


# ----------------------------------------------------------------------
# Scoring
# ----------------------------------------------------------------------


def _batched(images, batch_size):
    for start in range(0, images.shape[0], batch_size):
        yield images[start : start + batch_size]


def score_latent(state: NetworkState, images, batch_size: int = 64) -> np.ndarray:
    """Per-sample Euclidean distance between z and the re-encoded z'."""
    out = []
    for chunk in _batched(np.asarray(images), batch_size):
        z = state.encode(chunk, train=False)
        z_aux = state.encode_aux(state.decode(z, train=False), train=False)
        diff = z.data - z_aux.data
        out.append(np.sqrt(np.square(diff).sum(axis=1)))
    return np.concatenate(out).astype(np.float64)


def score_pixel(state: NetworkState, images, batch_size: int = 64) -> np.ndarray:
    """Per-sample mean absolute reconstruction error in image space."""
    out = []
    for chunk in _batched(np.asarray(images), batch_size):
        z = state.encode(chunk, train=False)
        x_rec = state.decode(z, train=False)
        diff = np.abs(chunk.astype(x_rec.dtype) - x_rec.data)
        out.append(diff.reshape(diff.shape[0], -1).mean(axis=1))
    return np.concatenate(out).astype(np.float64)


def score_records(state: NetworkState, data, flags, batch_size: int = 64) -> list[ScoreRecord]:
    """Score a LabeledImages set once, computing both scores per sample."""
    latent = score_latent(state, data.images, batch_size)
    pixel = score_pixel(state, data.images, batch_size)
    return [
        ScoreRecord(sample_id=sid, anomaly=bool(flag), latent_score=float(l), pixel_score=float(p))
        for sid, flag, l, p in zip(data.ids, flags, latent, pixel)
    ]


def normalize_scores(scores) -> np.ndarray:
    """Min-max rescale onto [0, 1]; rejects constant score sets."""
    scores = np.asarray(scores, dtype=np.float64)
    lo, hi = scores.min(), scores.max()
    if not hi > lo:
        raise DataFormatError("cannot normalize scores: all values are equal")
    return (scores - lo) / (hi - lo)


# ----------------------------------------------------------------------
# Threshold-free metrics
# ----------------------------------------------------------------------


def _check_two_class(flags):
    flags = np.asarray(flags, dtype=bool)
    n_pos = int(flags.sum())
    if n_pos == 0 or n_pos == flags.size:
        raise DataFormatError("evaluation requires both normal and anomalous samples")
    return flags, n_pos, flags.size - n_pos


def _average_ranks(scores):
    n = scores.size
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def auc(flags, scores) -> float:
    """Rank-based (Mann-Whitney) AUC with average-rank tie handling."""
    flags, n_pos, n_neg = _check_two_class(flags)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != flags.shape:
        raise DataFormatError(f"flags shape {flags.shape} != scores shape {scores.shape}")
    ranks = _average_ranks(scores)
    return float((ranks[flags].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_points(flags, scores) -> RocCurve:
    """ROC operating points with one threshold per distinct score."""
    flags, n_pos, n_neg = _check_two_class(flags)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tps = np.cumsum(flags[order])
    fps = np.cumsum(~flags[order])
    # keep the last operating point of each tie group
    keep = np.concatenate((np.flatnonzero(np.diff(sorted_scores)), [scores.size - 1]))
    points = [(0.0, 0.0, float("inf"))]
    points.extend(
        (float(fps[i] / n_neg), float(tps[i] / n_pos), float(sorted_scores[i])) for i in keep
    )
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    area = float(np.trapezoid(tpr, fpr))
    return RocCurve(points=points, auc=area)


# ----------------------------------------------------------------------
# Latent projection
# ----------------------------------------------------------------------


def latent_projection(state: NetworkState, images, k: int = 3, batch_size: int = 64) -> np.ndarray:
    """Project centered encodings onto their top-k right singular directions."""
    chunks = [
        state.encode(chunk, train=False).data
        for chunk in _batched(np.asarray(images), batch_size)
    ]
    z = np.concatenate(chunks).astype(np.float64)
    limit = min(z.shape)
    if k > limit:
        raise ConfigError(f"projection k={k} exceeds min(samples, latent dim)={limit}")
    centered = z - z.mean(axis=0)
    spectrum = svd(centered)
    return centered @ spectrum.V[:, :k]


# ----------------------------------------------------------------------
# Ablation harness
# ----------------------------------------------------------------------


def variant_weights(name: str, weights: LossWeights) -> LossWeights:
    if name == "irec+adv":
        return replace(weights, wz=0.0, wr=0.0)
    if name == "irec+adv+rank":
        return replace(weights, wz=0.0)
    if name == "irec+adv+zrec":
        return replace(weights, wr=0.0)
    if name == "full":
        return weights
    raise ConfigError(f"unknown ablation variant {name!r}; expected one of {ABLATION_VARIANTS}")


def run_ablation(
    config: TrainConfig,
    split: OneClassSplit,
    variants=ABLATION_VARIANTS,
    spec: NetworkSpec | None = None,
    log=None,
) -> list[tuple[str, float]]:
    """Train each loss combination from the same seed and report its AUC.

    Variants without the latent reconstruction term leave the auxiliary
    encoder untrained, so their score falls back to pixel reconstruction
    error.
    """
    results = []
    for name in variants:
        weights = variant_weights(name, config.weights)
        variant_config = replace(config, weights=weights)
        if log is not None:
            log(f"ablation variant {name}: training {variant_config.epochs} epochs")
        state, _ = train(variant_config, split, spec=spec, log=log)
        if weights.wz > 0:
            scores = score_latent(state, split.test.images, config.batch_size)
        else:
            scores = score_pixel(state, split.test.images, config.batch_size)
        value = auc(split.test_anomaly_flags, scores)
        if log is not None:
            log(f"ablation variant {name}: auc={value:.4f}")
        results.append((name, value))
    return results


# ----------------------------------------------------------------------
# CSV artifacts
# ----------------------------------------------------------------------


def write_scores_csv(records: list[ScoreRecord], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "anomaly_flag", "score_latent", "score_pixel"])
        for r in records:
            writer.writerow([r.sample_id, int(r.anomaly), repr(r.latent_score), repr(r.pixel_score)])


def write_roc_csv(curve: RocCurve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, threshold in curve.points:
            writer.writerow([repr(fpr), repr(tpr), repr(threshold)])


def write_latent_csv(ids, flags, coords, path):
    coords = np.asarray(coords)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "anomaly_flag"] + [f"c{i + 1}" for i in range(coords.shape[1])])
        for sid, flag, row in zip(ids, flags, coords):
            writer.writerow([sid, int(flag)] + [repr(float(v)) for v in row])


def write_ablation_csv(rows: list[tuple[str, float]], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "auc"])
        for name, value in rows:
            writer.writerow([name, repr(value)])
