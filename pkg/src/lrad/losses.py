"""Training objectives: image reconstruction, adversarial game, latent
reconstruction, and the low-rank latent penalty.

The rank penalty relaxes a hard rank(Z) = r constraint on the latent batch
matrix to the sum of singular values beyond the budget (a truncated nuclear
norm), whose subgradient is the sum of the corresponding outer products
u_i v_i^T. All reductions are means, so the weights are batch-size
independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, NumericalError, ShapeError
from .svd import svd

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    """Weights of the four generator-side terms."""

    wi: float = 1.0
    wa: float = 5.0
    wz: float = 1.0
    wr: float = 0.05

    def __post_init__(self):
        for name, value in (("wi", self.wi), ("wa", self.wa), ("wz", self.wz), ("wr", self.wr)):
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"loss weight {name}={value!r} must be finite and >= 0")


@dataclass
class LossBreakdown:
    """Scalar components of one optimization step."""

    irec: float
    adv_g: float
    adv_d: float
    zrec: float
    rank: float
    total: float


@dataclass
class RankBudget:
    """Target rank of the latent batch matrix."""

    r: int = 3

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ConfigError(f"rank budget must be a positive integer, got {self.r!r}")
        self.r = int(self.r)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def loss_irec(x, x_rec) -> Tensor:
    """Mean absolute difference over all elements (L1 keeps edges sharp)."""
    x, x_rec = _as_tensor(x), _as_tensor(x_rec)
    if x.shape != x_rec.shape:
        raise ShapeError(f"loss_irec shapes differ: {x.shape} vs {x_rec.shape}")
    diff = x.data - x_rec.data
    out = Tensor(np.asarray(np.abs(diff).mean(), dtype=x.dtype), parents=(x, x_rec))

    def backward(g):
        s = np.sign(diff) * (float(g) / diff.size)
        return s.astype(x.dtype), (-s).astype(x.dtype)

    out._backward_fn = backward
    return out


def loss_adv_d(d_real, d_fake) -> Tensor:
    """Discriminator side of the min-max game on clamped probabilities."""
    d_real, d_fake = _as_tensor(d_real), _as_tensor(d_fake)
    if d_real.shape != d_fake.shape:
        raise ShapeError(f"loss_adv_d shapes differ: {d_real.shape} vs {d_fake.shape}")
    r = np.clip(d_real.data, PROB_EPS, 1.0 - PROB_EPS)
    f = np.clip(d_fake.data, PROB_EPS, 1.0 - PROB_EPS)
    value = -(np.log(r) + np.log1p(-f)).mean() / 2.0
    out = Tensor(np.asarray(value, dtype=d_real.dtype), parents=(d_real, d_fake))
    n = r.size

    def backward(g):
        in_r = (d_real.data > PROB_EPS) & (d_real.data < 1.0 - PROB_EPS)
        in_f = (d_fake.data > PROB_EPS) & (d_fake.data < 1.0 - PROB_EPS)
        gr = np.where(in_r, -1.0 / (2.0 * n * r), 0.0) * float(g)
        gf = np.where(in_f, 1.0 / (2.0 * n * (1.0 - f)), 0.0) * float(g)
        return gr.astype(d_real.dtype), gf.astype(d_fake.dtype)

    out._backward_fn = backward
    return out


def loss_adv_g(d_fake) -> Tensor:
    """Non-saturating generator side: minimize -mean log D(fake)."""
    d_fake = _as_tensor(d_fake)
    f = np.clip(d_fake.data, PROB_EPS, 1.0 - PROB_EPS)
    out = Tensor(np.asarray(-np.log(f).mean(), dtype=d_fake.dtype), parents=(d_fake,))
    n = f.size

    def backward(g):
        in_f = (d_fake.data > PROB_EPS) & (d_fake.data < 1.0 - PROB_EPS)
        return (np.where(in_f, -1.0 / (n * f), 0.0) * float(g)).astype(d_fake.dtype),

    out._backward_fn = backward
    return out


def loss_zrec(z, z_rec) -> Tensor:
    """Mean over the batch of per-sample Euclidean distances."""
    z, z_rec = _as_tensor(z), _as_tensor(z_rec)
    if z.shape != z_rec.shape or z.data.ndim != 2:
        raise ShapeError(f"loss_zrec expects matching (B, d) inputs: {z.shape} vs {z_rec.shape}")
    diff = z.data - z_rec.data
    norms = np.sqrt(np.square(diff).sum(axis=1))
    b = diff.shape[0]
    out = Tensor(np.asarray(norms.mean(), dtype=z.dtype), parents=(z, z_rec))

    def backward(g):
        safe = np.where(norms > 0, norms, 1.0)
        gz = diff / (b * safe[:, None])
        gz[norms == 0] = 0.0
        gz = gz * float(g)
        return gz.astype(z.dtype), (-gz).astype(z.dtype)

    out._backward_fn = backward
    return out


def loss_rank(z_matrix, budget: RankBudget) -> Tensor:
    """Sum of singular values of the (d, B) latent matrix beyond the budget.

    Zero whenever the matrix already has rank <= r; the backward pass emits
    the tail subgradient sum_{i>r} u_i v_i^T.
    """
    z_matrix = _as_tensor(z_matrix)
    if z_matrix.data.ndim != 2:
        raise ShapeError(f"loss_rank expects a (d, B) matrix, got shape {z_matrix.shape}")
    d, b = z_matrix.shape
    if b < 2:
        raise ShapeError("loss_rank needs a batch of at least 2 latent vectors")
    if budget.r >= min(d, b):
        raise ConfigError(
            f"rank budget {budget.r} must be below min(d={d}, batch={b})"
        )
    spectrum = svd(z_matrix.data)
    tail = spectrum.S[budget.r :]
    out = Tensor(np.asarray(tail.sum(), dtype=z_matrix.dtype), parents=(z_matrix,))

    def backward(g):
        u_tail = spectrum.U[:, budget.r :]
        v_tail = spectrum.V[:, budget.r :]
        return ((u_tail @ v_tail.T) * float(g)).astype(z_matrix.dtype),

    out._backward_fn = backward
    return out


def loss_total(
    irec: float,
    adv_g: float,
    adv_d: float,
    zrec: float,
    rank: float,
    weights: LossWeights,
) -> LossBreakdown:
    """Combine components into the weighted generator objective.

    The discriminator objective is ``adv_d`` alone; ``total`` is the
    generator-side weighted sum.
    """
    for name, value in (
        ("irec", irec),
        ("adv_g", adv_g),
        ("adv_d", adv_d),
        ("zrec", zrec),
        ("rank", rank),
    ):
        if not np.isfinite(value):
            raise NumericalError(f"loss component {name} is non-finite: {value!r}")
    total = (
        weights.wi * irec + weights.wa * adv_g + weights.wz * zrec + weights.wr * rank
    )
    return LossBreakdown(
        irec=float(irec),
        adv_g=float(adv_g),
        adv_d=float(adv_d),
        zrec=float(zrec),
        rank=float(rank),
        total=float(total),
    )
