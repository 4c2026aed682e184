"""Alternating adversarial training on normal-only data.

Each batch runs one discriminator step on the real/reconstructed pair and
one joint step of the encoder, decoder and auxiliary encoder on the weighted
objective. Batch order, initialization and therefore the whole loss history
are pure functions of the seed; partial trailing batches are dropped so the
latent batch matrix keeps a fixed width.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Tensor
from .data import OneClassSplit
from .errors import ConfigError, DataFormatError, NumericalError
from .losses import (
    LossBreakdown,
    LossWeights,
    RankBudget,
    loss_adv_d,
    loss_adv_g,
    loss_irec,
    loss_rank,
    loss_total,
    loss_zrec,
)
from .networks import (
    NetworkSpec,
    NetworkState,
    build_networks,
    load_tensor_file,
    save_tensor_file,
)
from .optim import Adam

HISTORY_COLUMNS = ("iteration", "irec", "adv_g", "adv_d", "zrec", "rank", "total")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.002
    beta1: float = 0.5
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    rank_budget: RankBudget = field(default_factory=RankBudget)
    seed: int = 0
    precision: str = "float32"
    checkpoint_interval: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch size {self.batch_size} must be >= 2")
        if not self.lr > 0:
            raise ConfigError(f"learning rate {self.lr} must be positive")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")


@dataclass
class TrainHistory:
    breakdowns: list[LossBreakdown] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    seed: int = 0
    config: TrainConfig | None = None


def train(
    config: TrainConfig,
    split: OneClassSplit,
    spec: NetworkSpec | None = None,
    checkpoint_path=None,
    log=None,
) -> tuple[NetworkState, TrainHistory]:
    """Optimize a fresh NetworkState on the split's normal training images."""
    images = split.train_normals.images
    n = images.shape[0]
    if n == 0:
        raise ConfigError("training set is empty")
    if n < config.batch_size:
        raise ConfigError(f"training set ({n}) is smaller than one batch ({config.batch_size})")

    if spec is None:
        spec = NetworkSpec(
            in_channels=images.shape[1], image_size=images.shape[2], dtype=config.precision
        )
    elif spec.dtype != config.precision:
        spec = replace(spec, dtype=config.precision)
    images = images.astype(spec.np_dtype, copy=False)

    state = build_networks(spec, seed=config.seed)
    opt_g = Adam(state.generator_params(), config.lr, config.beta1, config.beta2)
    opt_d = Adam(state.discriminator_params(), config.lr, config.beta1, config.beta2)
    history = TrainHistory(seed=config.seed, config=config)
    w = config.weights

    iters_per_epoch = n // config.batch_size
    iteration = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        for it in range(iters_per_epoch):
            idx = order[it * config.batch_size : (it + 1) * config.batch_size]
            x = Tensor(images[idx])

            z, x_rec, z_aux = _forward_all(state, x)
            try:
                d_value = _discriminator_update(state, opt_g, opt_d, x, x_rec)
                breakdown = _generator_update(
                    state, opt_g, opt_d, x, z, x_rec, z_aux, d_value, w, config.rank_budget
                )
            except NumericalError as exc:
                raise NumericalError(f"aborting at iteration {iteration}: {exc}") from exc
            if not np.isfinite(breakdown.total):
                raise NumericalError(
                    f"aborting at iteration {iteration}: non-finite total ({breakdown})"
                )
            history.breakdowns.append(breakdown)
            iteration += 1
        history.epoch_seconds.append(time.perf_counter() - t0)
        if log is not None:
            last = history.breakdowns[-1]
            log(
                f"epoch {epoch + 1}/{config.epochs} "
                f"irec={last.irec:.4f} adv_g={last.adv_g:.4f} adv_d={last.adv_d:.4f} "
                f"zrec={last.zrec:.4f} rank={last.rank:.4f} ({history.epoch_seconds[-1]:.1f}s)"
            )
        if (
            checkpoint_path is not None
            and config.checkpoint_interval > 0
            and (epoch + 1) % config.checkpoint_interval == 0
        ):
            save_checkpoint(state, history, checkpoint_path)
    return state, history


def _zero(*opts):
    for opt in opts:
        opt.zero_grad()


def _forward_all(state: NetworkState, x: Tensor):
    """Run the generator pipeline once: z, reconstruction, re-encoding."""
    z = state.encode(x, train=True)
    x_rec = state.decode(z, train=True)
    z_aux = state.encode_aux(x_rec, train=True)
    return z, x_rec, z_aux


def _discriminator_update(state, opt_g, opt_d, x, x_rec) -> float:
    """One Adam step of D on the min-max objective; touches only D params."""
    p_real = state.discriminate(x, train=True)
    p_fake = state.discriminate(x_rec.detach(), train=True)
    d_loss = loss_adv_d(p_real, p_fake)
    _zero(opt_g, opt_d)
    d_loss.backward()
    opt_d.step()
    return d_loss.item()


def _generator_update(
    state, opt_g, opt_d, x, z, x_rec, z_aux, d_value, w, rank_budget
) -> LossBreakdown:
    """One joint Adam step of Ge, Gd, Ge' on the weighted total.

    Gradients also reach the discriminator tensors through the adversarial
    term but its optimizer is never stepped here. Components with zero
    weight are skipped (the SVD of the rank term is the expensive one) and
    recorded as 0.
    """
    p_fake = state.discriminate(x_rec, train=True)
    irec = loss_irec(x, x_rec)
    adv_g = loss_adv_g(p_fake)
    total = irec * w.wi + adv_g * w.wa
    zrec_value = 0.0
    if w.wz > 0:
        zrec = loss_zrec(z, z_aux)
        zrec_value = zrec.item()
        total = total + zrec * w.wz
    rank_value = 0.0
    if w.wr > 0:
        rank = loss_rank(z.transpose2d(), rank_budget)
        rank_value = rank.item()
        total = total + rank * w.wr
    _zero(opt_g, opt_d)
    total.backward()
    opt_g.step()
    return loss_total(irec.item(), adv_g.item(), d_value, zrec_value, rank_value, w)


# ----------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------


def save_checkpoint(state: NetworkState, history: TrainHistory, path):
    """Serialize network tensors plus training history into one container."""
    named = list(state.named_tensors())
    losses = np.array(
        [[b.irec, b.adv_g, b.adv_d, b.zrec, b.rank, b.total] for b in history.breakdowns],
        dtype=np.float64,
    ).reshape(len(history.breakdowns), 6)
    named.append(("history.losses", losses))
    named.append(("history.epoch_seconds", np.asarray(history.epoch_seconds, dtype=np.float64)))
    meta = {
        "kind": "lrad-checkpoint",
        "spec": asdict(state.spec),
        "seed": history.seed,
        "config": asdict(history.config) if history.config is not None else None,
    }
    save_tensor_file(path, named, meta)


def load_checkpoint(path) -> tuple[NetworkState, TrainHistory]:
    """Rebuild the network and history saved by ``save_checkpoint``."""
    arrays, meta = load_tensor_file(path)
    if meta.get("kind") != "lrad-checkpoint":
        raise DataFormatError(f"{path}: not a training checkpoint")
    spec = NetworkSpec(**meta["spec"])
    state = build_networks(spec, seed=0)
    state.load_named_tensors(arrays)

    config = None
    if meta.get("config") is not None:
        raw = dict(meta["config"])
        raw["weights"] = LossWeights(**raw["weights"])
        raw["rank_budget"] = RankBudget(**raw["rank_budget"])
        config = TrainConfig(**raw)
    losses = arrays["history.losses"]
    history = TrainHistory(
        breakdowns=[
            LossBreakdown(
                irec=row[0], adv_g=row[1], adv_d=row[2], zrec=row[3], rank=row[4], total=row[5]
            )
            for row in losses
        ],
        epoch_seconds=[float(v) for v in arrays["history.epoch_seconds"]],
        seed=int(meta["seed"]),
        config=config,
    )
    return state, history


def write_history_csv(history: TrainHistory, path):
    """Per-iteration loss components as plot-ready CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for i, b in enumerate(history.breakdowns):
            writer.writerow(
                [i, repr(b.irec), repr(b.adv_g), repr(b.adv_d), repr(b.zrec), repr(b.rank), repr(b.total)]
            )
