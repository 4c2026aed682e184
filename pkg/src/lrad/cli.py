"""Batch command-line surface for reproducible runs.

Commands: ``train``, ``score``, ``eval``, ``ablate``, ``synth``. Flags
override keys from an optional JSON config file; the fully-resolved
configuration is echoed to ``<out>/resolved_config.json`` so any run can be
reproduced from that file plus the seed. Exit codes: 0 success, 2 config
error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import data as datasets
from . import evaluate
from .errors import ConfigError, DataFormatError, NumericalError, ShapeError
from .losses import LossWeights, RankBudget
from .networks import NetworkSpec, build_networks
from .trainer import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train, write_history_csv

COMMANDS = ("train", "score", "eval", "ablate", "synth")

DEFAULTS = {
    "data": "synth",
    "images": None,
    "labels": None,
    "dir": None,
    "channels": 1,
    "held_class": None,
    "polarity": "class-is-anomaly",
    "train_fraction": 0.8,
    "epochs": 20,
    "batch": 64,
    "lr": 0.002,
    "latent_dim": 100,
    "base_width": 64,
    "rank": 3,
    "weights": "1,5,1,0.05",
    "seed": 0,
    "out": "runs/latest",
    "checkpoint": None,
    "deterministic": False,
    "precision": "float32",
    "synth_normals": 2200,
    "synth_anomalies": 200,
    "synth_size": 32,
    "synth_noise": 0.05,
}


@dataclass
class RunConfig:
    """Everything one invocation needs, fully resolved."""

    command: str
    data: str
    images: str | None
    labels: str | None
    dir: str | None
    channels: int
    held_class: int | None
    polarity: str
    train_fraction: float
    epochs: int
    batch: int
    lr: float
    latent_dim: int
    base_width: int
    rank: int
    weights: str
    seed: int
    out: str
    checkpoint: str | None
    deterministic: bool
    precision: str
    synth_normals: int
    synth_anomalies: int
    synth_size: int
    synth_noise: float

    def parse_weights(self) -> LossWeights:
        parts = self.weights.split(",")
        if len(parts) != 4:
            raise ConfigError(f"--weights needs four comma-separated values, got {self.weights!r}")
        try:
            wi, wa, wz, wr = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"--weights values must be numbers, got {self.weights!r}")
        return LossWeights(wi=wi, wa=wa, wz=wz, wr=wr)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch,
            lr=self.lr,
            weights=self.parse_weights(),
            rank_budget=RankBudget(self.rank),
            seed=self.seed,
            precision=self.precision,
        )

    def network_spec(self, in_channels: int, image_size: int) -> NetworkSpec:
        return NetworkSpec(
            in_channels=in_channels,
            image_size=image_size,
            latent_dim=self.latent_dim,
            base_width=self.base_width,
            dtype=self.precision,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrad", description="Train and evaluate the latent-regularized anomaly detector."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="|".join(COMMANDS))
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="JSON file of defaults; flags override its keys")
        p.add_argument("--data", choices=["mnist", "cifar10", "dir", "synth"])
        p.add_argument("--images", help="IDX image file (mnist)")
        p.add_argument("--labels", help="IDX label file (mnist)")
        p.add_argument("--dir", help="dataset directory (cifar10 or image dir)")
        p.add_argument("--channels", type=int, choices=[1, 3])
        p.add_argument("--held-class", type=int, dest="held_class")
        p.add_argument("--polarity", choices=["class-is-anomaly", "class-is-normal"])
        p.add_argument("--train-fraction", type=float, dest="train_fraction")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--latent-dim", type=int, dest="latent_dim")
        p.add_argument("--base-width", type=int, dest="base_width")
        p.add_argument("--rank", type=int)
        p.add_argument("--weights", help="wi,wa,wz,wr")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--checkpoint")
        p.add_argument("--deterministic", action="store_const", const=True, default=None)
        p.add_argument("--precision", choices=["float32", "float64"])
        p.add_argument("--synth-normals", type=int, dest="synth_normals")
        p.add_argument("--synth-anomalies", type=int, dest="synth_anomalies")
        p.add_argument("--synth-size", type=int, dest="synth_size")
        p.add_argument("--synth-noise", type=float, dest="synth_noise")
    return parser


def parse_and_validate(argv, config_file=None) -> RunConfig:
    """Merge flags over config-file keys over defaults into a RunConfig."""
    ns = build_parser().parse_args(argv)
    resolved = dict(DEFAULTS)

    path = config_file or ns.config
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        loaded.pop("command", None)
        resolved.update(loaded)

    for key in DEFAULTS:
        value = getattr(ns, key, None)
        if value is not None:
            resolved[key] = value

    config = RunConfig(command=ns.command, **resolved)
    _validate(config)
    return config


def _validate(config: RunConfig):
    if config.data == "mnist":
        for label, value in (("--images", config.images), ("--labels", config.labels)):
            if value is None:
                raise ConfigError(f"--data mnist requires {label}")
            if not Path(value).is_file():
                raise ConfigError(f"{label} path does not exist: {value}")
    elif config.data in ("cifar10", "dir"):
        if config.dir is None:
            raise ConfigError(f"--data {config.data} requires --dir")
        if not Path(config.dir).is_dir():
            raise ConfigError(f"--dir path does not exist: {config.dir}")
    if config.data != "synth" and config.held_class is None and config.command != "score":
        raise ConfigError("--held-class is required for one-class protocols on real datasets")
    if config.checkpoint is not None and config.command in ("score", "eval"):
        if not Path(config.checkpoint).is_file():
            raise ConfigError(f"--checkpoint path does not exist: {config.checkpoint}")
    config.parse_weights()
    if not 0 < config.train_fraction < 1:
        raise ConfigError(f"--train-fraction must be in (0, 1), got {config.train_fraction}")


# ----------------------------------------------------------------------
# Execution
# ----------------------------------------------------------------------


def _load_dataset(config: RunConfig) -> datasets.LabeledImages:
    if config.data == "mnist":
        loaded = datasets.read_idx(config.images, config.labels)
        if loaded.images.shape[2] == 28:
            loaded = _pad_images(loaded, 32)
        return loaded
    if config.data == "cifar10":
        return datasets.read_cifar10(config.dir)
    if config.data == "dir":
        return datasets.read_image_dir(
            config.dir, channels=config.channels, target_size=config.synth_size
        )
    spec = datasets.SynthSpec(
        image_size=config.synth_size,
        n_normal=config.synth_normals,
        n_anomaly=config.synth_anomalies,
        noise_amplitude=config.synth_noise,
        seed=config.seed,
    )
    return datasets.synth_generate(spec)


def _pad_images(loaded: datasets.LabeledImages, size: int) -> datasets.LabeledImages:
    n, c, h, w = loaded.images.shape
    top, left = (size - h) // 2, (size - w) // 2
    padded = np.full((n, c, size, size), -1.0, dtype=loaded.images.dtype)
    padded[:, :, top : top + h, left : left + w] = loaded.images
    return datasets.LabeledImages(images=padded, labels=loaded.labels, ids=loaded.ids)


def _make_split(config: RunConfig, loaded) -> datasets.OneClassSplit:
    held = config.held_class
    if held is None:
        held = 1  # synthetic datasets label anomalies 1
    polarity = config.polarity.replace("-", "_")
    return datasets.one_class_split(
        loaded,
        held_class=held,
        polarity=polarity,
        train_fraction=config.train_fraction,
        seed=config.seed,
    )


def _echo_config(config: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    payload = asdict(config)
    (out / "resolved_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )


def _state_for_scoring(config: RunConfig, loaded):
    if config.checkpoint is not None:
        state, _ = load_checkpoint(config.checkpoint)
        return state
    spec = config.network_spec(loaded.images.shape[1], loaded.images.shape[2])
    return build_networks(spec, seed=config.seed)


def run(config: RunConfig) -> int:
    """Execute one resolved command; returns the process exit status."""
    out = Path(config.out)
    _echo_config(config, out)
    threads = os.environ.get("LRAD_THREADS")
    if threads is not None:
        os.environ.setdefault("OMP_NUM_THREADS", threads)

    if config.command == "synth":
        loaded = _load_dataset(config)
        datasets.write_idx(loaded, out / "images.idx", out / "labels.idx")
        print(f"wrote {len(loaded)} samples to {out}/images.idx and {out}/labels.idx")
        return 0

    loaded = _load_dataset(config)
    if config.held_class is not None and config.held_class not in loaded.labels:
        raise ConfigError(
            f"--held-class {config.held_class} not present in dataset labels "
            f"{sorted(set(loaded.labels))}"
        )

    if config.command == "train":
        split = _make_split(config, loaded)
        spec = config.network_spec(loaded.images.shape[1], loaded.images.shape[2])
        state, history = train(
            config.train_config(), split, spec=spec,
            checkpoint_path=out / "model.lrad", log=print,
        )
        save_checkpoint(state, history, out / "model.lrad")
        write_history_csv(history, out / "history.csv")
        print(f"saved checkpoint to {out}/model.lrad")
        return 0

    if config.command == "score":
        state = _state_for_scoring(config, loaded)
        if config.held_class is not None:
            polarity = config.polarity.replace("-", "_")
            labels = np.asarray(loaded.labels)
            flags = (
                labels == config.held_class
                if polarity == datasets.CLASS_IS_ANOMALY
                else labels != config.held_class
            )
        else:
            flags = np.zeros(len(loaded), dtype=bool)
        records = evaluate.score_records(state, loaded, flags, config.batch)
        evaluate.write_scores_csv(records, out / "scores.csv")
        print(f"wrote {len(records)} scores to {out}/scores.csv")
        return 0

    if config.command == "eval":
        split = _make_split(config, loaded)
        state = _state_for_scoring(config, loaded)
        records = evaluate.score_records(state, split.test, split.test_anomaly_flags, config.batch)
        evaluate.write_scores_csv(records, out / "scores.csv")
        latent_scores = np.array([r.latent_score for r in records])
        curve = evaluate.roc_points(split.test_anomaly_flags, latent_scores)
        evaluate.write_roc_csv(curve, out / "roc.csv")
        coords = evaluate.latent_projection(state, split.test.images, k=3, batch_size=config.batch)
        evaluate.write_latent_csv(split.test.ids, split.test_anomaly_flags, coords, out / "latent3d.csv")
        value = evaluate.auc(split.test_anomaly_flags, latent_scores)
        print(f"latent AUC: {value!r}")
        return 0

    if config.command == "ablate":
        split = _make_split(config, loaded)
        spec = config.network_spec(loaded.images.shape[1], loaded.images.shape[2])
        rows = evaluate.run_ablation(config.train_config(), split, spec=spec, log=print)
        evaluate.write_ablation_csv(rows, out / "ablation.csv")
        for name, value in rows:
            print(f"{name}: {value:.4f}")
        return 0

    raise ConfigError(f"unknown command {config.command!r}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_and_validate(argv)
        return run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, ShapeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
