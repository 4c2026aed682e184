"""Adversarial one-class anomaly detection with a low-rank latent space.

An encoder-decoder-encoder generator and a discriminator are trained on
normal samples only; anomalies are flagged by the latent mismatch between a
sample's encoding and the re-encoding of its reconstruction. The latent
batch matrix is additionally pushed toward low rank through a truncated
nuclear norm penalty built on an in-house Jacobi SVD.
"""

from .autodiff import GradCheckReport, Tensor, grad_check
from .data import (
    LabeledImages,
    OneClassSplit,
    SynthSpec,
    bilinear_resize,
    normalize,
    one_class_split,
    read_cifar10,
    read_idx,
    read_image_dir,
    synth_generate,
    write_cifar10_batch,
    write_idx,
)
from .errors import ConfigError, DataFormatError, LradError, NumericalError, ShapeError
from .evaluate import (
    ABLATION_VARIANTS,
    RocCurve,
    ScoreRecord,
    auc,
    latent_projection,
    normalize_scores,
    roc_points,
    run_ablation,
    score_latent,
    score_pixel,
    score_records,
)
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
    forward_aux,
    forward_discriminator,
    forward_generator,
)
from .optim import Adam, AdamState, adam_step
from .svd import SingularSpectrum, svd
from .trainer import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ABLATION_VARIANTS",
    "Adam",
    "AdamState",
    "ConfigError",
    "DataFormatError",
    "GradCheckReport",
    "LabeledImages",
    "LossBreakdown",
    "LossWeights",
    "LradError",
    "NetworkSpec",
    "NetworkState",
    "NumericalError",
    "OneClassSplit",
    "RankBudget",
    "RocCurve",
    "ScoreRecord",
    "ShapeError",
    "SingularSpectrum",
    "SynthSpec",
    "Tensor",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "auc",
    "bilinear_resize",
    "build_networks",
    "forward_aux",
    "forward_discriminator",
    "forward_generator",
    "grad_check",
    "latent_projection",
    "load_checkpoint",
    "loss_adv_d",
    "loss_adv_g",
    "loss_irec",
    "loss_rank",
    "loss_total",
    "loss_zrec",
    "normalize",
    "normalize_scores",
    "one_class_split",
    "read_cifar10",
    "read_idx",
    "read_image_dir",
    "roc_points",
    "run_ablation",
    "save_checkpoint",
    "score_latent",
    "score_pixel",
    "score_records",
    "svd",
    "synth_generate",
    "train",
    "write_cifar10_batch",
    "write_idx",
]
