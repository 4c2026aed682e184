"""The four sub-networks and their serialization.

The generator pairs a strided-convolution encoder with a mirrored
transpose-convolution decoder; an auxiliary encoder with identical topology
but its own parameters re-encodes reconstructions; the discriminator is an
encoder-shaped stack squeezed to one probability. Stage count follows the
image size (32 -> 4 stages, 16 -> 3), all kernels 4x4 stride 2 except the
2x2 latent head.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autodiff import Tensor
from .errors import ConfigError, DataFormatError, ShapeError

CHECKPOINT_MAGIC = b"LRAD"
CHECKPOINT_VERSION = 1
WEIGHT_STD = 0.02


@dataclass
class NetworkSpec:
    """Topology knobs shared by all four sub-networks."""

    in_channels: int = 1
    image_size: int = 32
    latent_dim: int = 100
    base_width: int = 64
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dtype: str = "float32"

    def __post_init__(self):
        size = self.image_size
        if size < 16 or size & (size - 1) != 0:
            raise ConfigError(
                f"image size {size} must be a power of two >= 16 "
                "so repeated halving reaches the 2x2 latent head"
            )
        if self.latent_dim < 4:
            raise ConfigError(f"latent dimension {self.latent_dim} must be >= 4")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.dtype!r}")

    @property
    def n_stages(self) -> int:
        return int(np.log2(self.image_size)) - 1

    @property
    def stage_widths(self) -> list[int]:
        return [self.base_width * 2**i for i in range(self.n_stages)]

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


# ----------------------------------------------------------------------
# Layers
# ----------------------------------------------------------------------


class Conv2d:
    def __init__(self, name, rng, cin, cout, k, stride, pad, dtype):
        self.name = name
        self.stride, self.pad = stride, pad
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_STD, (cout, cin, k, k)).astype(dtype),
            requires_grad=True, name=f"{name}.weight",
        )
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x, train):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def named_params(self):
        return [(self.weight.name, self.weight), (self.bias.name, self.bias)]

    def named_buffers(self):
        return []


class ConvTranspose2d:
    def __init__(self, name, rng, cin, cout, k, stride, pad, dtype):
        self.name = name
        self.stride, self.pad = stride, pad
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_STD, (cin, cout, k, k)).astype(dtype),
            requires_grad=True, name=f"{name}.weight",
        )
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x, train):
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)

    def named_params(self):
        return [(self.weight.name, self.weight), (self.bias.name, self.bias)]

    def named_buffers(self):
        return []


class BatchNorm2d:
    def __init__(self, name, rng, channels, momentum, eps, dtype):
        self.name = name
        self.momentum, self.eps = momentum, eps
        self.gamma = Tensor(
            rng.normal(1.0, WEIGHT_STD, channels).astype(dtype),
            requires_grad=True, name=f"{name}.gamma",
        )
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x, train):
        return ops.batchnorm2d(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            train=train, momentum=self.momentum, eps=self.eps,
        )

    def named_params(self):
        return [(self.gamma.name, self.gamma), (self.beta.name, self.beta)]

    def named_buffers(self):
        return [
            (f"{self.name}.running_mean", self.running_mean),
            (f"{self.name}.running_var", self.running_var),
        ]


class Activation:
    def __init__(self, kind):
        self.kind = kind

    def __call__(self, x, train):
        return ops.activation(x, self.kind)

    def named_params(self):
        return []

    def named_buffers(self):
        return []


class Stack:
    """A named sequence of layers applied in order."""

    def __init__(self, layers):
        self.layers = layers

    def __call__(self, x, train=False):
        for layer in self.layers:
            x = layer(x, train)
        return x

    def named_params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.named_params())
        return out

    def named_buffers(self):
        out = []
        for layer in self.layers:
            out.extend(layer.named_buffers())
        return out


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------


def _encoder_stack(prefix, rng, spec: NetworkSpec, out_dim: int) -> Stack:
    dt = spec.np_dtype
    widths = spec.stage_widths
    layers = []
    cin = spec.in_channels
    for i, cout in enumerate(widths):
        layers.append(Conv2d(f"{prefix}.conv{i}", rng, cin, cout, 4, 2, 1, dt))
        if i > 0:
            layers.append(
                BatchNorm2d(f"{prefix}.bn{i}", rng, cout, spec.bn_momentum, spec.bn_eps, dt)
            )
        layers.append(Activation("leaky_relu"))
        cin = cout
    layers.append(Conv2d(f"{prefix}.head", rng, cin, out_dim, 2, 1, 0, dt))
    return Stack(layers)


def _decoder_stack(prefix, rng, spec: NetworkSpec) -> Stack:
    dt = spec.np_dtype
    widths = spec.stage_widths
    layers = [
        ConvTranspose2d(f"{prefix}.head", rng, spec.latent_dim, widths[-1], 2, 1, 0, dt),
        BatchNorm2d(f"{prefix}.bn_head", rng, widths[-1], spec.bn_momentum, spec.bn_eps, dt),
        Activation("relu"),
    ]
    for i in range(len(widths) - 1, 0, -1):
        layers.append(ConvTranspose2d(f"{prefix}.convt{i}", rng, widths[i], widths[i - 1], 4, 2, 1, dt))
        layers.append(
            BatchNorm2d(f"{prefix}.bn{i}", rng, widths[i - 1], spec.bn_momentum, spec.bn_eps, dt)
        )
        layers.append(Activation("relu"))
    layers.append(ConvTranspose2d(f"{prefix}.convt0", rng, widths[0], spec.in_channels, 4, 2, 1, dt))
    layers.append(Activation("tanh"))
    return Stack(layers)


class NetworkState:
    """Parameters and running statistics of Ge, Gd, Ge' and D.

    The encoders share topology but never share storage; batch-norm running
    buffers are the only state mutated by forward passes (train mode only).
    """

    def __init__(self, spec: NetworkSpec, ge: Stack, gd: Stack, ge_aux: Stack, disc: Stack):
        self.spec = spec
        self.ge = ge
        self.gd = gd
        self.ge_aux = ge_aux
        self.disc = disc

    # -- forwards --

    def _check_image(self, x: Tensor, who: str):
        s = self.spec
        expect = (s.in_channels, s.image_size, s.image_size)
        if x.data.ndim != 4 or x.shape[1:] != expect:
            raise ShapeError(f"{who} expects (B, {expect[0]}, {expect[1]}, {expect[2]}), got {x.shape}")

    def _as_input(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x))
        if x.dtype != self.spec.np_dtype:
            src = x
            x = Tensor(src.data.astype(self.spec.np_dtype), parents=(src,),
                       backward_fn=lambda g: (g.astype(src.dtype),))
        return x

    def encode(self, x, train=False) -> Tensor:
        x = self._as_input(x)
        self._check_image(x, "encoder")
        return self.ge(x, train).reshape(x.shape[0], self.spec.latent_dim)

    def decode(self, z, train=False) -> Tensor:
        if not isinstance(z, Tensor):
            z = Tensor(np.asarray(z, dtype=self.spec.np_dtype))
        if z.data.ndim != 2 or z.shape[1] != self.spec.latent_dim:
            raise ShapeError(f"decoder expects (B, {self.spec.latent_dim}), got {z.shape}")
        return self.gd(z.reshape(z.shape[0], self.spec.latent_dim, 1, 1), train)

    def encode_aux(self, x, train=False) -> Tensor:
        x = self._as_input(x)
        self._check_image(x, "auxiliary encoder")
        return self.ge_aux(x, train).reshape(x.shape[0], self.spec.latent_dim)

    def discriminate(self, x, train=False) -> Tensor:
        x = self._as_input(x)
        self._check_image(x, "discriminator")
        logits = self.disc(x, train).reshape(x.shape[0], 1)
        return ops.sigmoid(logits)

    # -- parameter access --

    def generator_params(self) -> list[Tensor]:
        return [t for _, t in (self.ge.named_params() + self.gd.named_params()
                               + self.ge_aux.named_params())]

    def discriminator_params(self) -> list[Tensor]:
        return [t for _, t in self.disc.named_params()]

    def named_tensors(self):
        """All parameters and running buffers in a fixed, unique order."""
        out = []
        for stack in (self.ge, self.gd, self.ge_aux, self.disc):
            out.extend((name, t.data) for name, t in stack.named_params())
            out.extend(stack.named_buffers())
        names = [n for n, _ in out]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate tensor names in network state")
        return out

    def load_named_tensors(self, arrays: dict[str, np.ndarray]):
        for stack in (self.ge, self.gd, self.ge_aux, self.disc):
            for name, t in stack.named_params():
                src = arrays[name]
                if src.shape != t.data.shape:
                    raise DataFormatError(
                        f"tensor {name}: stored shape {src.shape} != expected {t.data.shape}"
                    )
                t.data = src.astype(t.data.dtype)
            for name, buf in stack.named_buffers():
                src = arrays[name]
                if src.shape != buf.shape:
                    raise DataFormatError(
                        f"tensor {name}: stored shape {src.shape} != expected {buf.shape}"
                    )
                buf[...] = src


def build_networks(spec: NetworkSpec, seed: int = 0) -> NetworkState:
    """Initialize all four sub-networks with Normal(0, 0.02) weights."""
    rng = np.random.default_rng([seed, spec.image_size, spec.latent_dim])
    ge = _encoder_stack("ge", rng, spec, spec.latent_dim)
    gd = _decoder_stack("gd", rng, spec)
    ge_aux = _encoder_stack("ge_aux", rng, spec, spec.latent_dim)
    disc = _encoder_stack("disc", rng, spec, 1)
    return NetworkState(spec, ge, gd, ge_aux, disc)


# -- functional forwards --


def forward_generator(state: NetworkState, x, train=False):
    """Encode then reconstruct: returns (z, x_rec)."""
    z = state.encode(x, train)
    x_rec = state.decode(z, train)
    return z, x_rec


def forward_aux(state: NetworkState, x_rec, train=False):
    return state.encode_aux(x_rec, train)


def forward_discriminator(state: NetworkState, x, train=False):
    return state.discriminate(x, train)


# ----------------------------------------------------------------------
# Checkpoint container
# ----------------------------------------------------------------------

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


def save_tensor_file(path, named_tensors, meta: dict):
    """Write the LRAD container: magic, version, JSON manifest, raw payloads."""
    manifest = {
        "meta": meta,
        "tensors": [
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
            for name, arr in named_tensors
        ],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in named_tensors:
            fh.write(np.ascontiguousarray(arr).astype(_DTYPE_CODES[str(arr.dtype)]).tobytes())


def load_tensor_file(path):
    """Read an LRAD container back into ({name: array}, meta)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    if len(raw) < 16:
        raise DataFormatError(f"{path}: truncated header: {len(raw)} bytes")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    (manifest_len,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + manifest_len
    if len(raw) < header_end:
        raise DataFormatError(f"{path}: truncated manifest: expected {header_end} bytes, got {len(raw)}")
    manifest = json.loads(raw[16:header_end].decode("utf-8"))

    payload = len(raw) - header_end
    expected = sum(
        int(np.prod(t["shape"], dtype=np.int64)) * np.dtype(t["dtype"]).itemsize
        for t in manifest["tensors"]
    )
    if payload != expected:
        raise DataFormatError(
            f"{path}: payload length mismatch: expected {expected} bytes, got {payload}"
        )
    arrays = {}
    offset = header_end
    for entry in manifest["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype=_DTYPE_CODES[entry["dtype"]], count=count, offset=offset)
        arrays[entry["name"]] = arr.astype(dtype).reshape(entry["shape"])
        offset += count * dtype.itemsize
    return arrays, manifest["meta"]
