"""Bias-corrected Adam updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError


@dataclass
class AdamState:
    """Moment estimates and step counter for one parameter group.

    Moments are allocated lazily on the first step so the state can be
    created before the parameter shapes are known.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """One update over aligned lists of arrays; returns the new parameter arrays.

    ``state`` is mutated (moments and step counter); it must be written from a
    single thread.
    """
    if len(params) != len(grads):
        raise ShapeError(f"adam_step got {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("adam_step state tracks a different number of parameters")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"adam_step gradient shape {g.shape} != parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        out.append(p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
    return out


class Adam:
    """Adam over a list of graph leaves; applies updates back onto ``.data``."""

    def __init__(self, params: list[Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params
        ]
        updated = adam_step([p.data for p in self.params], grads, self.state)
        for p, new in zip(self.params, updated):
            p.data = new.astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
