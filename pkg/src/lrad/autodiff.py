"""Reverse-mode differentiation over dense numpy arrays.

Every operation that participates in training records its inputs and a
hand-written backward rule on the output value. Calling ``backward()`` on a
scalar result replays the recorded graph in reverse topological order and
accumulates gradients into the leaves. There is no graph rewriting or
broadcasting machinery beyond what the network layers need.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

FLOAT_DTYPES = (np.float32, np.float64)


def as_array(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode gradients.

    ``data`` is the value, ``grad`` accumulates the gradient of whatever
    scalar ``backward()`` was called on. Non-leaf tensors keep references to
    their parents and a closure mapping the output gradient to parent
    gradients. Operations never modify ``data`` of their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, name=None):
        self.data = as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def detach(self) -> "Tensor":
        """A view of the same value with no graph history."""
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    # -- minimal arithmetic glue (losses and layers do the heavy lifting) --

    def __add__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(as_array(other, dtype=self.dtype))
        if self.shape != other.shape:
            raise ShapeError(f"add: shapes {self.shape} and {other.shape} differ")
        out = Tensor(self.data + other.data, parents=(self, other))
        out._backward_fn = lambda g: (g, g)
        return out

    def __mul__(self, scalar):
        c = float(scalar)
        out = Tensor(self.data * np.asarray(c, dtype=self.dtype), parents=(self,))
        out._backward_fn = lambda g: (g * c,)
        return out

    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        out = Tensor(np.asarray(self.data.sum(), dtype=self.dtype), parents=(self,))
        out._backward_fn = lambda g: (np.full(self.shape, g, dtype=self.dtype),)
        return out

    def transpose2d(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ShapeError(f"transpose2d expects a matrix, got shape {self.shape}")
        out = Tensor(np.ascontiguousarray(self.data.T), parents=(self,))
        out._backward_fn = lambda g: (np.ascontiguousarray(g.T),)
        return out

    def reshape(self, *shape) -> "Tensor":
        src = self.shape
        out = Tensor(self.data.reshape(*shape), parents=(self,))
        out._backward_fn = lambda g: (g.reshape(src),)
        return out

    # -- reverse traversal --

    def backward(self, seed=None):
        """Accumulate gradients of this value into every reachable leaf.

        ``seed`` defaults to ones, so on a scalar output this computes plain
        derivatives of that scalar.
        """
        order = _topo_order(self)
        self.grad = np.ones_like(self.data) if seed is None else as_array(seed, self.dtype)
        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def _topo_order(root: Tensor) -> list[Tensor]:
    seen = set()
    order = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def parameter(data, name=None, dtype=np.float32) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(as_array(data, dtype), requires_grad=True, name=name)


# ----------------------------------------------------------------------
# Finite-difference verification
# ----------------------------------------------------------------------


class GradCheckReport:
    """Outcome of comparing analytic gradients with central differences."""

    def __init__(self, max_rel_error, per_input):
        self.max_rel_error = float(max_rel_error)
        self.per_input = list(per_input)

    def __repr__(self):
        per = ", ".join(f"{e:.3e}" for e in self.per_input)
        return f"GradCheckReport(max_rel_error={self.max_rel_error:.3e}, per_input=[{per}])"


def grad_check(fn, inputs, eps=1e-5) -> GradCheckReport:
    """Compare the recorded backward of ``fn`` against central differences.

    ``fn`` maps Tensors to a Tensor; the check differentiates the scalar sum
    of its output. Inputs should be float64 for the stated tolerances to be
    meaningful. Relative error is measured elementwise against
    ``max(1, |analytic|, |numeric|)`` so near-zero gradients do not blow up
    the ratio.
    """
    leaves = [Tensor(as_array(x, np.float64), requires_grad=True) for x in inputs]
    out = fn(*leaves)
    out.sum().backward()
    analytic = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves
    ]

    def head(arrays):
        frozen = [Tensor(a) for a in arrays]
        return float(fn(*frozen).data.sum())

    errors = []
    for k, leaf in enumerate(leaves):
        numeric = np.zeros_like(leaf.data)
        flat = numeric.reshape(-1)
        base = [l.data.copy() for l in leaves]
        for i in range(flat.size):
            probe = base[k].reshape(-1)
            keep = probe[i]
            probe[i] = keep + eps
            hi = head(base)
            probe[i] = keep - eps
            lo = head(base)
            probe[i] = keep
            flat[i] = (hi - lo) / (2.0 * eps)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic[k]), np.abs(numeric)))
        err = float(np.max(np.abs(analytic[k] - numeric) / denom)) if flat.size else 0.0
        errors.append(err)
    return GradCheckReport(max(errors) if errors else 0.0, errors)
