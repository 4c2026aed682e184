"""A walk through the tensor engine: building blocks, gradients, verification.

Every layer used by the networks is a plain function over `Tensor` values
with a hand-written backward rule. This script builds a small convolutional
pipeline, differentiates it, and cross-checks the gradients with central
finite differences.
"""

import numpy as np

from lrad import Tensor, grad_check
from lrad import ops

rng = np.random.default_rng(0)

# A tiny batch of 8x8 images and a strided convolution.
x = Tensor(rng.standard_normal((2, 1, 8, 8)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 1, 4, 4)) * 0.1, requires_grad=True)
b = Tensor(np.zeros(4), requires_grad=True)

y = ops.conv2d(x, w, b, stride=2, pad=1)
print("conv2d:", x.shape, "->", y.shape)

# Chain a few more layers and reduce to a scalar.
h = ops.leaky_relu(y)
logits = ops.linear(h.reshape(2, 4 * 4 * 4), Tensor(rng.standard_normal((1, 64)) * 0.1,
                                                    requires_grad=True))
loss = ops.sigmoid(logits).sum()
loss.backward()
print("loss:", loss.item())
print("gradient shapes:", x.grad.shape, w.grad.shape)

# The same machinery that trains the model also verifies itself.
report = grad_check(
    lambda xx, ww: ops.conv2d(xx, ww, stride=2, pad=1),
    [rng.standard_normal((2, 2, 6, 6)), rng.standard_normal((3, 2, 4, 4))],
)
print("conv2d finite-difference check:", report)

report = grad_check(
    lambda xx, ww: ops.conv_transpose2d(xx, ww, stride=2, pad=1),
    [rng.standard_normal((2, 3, 3, 3)), rng.standard_normal((3, 2, 4, 4))],
)
print("conv_transpose2d finite-difference check:", report)

# conv_transpose2d is the exact adjoint of conv2d under the same weight:
# <conv(x, w), y> == <x, conv_t(y, w)>.
xa = rng.standard_normal((2, 3, 8, 8))
wa = rng.standard_normal((5, 3, 4, 4))
ya = rng.standard_normal((2, 5, 4, 4))
lhs = float((ops.conv2d(Tensor(xa), Tensor(wa), stride=2, pad=1).data * ya).sum())
rhs = float((xa * ops.conv_transpose2d(Tensor(ya), Tensor(wa), stride=2, pad=1).data).sum())
print(f"adjoint identity: {lhs:.6f} == {rhs:.6f}")
