"""The low-rank machinery: one-sided Jacobi SVD and the tail penalty.

The latent regularizer treats the (d, B) matrix of a batch's latent codes
as something that should be nearly low rank. The penalty is the sum of
singular values beyond a target rank r, a differentiable relaxation of the
hard constraint rank(Z) = r, and its gradient pushes the tail directions
down.
"""

import numpy as np

from lrad import RankBudget, Tensor, loss_rank, svd

rng = np.random.default_rng(1)

# The SVD is implemented with one-sided Jacobi rotations: accurate and
# deterministic (descending values, sign-fixed vectors).
a = rng.standard_normal((8, 6))
spectrum = svd(a)
print("singular values:", np.round(spectrum.S, 4))
print("reconstruction error:", np.linalg.norm(a - spectrum.reconstruct()))
print("U orthonormality defect:", np.abs(spectrum.U.T @ spectrum.U - np.eye(6)).max())

# A rank-3 matrix plus noise: the tail of the spectrum is the noise floor.
clean = rng.standard_normal((16, 3)) @ rng.standard_normal((3, 32))
noisy = clean + 0.01 * rng.standard_normal((16, 32))
print("\nrank-3 + noise spectrum:", np.round(svd(noisy).S[:6], 3), "...")

budget = RankBudget(3)
print("tail penalty on clean matrix:", loss_rank(Tensor(clean), budget).item())
print("tail penalty on noisy matrix:", loss_rank(Tensor(noisy), budget).item())

# Gradient descent on the penalty alone drives the matrix toward rank r.
z = Tensor(rng.standard_normal((16, 32)), requires_grad=True)
before = svd(z.data).S
for step in range(200):
    z.grad = None
    penalty = loss_rank(z, budget)
    penalty.backward()
    z.data = z.data - 0.05 * z.grad
after = svd(z.data).S
print("\ntail mass before descent:", float(before[3:].sum()))
print("tail mass after 200 steps:", float(after[3:].sum()))
print("leading values kept:", np.round(after[:3], 3))
