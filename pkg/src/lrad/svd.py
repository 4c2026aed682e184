"""Thin singular value decomposition via one-sided Jacobi rotations.

The matrices that arise here are small (latent batches, at most a few
hundred rows), where plane rotations are simple and give fully orthogonal
factors. Results are deterministic: singular values are sorted descending
and each left singular vector is flipped so its largest-magnitude entry is
positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

MAX_SWEEPS = 100


@dataclass
class SingularSpectrum:
    """Factors A = U @ diag(S) @ V.T with column-orthonormal U and V."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def svd(a, max_sweeps: int = MAX_SWEEPS, tol: float | None = None) -> SingularSpectrum:
    """Decompose a real matrix; raises NumericalError if sweeps do not converge.

    ``tol`` is the sweep convergence threshold on the normalized column dot
    products; it defaults to 1e-12 in float64 and 1e-7 in float32.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise NumericalError(f"svd expects a matrix, got shape {a.shape}")
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericalError("svd input contains non-finite entries")
    if tol is None:
        tol = 1e-7 if a.dtype == np.float32 else 1e-12

    if a.shape[0] >= a.shape[1]:
        u, s, v = _jacobi_tall(a, max_sweeps, tol)
    else:
        v, s, u = _jacobi_tall(a.T, max_sweeps, tol)
    return SingularSpectrum(U=u, S=s, V=v)


def _jacobi_tall(a, max_sweeps, tol):
    """One-sided Jacobi on a matrix with rows >= cols."""
    m, n = a.shape
    # columns of A and of V stored as contiguous rows for fast dot products
    w = np.ascontiguousarray(a.T).astype(a.dtype, copy=True)
    vt = np.eye(n, dtype=a.dtype)
    sq = np.einsum("ij,ij->i", w, w)
    tiny = float(np.finfo(a.dtype).tiny)

    if n > 1:
        off = float("inf")
        for _ in range(max_sweeps):
            off = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    wp = w[p]
                    wq = w[q]
                    d = float(wp @ wq)
                    denom = np.sqrt(float(sq[p]) * float(sq[q]))
                    if denom <= tiny:
                        continue
                    ratio = abs(d) / denom
                    if ratio <= tol:
                        continue
                    off = max(off, ratio)
                    tau = (float(sq[q]) - float(sq[p])) / (2.0 * d)
                    sgn = 1.0 if tau >= 0.0 else -1.0
                    t = sgn / (abs(tau) + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = c * t
                    new_p = c * wp - s * wq
                    new_q = s * wp + c * wq
                    w[p] = new_p
                    w[q] = new_q
                    vp = vt[p].copy()
                    vt[p] = c * vp - s * vt[q]
                    vt[q] = s * vp + c * vt[q]
                    sq[p] = new_p @ new_p
                    sq[q] = new_q @ new_q
            if off <= tol:
                break
        else:
            raise NumericalError(
                f"svd did not converge within {max_sweeps} Jacobi sweeps "
                f"(off-diagonal ratio {off:.3e} > {tol:.1e})"
            )

    norms = np.sqrt(np.maximum(sq, 0.0))
    order = np.argsort(-norms, kind="stable")
    s = norms[order].astype(a.dtype)
    v = np.ascontiguousarray(vt[order].T)

    u = np.empty((m, n), dtype=a.dtype)
    cutoff = max(m, n) * np.finfo(a.dtype).eps * (s[0] if n else 0.0)
    deficient = []
    for j, col in enumerate(order):
        if s[j] > cutoff and s[j] > 0.0:
            u[:, j] = w[col] / s[j]
        else:
            s[j] = 0.0
            deficient.append(j)
    _complete_basis(u, deficient)
    _fix_signs(u, v)
    return u, s, v


def _complete_basis(u, deficient):
    """Fill zero-singular-value columns with a deterministic orthonormal set."""
    if not deficient:
        return
    m = u.shape[0]
    filled = [j for j in range(u.shape[1]) if j not in deficient]
    candidates = iter(range(m))
    for j in deficient:
        while True:
            try:
                i = next(candidates)
            except StopIteration:
                raise NumericalError("svd could not complete an orthonormal basis")
            vec = np.zeros(m, dtype=u.dtype)
            vec[i] = 1.0
            for k in filled:
                vec -= (u[:, k] @ vec) * u[:, k]
            norm = np.sqrt(vec @ vec)
            if norm > 0.5:
                u[:, j] = vec / norm
                filled.append(j)
                break


def _fix_signs(u, v):
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
