"""Seedable linear-algebra substrate: orthonormal DCT, Gaussian projections, ridge solves."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ShapeError, SingularSystemError

# condition number of the normal matrix above which a lambda=0 solve is refused
COND_LIMIT = 1e12


@dataclass(frozen=True)
class SeedSpec:
    """Names an independent random stream as (master seed, label).

    Streams are derived with a cryptographic hash of the label, so two specs
    with the same master seed but different labels are statistically
    independent, and the same spec always yields the same stream.
    """

    master_seed: int
    stream_label: str = ""

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")

    def child(self, label) -> SeedSpec:
        sub = f"{self.stream_label}/{label}" if self.stream_label else str(label)
        return SeedSpec(self.master_seed, sub)

    def generator(self) -> np.random.Generator:
        digest = hashlib.blake2b(self.stream_label.encode("utf-8"), digest_size=16).digest()
        words = np.frombuffer(digest, dtype="<u4").tolist()
        seq = np.random.SeedSequence([int(self.master_seed) & 0xFFFFFFFF,
                                      int(self.master_seed) >> 32, *words])
        return np.random.Generator(np.random.PCG64(seq))


def as_seed(seed, label: str = "") -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed), label)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k is the k-th cosine basis vector."""
    if n < 1:
        raise ValueError(f"dct_matrix needs n >= 1, got {n}")
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = 1.0 / np.sqrt(n)
    return mat


def gaussian_projection(m: int, d: int, n: int, seed) -> np.ndarray:
    """m x d matrix with i.i.d. N(0, 1/n) entries (standard deviation 1/sqrt(n))."""
    if m < 1 or d < 1 or n < 1:
        raise ValueError(f"projection dimensions must be positive, got m={m}, d={d}, n={n}")
    rng = as_seed(seed, "projection").generator()
    return rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, d))


class RidgeOperator:
    """Factorized solver for x = (B^T B + lam I)^-1 B^T u, reusable across many u.

    The LU factorization (partial pivoting) of the normal matrix is computed
    once; ``solve`` accepts a single vector or a stack of row vectors.
    """

    def __init__(self, B, lam: float = 0.0):
        B = np.asarray(B, dtype=float)
        if B.ndim != 2:
            raise ValueError("B must be a matrix")
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        if not np.all(np.isfinite(B)):
            raise ValueError("B contains non-finite entries")
        self.B = B
        self.lam = float(lam)
        gram = B.T @ B + self.lam * np.eye(B.shape[1])
        eig = np.linalg.eigvalsh(gram)
        cond = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
        if cond > COND_LIMIT:
            raise SingularSystemError(
                f"normal matrix is singular to working precision (condition {cond:.3g} > {COND_LIMIT:g})")
        self.cond = cond
        self._lu = scipy.linalg.lu_factor(gram, check_finite=False)

    def solve(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.B.shape[0]:
            raise ShapeError(f"right-hand side has length {u.shape[-1]}, expected {self.B.shape[0]}")
        rhs = self.B.T @ u.T
        return scipy.linalg.lu_solve(self._lu, rhs, check_finite=False).T


def ridge_solve(B, u, lam: float = 0.0) -> np.ndarray:
    """Return (B^T B + lam I)^-1 B^T u.

    Raises SingularSystemError when the normal matrix is numerically singular.
    """
    return RidgeOperator(B, lam).solve(u)
