"""Decoding for a party holding a noisy copy of the enrolled signal.

The probe x + z is pushed through the same projection.  Its ``s_x`` largest
magnitudes estimate the support of the clean code, and filtering the public
template to that support strips the ambiguization symbols before the ridge
reconstruction.
"""

from __future__ import annotations

import numpy as np

from .codec import project, ternarize
from .linalg import RidgeOperator, ridge_solve


def estimate_support(probe, W, A, s_x: int) -> np.ndarray:
    """Sorted positions of the ``s_x`` largest projected probe magnitudes."""
    code = ternarize(project(probe, W, A), s_x)
    return np.flatnonzero(code)


def unlock(u_a, support) -> np.ndarray:
    u_a = np.asarray(u_a, dtype=np.int8)
    support = np.asarray(support, dtype=np.intp)
    if support.size and (support.min() < 0 or support.max() >= u_a.size):
        raise IndexError(f"support index out of range [0, {u_a.size})")
    out = np.zeros_like(u_a)
    out[support] = u_a[support]
    return out


def authorized_reconstruct(u_a, probe, W, A, s_x: int, lam: float = 0.0, solver: RidgeOperator | None = None):
    """Ridge reconstruction from the template filtered to the probe's support estimate.

    ``solver`` may carry a prefactored operator for A W to amortize sweeps.
    """
    code = unlock(u_a, estimate_support(probe, W, A, s_x))
    if solver is not None:
        return solver.solve(code)
    return ridge_solve(np.asarray(A) @ np.asarray(W), code, lam)


def support_overlap(estimated, true) -> float:
    """|estimated & true| / |true|."""
    true = np.asarray(true)
    if true.size == 0:
        return 1.0
    return np.intersect1d(estimated, true).size / true.size
