"""Reconstruction attacks that use knowledge of W, A and the ternarizer.

Two routes are provided: the closed-form ridge pseudo-inverse, which treats
the ternarizer as the identity, and gradient descent on the reconstruction
objective with the ternarizer replaced by a smooth surrogate.  The learned
decoder attack lives in :mod:`stcalab.nn`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .linalg import RidgeOperator, SeedSpec, ridge_solve

DIVERGENCE_LIMIT = 1e12


def pinv_attack(u_a, A, W, lam: float = 0.0) -> np.ndarray:
    """x_hat = ((AW)^T AW + lam I)^-1 (AW)^T u_a with u_a read as real numbers."""
    B = np.asarray(A) @ np.asarray(W)
    return ridge_solve(B, np.asarray(u_a, dtype=float), lam)


def pinv_operator(A, W, lam: float = 0.0) -> RidgeOperator:
    return RidgeOperator(np.asarray(A) @ np.asarray(W), lam)


@dataclass(frozen=True)
class SurrogateSpec:
    """Soft ternarizer 0.5 * [tanh(beta (t - tau)) + tanh(beta (t + tau))]."""

    beta: float = 10.0
    tau: float = 0.0

    def __post_init__(self):
        if self.beta <= 0 or self.tau < 0:
            raise ValueError(f"need beta > 0 and tau >= 0, got beta={self.beta}, tau={self.tau}")


def surrogate_apply(v, spec: SurrogateSpec) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return 0.5 * (np.tanh(spec.beta * (v - spec.tau)) + np.tanh(spec.beta * (v + spec.tau)))


def surrogate_derivative(v, spec: SurrogateSpec) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    lo = np.tanh(spec.beta * (v - spec.tau))
    hi = np.tanh(spec.beta * (v + spec.tau))
    return 0.5 * spec.beta * ((1 - lo**2) + (1 - hi**2))


def surrogate_for(B, x_init, s_x: int, beta: float = 10.0) -> SurrogateSpec:
    """Threshold at the s_x-th largest |B x_init|, aligning the surrogate with top-k ternarization."""
    mags = np.sort(np.abs(np.asarray(B) @ np.asarray(x_init, dtype=float)))[::-1]
    return SurrogateSpec(beta=beta, tau=float(mags[s_x - 1]))


@dataclass(frozen=True)
class GradientAttackConfig:
    step_size: float = 1e-2
    iterations: int = 200
    lam: float = 0.0
    init: str = "zeros"  # or "gaussian"
    seed: SeedSpec = SeedSpec(0, "gradient-init")

    def __post_init__(self):
        if self.step_size <= 0 or self.iterations < 0:
            raise ValueError("need step_size > 0 and iterations >= 0")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")


def objective(x, u_a, B, spec: SurrogateSpec, lam: float) -> float:
    r = np.asarray(u_a, dtype=float) - surrogate_apply(B @ x, spec)
    return 0.5 * float(r @ r) + lam * float(x @ x)


def objective_grad(x, u_a, B, spec: SurrogateSpec, lam: float) -> np.ndarray:
    t = B @ x
    r = np.asarray(u_a, dtype=float) - surrogate_apply(t, spec)
    return -B.T @ (r * surrogate_derivative(t, spec)) + 2.0 * lam * x


def initial_point(n: int, cfg: GradientAttackConfig) -> np.ndarray:
    if cfg.init == "zeros":
        return np.zeros(n)
    return cfg.seed.generator().normal(size=n)


def gradient_attack(u_a, A, W, spec: SurrogateSpec, cfg: GradientAttackConfig,
                    x0=None, history: list | None = None) -> np.ndarray:
    """Plain gradient descent on 0.5 ||u_a - soft(AWx)||^2 + lam ||x||^2.

    If ``history`` is a list, the objective at every iterate (including the
    start) is appended to it.
    """
    B = np.asarray(A) @ np.asarray(W)
    return descend(u_a, B, spec, cfg, x0, history)


def descend(u_a, B, spec: SurrogateSpec, cfg: GradientAttackConfig, x0=None, history=None) -> np.ndarray:
    x = initial_point(B.shape[1], cfg) if x0 is None else np.array(x0, dtype=float)
    for it in range(cfg.iterations + 1):
        J = objective(x, u_a, B, spec, cfg.lam)
        if not np.isfinite(J) or J > DIVERGENCE_LIMIT:
            raise DivergenceError(f"objective reached {J:.3g} at iteration {it}; reduce the step size")
        if history is not None:
            history.append(J)
        if it == cfg.iterations:
            break
        x = x - cfg.step_size * objective_grad(x, u_a, B, spec, cfg.lam)
    return x
