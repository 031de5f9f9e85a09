"""Sparse ternary coding with ambiguization.

A signal x is mapped to a public template in three steps: the linear feature
map y = W x, a random projection A y, and top-k ternarization to a code u with
exactly ``s_x`` nonzeros.  Ambiguization then fills ``s_ns`` randomly chosen
zero positions of u with random +/-1 symbols, producing the protected
template u_a.  Codes are int8 arrays over {-1, 0, +1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .linalg import as_seed

_CHARS = {-1: "-", 0: "0", 1: "+"}
_VALUES = {"-": -1, "0": 0, "+": 1}


@dataclass(frozen=True)
class StcaParams:
    m: int
    n: int
    s_x: int
    s_ns: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"dimensions must be positive (m={self.m}, n={self.n})")
        if not 1 <= self.s_x <= self.m:
            raise ValueError(f"need 1 <= s_x <= m, got s_x={self.s_x}, m={self.m}")
        if not 0 <= self.s_ns <= self.m - self.s_x:
            raise ValueError(f"need 0 <= s_ns <= m - s_x = {self.m - self.s_x}, got {self.s_ns}")

    @property
    def alpha(self) -> float:
        return self.s_x / self.m


def ternarize(v, s_x: int) -> np.ndarray:
    """Keep the signs of the ``s_x`` largest-magnitude entries, zero the rest.

    Works on a vector or row-wise on a matrix.  Ties in magnitude go to the
    lowest index; exact zeros are never selected, so an input with fewer than
    ``s_x`` nonzeros yields a code with fewer nonzeros.
    """
    v = np.asarray(v, dtype=float)
    if s_x < 1 or s_x > v.shape[-1]:
        raise ValueError(f"need 1 <= s_x <= {v.shape[-1]}, got {s_x}")
    rows = np.atleast_2d(v)
    order = np.argsort(-np.abs(rows), axis=1, kind="stable")[:, :s_x]
    picked = np.take_along_axis(rows, order, axis=1)
    out = np.zeros(rows.shape, dtype=np.int8)
    np.put_along_axis(out, order, np.sign(picked).astype(np.int8), axis=1)
    return out.reshape(v.shape)


def ambiguize(u, s_ns: int, seed) -> np.ndarray:
    """Place ``s_ns`` random +/-1 symbols on the zero positions of ``u``."""
    u = np.asarray(u, dtype=np.int8)
    complement = np.flatnonzero(u == 0)
    if not 0 <= s_ns <= complement.size:
        raise ValueError(f"s_ns={s_ns} exceeds the {complement.size} free positions of the code")
    rng = as_seed(seed, "ambiguization").generator()
    out = u.copy()
    if s_ns:
        where = rng.choice(complement, size=s_ns, replace=False)
        out[where] = rng.choice(np.array([-1, 1], dtype=np.int8), size=s_ns)
    return out


def project(x, W, A) -> np.ndarray:
    """A W x for a vector or for a stack of row vectors."""
    x = np.asarray(x, dtype=float)
    W = np.asarray(W)
    A = np.asarray(A)
    if W.shape[1] != x.shape[-1] or A.shape[1] != W.shape[0]:
        raise ShapeError(f"shape mismatch: x {x.shape[-1]}, W {W.shape}, A {A.shape}")
    return (x @ W.T) @ A.T


def protect(x, W, A, params: StcaParams, seed) -> tuple[np.ndarray, np.ndarray]:
    """Encode one signal; returns ``(u_a, u)``: the public template and the clean code."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != params.n or np.shape(A)[0] != params.m:
        raise ShapeError(f"shape mismatch: x {x.shape}, A {np.shape(A)}, params m={params.m}, n={params.n}")
    u = ternarize(project(x, W, A), params.s_x)
    return ambiguize(u, params.s_ns, seed), u


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def code_rate(m: int, n: int, s_x: int) -> float:
    """Bits per source dimension: support entropy plus one sign bit per nonzero."""
    if s_x == 0:
        return 0.0
    alpha = s_x / m
    return (m / n) * (binary_entropy(alpha) + alpha)


def params_rate(params: StcaParams) -> float:
    return code_rate(params.m, params.n, params.s_x)


def format_code(u) -> str:
    return "".join(_CHARS[int(s)] for s in np.asarray(u))


def parse_code(text: str) -> np.ndarray:
    text = text.strip()
    try:
        return np.array([_VALUES[c] for c in text], dtype=np.int8)
    except KeyError as exc:
        raise FormatError(f"invalid ternary symbol {exc.args[0]!r}; expected one of '-', '0', '+'") from None
