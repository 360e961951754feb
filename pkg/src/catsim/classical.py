"""Classical references on the unit torus.

The kicked flow over one period is the free shear followed by the kick
P -> P + Q, which composes to

    (Q, P) -> (Q + P, Q + 2P) mod 1,   matrix [[1, 1], [1, 2]].

Its lattice period on an N x N grid is found by iterating the matrix mod N.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

CAT_MATRIX = np.array([[1, 1], [1, 2]], dtype=np.int64)


class TorusPoint(NamedTuple):
    q: float
    p: float


def _wrap(x):
    return np.mod(x, 1.0)


def free_map(x: TorusPoint, t: float) -> TorusPoint:
    return TorusPoint(float(_wrap(x.q + x.p * t)), float(_wrap(x.p)))


def cat_map(x: TorusPoint) -> TorusPoint:
    q = _wrap(x.q + x.p)
    return TorusPoint(float(q), float(_wrap(x.q + 2 * x.p)))


def cat_map_array(q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized cat map on arrays of coordinates."""
    return _wrap(q + p), _wrap(q + 2 * p)


def classical_acf(t):
    """sin(2 pi t) / (4 pi t), equal to 1/2 at t = 0. Accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    # reduce mod 1 first so integer t gives an exact zero
    num = np.sin(2.0 * math.pi * np.mod(t, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t == 0, 0.5, num / (4.0 * math.pi * np.where(t == 0, 1.0, t)))
    return float(out) if out.ndim == 0 else out


def monte_carlo_acf(t: float, n_points: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of sin(2 pi Q(t)) sin(2 pi Q) over uniform torus points."""
    q = rng.random(n_points)
    p = rng.random(n_points)
    samples = np.sin(2 * math.pi * _wrap(q + p * t)) * np.sin(2 * math.pi * q)
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n_points))


def lattice_period(n: int, matrix=CAT_MATRIX, max_iter: int | None = None) -> int:
    """Smallest tau >= 1 with matrix**tau == 1 (mod n), by direct iteration."""
    if n < 2:
        raise ValueError(f"lattice size must be >= 2, got {n}")
    a0, b0 = int(matrix[0][0]) % n, int(matrix[0][1]) % n
    c0, d0 = int(matrix[1][0]) % n, int(matrix[1][1]) % n
    a, b, c, d = a0, b0, c0, d0
    # the order of an element of SL(2, Z_n) is bounded by |SL(2, Z_n)| < n^3
    limit = max_iter if max_iter is not None else n**3
    for tau in range(1, limit + 1):
        if a == 1 and d == 1 and b == 0 and c == 0:
            return tau
        a, b, c, d = (
            (a * a0 + b * c0) % n,
            (a * b0 + b * d0) % n,
            (c * a0 + d * c0) % n,
            (c * b0 + d * d0) % n,
        )
    raise RuntimeError(f"no period found within {limit} iterations for n={n}")


def lyapunov() -> float:
    """ln of the expanding eigenvalue of the cat matrix, ln((3 + sqrt 5)/2)."""
    return math.log((3.0 + math.sqrt(5.0)) / 2.0)
