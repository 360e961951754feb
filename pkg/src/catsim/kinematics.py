"""Lattice configuration space and the joint Hilbert space.

Units are L = T = h = 1, so the large particle has Hilbert dimension
N = M and each small particle has dimension nu = m.

Layout of the flattened tensor product: the large-particle index varies
fastest. A flat index ``k`` corresponds to

    k = j0 + N * (j1 + nu * (j2 + ... + nu * jI))

so in C order a state reshaped to ``Geometry.shape`` has axes
``(jI, ..., j2, j1, j0)``. Every module goes through :func:`particle_axis`
and :attr:`Geometry.shape` rather than assuming this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft

from ._backend import fft_workers

POSITION = "position"
MOMENTUM = "momentum"
TO_MOMENTUM = "to_momentum"
TO_POSITION = "to_position"


class GeometryError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Geometry:
    """Large particle of dimension ``n_cat`` plus ``n_small`` particles of dimension ``nu``.

    ``shifts[i]`` offsets the lattice of small particle ``i + 1`` by
    ``shifts[i] / n_cat``.
    """

    n_cat: int
    nu: int
    n_small: int = 0
    shifts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.n_small < 0:
            raise GeometryError(f"n_small must be >= 0, got {self.n_small}")
        if not _is_pow2(self.n_cat):
            raise GeometryError(f"n_cat must be a power of two, got {self.n_cat}")
        if not _is_pow2(self.nu):
            raise GeometryError(f"nu must be a power of two, got {self.nu}")
        if self.nu > self.n_cat:
            raise GeometryError(f"nu={self.nu} does not divide n_cat={self.n_cat}")
        shifts = tuple(int(s) for s in self.shifts) if self.shifts else (0,) * self.n_small
        if len(shifts) != self.n_small:
            raise GeometryError(
                f"expected {self.n_small} shifts, got {len(shifts)}: {list(shifts)}"
            )
        ratio = self.n_cat // self.nu
        for i, s in enumerate(shifts):
            if not 0 <= s < ratio:
                raise GeometryError(
                    f"shift s_{i + 1}={s} out of range [0, {ratio}) for n_cat={self.n_cat}, nu={self.nu}"
                )
        object.__setattr__(self, "shifts", shifts)

    @property
    def dim(self) -> int:
        return self.n_cat * self.nu**self.n_small

    @property
    def shape(self) -> tuple[int, ...]:
        """Tensor shape of a state in C order, ``(nu, ..., nu, n_cat)``."""
        return (self.nu,) * self.n_small + (self.n_cat,)

    def particle_size(self, particle: int) -> int:
        self._check_particle(particle)
        return self.n_cat if particle == 0 else self.nu

    def _check_particle(self, particle: int):
        if not 0 <= particle <= self.n_small:
            raise GeometryError(f"particle {particle} out of range [0, {self.n_small}]")


def build_geometry(n_cat_exp: int, nu_exp: int, n_small: int, shifts: Sequence[int] | None = None) -> Geometry:
    """Geometry with N = 2**n_cat_exp and nu = 2**nu_exp.

    An empty or missing ``shifts`` means all zeros.
    """
    if n_cat_exp < 0 or nu_exp < 0:
        raise GeometryError("exponents must be >= 0")
    if nu_exp > n_cat_exp:
        raise GeometryError(f"nu_exp={nu_exp} exceeds n_cat_exp={n_cat_exp}")
    if n_small < 0:
        raise GeometryError(f"n_small must be >= 0, got {n_small}")
    return Geometry(2**n_cat_exp, 2**nu_exp, n_small, tuple(shifts or ()))


def particle_axis(particle: int, g: Geometry) -> int:
    """Axis of ``particle`` in an array of shape ``g.shape``."""
    g._check_particle(particle)
    return g.n_small - particle


class MultiIndex(NamedTuple):
    j0: int
    j: tuple[int, ...]


def flatten(idx: MultiIndex, g: Geometry) -> int:
    j0, j = idx
    if len(j) != g.n_small:
        raise GeometryError(f"expected {g.n_small} small-particle indices, got {len(j)}")
    if not 0 <= j0 < g.n_cat:
        raise GeometryError(f"j0={j0} out of range [0, {g.n_cat})")
    k = 0
    for i in reversed(range(g.n_small)):
        if not 0 <= j[i] < g.nu:
            raise GeometryError(f"j{i + 1}={j[i]} out of range [0, {g.nu})")
        k = k * g.nu + int(j[i])
    return k * g.n_cat + int(j0)


def unflatten(k: int, g: Geometry) -> MultiIndex:
    if not 0 <= k < g.dim:
        raise GeometryError(f"flat index {k} out of range [0, {g.dim})")
    k, j0 = divmod(int(k), g.n_cat)
    j = []
    for _ in range(g.n_small):
        k, ji = divmod(k, g.nu)
        j.append(ji)
    return MultiIndex(j0, tuple(j))


def index_grids(g: Geometry) -> list[np.ndarray]:
    """Per-particle index arrays broadcastable to ``g.shape``, ordered by particle (0 first)."""
    grids = []
    for p in range(g.n_small + 1):
        ax = particle_axis(p, g)
        sh = [1] * len(g.shape)
        sh[ax] = g.shape[ax]
        grids.append(np.arange(g.shape[ax]).reshape(sh))
    return grids


@dataclass
class StateVector:
    """``dim`` complex amplitudes plus a representation tag per particle."""

    amplitudes: np.ndarray
    reps: tuple[str, ...]

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        self.reps = tuple(self.reps)
        for r in self.reps:
            if r not in (POSITION, MOMENTUM):
                raise ValueError(f"unknown representation {r!r}")

    @classmethod
    def basis(cls, k: int, g: Geometry) -> "StateVector":
        amp = np.zeros(g.dim, dtype=np.complex128)
        amp[k] = 1.0
        return cls(amp, (POSITION,) * (g.n_small + 1))

    @classmethod
    def from_array(cls, amplitudes, g: Geometry, rep: str = POSITION) -> "StateVector":
        amp = np.asarray(amplitudes, dtype=np.complex128).reshape(g.dim)
        return cls(amp.copy(), (rep,) * (g.n_small + 1))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def dft(x: np.ndarray, axes, inverse: bool = False, overwrite: bool = False) -> np.ndarray:
    """Unitary DFT along ``axes``; forward kernel exp(-2 pi i k l / n) / sqrt(n)."""
    fn = scipy.fft.ifftn if inverse else scipy.fft.fftn
    return fn(x, axes=axes, norm="ortho", overwrite_x=overwrite, workers=fft_workers())


def transform(state: StateVector, particle: int, direction: str, g: Geometry) -> StateVector:
    """Change one particle's representation with the unitary DFT of its size."""
    g._check_particle(particle)
    if state.amplitudes.shape != (g.dim,):
        raise GeometryError(f"state has {state.amplitudes.size} amplitudes, geometry needs {g.dim}")
    if direction == TO_MOMENTUM:
        src, dst, inverse = POSITION, MOMENTUM, False
    elif direction == TO_POSITION:
        src, dst, inverse = MOMENTUM, POSITION, True
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if state.reps[particle] != src:
        raise ValueError(
            f"particle {particle} is in the {state.reps[particle]} representation, {direction} needs {src}"
        )
    x = state.amplitudes.reshape(g.shape)
    out = dft(x, (particle_axis(particle, g),), inverse=inverse)
    reps = list(state.reps)
    reps[particle] = dst
    return StateVector(out.reshape(g.dim), tuple(reps))
