"""Unitary time evolution of the multi-particle cat.

Between kicks the flow is generated by the kinetic energy of all particles
plus the point interaction between the large particle and each small one.
It is integrated with the second order split

    exp(-i V dt/2) . F^-1 exp(-i T dt) F . exp(-i V dt/2)

where ``F`` is the joint DFT and both exponentials are diagonal. At every
integer time the kick ``K`` is applied after the flow, so one period is
``U = K U_flow``.

Phase conventions (h = 1, hbar = 1/(2 pi)):

* kinetic angle at momentum indices (l0, l1, ..): -pi dt (l0^2/N + sum l_i^2/nu)
* kick angle at large-particle position j0: +pi eta j0^2 / N
* scattering angle: -kappa * count * dt, with ``count`` the number of
  small particles sitting on the large particle's site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._backend import kernels
from .kinematics import (
    MOMENTUM,
    POSITION,
    Geometry,
    StateVector,
    dft,
    index_grids,
)

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
FLOWS = ("trotter", "exact")


class MemoryBudgetError(MemoryError):
    pass


@dataclass(frozen=True)
class DiagonalFactor:
    """Diagonal operator in a definite representation; ``values`` has shape ``geometry.shape``."""

    rep: str
    values: np.ndarray

    def phase(self) -> np.ndarray:
        return np.exp(1j * self.values)


def _momentum_index(l: np.ndarray, n: int, symmetric: bool) -> np.ndarray:
    if symmetric:
        return np.where(l >= n // 2, l - n, l)
    return l


def free_phases(g: Geometry, dt: float, symmetric: bool = False) -> DiagonalFactor:
    """Kinetic phase angles for a flow of duration ``dt`` (momentum rep).

    ``symmetric`` relabels momenta l >= n/2 as l - n; at integer ``dt`` the
    two labelings give identical phase factors.
    """
    angles = np.zeros(g.shape)
    for p, grid in enumerate(index_grids(g)):
        n = g.particle_size(p)
        l = _momentum_index(grid, n, symmetric).astype(float)
        angles = angles + l**2 / n
    return DiagonalFactor(MOMENTUM, -math.pi * dt * angles)


def kick_phases(g: Geometry, eta: int) -> DiagonalFactor:
    """Kick angles pi*eta*j0^2/N (position rep), constant over small-particle indices."""
    j0 = index_grids(g)[0].astype(float)
    angles = np.broadcast_to(math.pi * eta * j0**2 / g.n_cat, g.shape).copy()
    return DiagonalFactor(POSITION, angles)


def scattering_counts(g: Geometry) -> DiagonalFactor:
    """Number of small particles on the large particle's site, at every joint position."""
    grids = index_grids(g)
    j0 = grids[0]
    ratio = g.n_cat // g.nu
    counts = np.zeros(g.shape)
    for i in range(1, g.n_small + 1):
        site = (ratio * grids[i] + g.shifts[i - 1]) % g.n_cat
        counts = counts + (j0 == site)
    return DiagonalFactor(POSITION, counts)


def scattering_phases(g: Geometry, kappa: float, dt: float) -> DiagonalFactor:
    return DiagonalFactor(POSITION, -kappa * dt * scattering_counts(g).values)


@dataclass(frozen=True)
class PropagatorSpec:
    geometry: Geometry
    eta: int = 0
    kappa: float = 0.0
    n_substeps: int = 32
    sample_dt: float = 1.0
    symmetric_momenta: bool = False
    flow: str = "trotter"

    def __post_init__(self):
        if int(self.eta) != self.eta:
            raise ValueError(f"eta must be an integer, got {self.eta}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.n_substeps < 1:
            raise ValueError(f"n_substeps must be >= 1, got {self.n_substeps}")
        if self.flow not in FLOWS:
            raise ValueError(f"flow must be one of {FLOWS}, got {self.flow!r}")
        if self.sample_dt <= 0:
            raise ValueError(f"sample_dt must be > 0, got {self.sample_dt}")
        per_unit = 1.0 / self.sample_dt
        if abs(per_unit - round(per_unit)) > 1e-9:
            raise ValueError(f"sample_dt={self.sample_dt} does not divide 1")
        if self.scattering and self.flow == "trotter":
            m = self.n_substeps * self.sample_dt
            if abs(m - round(m)) > 1e-9 or round(m) < 1:
                raise ValueError(
                    f"n_substeps={self.n_substeps} is not a multiple of samples per unit time ({round(per_unit)})"
                )

    @property
    def scattering(self) -> bool:
        return self.kappa != 0 and self.geometry.n_small > 0

    @property
    def samples_per_unit(self) -> int:
        return int(round(1.0 / self.sample_dt))

    @property
    def substeps_per_sample(self) -> int:
        return int(round(self.n_substeps * self.sample_dt))


class _Stepper:
    """Precomputed factors; advances a block of row states of shape (B, dim)."""

    def __init__(self, spec: PropagatorSpec):
        self.spec = spec
        g = spec.geometry
        self.g = g
        self.axes = tuple(range(1, len(g.shape) + 1))
        self.kick = kick_phases(g, int(spec.eta)).phase().ravel()
        self._free_cache: dict[float, np.ndarray] = {}
        dt = 1.0 / spec.n_substeps
        self.dt = dt
        if spec.scattering:
            self.v_half = scattering_phases(g, spec.kappa, dt / 2).phase().ravel()
            self.v_full = scattering_phases(g, spec.kappa, dt).phase().ravel()
        self._eig = None
        self._exact_cache: dict[float, np.ndarray] = {}

    def free_factor(self, dt: float) -> np.ndarray:
        f = self._free_cache.get(dt)
        if f is None:
            f = free_phases(self.g, dt, self.spec.symmetric_momenta).phase().ravel()
            self._free_cache[dt] = f
        return f

    def free(self, rows: np.ndarray, dt: float) -> np.ndarray:
        B = rows.shape[0]
        x = dft(rows.reshape((B,) + self.g.shape), self.axes, overwrite=True)
        x = x.reshape(B, self.g.dim)
        kernels.phase_mul(x, self.free_factor(dt))
        x = dft(x.reshape((B,) + self.g.shape), self.axes, inverse=True, overwrite=True)
        return np.ascontiguousarray(x.reshape(B, self.g.dim))

    def strang(self, rows: np.ndarray, n: int) -> np.ndarray:
        """``n`` consecutive substeps of length 1/n_substeps, interior half-steps fused."""
        kernels.phase_mul(rows, self.v_half)
        for s in range(n):
            rows = self.free(rows, self.dt)
            kernels.phase_mul(rows, self.v_half if s == n - 1 else self.v_full)
        return rows

    def exact_factor(self, dt: float) -> np.ndarray:
        """exp(-i G dt) for the inter-kick generator G, by eigendecomposition."""
        cached = self._exact_cache.get(dt)
        if cached is not None:
            return cached
        if self._eig is None:
            self._eig = flow_spectrum(self.spec)
        energies, vecs = self._eig
        u = (vecs * np.exp(-1j * energies * dt)) @ vecs.conj().T
        self._exact_cache[dt] = u
        return u

    def flow(self, rows: np.ndarray, duration: float) -> np.ndarray:
        """Advance by ``duration`` without kicks."""
        if self.spec.flow == "exact" and self.spec.scattering:
            return rows @ self.exact_factor(duration).T
        if not self.spec.scattering:
            return self.free(rows, duration)
        n = duration * self.spec.n_substeps
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(f"duration {duration} is not a whole number of substeps")
        return self.strang(rows, int(round(n)))

    def apply_kick(self, rows: np.ndarray):
        if self.spec.eta != 0:
            kernels.phase_mul(rows, self.kick)


def flow_generator(spec: PropagatorSpec) -> np.ndarray:
    """Dense Hermitian generator G of the inter-kick flow (position basis), exp(-i G dt)."""
    g = spec.geometry
    axes = tuple(range(1, len(g.shape) + 1))
    eye = np.eye(g.dim, dtype=np.complex128)
    fmat = dft(eye.reshape((g.dim,) + g.shape), axes).reshape(g.dim, g.dim).T
    kin = -free_phases(g, 1.0, spec.symmetric_momenta).values.ravel()
    gen = fmat.conj().T @ (kin[:, None] * fmat)
    gen[np.diag_indices_from(gen)] += spec.kappa * scattering_counts(g).values.ravel()
    return 0.5 * (gen + gen.conj().T)


def flow_spectrum(spec: PropagatorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors (columns) of :func:`flow_generator`."""
    return np.linalg.eigh(flow_generator(spec))


def _all_position(state: StateVector):
    if any(r != POSITION for r in state.reps):
        raise ValueError(f"state must be in the position representation, got {state.reps}")


def substep(state: StateVector, spec: PropagatorSpec, dt: float) -> StateVector:
    """One Strang step of length ``dt`` (scattering half, free flow, scattering half)."""
    _all_position(state)
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    g = spec.geometry
    st = _Stepper(spec)
    rows = state.amplitudes.reshape(1, g.dim).copy()
    if spec.scattering:
        vh = scattering_phases(g, spec.kappa, dt / 2).phase().ravel()
        kernels.phase_mul(rows, vh)
        rows = st.free(rows, dt)
        kernels.phase_mul(rows, vh)
    else:
        rows = st.free(rows, dt)
    return StateVector(rows.reshape(g.dim), state.reps)


def evolve_unit(state: StateVector, spec: PropagatorSpec) -> StateVector:
    """One period: the inter-kick flow followed by the kick."""
    _all_position(state)
    g = spec.geometry
    st = _Stepper(spec)
    rows = st.flow(state.amplitudes.reshape(1, g.dim).copy(), 1.0)
    st.apply_kick(rows)
    return StateVector(rows.reshape(g.dim), state.reps)


@dataclass
class DensePropagator:
    """W(t) = U^t as a dim x dim matrix; column j is U^t applied to position basis state j."""

    time: float
    matrix: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        """W(t) transposed; C-contiguous when produced by :func:`accumulate`."""
        return self.matrix.T


def required_bytes(spec: PropagatorSpec) -> int:
    d = spec.geometry.dim
    buffers = 6 if (spec.flow == "exact" and spec.scattering) else 3
    return buffers * d * d * 16


def accumulate(
    spec: PropagatorSpec,
    t_max: float,
    memory_budget: int | None = DEFAULT_MEMORY_BUDGET,
    copy: bool = False,
) -> Iterator[DensePropagator]:
    """Yield W(t) at t = 0, sample_dt, 2*sample_dt, ... <= t_max.

    The yielded matrix is a view of the working buffer and is overwritten
    when the generator advances, unless ``copy`` is set.
    """
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    need = required_bytes(spec)
    if memory_budget is not None and need > memory_budget:
        raise MemoryBudgetError(
            f"dense propagator for dim={spec.geometry.dim} needs about {need} bytes, budget is {memory_budget}"
        )
    g = spec.geometry
    st = _Stepper(spec)
    n_samples = int(math.floor(t_max / spec.sample_dt + 1e-9))
    per_unit = spec.samples_per_unit
    rows = np.eye(g.dim, dtype=np.complex128)

    def emit(i, rows):
        m = rows.copy() if copy else rows
        return DensePropagator(i / per_unit, m.T)

    yield emit(0, rows)
    for i in range(1, n_samples + 1):
        rows = st.flow(rows, spec.sample_dt)
        if i % per_unit == 0:
            st.apply_kick(rows)
        yield emit(i, rows)


def propagator_at(spec: PropagatorSpec, t: float, **kw) -> DensePropagator:
    """W(t) for a single time on the sample grid."""
    last = None
    for last in accumulate(spec, t, copy=True, **kw):
        pass
    if abs(last.time - t) > 1e-9:
        raise ValueError(f"t={t} is not on the sample grid of spacing {spec.sample_dt}")
    return last


def unitarity_defect(W: DensePropagator | np.ndarray) -> float:
    """max |W^dagger W - 1|."""
    m = W.matrix if isinstance(W, DensePropagator) else W
    gram = m.conj().T @ m
    gram[np.diag_indices_from(gram)] -= 1.0
    return float(np.abs(gram).max())
