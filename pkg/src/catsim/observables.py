"""Periodicized observables of the large particle and trace functionals.

The invariant density is the identity over ``dim``; ``<X>`` below means
Trace(X) / dim.

* ACF   C(t)  = <W^dagger q W q>
* OTOC  O(t)  = <[Q(t), P][Q(t), P]^dagger> = O+(t) - O-(t)
* O+(t) = 2 <P^2 Q(t)^2>,  O-(t) = 2 <P Q(t) P Q(t)>

with Q(t) = W^dagger q W, q = sin(2 pi j0/N) and P = -sin(2 pi k0/N) in the
large particle's momentum representation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._backend import kernels
from .kinematics import MOMENTUM, POSITION, Geometry, dft, particle_axis
from .propagators import DensePropagator, PropagatorSpec, accumulate, flow_spectrum

UNITARITY_WARN = 1e-8
IMAG_TOL = 1e-10


@dataclass
class TimeSeries:
    """Samples (t, value) with free-form metadata."""

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    def __len__(self):
        return self.times.size

    def at(self, t: float, tol: float = 1e-9) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise KeyError(f"no sample at t={t}")
        return float(self.values[i])

    def window(self, lo: float, hi: float) -> "TimeSeries":
        m = (self.times >= lo - 1e-12) & (self.times <= hi + 1e-12)
        return TimeSeries(self.times[m], self.values[m], dict(self.meta))


@dataclass(frozen=True)
class ObservableDiag:
    rep: str
    values: np.ndarray


def q_diag(g: Geometry) -> ObservableDiag:
    """sin(2 pi j0 / N) over the joint position basis (flat)."""
    j0 = np.arange(g.dim) % g.n_cat
    return ObservableDiag(POSITION, np.sin(2 * math.pi * j0 / g.n_cat))


def p_diag(g: Geometry) -> ObservableDiag:
    """-sin(2 pi k0 / N) over large-particle momentum (flat, small particles untouched)."""
    k0 = np.arange(g.dim) % g.n_cat
    return ObservableDiag(MOMENTUM, -np.sin(2 * math.pi * k0 / g.n_cat))


def _rows(W: DensePropagator | np.ndarray) -> np.ndarray:
    m = W.matrix if isinstance(W, DensePropagator) else np.asarray(W)
    return np.ascontiguousarray(m.T, dtype=np.complex128)


def _check_norms(rows: np.ndarray):
    # column norms only: a full W^dagger W check costs a dense product
    dev = np.abs(np.einsum("ij,ij->i", rows, rows.conj()).real - 1.0).max()
    if dev > UNITARITY_WARN:
        warnings.warn(f"propagator columns deviate from unit norm by {dev:.3g}", RuntimeWarning)


def acf(W, g: Geometry) -> float:
    """C(t) = sum_jk q_j q_k |W_kj|^2 / dim. Only |W|^2 is needed."""
    rows = _rows(W)
    _check_norms(rows)
    q = q_diag(g).values
    return kernels.weighted_abs2(rows, q, q) / g.dim


def _momentum_rows(rows: np.ndarray, g: Geometry) -> np.ndarray:
    """(W F0^dagger)^T: input index of W rotated to large-particle momentum.

    F0 is symmetric, so the transpose is conj(F0) applied along the first axis.
    """
    x = rows.reshape(g.shape + (g.dim,))
    out = dft(x, (particle_axis(0, g),), inverse=True)
    return np.ascontiguousarray(out.reshape(g.dim, g.dim))


class OtocParts(NamedTuple):
    otoc: float
    plus: float
    minus: float


def otoc_parts(W, g: Geometry) -> OtocParts:
    """O, O+ and O- from shared intermediates.

    With B = W F0^dagger: O+ = 2/dim sum_ab p_a^2 q_b^2 |B_ba|^2 and
    O- = 2/dim Tr[(p Y)^2] with Y = B^dagger q B (one dense product).
    """
    rows = _rows(W)
    _check_norms(rows)
    q = q_diag(g).values
    p = p_diag(g).values
    bt = _momentum_rows(rows, g)
    plus = 2.0 * kernels.weighted_abs2(bt, p * p, q * q) / g.dim
    y = bt.conj() @ (bt * q).T
    tr = kernels.weighted_trace_square(np.ascontiguousarray(y), p)
    minus_c = 2.0 * tr / g.dim
    if abs(minus_c.imag) > IMAG_TOL:
        raise ArithmeticError(f"O- has imaginary residue {minus_c.imag:.3g}")
    minus = float(minus_c.real)
    return OtocParts(plus - minus, plus, minus)


def otoc_plus(W, g: Geometry) -> float:
    rows = _rows(W)
    _check_norms(rows)
    q = q_diag(g).values
    p = p_diag(g).values
    return 2.0 * kernels.weighted_abs2(_momentum_rows(rows, g), p * p, q * q) / g.dim


def otoc_minus(W, g: Geometry) -> float:
    return otoc_parts(W, g).minus


def otoc(W, g: Geometry) -> float:
    return otoc_parts(W, g).otoc


def _meta(spec: PropagatorSpec, quantity: str) -> dict:
    g = spec.geometry
    return {
        "quantity": quantity,
        "n_cat": g.n_cat,
        "nu": g.nu,
        "n_small": g.n_small,
        "shifts": list(g.shifts),
        "eta": spec.eta,
        "kappa": spec.kappa,
        "n_substeps": spec.n_substeps,
        "sample_dt": spec.sample_dt,
    }


def acf_series(spec: PropagatorSpec, t_max: float, doubled: bool = False, **kw) -> TimeSeries:
    """C(t) on the sample grid of ``spec``; ``doubled`` reports 2C(t)."""
    g = spec.geometry
    ts, vs = [], []
    for W in accumulate(spec, t_max, **kw):
        ts.append(W.time)
        vs.append(acf(W, g))
    vals = np.array(vs) * (2.0 if doubled else 1.0)
    meta = _meta(spec, "2C" if doubled else "C")
    meta["doubled"] = doubled
    return TimeSeries(np.array(ts), vals, meta)


def acf_series_spectral(spec: PropagatorSpec, t_max: float, doubled: bool = False, chunk: int = 256) -> TimeSeries:
    """C(t) for an unkicked system (eta = 0) from the spectrum of the flow generator.

    With W(t) = V exp(-iEt) V^dagger and a_mn = |(V^dagger q V)_mn|^2,
    C(t) = Re[e(t)^T a conj(e(t))] / dim where e_m(t) = exp(i E_m t).
    Exact in t, so the sample grid needs no relation to any substep.
    """
    if spec.eta != 0:
        raise ValueError("spectral ACF needs a time-independent generator (eta = 0)")
    g = spec.geometry
    energies, vecs = flow_spectrum(spec)
    q = q_diag(g).values
    qe = vecs.conj().T @ (q[:, None] * vecs)
    a = qe.real**2 + qe.imag**2
    n = int(np.floor(t_max / spec.sample_dt + 1e-9))
    times = np.arange(n + 1) * spec.sample_dt
    vals = np.empty(n + 1)
    for lo in range(0, n + 1, chunk):
        tc = times[lo : lo + chunk]
        ph = np.exp(1j * np.outer(energies, tc))
        vals[lo : lo + chunk] = np.einsum("mt,mt->t", ph, a @ ph.conj()).real / g.dim
    vals *= 2.0 if doubled else 1.0
    meta = _meta(spec, "2C" if doubled else "C")
    meta["doubled"] = doubled
    meta["flow"] = "spectral"
    return TimeSeries(times, vals, meta)


def otoc_series(spec: PropagatorSpec, t_max: float, otoc_dt: float | None = None, **kw) -> dict[str, TimeSeries]:
    """O, O+ and O- sampled every ``otoc_dt`` (default 1, clipped to the sample grid)."""
    g = spec.geometry
    every = max(1, int(round((otoc_dt or 1.0) / spec.sample_dt)))
    rows: list[tuple[float, OtocParts]] = []
    for i, W in enumerate(accumulate(spec, t_max, **kw)):
        if i % every == 0:
            rows.append((W.time, otoc_parts(W, g)))
    t = np.array([r[0] for r in rows])
    out = {}
    for name, k in (("O", 0), ("O_plus", 1), ("O_minus", 2)):
        out[name] = TimeSeries(t, np.array([r[1][k] for r in rows]), _meta(spec, name))
    return out
