"""Derived quantities and fits on TimeSeries."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import least_squares

from .classical import classical_acf, lyapunov
from .kinematics import Geometry
from .observables import TimeSeries

D_STARTS = (1.2, 1.6, 2.0, 2.8)
D_BOUNDS = (1.0 + 1e-9, 4.0)
RHO_FLOOR = 1e-12


class FitError(RuntimeError):
    pass


@dataclass
class FitResult:
    params: dict[str, float]
    residual: float
    window: tuple[float, float]
    extra: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]


def _derived(series: TimeSeries, values, quantity: str, **meta) -> TimeSeries:
    m = dict(series.meta)
    m["quantity"] = quantity
    m.update(meta)
    return TimeSeries(series.times.copy(), np.asarray(values, dtype=float), m)


def delta_c(c: TimeSeries) -> TimeSeries:
    """Quantum minus classical ACF, in the normalization of the input."""
    scale = 2.0 if c.meta.get("doubled") else 1.0
    return _derived(c, c.values - scale * classical_acf(c.times), "dC")


def cumulative_abs(series: TimeSeries) -> TimeSeries:
    """Trapezoidal integral of |value| from the first sample to each t."""
    vals = cumulative_trapezoid(np.abs(series.values), series.times, initial=0.0)
    return _derived(series, vals, "sigma_abs_" + str(series.meta.get("quantity", "x")))


def log2t_window(lo: float, hi: float) -> tuple[float, float]:
    """Convert a window on ln(2t) to a window on t."""
    return math.exp(lo) / 2.0, math.exp(hi) / 2.0


def power_decay_model(t, a, b, d):
    return a * (1.0 - b * np.power(t, 1.0 - d))


def fit_power_decay(sigma_abs: TimeSeries, window: tuple[float, float]) -> FitResult:
    """Least-squares fit of S(t) = A (1 - B t^(1-d)) over ``window`` (t units).

    Multi-start over d; for each start A and A*B come from the linear
    problem at fixed d, then all three are refined together.
    """
    lo, hi = window
    if lo <= 0 or hi <= lo:
        raise ValueError(f"bad window {window}")
    if lo < sigma_abs.times[0] - 1e-12 or hi > sigma_abs.times[-1] + 1e-12:
        raise ValueError(f"window {window} outside data range [{sigma_abs.times[0]}, {sigma_abs.times[-1]}]")
    w = sigma_abs.window(lo, hi)
    t, s = w.times, w.values
    if t.size < 4:
        raise FitError(f"only {t.size} samples in window {window}")

    def resid(x):
        return power_decay_model(t, *x) - s

    best = None
    trace = []
    for d0 in D_STARTS:
        basis = np.column_stack([np.ones_like(t), -np.power(t, 1.0 - d0)])
        (a0, ab0), *_ = np.linalg.lstsq(basis, s, rcond=None)
        b0 = ab0 / a0 if a0 != 0 else 0.0
        try:
            r = least_squares(
                resid,
                [a0, b0, d0],
                bounds=([-np.inf, -np.inf, D_BOUNDS[0]], [np.inf, np.inf, D_BOUNDS[1]]),
                method="trf",
                x_scale="jac",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=20000,
            )
        except ValueError as exc:
            trace.append((d0, str(exc)))
            continue
        rms = float(np.sqrt(np.mean(r.fun**2)))
        trace.append((d0, rms))
        key = (round(rms, 14), r.x[2])
        if best is None or key < best[0]:
            best = (key, r, rms)
    if best is None:
        raise FitError(f"power-decay fit did not converge; residual trace {trace}")
    _, r, rms = best
    a, b, d = (float(v) for v in r.x)
    return FitResult({"A": a, "B": b, "d": d}, rms, (lo, hi), {"starts": trace})


def delta_o(o: TimeSeries, g: Geometry) -> TimeSeries:
    """ln O(t) + 2 ln(N / pi); nonpositive samples are dropped and listed in meta['flagged']."""
    ok = o.values > 0
    flagged = [float(t) for t in o.times[~ok]]
    if flagged:
        warnings.warn(f"dropped {len(flagged)} nonpositive OTOC samples", RuntimeWarning)
    vals = np.log(o.values[ok]) + 2.0 * math.log(g.n_cat / math.pi)
    m = dict(o.meta, quantity="dO", flagged=flagged)
    return TimeSeries(o.times[ok], vals, m)


def late_time_mean(series: TimeSeries, fraction: float = 0.25) -> float:
    """Mean over the last ``fraction`` of the time window."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    t0, t1 = series.times[0], series.times[-1]
    cut = t1 - fraction * (t1 - t0)
    return float(series.values[series.times >= cut - 1e-12].mean())


def fit_line(x, y) -> tuple[float, float, float]:
    """Slope, intercept and rms residual of an ordinary least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points for a line")
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((slope * x + intercept - y) ** 2)))
    return float(slope), float(intercept), rms


def fit_saturation(points) -> FitResult:
    """Slope ``a`` of the late-time dO against ln(kappa), from (kappa, value) pairs."""
    pts = sorted(points)
    if len(pts) < 2:
        raise FitError("need at least two kappa values")
    k = np.array([p[0] for p in pts], dtype=float)
    if np.any(k <= 0):
        raise ValueError("kappa values must be > 0")
    v = np.array([p[1] for p in pts], dtype=float)
    slope, intercept, rms = fit_line(np.log(k), v)
    return FitResult({"a": slope, "intercept": intercept}, rms, (float(k[0]), float(k[-1])))


def rho_kappa(o_minus_0: TimeSeries, o_minus_k: TimeSeries) -> TimeSeries:
    """O-(kappa=0; t) / O-(kappa; t) on the common grid.

    Samples where |O-(kappa; t)| < 1e-12 are dropped and listed in meta['flagged'].
    """
    if o_minus_0.times.shape != o_minus_k.times.shape or not np.allclose(o_minus_0.times, o_minus_k.times):
        raise ValueError("series are not on a common grid")
    den = o_minus_k.values
    ok = np.abs(den) >= RHO_FLOOR
    m = dict(o_minus_k.meta, quantity="rho", flagged=[float(t) for t in o_minus_k.times[~ok]])
    return TimeSeries(o_minus_k.times[ok], o_minus_0.values[ok] / den[ok], m)


def log_one_minus_rho(rho: TimeSeries, floor: float = 1e-14) -> TimeSeries:
    """ln|1 - rho(t)|, dropping samples where rho is 1 to within ``floor``.

    Scattering lowers O- below its unperturbed value, which puts rho above
    one; the magnitude carries the exponential law.
    """
    gap = np.abs(1.0 - rho.values)
    ok = gap > floor
    m = dict(rho.meta, quantity="log_one_minus_rho", sign=[float(np.sign(1.0 - v)) for v in rho.values[ok]])
    return TimeSeries(rho.times[ok], np.log(gap[ok]), m)


def early_slope(series: TimeSeries, window: tuple[float, float]) -> FitResult:
    w = series.window(*window)
    slope, intercept, rms = fit_line(w.times, w.values)
    return FitResult({"slope": slope, "intercept": intercept}, rms, window)


def fit_rho_law(logs: dict[float, TimeSeries], window: tuple[float, float]) -> FitResult:
    """Fit ln|1 - rho_kappa(t)| = -C + A(kappa) + s t with A(kappa) = alpha kappa^gamma.

    Per-kappa slopes and intercepts come from independent line fits; the
    intercepts are then fitted by -C + alpha kappa^gamma (needs >= 3 kappas).
    """
    kappas = sorted(logs)
    slopes, intercepts = {}, {}
    for k in kappas:
        f = early_slope(logs[k], window)
        slopes[k] = f["slope"]
        intercepts[k] = f["intercept"]
    params = {"slope_mean": float(np.mean(list(slopes.values())))}
    extra = {"slopes": slopes, "intercepts": intercepts}
    rms = 0.0
    if len(kappas) >= 3:
        k = np.array(kappas, dtype=float)
        y = np.array([intercepts[x] for x in kappas])

        def resid(x):
            c, alpha, gamma = x
            return -c + alpha * k**gamma - y

        r = least_squares(resid, [-y.min() + 1.0, 1.0 / k.max(), 1.0], method="lm", max_nfev=20000)
        params.update({"C": float(r.x[0]), "alpha": float(r.x[1]), "gamma": float(r.x[2])})
        rms = float(np.sqrt(np.mean(r.fun**2)))
    return FitResult(params, rms, window, extra)


def otoc_short_time_model(log_o0, t, c: float, a_kappa: float, n_cat: int, lam: float | None = None, b: float = 0.5):
    """ln O(kappa; t) = ln O(0; t) + ln{1 + delta [B (N/pi)^2 e^(-2 lam t) - 1]}.

    delta = exp(-C + A(kappa) + t/2). Points where the log argument is not
    positive come back as nan.
    """
    lam = lyapunov() if lam is None else lam
    t = np.asarray(t, dtype=float)
    log_o0 = np.asarray(log_o0, dtype=float)
    delta = np.exp(-c + a_kappa + t / 2.0)
    arg = 1.0 + delta * (b * (n_cat / math.pi) ** 2 * np.exp(-2.0 * lam * t) - 1.0)
    bad = arg <= 0
    if np.any(bad):
        warnings.warn(f"{int(np.sum(bad))} model points have a nonpositive log argument", RuntimeWarning)
    out = log_o0 + np.log(np.where(bad, np.nan, arg))
    return float(out) if out.ndim == 0 else out
