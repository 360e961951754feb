"""Experiment runner.

    catsim <mode> [--config PATH] [--key value ...]

Modes: acf, otoc, classical-acf, period, fit. The config file holds
``key = value`` lines ('#' starts a comment); command-line ``--key value``
pairs override it. Keys are the fields of :class:`ExperimentConfig`
(dashes and underscores are interchangeable on the command line).

Exit status: 0 ok, 2 invalid config, 3 memory budget, 4 unreadable input,
5 numerical or fit failure. ``CATSIM_THREADS`` caps FFT and BLAS threads
(0 or unset: one per CPU).
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._backend import fft_workers
from .analysis import (
    FitError,
    cumulative_abs,
    delta_c,
    delta_o,
    early_slope,
    fit_power_decay,
    fit_saturation,
    late_time_mean,
    log2t_window,
    log_one_minus_rho,
    rho_kappa,
)
from .classical import classical_acf, lattice_period
from .kinematics import GeometryError, build_geometry
from .observables import TimeSeries, acf_series, acf_series_spectral, otoc_series
from .propagators import DEFAULT_MEMORY_BUDGET, MemoryBudgetError, PropagatorSpec

MODES = ("acf", "otoc", "classical-acf", "period", "fit")
FIT_KINDS = ("power-decay", "saturation", "rho")
CLI_FLOWS = ("trotter", "exact", "spectral")

EXIT_CONFIG, EXIT_MEMORY, EXIT_IO, EXIT_NUMERIC = 2, 3, 4, 5


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class ExperimentConfig:
    mode: str = "acf"
    n_cat_exp: int = 5
    nu_exp: int = 1
    n_small: int = 0
    shifts: tuple = ()
    eta: int = 0
    kappa: float = 0.0
    t_max: float = 10.0
    sample_dt: float = 1.0
    n_substeps: int = 32
    flow: str = "trotter"
    symmetric_momenta: bool = False
    double_acf: bool = False
    otoc_dt: float = 1.0
    out_path: str = "catsim_out.csv"
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET
    fit_kind: str = "power-decay"
    fit_window: tuple = ()
    fit_window_scale: str = "t"
    late_fraction: float = 0.25
    in_paths: tuple = field(default=())

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        if self.t_max <= 0:
            raise ConfigError("t_max", "must be > 0")
        if self.sample_dt <= 0 or abs(1 / self.sample_dt - round(1 / self.sample_dt)) > 1e-9:
            raise ConfigError("sample_dt", "must divide 1")
        if self.flow not in CLI_FLOWS:
            raise ConfigError("flow", f"must be one of {CLI_FLOWS}")
        if self.fit_kind not in FIT_KINDS:
            raise ConfigError("fit_kind", f"must be one of {FIT_KINDS}")
        if self.fit_window_scale not in ("t", "log2t"):
            raise ConfigError("fit_window_scale", "must be 't' or 'log2t'")
        if self.fit_window and len(self.fit_window) != 2:
            raise ConfigError("fit_window", "needs two numbers lo,hi")
        if self.mode == "fit" and not self.in_paths:
            raise ConfigError("in_paths", "fit mode needs at least one input CSV")
        if self.mode in ("acf", "otoc", "period"):
            try:
                self.geometry()
            except GeometryError as exc:
                raise ConfigError("n_cat_exp/nu_exp/n_small/shifts", str(exc)) from None
        if self.mode in ("acf", "otoc"):
            try:
                self.spec()
            except ValueError as exc:
                raise ConfigError("eta/kappa/n_substeps/sample_dt", str(exc)) from None
        return self

    def geometry(self):
        return build_geometry(self.n_cat_exp, self.nu_exp, self.n_small, list(self.shifts))

    def spec(self) -> PropagatorSpec:
        flow = "exact" if self.flow == "spectral" else self.flow
        return PropagatorSpec(
            self.geometry(),
            eta=self.eta,
            kappa=self.kappa,
            n_substeps=self.n_substeps,
            sample_dt=self.sample_dt,
            symmetric_momenta=self.symmetric_momenta,
            flow=flow,
        )

    def window(self):
        if not self.fit_window:
            return None
        lo, hi = self.fit_window
        return log2t_window(lo, hi) if self.fit_window_scale == "log2t" else (lo, hi)

    def items(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(key, "unknown key")
    default = _FIELDS[key].default
    if default is dataclasses.MISSING:
        default = _FIELDS[key].default_factory()
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in _BOOL:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError(f"not an integer: {raw!r}")
            return int(v)
        if isinstance(default, float):
            return _parse_number(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.replace(";", ",").split(",") if p.strip()]
            if key == "shifts":
                return tuple(int(p) for p in parts)
            if key == "fit_window":
                return tuple(_parse_number(p) for p in parts)
            return tuple(parts)
        return raw
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _parse_number(raw: str) -> float:
    if "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    return float(raw)


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def build_config(mode: str, file_values: dict[str, str], overrides: dict[str, str]) -> ExperimentConfig:
    values = {"mode": mode}
    for src in (file_values, overrides):
        for k, raw in src.items():
            if k == "mode":
                continue
            values[k] = _coerce(k, raw)
    return ExperimentConfig(**values).validate()


# CSV io


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def write_csv(path, columns: dict[str, np.ndarray], cfg: ExperimentConfig, extra_meta: dict | None = None):
    lines = [f"# catsim {__version__}", f"# generated: {_dt.datetime.now().isoformat(timespec='seconds')}"]
    for k, v in cfg.items():
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"# {k} = {v}")
    for k, v in (extra_meta or {}).items():
        lines.append(f"# {k} = {v}")
    names = list(columns)
    lines.append(",".join(names))
    n = len(next(iter(columns.values())))
    for i in range(n):
        lines.append(",".join(_fmt(columns[c][i]) for c in names))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Columns and '# key = value' header metadata of a catsim CSV."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from None
    meta, header, rows = {}, None, []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise OSError(f"{path}: malformed data row {line!r}") from None
    if header is None or not rows:
        raise OSError(f"{path}: no data")
    arr = np.array(rows)
    if arr.shape[1] != len(header):
        raise OSError(f"{path}: {arr.shape[1]} values per row but {len(header)} columns")
    return {h: arr[:, i] for i, h in enumerate(header)}, meta


# modes


def run_acf(cfg: ExperimentConfig):
    spec = cfg.spec()
    if cfg.flow == "spectral":
        c = acf_series_spectral(spec, cfg.t_max, doubled=cfg.double_acf)
    else:
        c = acf_series(spec, cfg.t_max, doubled=cfg.double_acf, memory_budget=cfg.memory_budget_bytes)
    dc = delta_c(c)
    cname = "2C" if cfg.double_acf else "C"
    cols = {
        "t": c.times,
        cname: c.values,
        "dC": dc.values,
        "sigma_abs_dC": cumulative_abs(dc).values,
        "sigma_abs_C": cumulative_abs(c).values,
    }
    write_csv(cfg.out_path, cols, cfg)
    print(f"wrote {cfg.out_path} ({len(c)} samples)")


def run_otoc(cfg: ExperimentConfig):
    spec = cfg.spec()
    s = otoc_series(spec, cfg.t_max, otoc_dt=cfg.otoc_dt, memory_budget=cfg.memory_budget_bytes)
    o = s["O"]
    d = delta_o(o, spec.geometry)
    d_full = np.full(len(o), np.nan)
    d_full[np.isin(o.times, d.times)] = d.values
    cols = {"t": o.times, "O": o.values, "O_plus": s["O_plus"].values, "O_minus": s["O_minus"].values, "dO": d_full}
    write_csv(cfg.out_path, cols, cfg)
    print(f"wrote {cfg.out_path} ({len(o)} samples)")


def run_classical_acf(cfg: ExperimentConfig):
    n = int(math.floor(cfg.t_max / cfg.sample_dt + 1e-9))
    t = np.arange(n + 1) * cfg.sample_dt
    c = classical_acf(t) * (2.0 if cfg.double_acf else 1.0)
    write_csv(cfg.out_path, {"t": t, "2C_cl" if cfg.double_acf else "C_cl": c}, cfg)
    print(f"wrote {cfg.out_path} ({t.size} samples)")


def run_period(cfg: ExperimentConfig):
    n = 2**cfg.n_cat_exp
    if n < 2:
        raise ConfigError("n_cat_exp", "lattice period needs N >= 2")
    print(f"tau={lattice_period(n)}")


def _series_from(cols, meta, name) -> TimeSeries:
    if name not in cols:
        raise OSError(f"input has no column {name!r}; columns are {list(cols)}")
    return TimeSeries(cols["t"], cols[name], dict(meta))


def run_fit(cfg: ExperimentConfig):
    inputs = [read_csv(p) for p in cfg.in_paths]
    report: dict[str, object] = {"fit_kind": cfg.fit_kind}
    window = cfg.window()
    if cfg.fit_kind == "power-decay":
        if window is None:
            raise ConfigError("fit_window", "power-decay fit needs a window")
        cols, meta = inputs[0]
        if "sigma_abs_C" in cols:
            s = _series_from(cols, meta, "sigma_abs_C")
        else:
            cname = "2C" if "2C" in cols else "C"
            s = cumulative_abs(_series_from(cols, meta, cname))
        f = fit_power_decay(s, window)
        report.update({"kappa": meta.get("kappa", "?"), "A": f["A"], "B": f["B"], "d": f["d"], "residual": f.residual})
        report["window"] = f"{window[0]:.6g},{window[1]:.6g}"
    elif cfg.fit_kind == "saturation":
        pts = []
        for cols, meta in inputs:
            o = _series_from(cols, meta, "O")
            g = build_geometry(int(meta["n_cat_exp"]), int(meta["nu_exp"]), int(meta["n_small"]), [])
            d = delta_o(o, g)
            k = float(meta["kappa"])
            v = late_time_mean(d, cfg.late_fraction)
            pts.append((k, v))
            report[f"dO_inf[kappa={k:g}]"] = v
        f = fit_saturation(pts)
        report.update({"a": f["a"], "intercept": f["intercept"], "residual": f.residual})
    else:
        if window is None:
            raise ConfigError("fit_window", "rho fit needs a window")
        ref = [x for x in inputs if float(x[1].get("kappa", "nan")) == 0.0]
        if not ref:
            raise ConfigError("in_paths", "rho fit needs one input with kappa = 0")
        o0 = _series_from(ref[0][0], ref[0][1], "O_minus")
        for cols, meta in inputs:
            k = float(meta["kappa"])
            if k == 0.0:
                continue
            r = rho_kappa(o0, _series_from(cols, meta, "O_minus"))
            f = early_slope(log_one_minus_rho(r), window)
            report[f"slope[kappa={k:g}]"] = f["slope"]
            report[f"intercept[kappa={k:g}]"] = f["intercept"]
    text = "\n".join(f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in report.items())
    print(text)
    if cfg.out_path and cfg.out_path != ExperimentConfig.out_path:
        Path(cfg.out_path).write_text(text + "\n")


RUNNERS = {
    "acf": run_acf,
    "otoc": run_otoc,
    "classical-acf": run_classical_acf,
    "period": run_period,
    "fit": run_fit,
}


def _parse_overrides(rest: list[str]) -> dict[str, str]:
    out = {}
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise ConfigError(tok, "expected --key value")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise ConfigError(key, "missing value")
            val = rest[i + 1]
            i += 2
        out[key.replace("-", "_")] = val
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="catsim", description="Multi-particle quantum cat simulations.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="key = value file")
    args, rest = parser.parse_known_args(argv)
    try:
        try:
            threads = fft_workers()
        except ValueError as exc:
            raise ConfigError("CATSIM_THREADS", str(exc)) from None
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(args.mode, file_values, _parse_overrides(rest))
        # FFT workers read the variable directly; BLAS is capped here
        with threadpool_limits(limits=threads):
            RUNNERS[cfg.mode](cfg)
    except ConfigError as exc:
        print(f"catsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryBudgetError as exc:
        print(f"catsim: memory budget: {exc}", file=sys.stderr)
        return EXIT_MEMORY
    except OSError as exc:
        print(f"catsim: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FitError, ArithmeticError, ValueError) as exc:
        print(f"catsim: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
