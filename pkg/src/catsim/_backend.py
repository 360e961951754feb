"""Kernel backend selection.

The compiled extension is used when it imports; ``CATSIM_PURE_PYTHON=1``
forces the numpy fallback. ``CATSIM_THREADS`` caps FFT worker threads
(0 or unset means one worker per CPU).
"""
import os

if os.environ.get("CATSIM_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as kernels

        BACKEND = "python"


def fft_workers():
    raw = os.environ.get("CATSIM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CATSIM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("CATSIM_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


__all__ = ["BACKEND", "kernels", "fft_workers"]
