"""Backend selection for the hot kernels.

The same kernel source (see ``core.py``) runs either compiled by numba or as
plain Python.  ``MFG_EVO_BACKEND`` picks the backend: ``auto`` (default,
numba when importable), ``numba``, or ``numpy``/``python`` for the fallback.
Because both backends execute identical statements, event-driven simulations
are bitwise identical across them; the fallback is simply slow (see
benchmarks/bench_backends.py).
"""

from __future__ import annotations

import functools
import os

import numpy as np

from . import core

_NAMESPACES: dict[str, object] = {}

PY_ENTRY_POINTS = (
    "field", "rk4_integrate", "simulate_events", "tagged_rewards",
    "payoffs", "reward_single", "rates_row", "stream_state", "next_unit",
    "mix64",
)


def _suppress_overflow(fn):
    # splitmix64 relies on wrapping uint64 arithmetic; numpy scalar ops wrap
    # correctly but emit overflow warnings, which numba's machine ops do not
    @functools.wraps(fn)
    def wrapper(*args):
        with np.errstate(over="ignore"):
            return fn(*args)

    return wrapper


def _build_python():
    ns = core.build(lambda f: f)
    for name in PY_ENTRY_POINTS:
        setattr(ns, name, _suppress_overflow(getattr(ns, name)))
    ns.name = "numpy"
    return ns


def _build_numba():
    import numba

    ns = core.build(numba.njit(nogil=True))
    ns.name = "numba"
    return ns


def available_backends() -> list[str]:
    out = ["numpy"]
    try:
        import numba  # noqa: F401

        out.insert(0, "numba")
    except ImportError:
        pass
    return out


def resolve_backend(name: str | None = None) -> str:
    """Resolve an explicit name or the MFG_EVO_BACKEND env setting."""
    if name is None:
        name = os.environ.get("MFG_EVO_BACKEND", "auto").lower()
    if name in ("python", "fallback"):
        name = "numpy"
    if name == "auto":
        return available_backends()[0]
    if name == "numba" and "numba" not in available_backends():
        raise RuntimeError("MFG_EVO_BACKEND=numba but numba is not importable")
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    return name


def get_backend(name: str | None = None):
    name = resolve_backend(name)
    if name not in _NAMESPACES:
        _NAMESPACES[name] = _build_numba() if name == "numba" else _build_python()
    return _NAMESPACES[name]


def thread_count() -> int:
    """Worker cap for parallel replications/multistarts (MFG_EVO_THREADS)."""
    raw = os.environ.get("MFG_EVO_THREADS", "")
    if raw.strip():
        return max(1, int(raw))
    return min(4, os.cpu_count() or 1)
