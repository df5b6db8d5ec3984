"""Stepping-kernel backends.

The compiled extension is preferred; the pure-Python twin is selected when
the extension is unavailable or BRANCHFLOW_PURE_PYTHON=1 is set. Both
implement the same counter-based streams and produce bit-identical
trajectories, so the choice affects speed only (see benchmarks/).
"""

from __future__ import annotations

import os

from .errors import PopulationCapError

MASK64 = (1 << 64) - 1

from . import purepy as _purepy

if os.environ.get("BRANCHFLOW_PURE_PYTHON", "") not in ("", "0"):
    _impl = _purepy
    HAVE_COMPILED = False
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        HAVE_COMPILED = True
    except ImportError:
        _impl = _purepy
        HAVE_COMPILED = False


def backend_name() -> str:
    return "compiled" if _impl is not _purepy else "python"


def get_backend(name: str | None = None):
    """Backend module by name ("compiled" | "python" | None for the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _purepy
    if name == "compiled":
        from . import _core  # raises ImportError when not built

        return _core
    raise ValueError(f"unknown backend {name!r}")


def stream_state(master: int, replicate: int, generation: int, site: int) -> int:
    return _impl.stream_state(int(master) & MASK64, replicate, generation, site)


def step_site_once(count, support, cond, cdf, master, replicate, generation, site, cap,
                   backend=None) -> int:
    impl = get_backend(backend)
    return impl.step_site_once(count, support, cond, cdf, int(master) & MASK64,
                               replicate, generation, site, cap)


def run_independent(init_counts, site_table, support_cat, cond_cat, cdf_cat, offsets,
                    master, rep0, n_reps, n_gens, snap_gens, cap, backend=None):
    impl = get_backend(backend)
    return impl.run_independent(init_counts, site_table, support_cat, cond_cat, cdf_cat,
                                offsets, int(master) & MASK64, rep0, n_reps, n_gens,
                                snap_gens, cap)


def run_interactive(init_counts, g0_support, g0_cond, g0_cdf,
                    h_support_cat, h_cond_cat, h_cdf_cat, h_offsets,
                    master, rep0, n_reps, n_gens, snap_gens, cap, backend=None):
    impl = get_backend(backend)
    return impl.run_interactive(init_counts, g0_support, g0_cond, g0_cdf,
                                h_support_cat, h_cond_cat, h_cdf_cat, h_offsets,
                                int(master) & MASK64, rep0, n_reps, n_gens,
                                snap_gens, cap)


__all__ = [
    "PopulationCapError",
    "HAVE_COMPILED",
    "backend_name",
    "get_backend",
    "stream_state",
    "step_site_once",
    "run_independent",
    "run_interactive",
]
