"""Numeric kernel selection: compiled Cython core when available, NumPy
reference otherwise. `BACKEND` records which one is active."""

try:
    from ._fastcore import gauss_kde_stats, piecewise_eval, tail_ks_stat
    BACKEND = "compiled"
except ImportError:
    from ._ref import gauss_kde_stats, piecewise_eval, tail_ks_stat
    BACKEND = "python"

__all__ = ["gauss_kde_stats", "piecewise_eval", "tail_ks_stat", "BACKEND"]
