"""Pure-NumPy reference implementations of the hot kernels.

The compiled module in _fastcore.pyx mirrors these signatures exactly; the
package selects whichever is importable. Keep both sides semantically
identical — the kernel test suite compares them elementwise.
"""

from __future__ import annotations

import numpy as np

_INV_SQRT_2PI = 0.3989422804014327


def piecewise_eval(breaks: np.ndarray, coeffs: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Evaluate a local-coefficient piecewise polynomial at points xs.

    Closed-left/open-right pieces; 0 below breaks[0]; last piece extends
    to +inf.
    """
    xs = np.asarray(xs, dtype=float)
    idx = np.searchsorted(breaks, xs, side="right") - 1
    out = np.zeros_like(xs)
    inside = idx >= 0
    if not np.any(inside):
        return out
    t = xs[inside] - breaks[idx[inside]]
    c = coeffs[idx[inside]]
    acc = np.zeros_like(t)
    for j in range(coeffs.shape[1] - 1, -1, -1):
        acc = acc * t + c[:, j]
    out[inside] = acc
    return out


def gauss_kde_stats(x: float, samples: np.ndarray, bandwidths: np.ndarray):
    """Gaussian-kernel density and density-derivative estimates at x.

    samples: (B, n) resample matrix; bandwidths: (B,). Returns a pair of
    (B,) arrays: f_hat(x) and f_hat'(x) per row.
    """
    h = np.asarray(bandwidths, dtype=float)[:, None]
    u = (x - samples) / h
    k = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    dens = np.mean(k / h, axis=1)
    deriv = np.mean(-u * k / (h * h), axis=1)
    return dens, deriv


def tail_ks_stat(orig_sorted: np.ndarray, resample_sorted: np.ndarray,
                 thresholds: np.ndarray) -> float:
    """Max-over-thresholds two-sided tail KS discrepancy (without sqrt(n)).

    For each threshold a: compare the resample's empirical measure of
    [a, y] with the original sample's, at every resample point y >= a,
    using the step conventions rank/n vs (rank-1)/n.
    """
    n = orig_sorted.size
    best = 0.0
    for a in np.asarray(thresholds, dtype=float):
        j0 = np.searchsorted(resample_sorted, a, side="left")
        ys = resample_sorted[j0:]
        if ys.size == 0:
            continue
        ranks = np.arange(1, ys.size + 1, dtype=float)
        c0 = np.searchsorted(orig_sorted, a, side="left")
        counts = np.searchsorted(orig_sorted, ys, side="right") - c0
        d1 = np.max(ranks / n - counts / n)
        d2 = np.max(counts / n - (ranks - 1.0) / n)
        best = max(best, d1, d2)
    return float(best)
