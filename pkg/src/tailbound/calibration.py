"""Data-driven calibration of the shape parameters and moment sets.

Boundary parameters (density and density-derivative at the threshold) come
from bootstrap percentiles of a Gaussian kernel estimate; moment sets come
from the multivariate CLT (chi-squared ellipsoid) or the
Kolmogorov-Smirnov limit (rectangle), with a Bonferroni budget that splits
the family-wise level across every simultaneously calibrated constraint
and across thresholds.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._kernels import gauss_kde_stats, tail_ks_stat
from .model import (
    Ellipsoid,
    MomentSpec,
    PiecewisePoly,
    Rectangle,
    ShapeSpec,
    TailSample,
    ValidationError,
)

__all__ = [
    "CalibrationConfig",
    "BudgetSplit",
    "silverman_bandwidth",
    "kde_density",
    "kde_density_derivative",
    "bonferroni_split",
    "calibrate_shape",
    "calibrate_ellipsoid",
    "calibrate_rectangle",
    "bootstrap_radius",
    "chi2_quantile",
    "kolmogorov_quantile",
    "power_generators",
    "ellipsoid_moment_spec",
]

MIN_TAIL_POINTS = 30


@dataclass(frozen=True)
class CalibrationConfig:
    """Family-wise level, bootstrap size, bandwidth policy and RNG seed."""

    alpha: float = 0.05
    bootstrap_B: int = 500
    kde_bandwidth: float | str = "auto"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0,1)")
        if self.bootstrap_B < 100:
            raise ValidationError("bootstrap_B must be at least 100")
        if self.kde_bandwidth != "auto" and not float(self.kde_bandwidth) > 0:
            raise ValidationError("bandwidth must be 'auto' or positive")

    def to_json(self) -> str:
        return json.dumps({"alpha": self.alpha, "bootstrap_B": self.bootstrap_B,
                           "bandwidth": self.kde_bandwidth, "seed": self.seed})

    @staticmethod
    def from_json(payload: str | dict) -> "CalibrationConfig":
        d = json.loads(payload) if isinstance(payload, str) else dict(payload)
        return CalibrationConfig(
            alpha=d.get("alpha", 0.05),
            bootstrap_B=d.get("bootstrap_B", 500),
            kde_bandwidth=d.get("bandwidth", d.get("kde_bandwidth", "auto")),
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class BudgetSplit:
    """Per-constraint confidence levels after the Bonferroni correction.

    For shape order 1 the density cap and the moment set each get level
    1 - alpha/(m+1). For order 2 the moment set and the derivative floor
    get 1 - alpha/(2m+1) and the density interval uses the
    alpha/(4m+2) and 1 - alpha/(4m+2) bootstrap percentiles.
    """

    D: int
    m: int
    alpha: float
    moment_level: float
    eta_level: float | None = None
    eta_lo_q: float | None = None
    eta_hi_q: float | None = None
    nu_q: float | None = None

    def budget_total(self) -> float:
        """Family-wise error the split spends (should equal alpha)."""
        if self.D == 0:
            return self.m * (1 - self.moment_level)
        if self.D == 1:
            return self.m * ((1 - self.moment_level) + (1 - self.eta_level))
        return self.m * ((1 - self.moment_level) + 2 * self.eta_lo_q
                         + self.nu_q)


def bonferroni_split(alpha: float, D: int, m: int = 1,
                     set_kind: str = "ellipsoid") -> BudgetSplit:
    """Split the family-wise level alpha across constraints and thresholds."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0,1)")
    if m < 1:
        raise ValidationError("need m >= 1 thresholds")
    if set_kind not in ("ellipsoid", "rectangle"):
        raise ValidationError("set_kind must be 'ellipsoid' or 'rectangle'")
    if D == 0:
        return BudgetSplit(D=0, m=m, alpha=alpha, moment_level=1 - alpha / m)
    if D == 1:
        level = 1 - alpha / (m + 1)
        return BudgetSplit(D=1, m=m, alpha=alpha, moment_level=level,
                           eta_level=level)
    if D == 2:
        level = 1 - alpha / (2 * m + 1)
        tail_q = alpha / (4 * m + 2)
        return BudgetSplit(D=2, m=m, alpha=alpha, moment_level=level,
                           eta_lo_q=tail_q, eta_hi_q=1 - tail_q,
                           nu_q=alpha / (2 * m + 1))
    raise ValidationError("shape order must be 0, 1 or 2")


# ---------------------------------------------------------------------------
# Kernel density estimation
# ---------------------------------------------------------------------------

def silverman_bandwidth(values: np.ndarray) -> float:
    """1.06 * sigma_hat * n^(-1/5)."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values, ddof=1))
    if sd == 0.0:
        sd = max(abs(float(values[0])), 1.0) * 1e-3
    return 1.06 * sd * values.size ** (-0.2)


def _resolve_bandwidth(values, bandwidth) -> float:
    if bandwidth == "auto" or bandwidth is None:
        return silverman_bandwidth(values)
    return float(bandwidth)


def kde_density(sample: TailSample | np.ndarray, x: float,
                bandwidth: float | str = "auto") -> float:
    """Gaussian-kernel density estimate at x."""
    values = sample.values if isinstance(sample, TailSample) else np.asarray(sample, float)
    h = _resolve_bandwidth(values, bandwidth)
    dens, _ = gauss_kde_stats(float(x), np.ascontiguousarray(values[None, :]),
                              np.array([h]))
    return float(dens[0])


def kde_density_derivative(sample: TailSample | np.ndarray, x: float,
                           bandwidth: float | str = "auto") -> float:
    """Derivative of the Gaussian-kernel density estimate at x."""
    values = sample.values if isinstance(sample, TailSample) else np.asarray(sample, float)
    h = _resolve_bandwidth(values, bandwidth)
    _, deriv = gauss_kde_stats(float(x), np.ascontiguousarray(values[None, :]),
                               np.array([h]))
    return float(deriv[0])


# ---------------------------------------------------------------------------
# Bootstrap machinery
# ---------------------------------------------------------------------------

def _resample_matrix(sample: TailSample, config: CalibrationConfig) -> np.ndarray:
    """(B, n) matrix of bootstrap resamples, one counter-based Philox
    stream per resample so rows are reproducible independently of order."""
    n = sample.n
    root = np.random.SeedSequence(config.seed)
    out = np.empty((config.bootstrap_B, n))
    for b, child in enumerate(root.spawn(config.bootstrap_B)):
        rng = np.random.Generator(np.random.Philox(child))
        out[b] = sample.values[rng.integers(0, n, size=n)]
    return out


def _bootstrap_density_stats(sample: TailSample, a: float,
                             config: CalibrationConfig):
    mat = _resample_matrix(sample, config)
    if config.kde_bandwidth == "auto":
        sds = np.std(mat, axis=1, ddof=1)
        sds[sds == 0.0] = max(abs(a), 1.0) * 1e-3
        bws = 1.06 * sds * sample.n ** (-0.2)
    else:
        bws = np.full(mat.shape[0], float(config.kde_bandwidth))
    return gauss_kde_stats(float(a), np.ascontiguousarray(mat), bws)


def calibrate_shape(sample: TailSample, a: float, D: int, split: BudgetSplit,
                    config: CalibrationConfig) -> ShapeSpec:
    """Boundary parameters at the threshold from bootstrap percentiles of
    the kernel density (and its derivative, for the convex class)."""
    if D == 0:
        return ShapeSpec(order=0)
    n_tail = int(np.sum(sample.values >= a))
    if n_tail < MIN_TAIL_POINTS:
        raise ValidationError(
            f"only {n_tail} sample points above the threshold; need "
            f"{MIN_TAIL_POINTS} for boundary calibration")
    dens, deriv = _bootstrap_density_stats(sample, a, config)
    if D == 1:
        eta = max(0.0, float(np.quantile(dens, split.eta_level)))
        return ShapeSpec(order=1, eta=eta)
    if D == 2:
        eta_lo = max(0.0, float(np.quantile(dens, split.eta_lo_q)))
        eta_hi = max(0.0, float(np.quantile(dens, split.eta_hi_q)))
        eta_lo = min(eta_lo, eta_hi)
        nu = max(0.0, -float(np.quantile(deriv, split.nu_q)))
        if nu == 0.0 and eta_hi == 0.0:
            warnings.warn("degenerate shape calibration: nu = eta_hi = 0",
                          RuntimeWarning)
        return ShapeSpec(order=2, eta_lo=eta_lo, eta_hi=eta_hi, nu=nu)
    raise ValidationError("shape order must be 0, 1 or 2")


# ---------------------------------------------------------------------------
# Moment sets
# ---------------------------------------------------------------------------

def chi2_quantile(level: float, d: int) -> float:
    return float(stats.chi2.ppf(level, d))


def kolmogorov_quantile(level: float) -> float:
    """Quantile of the limiting Kolmogorov distribution sup |B(t) - tB(1)|."""
    return float(stats.kstwobign.ppf(level))


def power_generators(a: float, powers=(0, 1)) -> tuple:
    """Generators x^p * I(x >= a); p = 0 gives the mandatory tail-mass
    indicator."""
    if tuple(powers)[0] != 0:
        powers = (0,) + tuple(powers)
    return tuple(PiecewisePoly.power(a, int(p)) for p in powers)


def _generator_matrix(generators, values: np.ndarray) -> np.ndarray:
    return np.column_stack([g(values) for g in generators])


def calibrate_ellipsoid(sample: TailSample, a: float, generators,
                        level: float):
    """CLT ellipsoid: sample mean and covariance of g(X) over the full
    sample, radius chi2_d(level)/n."""
    gmat = _generator_matrix(generators, sample.values)
    mu = gmat.mean(axis=0)
    sigma = np.cov(gmat, rowvar=False, ddof=1)
    sigma = np.atleast_2d(sigma)
    d = len(generators)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        ridge = 1e-8 * max(np.trace(sigma), 1e-300)
        sigma = sigma + ridge * np.eye(d)
        warnings.warn("singular moment covariance; ridge-regularized",
                      RuntimeWarning)
        np.linalg.cholesky(sigma)
    r = chi2_quantile(level, d) / sample.n
    return mu, sigma, r


def ellipsoid_moment_spec(sample: TailSample, a: float, level: float,
                          powers=(0, 1)) -> MomentSpec:
    """MomentSpec with power-moment generators and the CLT ellipsoid."""
    gens = power_generators(a, powers)
    mu, sigma, r = calibrate_ellipsoid(sample, a, gens, level)
    return MomentSpec(generators=gens, set=Ellipsoid(mu, sigma, r))


def calibrate_rectangle(sample: TailSample, a: float, level: float,
                        max_points: int = 50) -> MomentSpec:
    """KS rectangle over interval indicators I(a <= x <= x_j) for at most
    max_points evenly spaced tail order statistics, plus the tail-mass
    indicator; half-width is the Kolmogorov quantile over sqrt(n)."""
    if not np.any(sample.values >= a):
        raise ValidationError("no sample points above the threshold")
    tail = np.unique(sample.values[sample.values > a])
    n = sample.n
    if tail.size <= max_points:
        points = tail
    else:
        idx = np.unique(np.linspace(0, tail.size - 1, max_points).round().astype(int))
        points = tail[idx]
    z = kolmogorov_quantile(level) / np.sqrt(n)
    gens = [PiecewisePoly.indicator_at_least(a)]
    freqs = [float(np.mean(sample.values >= a))]
    for xj in points:
        gens.append(PiecewisePoly.indicator_interval(a, a, float(xj)))
        freqs.append(float(np.mean((sample.values >= a) & (sample.values <= xj))))
    freqs = np.array(freqs)
    lo = np.clip(freqs - z, 0.0, 1.0)
    hi = np.clip(freqs + z, 0.0, 1.0)
    return MomentSpec(generators=tuple(gens), set=Rectangle(lo, hi))


def bootstrap_radius(sample: TailSample, thresholds, generators, delta: float,
                     config: CalibrationConfig, kind: str = "ellipsoid") -> float:
    """Bootstrap alternative to the analytic radius.

    kind='ellipsoid': Delta-quantile over resamples of the max-over-
    thresholds quadratic form n (mu_b - mu_hat)' Sigma_hat^{-1}
    (mu_b - mu_hat), with generators[i] the generator tuple anchored at
    thresholds[i]. The ellipsoid radius is then z/n.

    kind='rectangle': Delta-quantile of the max-over-thresholds tail KS
    discrepancy, already divided by sqrt(n) (a probability half-width).
    """
    if not 0.0 < delta <= 1.0:
        raise ValidationError("delta must lie in (0,1]")
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    mat = _resample_matrix(sample, config)
    B, n = mat.shape
    if kind == "ellipsoid":
        stats_b = np.zeros(B)
        for gens in (generators if isinstance(generators[0], (list, tuple))
                     else [generators]):
            gmat = _generator_matrix(gens, sample.values)
            mu = gmat.mean(axis=0)
            sigma = np.atleast_2d(np.cov(gmat, rowvar=False, ddof=1))
            sig_inv = np.linalg.pinv(sigma)
            for b in range(B):
                gb = _generator_matrix(gens, mat[b]).mean(axis=0)
                d = gb - mu
                stats_b[b] = max(stats_b[b], n * float(d @ sig_inv @ d))
        return float(np.quantile(stats_b, delta))
    if kind == "rectangle":
        stats_b = np.empty(B)
        for b in range(B):
            rb = np.sort(mat[b])
            stats_b[b] = np.sqrt(n) * tail_ks_stat(sample.values, rb, thresholds)
        return float(np.quantile(stats_b, delta)) / np.sqrt(n)
    raise ValidationError("kind must be 'ellipsoid' or 'rectangle'")
