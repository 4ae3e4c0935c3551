"""Core immutable data types: samples, thresholds, shape classes, piecewise
polynomials, moment sets and the assembled worst-case problem.

Conventions fixed here and relied on everywhere else:

* all reals are 64-bit floats;
* piecewise polynomials are closed-left / open-right, evaluate to 0 below
  their first breakpoint, and the last piece extends to +inf;
* the empirical q-quantile of a sample of size n is the order statistic
  with 1-based index ceil(q*n).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._kernels import piecewise_eval

MAX_POLY_DEGREE = 4

__all__ = [
    "MAX_POLY_DEGREE",
    "PiecewisePoly",
    "TailSample",
    "ThresholdSpec",
    "ShapeSpec",
    "Ellipsoid",
    "Rectangle",
    "ProductSet",
    "MomentSpec",
    "TailInterval",
    "QuantileObjective",
    "DROProblem",
    "BoundResult",
    "empirical_quantile",
    "build_problem",
]


class ValidationError(ValueError):
    """Raised when a model invariant is violated at construction time."""


# ---------------------------------------------------------------------------
# Piecewise polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewisePoly:
    """Piecewise polynomial on [breaks[0], inf), zero below breaks[0].

    Piece i lives on [breaks[i], breaks[i+1]) (the last piece on
    [breaks[-1], inf)) and is stored in *local* coordinates:

        p(x) = sum_j coeffs[i, j] * (x - breaks[i])**j.

    Local coefficients keep evaluation stable for far-out breakpoints and
    are exactly the shifted coefficients the half-line nonnegativity
    certificate needs.
    """

    breaks: np.ndarray
    coeffs: np.ndarray
    max_degree: int = MAX_POLY_DEGREE

    def __post_init__(self):
        breaks = np.atleast_1d(np.asarray(self.breaks, dtype=float))
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if breaks.ndim != 1 or coeffs.ndim != 2 or coeffs.shape[0] != breaks.size:
            raise ValidationError("breaks/coeffs shape mismatch")
        if breaks.size > 1 and not np.all(np.diff(breaks) > 0):
            raise ValidationError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(breaks)) and np.all(np.isfinite(coeffs))):
            raise ValidationError("non-finite breakpoint or coefficient")
        if coeffs.shape[1] - 1 > self.max_degree:
            raise ValidationError(
                f"degree {coeffs.shape[1] - 1} exceeds max {self.max_degree}")
        breaks.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coeffs", np.ascontiguousarray(coeffs))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(a: float, max_degree: int = MAX_POLY_DEGREE) -> "PiecewisePoly":
        return PiecewisePoly(np.array([a]), np.zeros((1, 1)), max_degree)

    @staticmethod
    def indicator_at_least(a: float, max_degree: int = MAX_POLY_DEGREE) -> "PiecewisePoly":
        """I(x >= a)."""
        return PiecewisePoly(np.array([a]), np.ones((1, 1)), max_degree)

    @staticmethod
    def indicator_interval(a: float, lo: float, hi: float,
                           max_degree: int = MAX_POLY_DEGREE) -> "PiecewisePoly":
        """I(lo <= x <= hi) viewed as a function on [a, inf); hi may be inf."""
        if not a <= lo:
            raise ValidationError("interval indicator must start at or above a")
        if not lo <= hi:
            raise ValidationError("need lo <= hi")
        breaks = [a]
        vals = [1.0 if lo == a else 0.0]
        if lo > a:
            breaks.append(lo)
            vals.append(1.0)
        if np.isfinite(hi) and hi > lo:
            breaks.append(hi)
            vals.append(0.0)
        coeffs = np.array(vals)[:, None]
        return PiecewisePoly(np.array(breaks), coeffs, max_degree)

    @staticmethod
    def power(a: float, degree: int, max_degree: int = MAX_POLY_DEGREE) -> "PiecewisePoly":
        """x**degree * I(x >= a), expanded around a."""
        j = np.arange(degree + 1)
        from scipy.special import comb
        local = comb(degree, j) * a ** (degree - j)
        return PiecewisePoly(np.array([a]), local[None, :], max_degree)

    # -- basic queries -----------------------------------------------------

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def num_pieces(self) -> int:
        return self.breaks.size

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = piecewise_eval(self.breaks, self.coeffs, np.ascontiguousarray(xs))
        return out if np.ndim(x) else float(out[0])

    def piece_coeffs(self, i: int) -> np.ndarray:
        return self.coeffs[i]

    # -- algebra -----------------------------------------------------------

    def _rebased(self, new_breaks: np.ndarray) -> np.ndarray:
        """Local coefficients of self on a refined break grid.

        new_breaks must contain all of self.breaks and start at
        self.breaks[0] or later.
        """
        k = self.coeffs.shape[1]
        out = np.zeros((new_breaks.size, k))
        idx = np.searchsorted(self.breaks, new_breaks, side="right") - 1
        for p, (b, i) in enumerate(zip(new_breaks, idx)):
            if i < 0:
                continue
            out[p] = _shift_poly(self.coeffs[i], b - self.breaks[i])
        return out

    def align(self, other: "PiecewisePoly"):
        """Common-grid local coefficient arrays for self and other."""
        start = min(self.breaks[0], other.breaks[0])
        grid = np.union1d(self.breaks, other.breaks)
        if grid[0] > start:
            grid = np.concatenate([[start], grid])
        return grid, self._rebased(grid), other._rebased(grid)

    def __add__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        grid, ca, cb = self.align(other)
        k = max(ca.shape[1], cb.shape[1])
        out = np.zeros((grid.size, k))
        out[:, :ca.shape[1]] += ca
        out[:, :cb.shape[1]] += cb
        return PiecewisePoly(grid, out, max(self.max_degree, other.max_degree))

    def scale(self, c: float) -> "PiecewisePoly":
        return PiecewisePoly(self.breaks, self.coeffs * float(c), self.max_degree)

    def __mul__(self, other):
        if isinstance(other, PiecewisePoly):
            grid, ca, cb = self.align(other)
            ka, kb = ca.shape[1], cb.shape[1]
            out = np.zeros((grid.size, ka + kb - 1))
            for i in range(ka):
                for j in range(kb):
                    out[:, i + j] += ca[:, i] * cb[:, j]
            return PiecewisePoly(grid, out, max(out.shape[1] - 1, MAX_POLY_DEGREE))
        return self.scale(other)

    __rmul__ = __mul__

    def antiderivative(self) -> "PiecewisePoly":
        """Antiderivative vanishing at breaks[0], continuous across pieces."""
        if self.degree + 1 > self.max_degree:
            raise ValidationError(
                f"antiderivative would exceed max degree {self.max_degree}")
        m, k = self.coeffs.shape
        out = np.zeros((m, k + 1))
        out[:, 1:] = self.coeffs / np.arange(1, k + 1)
        run = 0.0
        widths = np.diff(self.breaks)
        for i in range(m):
            out[i, 0] = run
            if i < m - 1:
                run = _eval_local(out[i], widths[i])
        return PiecewisePoly(self.breaks, out, self.max_degree)

    def integral(self, lo: float, hi: float) -> float:
        """Definite integral over [lo, hi]; hi may be inf when the trailing
        piece is identically zero."""
        if hi == math.inf:
            if np.any(self.coeffs[-1] != 0.0):
                raise ValidationError("integral to inf of a non-vanishing tail")
            hi = self.breaks[-1]
        hi = max(hi, self.breaks[0])
        lo = max(lo, self.breaks[0])
        anti = PiecewisePoly(self.breaks, np.hstack([
            np.zeros((self.num_pieces, 1)), self.coeffs / np.arange(1, self.coeffs.shape[1] + 1)
        ]), max_degree=self.coeffs.shape[1] + 1)
        run = np.zeros(self.num_pieces)
        for i in range(1, self.num_pieces):
            run[i] = run[i - 1] + _eval_local(anti.coeffs[i - 1], self.breaks[i] - self.breaks[i - 1])
        def F(x):
            i = int(np.searchsorted(self.breaks, x, side="right")) - 1
            return run[i] + _eval_local(anti.coeffs[i], x - self.breaks[i])
        return F(hi) - F(lo)

    def trimmed(self, tol: float = 0.0) -> "PiecewisePoly":
        """Drop trailing zero columns (degree reduction)."""
        k = self.coeffs.shape[1]
        while k > 1 and np.all(np.abs(self.coeffs[:, k - 1]) <= tol):
            k -= 1
        return PiecewisePoly(self.breaks, self.coeffs[:, :k], self.max_degree)


def _shift_poly(local: np.ndarray, d: float) -> np.ndarray:
    """Re-expand sum_j c_j t^j around t = d: output o_i with
    p(d + s) = sum_i o_i s^i."""
    k = local.size
    out = np.zeros(k)
    for j, c in enumerate(local):
        if c == 0.0:
            continue
        for i in range(j + 1):
            out[i] += c * math.comb(j, i) * d ** (j - i)
    return out


def _eval_local(local: np.ndarray, t: float) -> float:
    acc = 0.0
    for c in local[::-1]:
        acc = acc * t + c
    return float(acc)


# ---------------------------------------------------------------------------
# Samples and thresholds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailSample:
    """Sorted i.i.d. sample of finite reals."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or v.size < 2:
            raise ValidationError("need at least two sample points")
        if not np.all(np.isfinite(v)):
            raise ValidationError("sample contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @staticmethod
    def from_csv(path) -> "TailSample":
        """Single-column CSV, header auto-detected."""
        vals = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                cell = row[0].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    if vals:
                        raise ValidationError(f"non-numeric cell {cell!r}")
                    # header row: skip
        if len(vals) < 2:
            raise ValidationError("CSV contains fewer than two numeric rows")
        return TailSample(np.array(vals))

    def ecdf_below(self, a: float) -> float:
        """Empirical P(X < a)."""
        return float(np.searchsorted(self.values, a, side="left")) / self.n


def empirical_quantile(sample: TailSample, q: float) -> float:
    """Order statistic with 1-based index ceil(q*n)."""
    if not 0.0 < q < 1.0:
        raise ValidationError("quantile level must lie in (0,1)")
    idx = int(math.ceil(q * sample.n))
    return float(sample.values[max(idx, 1) - 1])


@dataclass(frozen=True)
class ThresholdSpec:
    """One or more tail thresholds, as sample-quantile levels or raw values."""

    kind: str  # 'quantile-of-sample' | 'absolute'
    levels: Sequence[float]

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if self.kind not in ("quantile-of-sample", "absolute"):
            raise ValidationError(f"unknown threshold kind {self.kind!r}")
        if len(levels) < 1:
            raise ValidationError("need at least one threshold level")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError("threshold levels must be strictly increasing")
        if self.kind == "quantile-of-sample" and not all(0 < v < 1 for v in levels):
            raise ValidationError("quantile levels must lie in (0,1)")
        object.__setattr__(self, "levels", levels)

    @property
    def m(self) -> int:
        return len(self.levels)

    def resolve(self, sample: TailSample) -> np.ndarray:
        if self.kind == "absolute":
            return np.array(self.levels, dtype=float)
        return np.array([empirical_quantile(sample, q) for q in self.levels])


# ---------------------------------------------------------------------------
# Shape classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    """Geometric tail-shape class with boundary parameters.

    order 0: no shape restriction.
    order 1: non-increasing density with density-at-threshold cap eta.
    order 2: convex density with f(a) in [eta_lo, eta_hi] and right
             derivative at a bounded below by -nu.
    """

    order: int
    eta: float | None = None
    eta_lo: float | None = None
    eta_hi: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValidationError("shape order must be 0, 1 or 2")
        present = dict(eta=self.eta, eta_lo=self.eta_lo,
                       eta_hi=self.eta_hi, nu=self.nu)
        want = {0: (), 1: ("eta",), 2: ("eta_lo", "eta_hi", "nu")}[self.order]
        for name, val in present.items():
            if name in want:
                if val is None:
                    raise ValidationError(f"shape order {self.order} needs {name}")
                if not (np.isfinite(val) and val >= 0):
                    raise ValidationError(f"{name} must be finite and >= 0")
            elif val is not None:
                raise ValidationError(f"{name} not allowed for order {self.order}")
        if self.order == 2 and self.eta_lo > self.eta_hi:
            raise ValidationError("eta_lo must not exceed eta_hi")


# ---------------------------------------------------------------------------
# Moment sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ellipsoid:
    """{y : (y-mu)' Sigma^{-1} (y-mu) <= r}."""

    mu: np.ndarray
    sigma: np.ndarray
    r: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sig = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sig.shape != (mu.size, mu.size):
            raise ValidationError("Sigma shape must match mu")
        if not np.allclose(sig, sig.T, atol=1e-10 * max(1.0, np.abs(sig).max())):
            raise ValidationError("Sigma must be symmetric")
        try:
            np.linalg.cholesky(sig)
        except np.linalg.LinAlgError:
            raise ValidationError("Sigma must be positive definite") from None
        if not self.r > 0:
            raise ValidationError("ellipsoid radius must be positive")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sig + sig.T))

    @property
    def dim(self) -> int:
        return self.mu.size

    def contains(self, y, tol=1e-9) -> bool:
        d = np.asarray(y, dtype=float) - self.mu
        return float(d @ np.linalg.solve(self.sigma, d)) <= self.r * (1 + tol) + tol


@dataclass(frozen=True)
class Rectangle:
    """{y : lo <= y <= hi} componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("rectangle bounds shape mismatch")
        if np.any(lo > hi):
            raise ValidationError("rectangle needs lo <= hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, y, tol=1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        span = np.maximum(1.0, np.abs(self.hi) + np.abs(self.lo))
        return bool(np.all(y >= self.lo - tol * span) and np.all(y <= self.hi + tol * span))


@dataclass(frozen=True)
class ProductSet:
    """Rectangle head x (ellipsoid | rectangle) tail, in constraint order."""

    head: Rectangle
    tail: Ellipsoid | Rectangle

    @property
    def dim(self) -> int:
        return self.head.dim + self.tail.dim

    def contains(self, y, tol=1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        return (self.head.contains(y[:self.head.dim], tol)
                and self.tail.contains(y[self.head.dim:], tol))


MomentSet = Ellipsoid | Rectangle | ProductSet


@dataclass(frozen=True)
class MomentSpec:
    """Generator functions g_j plus the set their means must lie in.

    The first generator is always I(x >= a): it encodes the tail mass and
    anchors every transform.
    """

    generators: tuple
    set: Ellipsoid | Rectangle

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ValidationError("need at least one generator")
        g0 = gens[0]
        if not (g0.num_pieces == 1 and g0.coeffs.shape[1] >= 1
                and g0.coeffs[0, 0] == 1.0 and np.all(g0.coeffs[0, 1:] == 0.0)):
            raise ValidationError("first generator must be I(x >= a)")
        if self.set.dim != len(gens):
            raise ValidationError("moment set dimension must equal #generators")
        object.__setattr__(self, "generators", gens)

    @property
    def a(self) -> float:
        return float(self.generators[0].breaks[0])

    @property
    def dim(self) -> int:
        return len(self.generators)

    def mass_upper_bound(self) -> float:
        """Largest tail mass E[I(x>=a)] allowed by the set, capped at 1."""
        s = self.set
        if isinstance(s, Rectangle):
            ub = s.hi[0]
        else:
            ub = s.mu[0] + math.sqrt(max(s.r * s.sigma[0, 0], 0.0))
        return float(min(1.0, max(0.0, ub)))


# ---------------------------------------------------------------------------
# Objectives, problems, results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailInterval:
    """P(L <= X <= R); R may be inf."""

    L: float
    R: float

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L <= self.R):
            raise ValidationError("need finite L <= R")


@dataclass(frozen=True)
class QuantileObjective:
    """Worst-case p-quantile."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValidationError("quantile level must lie in (0,1)")


@dataclass(frozen=True)
class DROProblem:
    """Validated worst-case tail problem at a single threshold."""

    a: float
    shape: ShapeSpec
    moments: MomentSpec
    objective: TailInterval | QuantileObjective
    sample: TailSample | None = None

    def __post_init__(self):
        if abs(self.moments.a - self.a) > 1e-9 * max(1.0, abs(self.a)):
            raise ValidationError("moment generators not anchored at threshold")
        if isinstance(self.objective, TailInterval) and self.objective.L < self.a:
            raise ValidationError("objective interval must lie weakly above the threshold")


@dataclass
class BoundResult:
    """Optimal value with status and solver diagnostics."""

    value: float
    status: str  # 'optimal' | 'unbounded' | 'infeasible' | 'numerical-failure'
    dual: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status == "optimal" and not np.isfinite(self.value):
            raise ValidationError("optimal status requires a finite value")
        if self.status != "optimal" and np.isfinite(self.value):
            raise ValidationError("finite value requires optimal status")

    def to_json(self) -> str:
        def _clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {k: _clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [_clean(x) for x in v]
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v
        payload = {
            "value": "inf" if math.isinf(self.value) else self.value,
            "status": self.status,
            "threshold_used": self.diagnostics.get("threshold_used"),
            "dual": _clean(self.dual) if self.dual is not None else None,
            "gap": self.diagnostics.get("gap"),
            "runtime_ms": self.diagnostics.get("runtime_ms"),
        }
        return json.dumps(payload)


def build_problem(sample: TailSample, thr: ThresholdSpec, shape: ShapeSpec,
                  moments: MomentSpec, objective) -> DROProblem:
    """Resolve the threshold against the sample and validate the problem.

    thr must carry a single level; multi-threshold runs build one problem
    per threshold (each with its own calibration) and combine afterwards.
    """
    if thr.m != 1:
        raise ValidationError("build_problem expects a single threshold level")
    a = float(thr.resolve(sample)[0])
    if not np.any(sample.values >= a):
        raise ValidationError("no sample points at or above the threshold")
    if abs(moments.a - a) > 1e-9 * max(1.0, abs(a)):
        raise ValidationError("moment spec calibrated at a different threshold")
    return DROProblem(a=a, shape=shape, moments=moments,
                      objective=objective, sample=sample)
