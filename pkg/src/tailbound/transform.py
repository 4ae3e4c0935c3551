"""Conversion of the shape-constrained worst-case problem into an
equivalent generalized moment problem over distributions on [a, inf).

A monotone tail (order 1, density cap eta) turns objective h and
generators g into their single antiderivatives scaled by eta, keeping the
moment set. A convex tail (order 2, density window [eta_lo, eta_hi] and
derivative floor -nu) turns them into double antiderivatives scaled by nu
and prepends the constraint function nu*(x-a) whose mean must land in
[eta_lo, eta_hi]. Order 0 passes through unchanged. The inverse maps
(recover_density) rebuild the worst-case tail density from a discrete
solution of the moment problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    DROProblem,
    Ellipsoid,
    MomentSet,
    PiecewisePoly,
    ProductSet,
    Rectangle,
    ShapeSpec,
    TailInterval,
    ValidationError,
)

__all__ = ["MomentProblem", "antiderivative", "to_moment_problem",
           "objective_function", "recover_density"]


@dataclass(frozen=True)
class MomentProblem:
    """max E_Q[H(X)] s.t. E_Q[G(X)] in set, Q supported on [a, inf)."""

    a: float
    H: PiecewisePoly
    G: tuple
    set: MomentSet
    scale: float
    shape_order: int

    def __post_init__(self):
        if self.set.dim != len(self.G):
            raise ValidationError("set dimension must equal #constraints")
        tol = 1e-9 * max(1.0, abs(self.a))
        if self.shape_order > 0:
            if abs(self.H(self.a)) > tol:
                raise ValidationError("transformed objective must vanish at a")
            for g in self.G:
                if abs(g(self.a)) > tol:
                    raise ValidationError("transformed constraint must vanish at a")

    def moment_vector(self, support: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """E_Q[G] for a discrete Q."""
        return np.array([float(weights @ g(support)) for g in self.G])

    def objective_value(self, support: np.ndarray, weights: np.ndarray) -> float:
        return float(weights @ self.H(support))


def antiderivative(p: PiecewisePoly, a: float, order: int) -> PiecewisePoly:
    """Exact antiderivative of order 1 or 2, vanishing (with derivative,
    for order 2) at a. p must be supported on [a, inf)."""
    if order not in (1, 2):
        raise ValidationError("antiderivative order must be 1 or 2")
    if p.breaks[0] < a - 1e-12 * max(1.0, abs(a)):
        raise ValidationError("function support must start at or above a")
    out = p
    for _ in range(order):
        out = out.antiderivative()
    return out


def objective_function(problem: DROProblem) -> PiecewisePoly:
    """The integrand h of the problem's expectation objective."""
    obj = problem.objective
    if not isinstance(obj, TailInterval):
        raise ValidationError("only interval objectives map to a moment problem; "
                              "quantiles reduce to intervals via line search")
    return PiecewisePoly.indicator_interval(problem.a, obj.L, obj.R)


def to_moment_problem(problem: DROProblem) -> MomentProblem:
    """Equivalent moment problem per the shape order of the problem."""
    a = problem.a
    shape = problem.shape
    h = objective_function(problem)
    gens = problem.moments.generators
    base_set = problem.moments.set

    if shape.order == 0:
        return MomentProblem(a=a, H=h, G=tuple(gens), set=base_set,
                             scale=1.0, shape_order=0)
    if shape.order == 1:
        H = antiderivative(h, a, 1).scale(shape.eta)
        G = tuple(antiderivative(g, a, 1).scale(shape.eta) for g in gens)
        return MomentProblem(a=a, H=H, G=G, set=base_set,
                             scale=shape.eta, shape_order=1)
    # order 2: leading constraint nu*(x-a) with window [eta_lo, eta_hi]
    nu = shape.nu
    H = antiderivative(h, a, 2).scale(nu)
    lead = PiecewisePoly(np.array([a]), np.array([[0.0, nu]]))
    G = (lead,) + tuple(antiderivative(g, a, 2).scale(nu) for g in gens)
    pset = ProductSet(Rectangle(np.array([shape.eta_lo]),
                                np.array([shape.eta_hi])), base_set)
    return MomentProblem(a=a, H=H, G=G, set=pset, scale=nu, shape_order=2)


def recover_density(support: np.ndarray, weights: np.ndarray,
                    shape: ShapeSpec, a: float) -> PiecewisePoly:
    """Worst-case tail density from a discrete moment-problem solution Q.

    Order 1: f(x) = eta * (1 - Q(x)), a right-continuous step function.
    Order 2: f(x) = nu * E_Q[(T - x)+], piecewise linear, convex,
    nonnegative, hitting zero at the largest support point.
    """
    support = np.asarray(support, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if support.size != weights.size or np.any(weights < -1e-12):
        raise ValidationError("Q must be a nonnegative weighting of points")
    if np.any(support < a - 1e-12 * max(1.0, abs(a))):
        raise ValidationError("Q must be supported on [a, inf)")
    order = np.argsort(support)
    support, weights = support[order], weights[order]

    if shape.order == 1:
        eta = shape.eta
        breaks = [a]
        vals = [eta * (1.0 - weights[support <= a].sum())]
        for t in support[support > a]:
            breaks.append(t)
            vals.append(eta * (1.0 - weights[support <= t].sum()))
        coeffs = np.array(vals)[:, None]
        return PiecewisePoly(np.array(breaks), coeffs)
    if shape.order == 2:
        nu = shape.nu
        breaks = np.concatenate([[a], support[support > a]])
        coeffs = np.zeros((breaks.size, 2))
        for p, b in enumerate(breaks):
            above = support > b
            coeffs[p, 0] = nu * float(weights[above] @ (support[above] - b))
            coeffs[p, 1] = -nu * float(weights[above].sum())
        return PiecewisePoly(breaks, coeffs)
    raise ValidationError("density recovery applies to shape orders 1 and 2")
