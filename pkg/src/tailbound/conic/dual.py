"""Semi-infinite dual of the moment problem.

The moment problem max E_Q[H] s.t. E_Q[G] in S over distributions on
[a, inf) dualizes, per the moment set geometry, into

    min  kappa + lam + u' T mu + lam1' hi - lam2' lo
    s.t. -H(x) + u' T G_E(x) + (lam1 - lam2)' G_R(x) + kappa >= 0  (x >= a)
         ||u||_2 <= lam,  lam1, lam2 >= 0

with T a square root of the inverse (r-scaled) ellipsoid matrix. Ellipsoid
components supply the (u, lam) part, rectangle components the multiplier
pairs; coordinates with equal bounds collapse to a single free multiplier.
The constraint polynomial's coefficients stay affine in the decision
variables, which is what both the sum-of-squares reformulation and the
cutting-plane solver consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Ellipsoid, PiecewisePoly, ProductSet, Rectangle
from ..transform import MomentProblem

__all__ = ["DualProgram", "dualize"]

_EQ_TOL = 1e-12


@dataclass
class DualProgram:
    """min objective'theta s.t. c(x; theta) >= 0 on [a, inf) plus cone
    constraints on theta.

    base and terms hold local piecewise coefficients on the shared break
    grid: c(x; theta) = base + sum_v theta_v * terms[v].
    """

    a: float
    breaks: np.ndarray
    base: np.ndarray           # (P, K)
    terms: np.ndarray          # (nvar, P, K)
    objective: np.ndarray      # (nvar,)
    var_names: list
    nonneg: np.ndarray         # indices with theta_v >= 0
    soc: tuple | None          # (lam_index, array of u indices)
    case: str
    scale: float

    @property
    def nvar(self) -> int:
        return self.objective.size

    def constraint_coeffs(self, theta: np.ndarray) -> np.ndarray:
        return self.base + np.tensordot(theta, self.terms, axes=1)

    def constraint_poly(self, theta: np.ndarray) -> PiecewisePoly:
        return PiecewisePoly(self.breaks, self.constraint_coeffs(theta),
                             max_degree=self.base.shape[1] - 1 + 4)

    def constraint_rows(self, xs: np.ndarray):
        """Evaluate base and each term at points xs: returns (vals0, E)
        with c(x_i; theta) = vals0[i] + (E theta)[i]."""
        from .._kernels import piecewise_eval
        xs = np.ascontiguousarray(np.asarray(xs, dtype=float))
        vals0 = piecewise_eval(self.breaks, np.ascontiguousarray(self.base), xs)
        E = np.empty((xs.size, self.nvar))
        for v in range(self.nvar):
            E[:, v] = piecewise_eval(self.breaks,
                                     np.ascontiguousarray(self.terms[v]), xs)
        return vals0, E

    def dual_record(self, theta: np.ndarray) -> dict:
        """Named multiplier values for reporting."""
        out = {}
        for name, val in zip(self.var_names, theta):
            out.setdefault(name.split("[")[0], []).append(float(val))
        return {k: (v[0] if len(v) == 1 else v) for k, v in out.items()}


def _inv_sqrt_scaled(sigma: np.ndarray, r: float) -> np.ndarray:
    """T with T'T = (r*Sigma)^{-1}; lower-triangular via Cholesky."""
    L = np.linalg.cholesky(r * sigma)
    return np.linalg.inv(L)


def _decompose(mp: MomentProblem):
    """(kind, params, generator index array) blocks in constraint order."""
    s = mp.set
    idx = np.arange(len(mp.G))
    if isinstance(s, ProductSet):
        h = s.head.dim
        head = ("rect", s.head, idx[:h], "delta")
        tail_kind = "ell" if isinstance(s.tail, Ellipsoid) else "rect"
        tail = (tail_kind, s.tail, idx[h:], "lam")
        return [head, tail]
    if isinstance(s, Ellipsoid):
        return [("ell", s, idx, "lam")]
    return [("rect", s, idx, "lam")]


def dualize(mp: MomentProblem) -> DualProgram:
    """Exact conic dual of the converted moment problem."""
    blocks = _decompose(mp)

    # shared break grid across -H and every constraint function
    grid = np.asarray(mp.H.breaks)
    for g in mp.G:
        grid = np.union1d(grid, g.breaks)
    K = max([mp.H.coeffs.shape[1]] + [g.coeffs.shape[1] for g in mp.G])

    def rebase(p: PiecewisePoly) -> np.ndarray:
        out = np.zeros((grid.size, K))
        c = p._rebased(grid)
        out[:, :c.shape[1]] = c
        return out

    base = -rebase(mp.H)
    Gc = [rebase(g) for g in mp.G]

    names, obj, terms, nonneg = [], [], [], []
    soc = None

    # kappa: constant-one constraint term
    names.append("kappa")
    obj.append(1.0)
    kap = np.zeros((grid.size, K))
    kap[:, 0] = 1.0
    terms.append(kap)

    has_ell = any(kind == "ell" for kind, *_ in blocks)
    for kind, s, idx, tag in blocks:
        if kind == "ell":
            T = _inv_sqrt_scaled(s.sigma, s.r)
            tmu = T @ s.mu
            u_ix = []
            for i in range(s.dim):
                names.append(f"u[{i}]")
                obj.append(float(tmu[i]))
                terms.append(sum(T[i, j] * Gc[idx[j]] for j in range(s.dim)))
                u_ix.append(len(names) - 1)
            names.append("lam")
            obj.append(1.0)
            terms.append(np.zeros((grid.size, K)))
            soc = (len(names) - 1, np.array(u_ix, dtype=int))
        else:
            for j_local, j in enumerate(idx):
                lo, hi = float(s.lo[j_local]), float(s.hi[j_local])
                span = max(1.0, abs(lo), abs(hi))
                if hi - lo <= _EQ_TOL * span:
                    names.append(f"{tag}_eq[{j_local}]")
                    obj.append(0.5 * (lo + hi))
                    terms.append(Gc[j])
                else:
                    names.append(f"{tag}1[{j_local}]")
                    obj.append(hi)
                    terms.append(Gc[j])
                    nonneg.append(len(names) - 1)
                    names.append(f"{tag}2[{j_local}]")
                    obj.append(-lo)
                    terms.append(-Gc[j])
                    nonneg.append(len(names) - 1)

    case = f"D{mp.shape_order}-{'E' if has_ell else 'R'}"
    return DualProgram(
        a=mp.a,
        breaks=grid,
        base=base,
        terms=np.stack(terms),
        objective=np.array(obj),
        var_names=names,
        nonneg=np.array(nonneg, dtype=int),
        soc=soc,
        case=case,
        scale=mp.scale,
    )
