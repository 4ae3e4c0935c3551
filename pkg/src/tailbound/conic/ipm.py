"""Dense primal-dual interior-point solver for small cone programs.

Solves

    minimize    f' theta
    subject to  h - M theta  in  K

where K is a product of nonnegative-orthant components and dense PSD
blocks (second-order-cone constraints enter as arrow-matrix PSD blocks).
The algorithm is a Mehrotra predictor-corrector method with
Nesterov-Todd scaling on the homogeneous self-dual embedding, so genuine
infeasibility and unboundedness come out as certificates rather than
divergence. Problem sizes here are tiny (a few hundred scalar variables,
PSD blocks of order <= ~12), so everything is dense and factorizations
are Cholesky on the Schur complement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = ["ConeLP", "IPMResult", "solve_cone_lp"]


@dataclass
class ConeLP:
    """min f'theta s.t. h - M theta in K (nonneg rows, then PSD blocks)."""

    f: np.ndarray
    nn_h: np.ndarray          # (m0,)
    nn_M: np.ndarray          # (m0, n)
    psd_h: list               # svec vectors
    psd_M: list               # svec-by-n matrices
    psd_sizes: list           # matrix orders
    var_names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def nvar(self) -> int:
        return self.f.size

    def slack(self, theta: np.ndarray):
        """Nonneg slack vector and PSD slack matrices at theta."""
        nn = self.nn_h - self.nn_M @ theta if self.nn_h.size else np.zeros(0)
        mats = [smat(h - Mb @ theta, s)
                for h, Mb, s in zip(self.psd_h, self.psd_M, self.psd_sizes)]
        return nn, mats


@dataclass
class IPMResult:
    status: str               # 'optimal' | 'primal-infeasible' | 'unbounded' | 'numerical-failure'
    theta: np.ndarray | None
    value: float
    iterations: int
    gap: float
    pres: float
    dres: float


# -- svec/smat with sqrt(2) off-diagonal scaling ----------------------------

_SQRT2 = math.sqrt(2.0)


def _triu_indices(n):
    return np.triu_indices(n)


def svec(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    iu, ju = _triu_indices(n)
    out = mat[iu, ju].copy()
    out[iu != ju] *= _SQRT2
    return out


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    iu, ju = _triu_indices(n)
    m = np.zeros((n, n))
    v = np.asarray(vec, dtype=float).copy()
    off = iu != ju
    v[off] /= _SQRT2
    m[iu, ju] = v
    m[ju, iu] = v
    return m


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


# -- per-cone state ----------------------------------------------------------

class _NNCone:
    def __init__(self, dim):
        self.dim = dim
        self.degree = dim

    def identity(self):
        return np.ones(self.dim)

    def update_scaling(self, s, z):
        self.w2 = s / z                      # W'W diag
        self.lmb = np.sqrt(s * z)

    def scale2inv(self, v):
        return v / self.w2

    def Wmt_cols(self, V):
        return V / np.sqrt(self.w2)[:, None]

    def jordan_solve(self, d):
        return d / self.lmb

    def lambda_sq(self):
        return self.lmb * self.lmb

    def scaled_product(self, ds, dz):
        # (W^{-T} ds) o (W dz); W diag sqrt(w2)
        return (ds / np.sqrt(self.w2)) * (dz * np.sqrt(self.w2))

    def Wt(self, v):
        return v * np.sqrt(self.w2)

    def WtW(self, v):
        return v * self.w2

    def W(self, v):
        return v * np.sqrt(self.w2)

    def Wmt(self, v):
        return v / np.sqrt(self.w2)

    def Wmt_adj(self, v):
        return v / np.sqrt(self.w2)

    def jordan(self, v):
        return self.lmb * v

    def max_step(self, x, dx):
        neg = dx < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-x[neg] / dx[neg]))

    def residual_inside(self, x):
        return float(np.min(x)) if x.size else np.inf


class _PSDCone:
    def __init__(self, n):
        self.n = n
        self.dim = svec_dim(n)
        self.degree = n

    def identity(self):
        return svec(np.eye(self.n))

    def update_scaling(self, s, z):
        S = smat(s, self.n)
        Z = smat(z, self.n)
        Ls = _chol(S)
        Lz = _chol(Z)
        U, d, Vt = np.linalg.svd(Lz.T @ Ls)
        d = np.maximum(d, 1e-300)
        self.r = Ls @ Vt.T @ np.diag(1.0 / np.sqrt(d))
        self.rinv = np.linalg.inv(self.r)
        self.P = self.r @ self.r.T
        self.Pinv = self.rinv.T @ self.rinv
        self.lmb = d                          # scaled point is diag(d)

    def scale2inv(self, v):
        return svec(self.Pinv @ smat(v, self.n) @ self.Pinv)

    def Wmt_cols(self, V):
        out = np.empty_like(V)
        for j in range(V.shape[1]):
            out[:, j] = svec(self.rinv @ smat(V[:, j], self.n) @ self.rinv.T)
        return out

    def jordan_solve(self, d):
        D = smat(d, self.n)
        L = self.lmb
        return svec(2.0 * D / (L[:, None] + L[None, :]))

    def lambda_sq(self):
        return svec(np.diag(self.lmb * self.lmb))

    def scaled_product(self, ds, dz):
        A = self.rinv @ smat(ds, self.n) @ self.rinv.T     # W^{-T} ds
        B = self.r.T @ smat(dz, self.n) @ self.r           # W dz
        return svec(0.5 * (A @ B + B @ A))

    def Wt(self, v):
        return svec(self.r @ smat(v, self.n) @ self.r.T)

    def WtW(self, v):
        return svec(self.P @ smat(v, self.n) @ self.P)

    def W(self, v):
        return svec(self.r.T @ smat(v, self.n) @ self.r)

    def Wmt(self, v):
        return svec(self.rinv @ smat(v, self.n) @ self.rinv.T)

    def Wmt_adj(self, v):
        return svec(self.rinv.T @ smat(v, self.n) @ self.rinv)

    def jordan(self, v):
        V = smat(v, self.n)
        L = self.lmb
        return svec(0.5 * (L[:, None] + L[None, :]) * V)

    def max_step(self, x, dx):
        X = smat(x, self.n)
        L = _chol(X)
        Linv = sla.solve_triangular(L, np.eye(self.n), lower=True)
        Mid = Linv @ smat(dx, self.n) @ Linv.T
        w = np.linalg.eigvalsh(0.5 * (Mid + Mid.T))
        mn = float(w.min())
        return np.inf if mn >= 0 else -1.0 / mn

    def residual_inside(self, x):
        return float(np.linalg.eigvalsh(smat(x, self.n)).min())


def _chol(A):
    n = A.shape[0]
    jitter = 0.0
    scale = max(float(np.trace(A)) / max(n, 1), 1e-300)
    for _ in range(12):
        try:
            return np.linalg.cholesky(A + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-14 * scale)
    raise np.linalg.LinAlgError("matrix not positive definite")


# -- the solver ---------------------------------------------------------------

def solve_cone_lp(prob: ConeLP, feastol: float = 1e-9, abstol: float = 1e-9,
                  reltol: float = 1e-9, max_iter: int = 200,
                  verbose: bool = False) -> IPMResult:
    """Homogeneous self-dual Mehrotra predictor-corrector solve."""
    n = prob.nvar
    cones = []
    Ms = []
    hs = []
    if prob.nn_h.size:
        cones.append(_NNCone(prob.nn_h.size))
        Ms.append(np.atleast_2d(prob.nn_M))
        hs.append(prob.nn_h)
    for hb, Mb, sz in zip(prob.psd_h, prob.psd_M, prob.psd_sizes):
        cones.append(_PSDCone(sz))
        Ms.append(np.atleast_2d(Mb))
        hs.append(hb)
    if not cones:
        return IPMResult("optimal", np.zeros(n), 0.0, 0, 0.0, 0.0, 0.0)

    dims = [c.dim for c in cones]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    nu = sum(c.degree for c in cones)

    # cone-preserving row scaling (per nonneg row, per PSD block), then
    # column equilibration
    for i in range(len(cones)):
        if isinstance(cones[i], _NNCone):
            sc = np.maximum(np.abs(hs[i]), np.abs(Ms[i]).max(axis=1))
            sc = np.maximum(sc, 1e-10)[:, None]
            hs[i] = hs[i] / sc[:, 0]
            Ms[i] = Ms[i] / sc
        else:
            sc = max(float(np.abs(hs[i]).max(initial=0.0)),
                     float(np.abs(Ms[i]).max(initial=0.0)), 1e-10)
            hs[i] = hs[i] / sc
            Ms[i] = Ms[i] / sc
    M = np.vstack(Ms)
    h = np.concatenate(hs)
    f = np.asarray(prob.f, dtype=float)
    colnorm = np.maximum(np.abs(M).max(axis=0), 1e-12)
    colnorm = np.maximum(colnorm, 1e-6 * colnorm.max())
    Dc = 1.0 / colnorm
    M = M * Dc[None, :]
    f = f * Dc
    fsc = max(1.0, np.abs(f).max())
    f = f / fsc

    def blocks(v):
        return [v[offs[i]:offs[i + 1]] for i in range(len(cones))]

    def apply_each(op, v):
        return np.concatenate([getattr(c, op)(vb)
                               for c, vb in zip(cones, blocks(v))])

    theta = np.zeros(n)
    s = np.concatenate([c.identity() for c in cones])
    z = s.copy()
    tau, kappa = 1.0, 1.0

    hnorm = max(1.0, float(np.linalg.norm(h)))
    fnorm = max(1.0, float(np.linalg.norm(f)))
    best = None
    stalled = 0

    status = "numerical-failure"
    it = 0
    for it in range(1, max_iter + 1):
        F1 = M @ theta + s - h * tau
        F2 = M.T @ z + f * tau
        F3 = float(f @ theta + h @ z + kappa)
        mu = (float(s @ z) + tau * kappa) / (nu + 1)

        # convergence checks on the de-homogenized point
        pres = float(np.linalg.norm(F1 / tau)) / hnorm
        dres = float(np.linalg.norm(F2 / tau)) / fnorm
        gap = float(s @ z) / (tau * tau)
        pobj = float(f @ theta) / tau
        # relative gap in original objective units
        relgap = (gap * fsc) / max(1.0, abs(pobj * fsc))
        score = max(pres, dres, relgap)
        if verbose:
            print(f"it={it:3d} mu={mu:9.2e} tau={tau:9.2e} kap={kappa:9.2e} "
                  f"pres={pres:9.2e} dres={dres:9.2e} gap={gap:9.2e}")
        if best is None or score < best[0]:
            best = (score, theta / tau, pobj, gap, pres, dres, relgap, it)
            stalled = 0
        else:
            stalled += 1
        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            status = "optimal"
            break
        if best is not None and best[0] < 1e-6 and (
                score > 1e3 * best[0] or stalled >= 3):
            break  # past the attainable floor; keep the best iterate

        # infeasibility / unboundedness: only trust ray certificates once
        # the homogeneous embedding signals tau -> 0
        hz = float(h @ z)
        ftheta = float(f @ theta)
        if kappa / max(tau, 1e-300) > 1e4 or tau <= 1e-10:
            if hz < 0 and float(np.linalg.norm(M.T @ z)) <= 1e-7 * (-hz):
                status = "primal-infeasible"
                break
            if ftheta < 0 and float(np.linalg.norm(M @ theta + s)) <= 1e-7 * (-ftheta):
                status = "unbounded"
                break

        for c, sb, zb in zip(cones, blocks(s), blocks(z)):
            c.update_scaling(sb, zb)

        # scaled constraint matrix Gs = W^{-T} M; the Gram form of the
        # Schur complement stays PSD in floating point
        Gs = np.vstack([c.Wmt_cols(M[offs[i]:offs[i + 1]])
                        for i, c in enumerate(cones)])
        Phi = Gs.T @ Gs
        reg = 1e-14 * max(1.0, float(np.trace(Phi)) / max(n, 1))
        cho = None
        for _ in range(10):
            try:
                cho = sla.cho_factor(Phi + reg * np.eye(n), lower=True)
                break
            except np.linalg.LinAlgError:
                reg *= 100.0
        if cho is None:
            break
        h_s = apply_each("Wmt", h)
        v_h = apply_each("scale2inv", h)
        q = sla.cho_solve(cho, Gs.T @ h_s - f)
        denom_q = float(f @ q + (Gs @ q) @ h_s - h_s @ h_s - kappa / tau)
        if denom_q >= 0:
            denom_q = min(denom_q, -1e-14)

        def solve_once(R1, R2, R3, R4, R5):
            u4 = apply_each("jordan_solve", R4)
            Wtu4 = apply_each("Wt", u4)
            rhs = R2 + Gs.T @ apply_each("Wmt", R1 - Wtu4)
            p = sla.cho_solve(cho, rhs)
            num = (R3 - float(f @ p) - float((Gs @ p) @ h_s)
                   + float(v_h @ (R1 - Wtu4)) - R5 / tau)
            dtau = num / denom_q
            dtheta = p + dtau * q
            dz_s = Gs @ dtheta - h_s * dtau - apply_each("Wmt", R1 - Wtu4)
            dz = apply_each("Wmt_adj", dz_s)
            ds = Wtu4 - apply_each("Wt", dz_s)
            dkappa = (R5 - kappa * dtau) / tau
            return np.array([*dtheta]), ds, dz, dtau, dkappa

        def newton_residuals(R1, R2, R3, R4, R5, d):
            dtheta, ds, dz, dtau, dkappa = d
            r1 = R1 - (M @ dtheta + ds - h * dtau)
            r2 = R2 - (M.T @ dz + f * dtau)
            r3 = R3 - (float(f @ dtheta) + float(h @ dz) + dkappa)
            comp = np.concatenate([
                c.jordan(c.W(dzb) + c.Wmt(dsb))
                for c, dsb, dzb in zip(cones, blocks(ds), blocks(dz))])
            r4 = R4 - comp
            r5 = R5 - (tau * dkappa + kappa * dtau)
            return r1, r2, r3, r4, r5

        def solve_direction(R1, R2, R3, R4, R5):
            # iterative refinement recovers the digits the ill-conditioned
            # scaled system loses near convergence; keep the best direction
            # seen and stop when refinement diverges
            base = (np.linalg.norm(R1) + np.linalg.norm(R2) + abs(R3)
                    + np.linalg.norm(R4) + abs(R5) + 1e-300)
            d = solve_once(R1, R2, R3, R4, R5)
            best_d, best_err = d, np.inf
            for _ in range(8):
                r1, r2, r3, r4, r5 = newton_residuals(R1, R2, R3, R4, R5, d)
                err = (np.linalg.norm(r1) + np.linalg.norm(r2) + abs(r3)
                       + np.linalg.norm(r4) + abs(r5))
                if err < best_err:
                    best_d, best_err = d, err
                if err <= 1e-13 * base or err > 2.0 * best_err:
                    break
                corr = solve_once(r1, r2, r3, r4, r5)
                d = tuple(a + b for a, b in zip(d, corr))
            return best_d, best_err / base

        lam_sq = np.concatenate([c.lambda_sq() for c in cones])

        # predictor
        da, err_a = solve_direction(-F1, -F2, -F3, -lam_sq, -tau * kappa)
        alpha_a = _step_length(cones, blocks, s, z, tau, kappa, da)
        mu_aff = ((float((s + alpha_a * da[1]) @ (z + alpha_a * da[2]))
                   + (tau + alpha_a * da[3]) * (kappa + alpha_a * da[4]))
                  / (nu + 1))
        sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        # corrector
        corr = np.concatenate([c.scaled_product(dsb, dzb)
                               for c, dsb, dzb in zip(cones, blocks(da[1]), blocks(da[2]))])
        e = np.concatenate([c.identity() for c in cones])
        R4 = -lam_sq - corr + sigma * mu * e
        R5 = -tau * kappa - da[3] * da[4] + sigma * mu
        sc = 1.0 - sigma
        d, err_c = solve_direction(-sc * F1, -sc * F2, -sc * F3, R4, R5)
        alpha = 0.99 * _step_length(cones, blocks, s, z, tau, kappa, d)
        alpha = min(alpha, 1.0)
        if verbose:
            print(f"      sigma={sigma:8.2e} alpha={alpha:8.2e}")
        if not np.isfinite(alpha) or alpha <= 1e-14:
            if verbose:
                print("      stop: step collapsed")
            break

        theta = theta + alpha * d[0]
        s = s + alpha * d[1]
        z = z + alpha * d[2]
        tau = tau + alpha * d[3]
        kappa = kappa + alpha * d[4]
        if tau <= 1e-300 or not np.isfinite(mu):
            break
    else:
        it = max_iter

    if status == "optimal":
        theta_sol = (theta / tau) * Dc
        val = float(prob.f @ theta_sol)
        return IPMResult("optimal", theta_sol, val, it, gap * fsc,
                         pres, dres)
    if status in ("primal-infeasible", "unbounded"):
        return IPMResult(status, None, math.inf if status == "primal-infeasible" else -math.inf,
                         it, math.nan, math.nan, math.nan)
    # stalled at the float64 floor: accept the best iterate when all its
    # scaled metrics are still well inside the backend-agreement contract
    if best is not None:
        _, th, pobj, bgap, bpres, bdres, brelgap, bit = best
        floor = max(5e-7, feastol)
        if bpres <= floor and bdres <= floor and (
                brelgap <= floor or bgap * fsc <= 1e-6):
            return IPMResult("optimal", th * Dc, pobj * fsc, bit,
                             bgap * fsc, bpres, bdres)
    return IPMResult("numerical-failure", None, math.nan, it, math.nan,
                     math.nan, math.nan)


def _step_length(cones, blocks, s, z, tau, kappa, d):
    dtheta, ds, dz, dtau, dkappa = d
    alpha = np.inf
    for c, sb, dsb in zip(cones, blocks(s), blocks(ds)):
        alpha = min(alpha, c.max_step(sb, dsb))
    for c, zb, dzb in zip(cones, blocks(z), blocks(dz)):
        alpha = min(alpha, c.max_step(zb, dzb))
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha
