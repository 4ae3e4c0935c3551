"""Sum-of-squares reformulation of the semi-infinite dual.

The dual's constraint polynomial must be nonnegative on every piece of its
break grid. Per piece this is certified by one PSD Gram matrix V whose
anti-diagonal sums reproduce the piece's shifted coefficients: on a
half-line piece the local coefficients directly, on a bounded piece the
coefficients after the substitution x = lo + w*t/(1+t) that maps t >= 0
onto [lo, lo+w). Odd anti-diagonal sums vanish, so m(s)' V m(s) equals the
shifted polynomial at s^2, which is exactly nonnegativity on the piece.

The second-order-cone constraint ||u|| <= lam enters the solver as an
arrow-head PSD block [[lam, u'], [u, lam I]].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .dual import DualProgram
from .ipm import ConeLP, smat, svec, svec_dim

__all__ = ["SosProgram", "SosCertificate", "sos_reformulate", "certificate",
           "dump_sdp_json"]


@lru_cache(maxsize=32)
def _antidiag_maps(k: int):
    """For degree k: (E, pinv(E), nullbasis) with E the map from svec(V) of
    an order-(k+1) matrix to its 2k+1 anti-diagonal entry sums."""
    n = k + 1
    sv = svec_dim(n)
    E = np.zeros((2 * k + 1, sv))
    iu, ju = np.triu_indices(n)
    for col, (i, j) in enumerate(zip(iu, ju)):
        w = 1.0 if i == j else np.sqrt(2.0)   # svec carries sqrt(2) off-diag
        E[i + j, col] += w
    pinv = np.linalg.pinv(E)
    null = sla.null_space(E)
    return E, pinv, null


@lru_cache(maxsize=256)
def _bounded_shift(k: int, w: float):
    """B with q = B c mapping local coefficients on [0, w] to the
    coefficients of (1+t)^k * p(w t/(1+t)), nonneg on t >= 0."""
    from scipy.special import comb
    B = np.zeros((k + 1, k + 1))
    for ell in range(k + 1):
        for j in range(ell + 1):
            B[ell, j] = comb(k - j, ell - j) * w ** j
    return B


@dataclass
class SosProgram:
    cone: ConeLP
    dp: DualProgram
    pieces: list           # per piece: dict(kind, lo, hi, degree, block)
    n_y: int               # leading decision variables = dual multipliers


@dataclass
class SosCertificate:
    """PSD Gram matrices per piece plus their residual diagnostics."""

    matrices: list         # (piece index, domain tuple, matrix)
    min_eigs: np.ndarray
    identity_residuals: np.ndarray

    def valid(self, tol: float = 1e-8) -> bool:
        return bool(np.all(self.min_eigs >= -tol)
                    and np.all(self.identity_residuals <= tol))


def _piece_degree(base_p: np.ndarray, terms_p: np.ndarray) -> int:
    used = np.abs(base_p) > 0
    if terms_p.size:
        used = used | np.any(np.abs(terms_p) > 0, axis=0)
    nz = np.nonzero(used)[0]
    return int(nz[-1]) if nz.size else 0


def sos_reformulate(dp: DualProgram, domain_end: float | None = None) -> SosProgram:
    """Cone program over (dual multipliers, per-piece Gram parameters)."""
    P = dp.breaks.size
    n_y = dp.nvar

    pieces = []
    extra = 0
    for p in range(P):
        k = _piece_degree(dp.base[p], dp.terms[:, p, :])
        bounded = p < P - 1 or domain_end is not None
        hi = dp.breaks[p + 1] if p < P - 1 else (domain_end if domain_end
                                                 is not None else np.inf)
        if bounded and not hi > dp.breaks[p]:
            raise ValueError("empty piece in constraint grid")
        info = {"kind": "bounded" if bounded else "halfline",
                "lo": float(dp.breaks[p]), "hi": float(hi), "degree": k}
        if k >= 1:
            info["t_dim"] = _antidiag_maps(k)[2].shape[1]
        else:
            info["t_dim"] = 0
        pieces.append(info)
        extra += info["t_dim"]

    nvar = n_y + extra
    f = np.zeros(nvar)
    f[:n_y] = dp.objective

    nn_rows_h, nn_rows_M = [], []
    for v in dp.nonneg:
        row = np.zeros(nvar)
        row[v] = -1.0
        nn_rows_M.append(row)
        nn_rows_h.append(0.0)

    psd_h, psd_M, psd_sizes = [], [], []
    t_off = n_y
    for p, info in enumerate(pieces):
        k = info["degree"]
        base_c = dp.base[p, :k + 1]
        terms_c = dp.terms[:, p, :k + 1]
        if info["kind"] == "bounded":
            B = _bounded_shift(k, float(info["hi"] - info["lo"]))
            q0 = B @ base_c
            Qy = terms_c @ B.T
        else:
            q0 = base_c
            Qy = terms_c
        if k == 0:
            # constant piece: plain sign constraint
            row = np.zeros(nvar)
            row[:n_y] = -Qy[:, 0]
            nn_rows_M.append(row)
            nn_rows_h.append(float(q0[0]))
            info["block"] = None
            continue
        _, pinv, null = _antidiag_maps(k)
        hb = pinv @ q0
        Mb = np.zeros((svec_dim(k + 1), nvar))
        Mb[:, :n_y] = -pinv @ Qy.T
        Mb[:, t_off:t_off + info["t_dim"]] = -null
        info["block"] = len(psd_h)
        info["t_slice"] = (t_off, t_off + info["t_dim"])
        t_off += info["t_dim"]
        psd_h.append(hb)
        psd_M.append(Mb)
        psd_sizes.append(k + 1)

    if dp.soc is not None:
        lam_ix, u_ix = dp.soc
        d = u_ix.size
        sz = d + 1
        Mb = np.zeros((svec_dim(sz), nvar))
        Mb[:, lam_ix] = -svec(np.eye(sz))
        for i, v in enumerate(u_ix):
            A = np.zeros((sz, sz))
            A[0, i + 1] = A[i + 1, 0] = 1.0
            Mb[:, v] = -svec(A)
        psd_h.append(np.zeros(svec_dim(sz)))
        psd_M.append(Mb)
        psd_sizes.append(sz)

    cone = ConeLP(
        f=f,
        nn_h=np.array(nn_rows_h, dtype=float),
        nn_M=(np.vstack(nn_rows_M) if nn_rows_M else np.zeros((0, nvar))),
        psd_h=psd_h,
        psd_M=psd_M,
        psd_sizes=psd_sizes,
        var_names=list(dp.var_names) + [f"t[{i}]" for i in range(extra)],
        meta={"case": dp.case},
    )
    return SosProgram(cone=cone, dp=dp, pieces=pieces, n_y=n_y)


def certificate(sp: SosProgram, theta: np.ndarray) -> SosCertificate:
    """Per-piece Gram matrices at theta with eigenvalue and anti-diagonal
    identity diagnostics."""
    mats, eigs, resid = [], [], []
    _, slack_mats = sp.cone.slack(theta)
    for p, info in enumerate(sp.pieces):
        if info.get("block") is None:
            continue
        V = slack_mats[info["block"]]
        k = info["degree"]
        base_c = sp.dp.base[p, :k + 1]
        terms_c = sp.dp.terms[:, p, :k + 1]
        q = base_c + theta[:sp.n_y] @ terms_c
        if info["kind"] == "bounded":
            q = _bounded_shift(k, info["hi"] - info["lo"]) @ q
        E, _, _ = _antidiag_maps(k)
        sums = E @ svec(V)
        target = np.zeros(2 * k + 1)
        target[::2] = q
        scale = max(1.0, np.abs(q).max())
        mats.append((p, (info["lo"], info["hi"]), V))
        eigs.append(float(np.linalg.eigvalsh(V).min()))
        resid.append(float(np.abs(sums - target).max()) / scale)
    return SosCertificate(matrices=mats,
                          min_eigs=np.array(eigs) if eigs else np.zeros(0),
                          identity_residuals=np.array(resid) if resid else np.zeros(0))


def dump_sdp_json(sp: SosProgram) -> str:
    """Debug dump of the cone program data (dense row-major blocks)."""
    c = sp.cone
    payload = {
        "objective": c.f.tolist(),
        "variables": c.var_names,
        "nonneg": {"h": c.nn_h.tolist(), "M": c.nn_M.tolist()},
        "psd_blocks": [
            {"size": int(s), "h_svec": hb.tolist(), "M_svec": Mb.tolist()}
            for hb, Mb, s in zip(c.psd_h, c.psd_M, c.psd_sizes)
        ],
        "pieces": [{k: v for k, v in info.items() if k != "t_slice"}
                   for info in sp.pieces],
        "case": sp.dp.case,
    }
    return json.dumps(payload)
