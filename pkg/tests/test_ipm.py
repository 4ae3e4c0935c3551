"""Interior-point solver checks: basic cones, certificates, and agreement
with an external conic solver on randomized mixed NN+PSD instances."""

import numpy as np
import pytest

from tailbound.conic.ipm import ConeLP, smat, solve_cone_lp, svec


def random_instance(rng, n=None, m0=None, blocks=None):
    """Strictly feasible, bounded instance with known interior points."""
    n = n or rng.integers(3, 18)
    m0 = m0 if m0 is not None else int(rng.integers(0, 12))
    blocks = blocks if blocks is not None else [int(rng.integers(2, 6))
                                                for _ in range(rng.integers(0, 3))]
    # keep the constraint map full column rank so the instance is well posed
    sv = sum(sz * (sz + 1) // 2 for sz in blocks)
    m0 = max(m0, n - sv + 2)
    theta0 = rng.normal(size=n)
    nn_M = rng.normal(size=(m0, n))
    nn_h = nn_M @ theta0 + rng.uniform(0.1, 1.0, size=m0)
    psd_h, psd_M, psd_sizes = [], [], []
    zs = [rng.uniform(0.2, 1.0, size=m0)]
    for sz in blocks:
        Mb = rng.normal(size=(sz * (sz + 1) // 2, n))
        A = rng.normal(size=(sz, sz))
        spd = A @ A.T + 0.3 * np.eye(sz)
        psd_h.append(Mb @ theta0 + svec(spd))
        psd_M.append(Mb)
        psd_sizes.append(sz)
        B = rng.normal(size=(sz, sz))
        zs.append(svec(B @ B.T + 0.3 * np.eye(sz)))
    # f = -M'z0 with z0 interior makes the dual strictly feasible => bounded
    z0 = np.concatenate(zs) if zs else np.zeros(0)
    M_all = np.vstack([nn_M] + psd_M) if psd_M else nn_M
    f = -M_all.T @ z0
    return ConeLP(f=f, nn_h=nn_h, nn_M=nn_M, psd_h=psd_h, psd_M=psd_M,
                  psd_sizes=psd_sizes)


def cvxopt_solve(prob):
    from cvxopt import matrix, solvers
    n = prob.nvar
    Gts, hts = [], []
    if prob.nn_h.size:
        Gts.append(np.atleast_2d(prob.nn_M))
        hts.append(prob.nn_h)
    for hb, Mb, sz in zip(prob.psd_h, prob.psd_M, prob.psd_sizes):
        Gfull = np.zeros((sz * sz, n))
        for j in range(n):
            Gfull[:, j] = smat(Mb[:, j], sz).ravel(order="F")
        Gts.append(Gfull)
        hts.append(smat(hb, sz).ravel(order="F"))
    G = matrix(np.vstack(Gts))
    h = matrix(np.concatenate(hts))
    dims = {"l": int(prob.nn_h.size), "q": [], "s": [int(s) for s in prob.psd_sizes]}
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-10
    solvers.options["reltol"] = 1e-10
    sol = solvers.conelp(matrix(prob.f), G, h, dims)
    return sol


def test_min_eigenvalue_toy():
    h = svec(np.array([[0.0, 1.0], [1.0, 0.0]]))
    Mb = -svec(np.eye(2))[:, None]
    p = ConeLP(f=np.array([1.0]), nn_h=np.zeros(0), nn_M=np.zeros((0, 1)),
               psd_h=[h], psd_M=[Mb], psd_sizes=[2])
    r = solve_cone_lp(p)
    assert r.status == "optimal"
    assert abs(r.value - 1.0) < 1e-7


def test_scalar_lp():
    p = ConeLP(f=np.array([1.0]), nn_h=np.array([-1.0]), nn_M=np.array([[-1.0]]),
               psd_h=[], psd_M=[], psd_sizes=[])
    r = solve_cone_lp(p)
    assert r.status == "optimal" and abs(r.value - 1.0) < 1e-8


def test_unbounded_certificate():
    p = ConeLP(f=np.array([-1.0]), nn_h=np.array([0.0]), nn_M=np.array([[-1.0]]),
               psd_h=[], psd_M=[], psd_sizes=[])
    assert solve_cone_lp(p).status == "unbounded"


def test_infeasible_certificate():
    p = ConeLP(f=np.array([0.0]), nn_h=np.array([-1.0, 0.0]),
               nn_M=np.array([[-1.0], [1.0]]), psd_h=[], psd_M=[], psd_sizes=[])
    assert solve_cone_lp(p).status == "primal-infeasible"


def test_random_agreement_with_cvxopt():
    rng = np.random.default_rng(20240817)
    n_checked = 0
    for _ in range(60):
        prob = random_instance(rng)
        mine = solve_cone_lp(prob)
        assert mine.status == "optimal", mine
        ref = cvxopt_solve(prob)
        if ref["status"] != "optimal":
            continue
        ref_val = float(ref["primal objective"])
        assert abs(mine.value - ref_val) <= 1e-6 * max(1.0, abs(ref_val)), \
            (mine.value, ref_val)
        # solution slack really lies in the cone
        nn, mats = prob.slack(mine.theta)
        assert np.all(nn >= -1e-7)
        for Sm in mats:
            assert np.linalg.eigvalsh(Sm).min() >= -1e-7
        n_checked += 1
    assert n_checked >= 50


def test_random_infeasible_detection():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 8))
        m0 = int(rng.integers(3, 9))
        z0 = rng.uniform(0.2, 1.0, size=m0)
        M = rng.normal(size=(m0, n))
        M = M - np.outer(z0, z0 @ M) / (z0 @ z0)   # z0 in left null space
        h = rng.normal(size=m0)
        if h @ z0 >= -0.1:
            h = h - (float(h @ z0) + 0.5) * z0 / (z0 @ z0)
        p = ConeLP(f=rng.normal(size=n), nn_h=h, nn_M=M,
                   psd_h=[], psd_M=[], psd_sizes=[])
        r = solve_cone_lp(p)
        assert r.status == "primal-infeasible", r.status
