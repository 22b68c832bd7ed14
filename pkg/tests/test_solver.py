import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tgv1d._taut_string import tv1d_denoise
from tgv1d.functionals import objective_tgv, objective_tv
from tgv1d.signal_core import GridSignal, sample, sigma_transforms
from tgv1d.solver import (
    ConvergenceError,
    Problem,
    SolverConfig,
    duality_gap,
    gap_scale,
    solve,
    solve_tgv,
    solve_tv,
    solve_tv2,
)

cp = pytest.importorskip("cvxpy")


def cvx_reference(f, problem, l1, l2):
    n, h = f.n, f.h
    v = f.values
    u = cp.Variable(n)
    fid = 0.5 * h * cp.sum_squares(u - v)
    if problem == "tv":
        reg = l1 * cp.norm1(cp.diff(u))
    elif problem == "tv2":
        reg = l2 * cp.norm1(cp.diff(u, 2)) / h
    else:
        w = cp.Variable(n - 1)
        reg = l1 * h * cp.norm1(cp.diff(u) / h - w) + l2 * cp.norm1(cp.diff(w))
    cp.Problem(cp.Minimize(fid + reg)).solve(solver=cp.CLARABEL)
    return u.value


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(tol_gap=0)
    with pytest.raises(ValueError):
        SolverConfig(method="newton")
    with pytest.raises(ValueError):
        SolverConfig.from_mapping({"speed": "1"})
    c = SolverConfig.from_mapping({"max_iters": "10", "tol_gap": "1e-6", "method": "pdhg"})
    assert c.max_iters == 10 and c.tol_gap == 1e-6 and c.method == "pdhg"


def test_problem_parse():
    assert Problem.parse("tv") is Problem.TV1
    assert Problem.parse("TGV") is Problem.TGV
    with pytest.raises(ValueError):
        Problem.parse("tv3")


def test_missing_lambda():
    f = sample("abs", 32)
    with pytest.raises(ValueError):
        solve(f, "tgv", lam1=0.1)
    with pytest.raises(ValueError):
        solve(f, "tv")
    with pytest.raises(ValueError):
        solve(f, "tgv", 0.1, 0.1, SolverConfig(method="taut_string"))


@pytest.mark.parametrize("problem", ["tv", "tv2", "tgv"])
@pytest.mark.parametrize("seed", range(3))
def test_against_cvxpy(problem, seed):
    rng = np.random.default_rng(seed)
    f = GridSignal(np.cumsum(rng.normal(size=32)) * 0.1)
    l1, l2 = 0.02 + 0.05 * rng.uniform(), 0.01 + 0.03 * rng.uniform()
    res = solve(f, problem, l1 if problem != "tv2" else None, l2 if problem != "tv" else None)
    assert res.converged
    ref = cvx_reference(f, problem, l1, l2)
    assert np.max(np.abs(res.u.values - ref)) < 1e-5


@pytest.mark.parametrize("problem", ["tv", "tv2", "tgv"])
def test_pdhg_agrees_with_ipm(problem):
    f = sample("abs", 64)
    l1, l2 = 0.05, 0.036
    a = solve(f, problem, l1, l2)
    b = solve(f, problem, l1, l2, SolverConfig(method="pdhg"))
    assert b.converged and b.method == "pdhg"
    assert np.max(np.abs(a.u.values - b.u.values)) < 1e-6


def test_taut_string_method():
    f = sample("ind", 64)
    r = solve(f, "tv", 0.1, cfg=SolverConfig(method="taut_string"))
    assert r.converged and r.method == "taut_string"
    assert np.allclose(r.u.values, tv1d_denoise(f.values, 0.1 / f.h))


@given(arrays(float, st.integers(4, 40), elements=st.floats(-3, 3)), st.floats(1e-3, 1.0))
@settings(max_examples=40, deadline=None)
def test_taut_string_optimal(v, lam):
    f = GridSignal(v)
    r = solve(f, "tv", lam * f.h, cfg=SolverConfig(method="taut_string"))
    assert r.final_gap <= 1e-9 * gap_scale(f)


def test_weak_duality_nonnegative(rng):
    f = sample("quad", 64)
    for _ in range(30):
        u = GridSignal(rng.normal(size=64))
        for problem in ("tv", "tv2", "tgv"):
            assert duality_gap(f, u, problem, 0.05, 0.03) >= -1e-12


def test_zero_minimizer_above_dual_norms():
    f = sample("abs", 256)
    st_ = sigma_transforms(f)
    r = solve_tgv(f, (1.01 * st_.sup1, 1.01 * st_.sup2))
    assert r.u.l2() < 1e-9
    r = solve_tv(f, 1.01 * st_.sup1)
    assert r.u.l2() < 1e-9
    r = solve_tv2(f, 1.01 * st_.sup2)
    assert r.u.l2() < 1e-9


def test_objective_decreases_from_data():
    f = sample("ind", 128)
    r = solve_tgv(f, (0.12, 0.05))
    assert objective_tgv(r.u, f, (0.12, 0.05)) < objective_tgv(f, f, (0.12, 0.05))
    r = solve_tv(f, 0.1)
    assert objective_tv(r.u, f, 1, 0.1) <= objective_tv(f, f, 1, 0.1)


def test_nonconvergence_reported(caplog):
    f = sample("abs", 256)
    with caplog.at_level(logging.WARNING):
        r = solve(f, "tgv", 0.05, 0.036, SolverConfig(method="pdhg", max_iters=5, tol_gap=1e-12))
    assert not r.converged and r.final_gap > 0
    assert isinstance(ConvergenceError("x", 1.0).last_gap, float)


def test_large_grid_converges():
    f = sample("abs", 8192)
    r = solve_tgv(f, (0.05, 0.036))
    assert r.converged and r.final_gap <= 1e-8 * gap_scale(f)
