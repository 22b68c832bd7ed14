import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import project_h2
from tgv1d.functionals import (
    LambdaPair,
    dual_norm_tv,
    in_tgv_ball,
    objective_tgv,
    objective_tv,
    tgv_value,
)
from tgv1d.signal_core import GridSignal, grid_points, sample, tv_seminorm
from tgv1d.solver import solve

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
signals = st.integers(4, 48).flatmap(lambda n: arrays(float, n, elements=finite))
lams = st.tuples(st.floats(1e-3, 2.0), st.floats(1e-3, 2.0))


def test_lambda_pair():
    assert tuple(LambdaPair(0.1, 0.2)) == (0.1, 0.2)
    for bad in ((0, 1), (1, -1), (math.inf, 1), (math.nan, 1)):
        with pytest.raises(ValueError):
            LambdaPair(*bad)


def test_dual_norm_infinite_off_subspace():
    r = GridSignal(np.ones(32))
    res = dual_norm_tv(r, 1)
    assert res.infinite and res.as_float() == math.inf and not res.in_subspace
    r = GridSignal(grid_points(32))
    assert not dual_norm_tv(r, 1).infinite
    assert dual_norm_tv(r, 2).infinite
    with pytest.raises(ValueError):
        dual_norm_tv(r, 3)


def test_dual_norm_values():
    f = sample("abs", 8192)
    assert dual_norm_tv(f, 1).value == pytest.approx(1 / 8, abs=1e-4)
    assert dual_norm_tv(f, 2).value == pytest.approx(1 / 12, abs=1e-4)


@given(signals, lams)
@settings(max_examples=60, deadline=None)
def test_tgv_dp_matches_lp(v, lam):
    u = GridSignal(v)
    a = tgv_value(u, lam)
    b = tgv_value(u, lam, method="lp")
    assert a == pytest.approx(b, rel=1e-7, abs=1e-9)


@given(signals, lams)
@settings(max_examples=100, deadline=None)
def test_tgv_majorized_by_tv(v, lam):
    u = GridSignal(v)
    t = tgv_value(u, lam)
    tol = 1e-9 * (1 + np.abs(v).sum() / u.h)
    assert t <= lam[0] * tv_seminorm(u, 1) + tol
    assert t <= lam[1] * tv_seminorm(u, 2) + tol
    assert t >= 0


@given(signals, lams, finite, finite, st.floats(-3, 3))
@settings(max_examples=60, deadline=None)
def test_tgv_invariances(v, lam, a, b, c):
    u = GridSignal(v)
    t = tgv_value(u, lam)
    tol = 1e-8 * (1 + np.abs(v).sum() / u.h + (abs(a) + abs(b)) * u.n)
    assert tgv_value(GridSignal(v + a + b * u.x), lam) == pytest.approx(t, abs=tol)
    assert tgv_value(c * u, lam) == pytest.approx(abs(c) * t, abs=tol * (1 + abs(c)))


def test_tgv_of_affine_is_zero():
    x = grid_points(64)
    assert tgv_value(GridSignal(3 * x - 1), (0.1, 0.1)) == pytest.approx(0.0, abs=1e-12)


def test_tgv_lp_method_and_bad_method():
    u = sample("abs", 64)
    with pytest.raises(ValueError):
        tgv_value(u, (0.1, 0.1), method="nope")


def test_objectives():
    f = sample("ind", 64)
    z = GridSignal(np.zeros(64))
    assert objective_tv(z, f, 1, 0.1) == pytest.approx(0.5 * f.l2() ** 2)
    assert objective_tgv(f, f, LambdaPair(0.1, 0.1)) == pytest.approx(tgv_value(f, (0.1, 0.1)))
    with pytest.raises(ValueError):
        objective_tv(z, sample("ind", 32), 1, 0.1)


def test_in_tgv_ball():
    f = sample("abs", 1024)
    assert in_tgv_ball(f, (0.13, 0.09)).inside
    b = in_tgv_ball(f, (0.05, 0.09))
    assert not b and b.in_subspace and b.margin1 < 0 < b.margin2
    assert not in_tgv_ball(GridSignal(np.ones(16)), (10, 10)).in_subspace


def test_duality_sampling_inequality(rng):
    """h <r, u> <= TGV(u) for r in the ball and u in H^2."""
    n = 128
    f = sample("abs", n)
    lam = LambdaPair(0.05, 0.036)
    r = solve(f, "tgv", 0.05, 0.036).u - f
    assert in_tgv_ball(r, lam, tol=1e-9).inside
    h = f.h
    violations = 0
    for _ in range(100):
        k = rng.integers(2, 8)
        nodes = np.sort(rng.uniform(-1, 1, k))
        vals = rng.normal(size=k)
        u = project_h2(np.interp(grid_points(n), nodes, vals) + rng.normal() * (grid_points(n) > nodes[0]))
        for rr in (r, -r):
            lhs = h * float(np.dot(rr.values, u.values))
            if lhs > tgv_value(u, lam) + 1e-10:
                violations += 1
    assert violations == 0
