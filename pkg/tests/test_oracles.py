import math

import numpy as np
import pytest

from tgv1d import oracles as O
from tgv1d.signal_core import DataId, eval_piecewise, exact_sigma, sample, sigma_transforms
from tgv1d.solver import solve

XS = np.linspace(-1, 1, 4001)


def exact_norms(p, data):
    s1, s2 = exact_sigma(p, data)
    return s1.sup(), s2.sup(), abs(s1(np.array([1.0]))[0]), abs(s2(np.array([1.0]))[0])


def test_constants():
    assert O.IND_T1 == pytest.approx(0.0053816, abs=1e-7)
    assert O.IND_T2 == 1 / 24
    assert O.QUAD_NORMS[0] == pytest.approx(2 * math.sqrt(3) / 27)


@pytest.mark.parametrize("lam1", [0.01, 0.02, 0.05, 0.1])
def test_tv1_abs(lam1):
    p = O.oracle_tv1_abs(lam1)
    assert p.tv() == pytest.approx(2 - 4 * math.sqrt(2 * lam1), abs=1e-12)
    s1, s2, e1, e2 = exact_norms(p, "abs")
    assert s1 == pytest.approx(lam1, abs=1e-12) and e1 < 1e-12


def test_tv1_abs_zero_above_norm():
    assert O.oracle_tv1_abs(0.2).tv() == 0.0


@pytest.mark.parametrize("lam2", [0.01, 0.04, 0.08])
def test_tv2_abs(lam2):
    p = O.oracle_tv2_abs(lam2)
    s1, s2, e1, e2 = exact_norms(p, "abs")
    assert s2 == pytest.approx(lam2, abs=1e-12) and e1 < 1e-12 and e2 < 1e-12
    assert np.allclose(p.jumps(), 0)


def test_abs_region_bounds():
    lo, hi = O.abs_region_bounds(0.05)
    assert lo == pytest.approx(0.05 * 2 / 3)
    assert hi == pytest.approx(0.05 * (1 - 2 / 3 * math.sqrt(0.1)))
    with pytest.raises(ValueError):
        O.abs_region_bounds(0.2)


def test_abs_coefficients_and_mu():
    k = O.abs_tgv_coefficients((0.05, 0.036))
    assert k.c == pytest.approx(0.42) and k.d == pytest.approx(0.4331066, abs=1e-7)
    mu = O.mu_from_lambda_abs((0.05, 0.036))
    assert mu.mu1 == pytest.approx(k.c**2 / 2)
    assert mu.mu2 == pytest.approx((1 - k.d) / 12)
    lam = O.lambda_from_mu_abs(mu)
    assert lam.lambda1 == pytest.approx(0.05, rel=1e-12)
    assert lam.lambda2 == pytest.approx(0.036, rel=1e-12)
    with pytest.raises(O.OracleError):
        O.mu_from_lambda_abs((0.05, 0.045))


@pytest.mark.parametrize("lam", [(0.05, 0.036), (0.08, 0.057), (0.03, 0.022), (0.1, 0.068)])
def test_tgv_abs_in_ball_and_saturated(lam):
    p = O.oracle_tgv_abs(lam)
    s1, s2, e1, e2 = exact_norms(p, "abs")
    assert s1 == pytest.approx(lam[0], abs=1e-12)
    assert s2 == pytest.approx(lam[1], abs=1e-12)
    assert e1 < 1e-12 and e2 < 1e-12


def test_tgv_abs_dispatch():
    assert O.oracle_tgv_abs((0.13, 0.09)).tv() == 0
    assert O.oracle_tgv_abs((0.05, 0.045)) == O.oracle_tv1_abs(0.05)
    assert O.oracle_tgv_abs((0.09, 0.04)) == O.oracle_tv2_abs(0.04)
    assert O.oracle_tgv_abs((0.2, 0.04)) == O.oracle_tv2_abs(0.04)


def test_tv1_ind():
    p = O.oracle_tv1_ind(0.1)
    x = XS[np.abs(np.abs(XS) - 0.5) > 1e-9]
    assert np.allclose(p(x), 0.6 * DataId.IndData(x))
    assert O.oracle_tv1_ind(0.3).tv() == 0


def test_ind_regimes():
    assert O.ind_tv2_regime(0.003) == 1
    assert O.ind_tv2_regime(O.IND_T1) == 2
    assert O.ind_tv2_regime(0.03) == 2
    assert O.ind_tv2_regime(1 / 24) == 3
    assert O.ind_tv2_regime(0.1) == 3
    assert O.ind_tv2_regime(0.2) == 0
    with pytest.raises(ValueError):
        O.ind_tv2_regime(0.0)


@pytest.mark.parametrize("lam2", [0.001, 0.003, 0.0053, 0.006, 0.02, 0.04, 0.05, 0.1])
def test_tv2_ind_optimal(lam2):
    p = O.oracle_tv2_ind(lam2)
    s1, s2, e1, e2 = exact_norms(p, "ind")
    assert s2 == pytest.approx(lam2, abs=1e-10)
    assert e1 < 1e-10 and e2 < 1e-10
    assert O.dual_norm_tv2_residual_ind(lam2) == pytest.approx(s1, abs=1e-12)


def test_tv2_ind_continuous_across_thresholds():
    for t in (O.IND_T1, O.IND_T2):
        a = O.oracle_tv2_ind(t * (1 - 1e-9))
        b = O.oracle_tv2_ind(t * (1 + 1e-9))
        assert np.max(np.abs(a(XS) - b(XS))) < 1e-6
        ga = O.dual_norm_tv2_residual_ind(t * (1 - 1e-9))
        gb = O.dual_norm_tv2_residual_ind(t * (1 + 1e-9))
        assert ga == pytest.approx(gb, abs=1e-6)


def test_mu_ind():
    mu = O.mu_from_lambda_ind((0.12, 0.05))
    assert mu.mu1 == pytest.approx(0.18, abs=1e-12)
    assert mu.mu2 == pytest.approx(1 / 14.4, abs=1e-12)
    assert 4 * mu.mu1 * mu.mu2 == pytest.approx(0.05)
    assert 4 * mu.mu1 * O.dual_norm_tv2_residual_ind(mu.mu2) == pytest.approx(0.12)
    with pytest.raises(O.OracleError):
        O.mu_from_lambda_ind((0.1, 0.08))


@pytest.mark.parametrize("lam", [(0.12, 0.05), (0.06, 0.01), (0.15, 0.02), (0.08, 0.003), (0.2, 0.06)])
def test_tgv_ind_in_ball(lam):
    p = O.oracle_tgv_ind(lam)
    s1, s2, e1, e2 = exact_norms(p, "ind")
    assert s1 <= lam[0] + 1e-10 and s2 <= lam[1] + 1e-10
    assert e1 < 1e-10 and e2 < 1e-10


def test_analytic_region():
    assert O.analytic_region("abs", (0.13, 0.09)) == "Zero"
    assert O.analytic_region("abs", (0.05, 0.045)) == "EqualsTV1"
    assert O.analytic_region("abs", (0.09, 0.04)) == "EqualsTV2"
    assert O.analytic_region("abs", (0.05, 0.036)) == "StrictTGV"
    assert O.analytic_region("ind", (0.3, 0.15)) == "Zero"
    assert O.analytic_region("ind", (0.1, 0.08)) == "EqualsTV1"
    assert O.analytic_region("ind", (0.2, 0.003)) == "EqualsTV2"
    assert O.analytic_region("ind", (0.12, 0.05)) == "StrictTGV"
    with pytest.raises(O.OracleError):
        O.analytic_region("quad", (0.1, 0.1))


def test_dispatch():
    assert O.oracle("abs", "tv", 0.05) == O.oracle_tv1_abs(0.05)
    with pytest.raises(O.OracleError):
        O.oracle("quad", "tv", 0.05)


@pytest.mark.parametrize("data", list(DataId))
def test_dual_norms_numeric(data):
    st = sigma_transforms(sample(data, 4096))
    n1, n2 = O.dual_norms(data)
    assert st.sup1 == pytest.approx(n1, abs=1e-3)
    assert st.sup2 == pytest.approx(n2, abs=1e-3)


@pytest.mark.parametrize(
    "data,problem,lam",
    [("abs", "tgv", (0.05, 0.036)), ("ind", "tgv", (0.06, 0.01)), ("ind", "tv2", (None, 0.003)), ("ind", "tv", (0.1, None))],
)
def test_oracle_matches_solver_midsize(data, problem, lam):
    n = 2048
    f = sample(data, n)
    r = solve(f, problem, *lam)
    p = eval_piecewise(O.oracle(data, problem, *lam), n)
    assert (r.u - p).l2() <= f.h
