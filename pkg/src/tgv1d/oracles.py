"""Closed-form minimizers for the absolute-value and indicator data.

Every oracle returns an exact :class:`PiecewiseAffineSignal`; the grid
enters only when it is sampled.  The TGV oracles dispatch over the whole
parameter plane: zero, TV1 minimizer, TV2 minimizer, or the genuinely
second-order family in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .functionals import LambdaPair
from .signal_core import (
    DataId,
    PiecewiseAffineSignal,
    data_piecewise,
    exact_sigma,
)

__all__ = [
    "ABS_NORMS",
    "IND_NORMS",
    "QUAD_NORMS",
    "IND_T1",
    "IND_T2",
    "AbsTgvCoefficients",
    "MuPair",
    "OracleError",
    "oracle_tv1_abs",
    "oracle_tv2_abs",
    "abs_region_bounds",
    "abs_tgv_coefficients",
    "oracle_tgv_abs",
    "mu_from_lambda_abs",
    "lambda_from_mu_abs",
    "oracle_tv1_ind",
    "ind_tv2_regime",
    "oracle_tv2_ind",
    "dual_norm_tv2_residual_ind",
    "mu_from_lambda_ind",
    "oracle_tgv_ind",
    "quad_dual_norms",
    "dual_norms",
    "analytic_region",
    "oracle",
]

# (||σ¹[u^δ]||, ||σ²[u^δ]||) of the built-in data
ABS_NORMS = (1.0 / 8.0, 1.0 / 12.0)
IND_NORMS = (1.0 / 4.0, 1.0 / 8.0)
QUAD_NORMS = (2.0 * math.sqrt(3.0) / 27.0, 1.0 / 12.0)

# TV2 regime thresholds for the indicator data
IND_T1 = (math.sqrt(2.0) * 3.0**0.25 - math.sqrt(3.0)) / 24.0
IND_T2 = 1.0 / 24.0


class OracleError(ValueError):
    """Parameters outside an oracle's domain, or a failed root solve."""


@dataclass(frozen=True)
class AbsTgvCoefficients:
    c: float
    d: float


@dataclass(frozen=True)
class MuPair:
    mu1: float
    mu2: float


def _lam(lam) -> LambdaPair:
    return lam if isinstance(lam, LambdaPair) else LambdaPair(*lam)


def _even(breaks_right, segments_right) -> PiecewiseAffineSignal:
    """Even signal from its restriction to [0, 1].

    ``breaks_right`` are the interior breakpoints in (0, 1) and
    ``segments_right`` the ``(slope, intercept)`` pairs on [0, 1] in terms
    of ``y = |x|``; a breakpoint at 0 is added when the two halves meet
    with a kink.
    """
    b = [-1.0] + [-t for t in reversed(breaks_right)] + [0.0] + list(breaks_right) + [1.0]
    left = [(-s, c) for s, c in reversed(segments_right)]
    segs = left + list(segments_right)
    p = PiecewiseAffineSignal(tuple(b), tuple(s for s, _ in segs), tuple(c for _, c in segs))
    return p.simplify()


# --------------------------------------------------------------------------
# absolute value data |x| - 1/2


def oracle_tv1_abs(lam1: float) -> PiecewiseAffineSignal:
    """TV1 minimizer for ``|x| - 1/2``: clipped at ``±(1/2 - sqrt(2 lam1))``."""
    if not lam1 > 0:
        raise ValueError("lam1 must be positive")
    if lam1 >= ABS_NORMS[0]:
        return PiecewiseAffineSignal.zero()
    s = math.sqrt(2.0 * lam1)
    return _even([s, 1.0 - s], [(0.0, s - 0.5), (1.0, -0.5), (0.0, 0.5 - s)])


def oracle_tv2_abs(lam2: float) -> PiecewiseAffineSignal:
    """TV2 minimizer for ``|x| - 1/2``: the data scaled by ``(1 - 12 lam2)+``."""
    if not lam2 > 0:
        raise ValueError("lam2 must be positive")
    a = max(1.0 - lam2 / ABS_NORMS[1], 0.0)
    if a == 0.0:
        return PiecewiseAffineSignal.zero()
    return a * data_piecewise(DataId.AbsData)


def abs_region_bounds(lam1: float) -> tuple[float, float]:
    """``(lower, upper)`` limits on lam2 of the strict TGV wedge.

    Below ``lower = 2 lam1 / 3`` the TGV minimizer is the TV2 minimizer;
    above ``upper = lam1 (1 - (2/3) sqrt(2 lam1))`` it is the TV1 minimizer.
    """
    if not 0 < lam1 < ABS_NORMS[0]:
        raise OracleError("abs_region_bounds needs 0 < lam1 < 1/8")
    return 2.0 * lam1 / 3.0, lam1 * (1.0 - 2.0 / 3.0 * math.sqrt(2.0 * lam1))


def abs_tgv_coefficients(lam) -> AbsTgvCoefficients:
    l1, l2 = _lam(lam)
    c = 3.0 * (l1 - l2) / (2.0 * l1)
    d = 1.0 - 8.0 / 9.0 * l1**3 / (l1 - l2) ** 2
    return AbsTgvCoefficients(c, d)


def _abs_w(c: float, d: float) -> PiecewiseAffineSignal:
    return _even(
        [c, 1.0 - c],
        [(d, c * (1.0 - d) - 0.5), (1.0, -0.5), (d, c * (d - 1.0) - d + 0.5)],
    )


def oracle_tgv_abs(lam) -> PiecewiseAffineSignal:
    """TGV minimizer for ``|x| - 1/2`` anywhere in the parameter plane."""
    l1, l2 = _lam(lam)
    if l1 >= ABS_NORMS[0]:
        return oracle_tv2_abs(l2)
    lower, upper = abs_region_bounds(l1)
    if l2 >= upper:
        return oracle_tv1_abs(l1)
    if l2 <= lower:
        return oracle_tv2_abs(l2)
    k = abs_tgv_coefficients((l1, l2))
    return _abs_w(k.c, k.d)


def _in_abs_wedge(l1, l2) -> bool:
    if not l1 < ABS_NORMS[0]:
        return False
    lower, upper = abs_region_bounds(l1)
    return lower < l2 < upper


def mu_from_lambda_abs(lam) -> MuPair:
    """Weights of the TV1 and TV2 minimizers that add up to the TGV one.

    ``mu1 = c**2 / 2`` and ``mu2 = (1 - d) / 12 = (2/27) lam1**3 / (lam1 - lam2)**2``.
    """
    l1, l2 = _lam(lam)
    if not _in_abs_wedge(l1, l2):
        raise OracleError(f"({l1}, {l2}) is outside the strict TGV region of the abs data")
    mu1 = 9.0 / 8.0 * (l1 - l2) ** 2 / l1**2
    mu2 = 2.0 / 27.0 * l1**3 / (l1 - l2) ** 2
    return MuPair(mu1, mu2)


def lambda_from_mu_abs(mu: MuPair) -> LambdaPair:
    """Inverse of :func:`mu_from_lambda_abs`."""
    a1, a2 = ABS_NORMS
    scale = mu.mu2 / a2
    return LambdaPair(scale * mu.mu1, scale * mu.mu1 * (1.0 - 2.0 / 3.0 * math.sqrt(2.0 * mu.mu1)))


# --------------------------------------------------------------------------
# indicator data 1_[-1/2, 1/2] - 1/2


def oracle_tv1_ind(lam1: float) -> PiecewiseAffineSignal:
    """TV1 minimizer for the indicator data: ``(1 - 4 lam1)+ u^δ``."""
    if not lam1 > 0:
        raise ValueError("lam1 must be positive")
    a = max(1.0 - lam1 / IND_NORMS[0], 0.0)
    if a == 0.0:
        return PiecewiseAffineSignal.zero()
    return a * data_piecewise(DataId.IndData)


def ind_tv2_regime(lam2: float) -> int:
    """1, 2 or 3 for the three TV2 solution shapes; 0 for the zero minimizer.

    A value exactly on a threshold uses the higher regime.
    """
    if not lam2 > 0:
        raise ValueError("lam2 must be positive")
    if lam2 >= IND_NORMS[1]:
        return 0
    if lam2 >= IND_T2:
        return 3
    if lam2 >= IND_T1:
        return 2
    return 1


def _ind_regime1_equation(x2: float, lam2: float):
    L = 1.0 - x2
    v2 = -0.5 + 6.0 * lam2 / L**2
    D = (2.0 * x2 - 1.0) / (1.0 - 6.0 * lam2 / L**2)
    x1 = x2 - D
    m = (v2 - 0.5) / D
    F = m * ((x2**3 - x1**3) / 3.0 - x1 * (x2**2 - x1**2) / 2.0) + (x2**2 - 0.25) / 2.0 - 2.0 * lam2
    return F, x1, m, v2


def _ind_regime1_nodes(lam2: float):
    """Solve for the two bend points ``0 < x1 < 1/2 < x2`` of regime 1.

    On [0, 1] the minimizer equals the data on [0, x1], is affine on
    [x1, x2] and affine with zero-mean residual on [x2, 1].  The tail fixes
    ``v(x2)`` given ``x2``; a zero σ¹ at x1 fixes ``x1``; the remaining
    scalar equation σ²(x1) = lam2 is solved for ``x2``.
    """
    hi = 1.0 - math.sqrt(6.0 * lam2)
    xs = np.linspace(0.5, hi, 2001)[1:-1]
    F = np.array([_ind_regime1_equation(x, lam2)[0] for x in xs])
    x1s = np.array([_ind_regime1_equation(x, lam2)[1] for x in xs])
    ok = (x1s > 0) & (x1s < 0.5)
    idx = [i for i in range(len(xs) - 1) if ok[i] and ok[i + 1] and np.sign(F[i]) != np.sign(F[i + 1])]
    if not idx:
        raise OracleError(
            f"regime-1 bend equation has no bracket for lam2={lam2}: "
            f"F ranges over [{F[ok].min() if ok.any() else np.nan:.3e}, "
            f"{F[ok].max() if ok.any() else np.nan:.3e}] on x2 in (0.5, {hi:.6f})"
        )
    i = idx[0]
    x2 = brentq(lambda t: _ind_regime1_equation(t, lam2)[0], xs[i], xs[i + 1], xtol=1e-15)
    _, x1, m, v2 = _ind_regime1_equation(x2, lam2)
    return x1, x2, m, v2


def oracle_tv2_ind(lam2: float) -> PiecewiseAffineSignal:
    """TV2 minimizer for the indicator data in all three regimes."""
    reg = ind_tv2_regime(lam2)
    if reg == 0:
        return PiecewiseAffineSignal.zero()
    if reg == 3:
        a = 1.5 - 12.0 * lam2
        return _even([], [(-a, 0.5 * a)])
    if reg == 2:
        x1 = 0.25 - 6.0 * lam2
        k = -1.0 / (1.0 - x1) ** 2
        return _even([x1], [(0.0, 0.5), (k, 0.5 - k * x1)])
    x1, x2, m, v2 = _ind_regime1_nodes(lam2)
    B = (v2 + 0.5) * -2.0 / (1.0 - x2)
    return _even(
        [x1, x2],
        [(0.0, 0.5), (m, 0.5 - m * x1), (B, v2 - B * x2)],
    )


def dual_norm_tv2_residual_ind(lam2: float) -> float:
    """``g(lam2) = ||σ¹[v2 - u^δ]||`` for the TV2 minimizer ``v2``."""
    reg = ind_tv2_regime(lam2)
    if reg == 0:
        return IND_NORMS[0]
    if reg == 3:
        return 1.0 / 16.0 + 1.5 * lam2
    if reg == 2:
        return (1.0 + 48.0 * lam2 + 576.0 * lam2**2) / (18.0 * (1.0 + 8.0 * lam2) ** 2)
    s1, _ = exact_sigma(oracle_tv2_ind(lam2), DataId.IndData)
    return s1.sup()


def _in_ind_region(l1, l2) -> bool:
    return l2 < l1 / 2.0 and l1 < dual_norm_tv2_residual_ind(l2)


def mu_from_lambda_ind(lam) -> MuPair:
    """Solve ``lam2 = 4 mu1 mu2`` and ``lam1 = 4 mu1 g(mu2)``.

    Eliminating ``mu1`` leaves ``g(mu2) / mu2 = lam1 / lam2``, bracketed by
    ``mu2`` in ``(lam2, 1/8)``.
    """
    l1, l2 = _lam(lam)
    if not _in_ind_region(l1, l2):
        raise OracleError(f"({l1}, {l2}) is outside the strict TGV region of the indicator data")
    ratio = l1 / l2
    fun = lambda m: dual_norm_tv2_residual_ind(m) / m - ratio
    lo, hi = l2, IND_NORMS[1] * (1.0 - 1e-15)
    flo, fhi = fun(lo), fun(hi)
    if not (flo > 0 > fhi):
        raise OracleError(f"mu2 bracket failed: f({lo})={flo:.3e}, f({hi})={fhi:.3e}")
    mu2 = brentq(fun, lo, hi, xtol=1e-15)
    return MuPair(l2 / (4.0 * mu2), mu2)


def oracle_tgv_ind(lam) -> PiecewiseAffineSignal:
    """TGV minimizer for the indicator data anywhere in the parameter plane."""
    l1, l2 = _lam(lam)
    if l1 >= IND_NORMS[0] and l2 >= IND_NORMS[1]:
        return PiecewiseAffineSignal.zero()
    if l2 >= l1 / 2.0:
        return oracle_tv1_ind(l1)
    if l1 >= dual_norm_tv2_residual_ind(l2):
        return oracle_tv2_ind(l2)
    mu = mu_from_lambda_ind((l1, l2))
    return (oracle_tv1_ind(mu.mu1) + (mu.mu1 / IND_NORMS[0]) * oracle_tv2_ind(mu.mu2)).simplify()


# --------------------------------------------------------------------------
# quadratic data and dispatch


def quad_dual_norms() -> tuple[float, float]:
    """``(2 sqrt(3) / 27, 1/12)`` for ``x**2 - 1/3``."""
    return QUAD_NORMS


def dual_norms(data) -> tuple[float, float]:
    data = DataId.parse(data)
    return {DataId.AbsData: ABS_NORMS, DataId.IndData: IND_NORMS, DataId.QuadData: QUAD_NORMS}[data]


def analytic_region(data, lam) -> str:
    """Region name from the closed-form boundaries (abs and indicator data)."""
    data = DataId.parse(data)
    l1, l2 = _lam(lam)
    n1, n2 = dual_norms(data)
    if l1 >= n1 and l2 >= n2:
        return "Zero"
    if data is DataId.AbsData:
        if l1 >= n1:
            return "EqualsTV2"
        lower, upper = abs_region_bounds(l1)
        if l2 >= upper:
            return "EqualsTV1"
        if l2 <= lower:
            return "EqualsTV2"
        return "StrictTGV"
    if data is DataId.IndData:
        if l2 >= l1 / 2.0:
            return "EqualsTV1"
        if l1 >= dual_norm_tv2_residual_ind(l2):
            return "EqualsTV2"
        return "StrictTGV"
    raise OracleError("no closed-form regions for the quadratic data")


def oracle(data, problem: str, lam1=None, lam2=None) -> PiecewiseAffineSignal:
    """Dispatch to the oracle for ``data`` and ``problem`` in {tv, tv2, tgv}."""
    data = DataId.parse(data)
    problem = str(problem).lower()
    table = {
        (DataId.AbsData, "tv"): lambda: oracle_tv1_abs(lam1),
        (DataId.AbsData, "tv2"): lambda: oracle_tv2_abs(lam2),
        (DataId.AbsData, "tgv"): lambda: oracle_tgv_abs((lam1, lam2)),
        (DataId.IndData, "tv"): lambda: oracle_tv1_ind(lam1),
        (DataId.IndData, "tv2"): lambda: oracle_tv2_ind(lam2),
        (DataId.IndData, "tgv"): lambda: oracle_tgv_ind((lam1, lam2)),
    }
    if (data, problem) not in table:
        raise OracleError(f"no closed-form {problem} minimizer for {data.name}")
    return table[(data, problem)]()
