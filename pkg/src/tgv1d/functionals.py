"""Objectives, the discrete TGV value, σ-based dual norms and ball tests."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .signal_core import (
    GridSignal,
    default_moment_tol,
    in_subspace,
    sigma_transforms,
    tv_seminorm,
)
from .solver import ConvergenceError, SolverConfig

__all__ = [
    "LambdaPair",
    "DualNormResult",
    "BallMembership",
    "dual_norm_tv",
    "objective_tv",
    "objective_tgv",
    "tgv_value",
    "in_tgv_ball",
]


@dataclass(frozen=True)
class LambdaPair:
    """Regularization weights: ``lambda1`` bounds the derivative of the test
    function, ``lambda2`` the test function itself."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)

    def __iter__(self):
        yield self.lambda1
        yield self.lambda2


@dataclass(frozen=True)
class DualNormResult:
    """Dual norm of a residual.

    ``value`` is None exactly when the norm is infinite, which happens iff
    the residual has a nonvanishing moment of the relevant order.
    """

    value: float | None
    in_subspace: bool
    argmax_location: int | None

    @property
    def infinite(self) -> bool:
        return self.value is None

    def as_float(self) -> float:
        return math.inf if self.value is None else self.value


@dataclass(frozen=True)
class BallMembership:
    inside: bool
    in_subspace: bool
    margin1: float
    margin2: float

    def __bool__(self):
        return self.inside


def dual_norm_tv(r: GridSignal, i: int, tol: float | None = None) -> DualNormResult:
    """Sup-norm of σ^i[r] for r with vanishing moments below order ``i``.

    This is the dual norm for unit weight; divide by ``lambda_i`` for the
    weighted functional.
    """
    if i not in (1, 2):
        raise ValueError("i must be 1 or 2")
    if not in_subspace(r, i, tol):
        return DualNormResult(None, False, None)
    st = sigma_transforms(r)
    if i == 1:
        return DualNormResult(st.sup1, True, st.argmax1)
    return DualNormResult(st.sup2, True, st.argmax2)


def objective_tv(u: GridSignal, f: GridSignal, i: int, lam: float) -> float:
    """``0.5 h ||u - f||^2 + lam * TV^i(u)`` on the grid."""
    if u.n != f.n:
        raise ValueError(f"shape mismatch: {u.n} vs {f.n}")
    d = u.values - f.values
    return 0.5 * u.h * float(np.dot(d, d)) + lam * tv_seminorm(u, i)


def objective_tgv(u: GridSignal, f: GridSignal, lam: LambdaPair) -> float:
    if u.n != f.n:
        raise ValueError(f"shape mismatch: {u.n} vs {f.n}")
    d = u.values - f.values
    return 0.5 * u.h * float(np.dot(d, d)) + tgv_value(u, lam)


def _tgv_dp(g: np.ndarray, delta: float, bound: float) -> float:
    """max sum q_k g_k  s.t. |q_k| <= bound, |q_k - q_{k-1}| <= delta,
    q_{-1} = q_{m} = 0.

    Dynamic program over concave piecewise-linear value functions, kept as
    two deques of (length, slope) segments on either side of the peak.
    Slopes are stored relative to the running offset ``G``.
    """
    L, R = deque(), deque()
    lo = hi = qs = 0.0
    vmax = 0.0
    G = 0.0

    def dilate():
        nonlocal lo, hi, qs
        L.append([2.0 * delta, -G])
        qs += delta
        lo -= delta
        hi += delta

    for gk in g:
        dilate()
        if lo < -bound:
            cut = -bound - lo
            while cut > 0.0 and L:
                seg = L[0]
                if seg[0] <= cut:
                    cut -= seg[0]
                    L.popleft()
                else:
                    seg[0] -= cut
                    cut = 0.0
            while cut > 0.0 and R:
                seg = R[-1]
                take = min(seg[0], cut)
                vmax += (seg[1] + G) * take
                qs += take
                cut -= take
                seg[0] -= take
                if seg[0] <= 0.0:
                    R.pop()
            lo = -bound
        if hi > bound:
            cut = hi - bound
            while cut > 0.0 and R:
                seg = R[0]
                if seg[0] <= cut:
                    cut -= seg[0]
                    R.popleft()
                else:
                    seg[0] -= cut
                    cut = 0.0
            while cut > 0.0 and L:
                seg = L[-1]
                take = min(seg[0], cut)
                vmax -= (seg[1] + G) * take
                qs -= take
                cut -= take
                seg[0] -= take
                if seg[0] <= 0.0:
                    L.pop()
            hi = bound
        vmax += gk * qs
        G += gk
        while R and R[-1][1] + G > 0.0:
            seg = R.pop()
            vmax += (seg[1] + G) * seg[0]
            qs += seg[0]
            L.append(seg)
        while L and L[-1][1] + G < 0.0:
            seg = L.pop()
            vmax -= (seg[1] + G) * seg[0]
            qs -= seg[0]
            R.append(seg)

    dilate()
    val, pos = vmax, qs
    if pos <= 0.0:
        for seg in reversed(R):
            step = min(seg[0], -pos)
            val += (seg[1] + G) * step
            pos += step
            if pos >= 0.0:
                break
    else:
        for seg in reversed(L):
            step = min(seg[0], pos)
            val -= (seg[1] + G) * step
            pos -= step
            if pos <= 0.0:
                break
    return max(val, 0.0)


def _tgv_lp(u: np.ndarray, h: float, lam1: float, lam2: float):
    """Primal LP ``min_w lam1 sum |Du - h w| + lam2 sum |Dw|`` via HiGHS."""
    n = u.size
    m, k = n - 1, n - 2
    d = np.diff(u) / h
    I = sp.eye(m, format="csr")
    Dp = sp.diags([-np.ones(k), np.ones(k)], [0, 1], shape=(k, m), format="csr")
    Z1, Z2, Ik = sp.csr_matrix((m, k)), sp.csr_matrix((k, m)), sp.eye(k, format="csr")
    A = sp.vstack(
        [
            sp.hstack([-I, -I, Z1]),
            sp.hstack([I, -I, Z1]),
            sp.hstack([Dp, Z2, -Ik]),
            sp.hstack([-Dp, Z2, -Ik]),
        ],
        format="csr",
    )
    b = np.concatenate([-d, d, np.zeros(2 * k)])
    c = np.concatenate([np.zeros(m), np.full(m, h * lam1), np.full(k, lam2)])
    bounds = [(None, None)] * m + [(0, None)] * (m + k)
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"HiGHS failed: {res.message}")
    gap = float(res.fun - res.ineqlin.marginals @ b)
    return float(res.fun), res.x[:m], gap


def tgv_value(u: GridSignal, lam: LambdaPair, cfg: SolverConfig | None = None, method: str = "dp") -> float:
    """Discrete TGV of ``u``: ``min_w lam1 sum h |Du/h - w| + lam2 sum |Dw|``.

    ``method="dp"`` evaluates the equivalent dual maximization exactly;
    ``method="lp"`` solves the primal LP with HiGHS and checks its gap
    against ``cfg.tol_gap``.
    """
    lam = lam if isinstance(lam, LambdaPair) else LambdaPair(*lam)
    h = u.h
    if method == "dp":
        g = np.diff(u.values, 2) / h
        return _tgv_dp(g, h * lam.lambda1, lam.lambda2)
    if method == "lp":
        cfg = cfg or SolverConfig()
        val, _, gap = _tgv_lp(np.asarray(u.values), h, lam.lambda1, lam.lambda2)
        if abs(gap) > cfg.tol_gap * (1.0 + abs(val)):
            raise ConvergenceError(f"TGV LP gap {gap:.3e} above tolerance", gap)
        return val
    raise ValueError(f"unknown method {method!r}")


def in_tgv_ball(r: GridSignal, lam: LambdaPair, tol: float | None = None) -> BallMembership:
    """Sufficient σ-test for the TGV dual ball, with margins ``lambda_i - sup_i``."""
    lam = lam if isinstance(lam, LambdaPair) else LambdaPair(*lam)
    st = sigma_transforms(r)
    m1, m2 = lam.lambda1 - st.sup1, lam.lambda2 - st.sup2
    sub = in_subspace(r, 2, tol if tol is not None else default_moment_tol(r))
    return BallMembership(bool(sub and m1 >= 0 and m2 >= 0), bool(sub), m1, m2)
