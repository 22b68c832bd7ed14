"""Numerical minimizers for the discrete L2-TV, L2-TV2 and L2-TGV problems.

The discrete problems on ``n`` midpoint cells are

* TV1: ``0.5 h ||u - f||^2 + lam1 * sum |Du|``
* TV2: ``0.5 h ||u - f||^2 + lam2 * sum |D2 u| / h``
* TGV: ``0.5 h ||u - f||^2 + lam1 * sum h |Du/h - w| + lam2 * sum |Dw|``

with forward differences ``D``.  All three share the dual problem

    min_p,q  0.5 p^T (D D^T / h) p - p^T D f
    s.t.     h p = D'^T q,  |p| <= lam1,  |q| <= lam2,

whose solution gives ``u = f - D^T p / h``; TV2 drops the bound on ``p``
and TV1 drops ``q``.  The default backend solves this QP with a
primal-dual interior-point method.  A diagonally preconditioned
first-order primal-dual iteration and an exact taut-string solver (TV1
only) are available as alternatives.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._taut_string import tv1d_denoise
from .signal_core import GridSignal

__all__ = [
    "Problem",
    "SolverConfig",
    "SolverResult",
    "ConvergenceError",
    "solve_tv",
    "solve_tv2",
    "solve_tgv",
    "solve",
    "duality_gap",
    "gap_scale",
    "regularizer",
]

log = logging.getLogger(__name__)


class Problem(enum.Enum):
    TV1 = "tv"
    TV2 = "tv2"
    TGV = "tgv"

    @classmethod
    def parse(cls, s) -> "Problem":
        if isinstance(s, Problem):
            return s
        s = str(s).lower()
        for p in cls:
            if s in (p.value, p.name.lower()):
                return p
        raise ValueError(f"unknown problem {s!r}")


class ConvergenceError(RuntimeError):
    """Raised when an iterative computation misses its tolerance."""

    def __init__(self, msg, last_gap=None):
        super().__init__(msg)
        self.last_gap = last_gap


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    Parameters
    ----------
    max_iters : int
        Iteration cap (interior-point runs stop far earlier).
    tol_gap : float
        Duality-gap tolerance relative to ``0.5 h ||f||^2 + 1``.
    step_ratio : float
        Primal/dual step split of the first-order backend.
    method : str
        ``"ipm"`` (default), ``"pdhg"``, or ``"taut_string"`` (TV1 only).
    """

    max_iters: int = 200000
    tol_gap: float = 1e-8
    step_ratio: float = 1.0
    method: str = "ipm"

    def __post_init__(self):
        if int(self.max_iters) <= 0:
            raise ValueError("max_iters must be positive")
        if not 0 < self.tol_gap < 1:
            raise ValueError("tol_gap must lie in (0, 1)")
        if not self.step_ratio > 0:
            raise ValueError("step_ratio must be positive")
        if self.method not in ("ipm", "pdhg", "taut_string"):
            raise ValueError(f"unknown method {self.method!r}")

    @classmethod
    def from_mapping(cls, m: dict) -> "SolverConfig":
        kw = {}
        for key, val in m.items():
            if key == "max_iters":
                kw[key] = int(val)
            elif key in ("tol_gap", "step_ratio"):
                kw[key] = float(val)
            elif key == "method":
                kw[key] = str(val)
            else:
                raise ValueError(f"unknown solver option {key!r}")
        return cls(**kw)


@dataclass(frozen=True)
class SolverResult:
    """Output of a solve; ``w`` is the auxiliary slope field (TGV only)."""

    u: GridSignal
    w: np.ndarray | None
    iterations: int
    final_gap: float
    converged: bool
    method: str = "ipm"


def gap_scale(f: GridSignal) -> float:
    return 0.5 * f.h * float(np.dot(f.values, f.values)) + 1.0


def _diff(n, fmt="csr"):
    e = np.ones(n - 1)
    return sp.diags([-e, e], [0, 1], shape=(n - 1, n), format=fmt)


def regularizer(u: np.ndarray, h: float, problem: Problem, lam1, lam2, w=None) -> float:
    """Discrete regularizer; the TGV value needs the slope field ``w``."""
    if problem is Problem.TV1:
        return lam1 * float(np.sum(np.abs(np.diff(u))))
    if problem is Problem.TV2:
        return lam2 * float(np.sum(np.abs(np.diff(u, 2)))) / h
    return lam1 * float(np.sum(np.abs(np.diff(u) - h * w))) + lam2 * float(
        np.sum(np.abs(np.diff(w)))
    )


def _project_residual(r: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    """Remove the mean (order 1) or the affine part (order 2) of ``r``."""
    r = r - r.mean()
    if order == 2:
        r = r - x * (np.dot(r, x) / np.dot(x, x))
    return r


def duality_gap(f: GridSignal, u, problem, lam1=None, lam2=None, w=None) -> float:
    """Primal value at ``(u, w)`` minus the dual value at a feasible residual.

    The dual candidate is the residual ``u - f``, projected onto the
    admissible moment space and scaled into the dual ball.  For TGV with
    ``w`` omitted, the exact TGV value of ``u`` is used.
    """
    problem = Problem.parse(problem)
    uv = u.values if isinstance(u, GridSignal) else np.asarray(u, dtype=float)
    fv = f.values
    h = f.h
    if problem is Problem.TGV and w is None:
        from .functionals import LambdaPair, tgv_value

        reg = tgv_value(GridSignal(uv), LambdaPair(lam1, lam2))
    else:
        reg = regularizer(uv, h, problem, lam1, lam2, w)
    primal = 0.5 * h * float(np.sum((uv - fv) ** 2)) + reg

    order = 1 if problem is Problem.TV1 else 2
    r = _project_residual(uv - fv, f.x, order)
    s1 = h * np.cumsum(r)
    s2 = h * np.cumsum(s1)
    theta = 1.0
    if problem in (Problem.TV1, Problem.TGV):
        m = float(np.max(np.abs(s1)))
        if m > lam1:
            theta = min(theta, lam1 / m)
    if problem in (Problem.TV2, Problem.TGV):
        m = float(np.max(np.abs(s2)))
        if m > lam2:
            theta = min(theta, lam2 / m)
    r *= theta
    dual = -0.5 * h * float(np.dot(r, r)) - h * float(np.dot(r, fv))
    return primal - dual


# --------------------------------------------------------------------------
# interior point


def _ipm(f: np.ndarray, h: float, lam1: float, lam2: float | None, max_iters: int):
    """Mehrotra predictor-corrector on the dual QP.

    Returns ``(u, w, iterations, ok)``; ``lam1`` may be infinite (TV2) and
    ``lam2`` is None for TV1.
    """
    n = f.size
    m1, m2 = n - 1, n - 2
    D = _diff(n)
    H = (D @ D.T) / h
    b = D @ f
    use_q = lam2 is not None
    if use_q:
        Dp = _diff(n - 1)
        Q = sp.block_diag([H, sp.csr_matrix((m2, m2))], format="csr")
        c = np.concatenate([b, np.zeros(m2)])
        A = sp.hstack([h * sp.eye(m1), -Dp.T], format="csr")
        beta = np.concatenate([np.full(m1, lam1), np.full(m2, lam2)])
    else:
        Q, c, A = H, b, None
        beta = np.full(m1, lam1)
    N = Q.shape[0]
    bnd = np.isfinite(beta)
    nb = int(bnd.sum())
    beta_b = np.where(bnd, beta, 0.0)

    x = np.zeros(N)
    nu = np.zeros(m1) if use_q else None
    zp = bnd.astype(float)
    zm = zp.copy()
    eps = 1e-14
    # rounding floor of the stationarity residual grows like ||Q|| ~ 4/h
    eps_d = eps * (1.0 + float(np.max(np.abs(c), initial=0.0)) + 4.0 / h * float(np.max(beta_b, initial=0.0)))
    stall = 0
    ok = False
    it = 0
    for it in range(1, max_iters + 1):
        sp_ = np.where(bnd, beta_b - x, 1.0)
        sm = np.where(bnd, beta_b + x, 1.0)
        mu = (np.dot(sp_ * zp, bnd) + np.dot(sm * zm, bnd)) / (2 * max(nb, 1))
        rd = Q @ x - c + zp - zm
        if use_q:
            rd += A.T @ nu
            rp = A @ x
        else:
            rp = np.zeros(0)
        nrd = float(np.max(np.abs(rd))) if N else 0.0
        nrp = float(np.max(np.abs(rp))) if rp.size else 0.0
        if (nb == 0 or mu < eps) and nrd < eps_d and nrp < eps_d:
            ok = True
            break
        Sig = np.where(bnd, zp / sp_ + zm / sm, 0.0)
        M = Q + sp.diags(Sig)
        K = sp.bmat([[M, A.T], [A, None]], format="csc") if use_q else M.tocsc()
        try:
            lu = spla.splu(K)
        except RuntimeError:
            break

        def newton(rcp, rcm):
            g = -rd - np.where(bnd, rcp / sp_ - rcm / sm, 0.0)
            rhs = np.concatenate([g, -rp]) if use_q else g
            sol = lu.solve(rhs)
            dx = sol[:N]
            dnu = sol[N:] if use_q else None
            dzp = np.where(bnd, (rcp + zp * dx) / sp_, 0.0)
            dzm = np.where(bnd, (rcm - zm * dx) / sm, 0.0)
            return dx, dnu, dzp, dzm

        def steplen(dx, dzp, dzm):
            a = 1.0
            for s, ds in ((sp_, -dx), (sm, dx), (zp, dzp), (zm, dzm)):
                msk = bnd & (ds < 0)
                if msk.any():
                    a = min(a, float(np.min(-s[msk] / ds[msk])))
            return a

        rcp = np.where(bnd, -sp_ * zp, 0.0)
        rcm = np.where(bnd, -sm * zm, 0.0)
        dx, dnu, dzp, dzm = newton(rcp, rcm)
        if nb:
            a = steplen(dx, dzp, dzm)
            mu_aff = (
                np.dot((sp_ - a * dx) * (zp + a * dzp), bnd)
                + np.dot((sm + a * dx) * (zm + a * dzm), bnd)
            ) / (2 * nb)
            sig = (mu_aff / mu) ** 3
            rcp = np.where(bnd, sig * mu - sp_ * zp + dx * dzp, 0.0)
            rcm = np.where(bnd, sig * mu - sm * zm - dx * dzm, 0.0)
            dx, dnu, dzp, dzm = newton(rcp, rcm)
            a = min(1.0, 0.995 * steplen(dx, dzp, dzm))
        else:
            a = 1.0
        xn = x + a * dx
        if not (np.all(np.isfinite(xn)) and np.all(np.abs(xn[bnd]) < beta_b[bnd])):
            break
        x = xn
        zp = zp + a * dzp
        zm = zm + a * dzm
        if use_q:
            nu = nu + a * dnu
        stall = stall + 1 if a < 1e-10 else 0
        if stall >= 3:
            break
    p = x[:m1]
    u = f - (D.T @ p) / h
    w = nu.copy() if use_q else None
    sp_ = np.where(bnd, beta_b - x, np.inf)
    sm = np.where(bnd, beta_b + x, np.inf)
    comp = (zp, zm, sp_, sm, m1, use_q)
    return u, w, it, ok, comp


def _active_sets(comp, ratio):
    """Signed active bounds: multiplier above ``ratio`` times its slack."""
    zp, zm, sp_, sm, m1, use_q = comp
    sign = np.where(zp > ratio * sp_, 1.0, 0.0) - np.where(zm > ratio * sm, 1.0, 0.0)
    return sign[:m1], (sign[m1:] if use_q else None)


def _polish(f, h, lam1, lam2, sp_act, sq_act):
    """Primal solve with the active sets of the interior-point run fixed.

    Inactive dual bounds turn into equality constraints on ``Du - v`` and
    ``Dv`` (with ``v = h w``); active ones contribute a fixed linear term.
    Computing ``u`` directly avoids the rough rounding noise of
    ``f - D^T p / h``.
    """
    n = f.size
    m1 = n - 1
    D = _diff(n)
    act_p = sp_act != 0
    use_w = sq_act is not None
    if use_w:
        Dp = _diff(n - 1)
        act_q = sq_act != 0
        Cp = sp.hstack([D, -sp.eye(m1)], format="csr")[~act_p]
        Cq = sp.hstack([sp.csr_matrix((n - 2, n)), Dp], format="csr")[~act_q]
        C = sp.vstack([Cp, Cq], format="csr")
        lp = lam1 * sp_act if np.isfinite(lam1) else np.zeros(m1)
        g = np.concatenate([D.T @ lp, -lp + Dp.T @ (lam2 * sq_act) / h])
        Hd = np.concatenate([np.full(n, h), np.zeros(m1)])
    else:
        C = D[~act_p]
        g = D.T @ (lam1 * sp_act)
        Hd = np.full(n, h)
    nx = Hd.size
    rhs = np.concatenate([-g, np.zeros(C.shape[0])])
    rhs[:n] += h * f
    K = sp.bmat([[sp.diags(Hd), C.T], [C, None]], format="csc")
    try:
        lu = spla.splu(K)
    except RuntimeError:
        return None
    sol = lu.solve(rhs)
    sol += lu.solve(rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        return None
    res = np.max(np.abs(K @ sol - rhs))
    if res > 1e-10 * (1.0 + np.max(np.abs(rhs))):
        return None
    u = sol[:n]
    w = sol[n:nx] / h if use_w else None
    return u, w


# --------------------------------------------------------------------------
# first-order primal-dual


def _pdhg(f: np.ndarray, h: float, problem: Problem, lam1, lam2, cfg: SolverConfig, check_every=100):
    """Diagonally preconditioned primal-dual iteration on the scaled saddle form.

    The objective is divided by ``h``; for TGV the unknowns are ``u`` and
    ``v = h w``.
    """
    n = f.size
    D = _diff(n)
    if problem is Problem.TV1:
        K = (lam1 / h) * D
        nx = n
    elif problem is Problem.TV2:
        K = (lam2 / h**2) * (_diff(n - 1) @ D)
        nx = n
    else:
        Dp = _diff(n - 1)
        K1 = (lam1 / h) * sp.hstack([D, -sp.eye(n - 1)])
        K2 = (lam2 / h**2) * sp.hstack([sp.csr_matrix((n - 2, n)), Dp])
        K = sp.vstack([K1, K2])
        nx = 2 * n - 1
    K = sp.csr_matrix(K)
    KT = sp.csr_matrix(K.T)
    absK = abs(K)
    tau = cfg.step_ratio / np.maximum(np.asarray(absK.sum(axis=0)).ravel(), 1e-300)
    sigma = 1.0 / (cfg.step_ratio * np.maximum(np.asarray(absK.sum(axis=1)).ravel(), 1e-300))
    x = np.zeros(nx)
    x[:n] = f
    if problem is Problem.TGV:
        x[n:] = np.diff(f)
    y = np.zeros(K.shape[0])
    tu = tau[:n]
    scale = gap_scale(GridSignal(f))
    fs = GridSignal(f)
    gap = math.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        xn = x - tau * (KT @ y)
        xn[:n] = (xn[:n] + tu * f) / (1.0 + tu)
        y = np.clip(y + sigma * (K @ (2.0 * xn - x)), -1.0, 1.0)
        x = xn
        if it % check_every == 0 or it == cfg.max_iters:
            w = x[n:] / h if problem is Problem.TGV else None
            gap = duality_gap(fs, x[:n], problem, lam1, lam2, w)
            if gap <= cfg.tol_gap * scale:
                break
    w = x[n:] / h if problem is Problem.TGV else None
    return x[:n].copy(), w, it, gap


# --------------------------------------------------------------------------
# public solvers


def solve(f: GridSignal, problem, lam1=None, lam2=None, cfg: SolverConfig | None = None) -> SolverResult:
    """Solve one of the three discrete problems."""
    cfg = cfg or SolverConfig()
    problem = Problem.parse(problem)
    for name, val, need in (
        ("lam1", lam1, problem in (Problem.TV1, Problem.TGV)),
        ("lam2", lam2, problem in (Problem.TV2, Problem.TGV)),
    ):
        if need and not (val is not None and val > 0 and math.isfinite(val)):
            raise ValueError(f"{name} must be positive and finite, got {val!r}")
    h = f.h
    fv = np.array(f.values)
    scale = gap_scale(f)
    method = cfg.method
    if method == "taut_string":
        if problem is not Problem.TV1:
            raise ValueError("the taut-string backend only solves TV1")
        u = tv1d_denoise(fv, lam1 / h)
        w, iters = None, 1
    elif method == "pdhg":
        u, w, iters, _ = _pdhg(fv, h, problem, lam1, lam2, cfg)
    else:
        l1 = math.inf if problem is Problem.TV2 else lam1
        l2 = None if problem is Problem.TV1 else lam2
        u, w, iters, ok, comp = _ipm(fv, h, l1, l2, min(cfg.max_iters, 500))
        if not ok:
            log.debug("interior point stopped before its internal tolerance")
        if problem is Problem.TV2:
            w = None
        best = duality_gap(f, u, problem, lam1, lam2, w)
        # degenerate bounds make the active set ambiguous; try a ladder of
        # separation ratios and keep whatever has the smallest gap
        for ratio in (1e12, 1e8, 1e4):
            polished = _polish(fv, h, l1, l2, *_active_sets(comp, ratio))
            if polished is None:
                continue
            pw = None if problem is Problem.TV2 else polished[1]
            g1 = duality_gap(f, polished[0], problem, lam1, lam2, pw)
            if g1 < best:
                best, u, w = g1, polished[0], pw
            if best <= 1e-3 * cfg.tol_gap * scale:
                break
    gap = duality_gap(f, u, problem, lam1, lam2, w)
    converged = gap <= cfg.tol_gap * scale
    if not converged:
        log.warning("%s solve (%s) not converged: gap %.3e", problem.value, method, gap)
    return SolverResult(GridSignal(u), w, int(iters), float(gap), bool(converged), method)


def solve_tv(f: GridSignal, lam1: float, cfg: SolverConfig | None = None) -> SolverResult:
    """Minimize ``0.5 h ||u - f||^2 + lam1 * sum |Du|``."""
    return solve(f, Problem.TV1, lam1=lam1, cfg=cfg)


def solve_tv2(f: GridSignal, lam2: float, cfg: SolverConfig | None = None) -> SolverResult:
    """Minimize ``0.5 h ||u - f||^2 + lam2 * sum |D2 u| / h``."""
    return solve(f, Problem.TV2, lam2=lam2, cfg=cfg)


def solve_tgv(f: GridSignal, lam, cfg: SolverConfig | None = None) -> SolverResult:
    """Minimize the discrete TGV objective jointly over ``(u, w)``.

    ``lam`` is a LambdaPair or a ``(lam1, lam2)`` tuple.
    """
    l1, l2 = (lam.lambda1, lam.lambda2) if hasattr(lam, "lambda1") else lam
    return solve(f, Problem.TGV, lam1=l1, lam2=l2, cfg=cfg)
