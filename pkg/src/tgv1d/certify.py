"""Optimality certificates, jump/bend structure checks and region maps.

A grid solution ``u`` of data ``f`` is certified by its residual
``r = u - f``: ``r`` must lie in the dual ball of the regularizer (σ
sup-norm bounds plus vanishing moments) and satisfy the extremality
identity ``R(u) + h sum (u - f) u = 0``.  Structural checks look at the
piecewise-affine shape: a jump needs ``σ¹ = sign(jump) lam1``, a bend
needs ``σ² = -sign(bend) lam2`` (or a σ¹-saturated point), and stretches
where the solution follows the data need one of two saturation patterns.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .functionals import LambdaPair, tgv_value
from .signal_core import (
    DataId,
    GridSignal,
    PiecewiseAffineSignal,
    PiecewisePolynomial,
    data_piecewise,
    data_polynomial,
    exact_sigma,
    eval_piecewise,
    in_subspace,
    sample,
    sigma_transforms,
    tv_seminorm,
)
from .solver import ConvergenceError, Problem, SolverConfig, gap_scale, solve

__all__ = [
    "Certificate",
    "StructuralEvent",
    "Verdict",
    "RegionVerdict",
    "RegionMap",
    "check_optimality",
    "check_structure",
    "structure_ok",
    "fit_piecewise",
    "classify_region",
    "region_map",
    "default_boundary_tol",
]

log = logging.getLogger(__name__)


def _lams(lam):
    """``(lam1, lam2)`` floats, either possibly None."""
    if lam is None:
        return None, None
    if isinstance(lam, LambdaPair):
        return lam.lambda1, lam.lambda2
    l1, l2 = lam
    return (None if l1 is None else float(l1)), (None if l2 is None else float(l2))


@dataclass
class StructuralEvent:
    """One jump, bend or data-match stretch and its σ test.

    ``location`` is a breakpoint or an ``(a, b)`` interval; ``sign`` is the
    direction of the jump or bend (for data matches, the sign of the
    saturated σ); ``condition`` names the σ pattern that was tested.
    """

    kind: str
    location: float | tuple
    sign: int
    satisfied: bool
    margin: float
    condition: str = ""

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.location, tuple):
            d["location"] = list(self.location)
        return d


@dataclass
class Certificate:
    sigma1_sup: float
    sigma2_sup: float
    feasible: bool
    identity_residual: float
    structural_events: list = field(default_factory=list)
    passed: bool = False
    reasons: list = field(default_factory=list)

    def to_dict(self):
        return {
            "sigma1_sup": self.sigma1_sup,
            "sigma2_sup": self.sigma2_sup,
            "feasible": self.feasible,
            "identity_residual": self.identity_residual,
            "structural_events": [e.to_dict() for e in self.structural_events],
            "verdict": "pass" if self.passed else "fail",
            "reasons": list(self.reasons),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def check_optimality(u: GridSignal, f: GridSignal, problem, lam, tol: float = 1e-6, slack: float | None = None) -> Certificate:
    """Certify ``u`` as the minimizer for data ``f``.

    Feasibility allows ``slack`` (default ``5 h``) on the σ bounds and on
    the moments; the identity residual must be at most
    ``tol * (0.5 h ||f||^2 + 1)``.
    """
    if u.n != f.n:
        raise ValueError(f"shape mismatch: {u.n} vs {f.n}")
    problem = Problem.parse(problem)
    l1, l2 = _lams(lam)
    h = f.h
    slack = 5.0 * h if slack is None else slack
    r = u - f
    st = sigma_transforms(r)
    reasons = []
    order = 1 if problem is Problem.TV1 else 2
    feasible = True
    if not in_subspace(r, order, slack):
        feasible = False
        reasons.append(f"residual moments of order < {order} do not vanish")
    if problem in (Problem.TV1, Problem.TGV) and st.sup1 > l1 + slack:
        feasible = False
        reasons.append(f"sup|sigma1| = {st.sup1:.6g} > lam1 = {l1:.6g}")
    if problem in (Problem.TV2, Problem.TGV) and st.sup2 > l2 + slack:
        feasible = False
        reasons.append(f"sup|sigma2| = {st.sup2:.6g} > lam2 = {l2:.6g}")
    if problem is Problem.TV1:
        reg = l1 * tv_seminorm(u, 1)
    elif problem is Problem.TV2:
        reg = l2 * tv_seminorm(u, 2)
    else:
        reg = tgv_value(u, LambdaPair(l1, l2))
    ident = abs(reg + h * float(np.dot(r.values, u.values)))
    limit = tol * gap_scale(f)
    if ident > limit:
        reasons.append(f"identity residual {ident:.3e} > {limit:.3e}")
    passed = feasible and ident <= limit
    return Certificate(st.sup1, st.sup2, feasible, ident, [], passed, reasons)


# --------------------------------------------------------------------------
# structure


class _ExactSigma:
    def __init__(self, p, data):
        self.s1, self.s2 = exact_sigma(p, data)

    def at(self, i, x):
        s = self.s1 if i == 1 else self.s2
        return float(s(np.array([x]))[0])

    def dev(self, i, a, b, target):
        s = self.s1 if i == 1 else self.s2
        return s.max_abs(a, b, target)[0]

    def mid(self, i, a, b):
        return self.at(i, 0.5 * (a + b))


class _GridSigma:
    def __init__(self, r: GridSignal):
        st = sigma_transforms(r)
        self.e = np.concatenate([[-1.0], r.edges])
        self.s = {1: np.concatenate([[0.0], st.sigma1]), 2: np.concatenate([[0.0], st.sigma2])}

    def at(self, i, x):
        return float(np.interp(x, self.e, self.s[i]))

    def dev(self, i, a, b, target):
        m = (self.e >= a) & (self.e <= b)
        if not m.any():
            return abs(self.at(i, 0.5 * (a + b)) - target)
        return float(np.max(np.abs(self.s[i][m] - target)))

    def mid(self, i, a, b):
        return self.at(i, 0.5 * (a + b))


def _match_intervals_exact(p: PiecewiseAffineSignal, data, tol):
    d = data if isinstance(data, PiecewiseAffineSignal) else data_piecewise(data)
    diff = p - d
    out = []
    for k in range(diff.n_segments):
        a, b = diff.breakpoints[k], diff.breakpoints[k + 1]
        if abs(diff.slopes[k]) <= tol and abs(diff.intercepts[k] + diff.slopes[k] * 0.5 * (a + b)) <= tol:
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b, out[-1][2])
            else:
                out.append((a, b, k))
    # slope of p on each match interval
    res = []
    for a, b, _ in out:
        k = int(p.segment_index(np.array([0.5 * (a + b)]))[0])
        res.append((a, b, p.slopes[k]))
    return res


def _match_intervals_grid(pv: np.ndarray, f: GridSignal, thr: float, p: PiecewiseAffineSignal, min_cells=3):
    close = np.abs(pv - f.values) <= thr
    x, h = f.x, f.h
    res = []
    i = 0
    n = f.n
    while i < n:
        if close[i]:
            j = i
            while j + 1 < n and close[j + 1]:
                j += 1
            if j - i + 1 >= min_cells:
                a, b = x[i] - 0.5 * h, x[j] + 0.5 * h
                k = int(p.segment_index(np.array([0.5 * (a + b)]))[0])
                res.append((max(a, -1.0), min(b, 1.0), p.slopes[k]))
            i = j + 1
        else:
            i += 1
    return res


def check_structure(p: PiecewiseAffineSignal, f, lam, tol: float = 1e-9, problem="tgv", slack: float | None = None, u: GridSignal | None = None) -> list:
    """Evaluate the σ conditions at every breakpoint and data-match stretch of ``p``.

    ``f`` may be a data id or an exact piecewise signal (σ computed in
    closed form, ``slack`` default 0) or a :class:`GridSignal` (discrete
    σ of ``u - f``, with ``u`` defaulting to ``p`` sampled on the grid, and
    ``slack`` default ``5 h``).
    """
    problem = Problem.parse(problem)
    l1, l2 = _lams(lam)
    l1 = math.inf if l1 is None else l1
    l2 = math.inf if l2 is None else l2
    if isinstance(f, GridSignal):
        slack = 5.0 * f.h if slack is None else slack
        pv = eval_piecewise(p, f)
        sig = _GridSigma((u if u is not None else pv) - f)
        ref = u if u is not None else pv
        mtol = max(tol, 1e-6 * (1.0 + float(np.max(np.abs(f.values)))))
        matches = _match_intervals_grid(ref.values, f, mtol, p)
    else:
        slack = 0.0 if slack is None else slack
        data = f if isinstance(f, (PiecewiseAffineSignal, PiecewisePolynomial)) else DataId.parse(f)
        sig = _ExactSigma(p, data)
        if isinstance(data, PiecewisePolynomial) or data is DataId.QuadData:
            matches = []
        else:
            matches = _match_intervals_exact(p, data, max(tol, 1e-12))
    thr = tol + slack
    events = []
    jumps, bends = p.jumps(), p.bends()
    for k, b in enumerate(p.breakpoints[1:-1]):
        J, B = jumps[k], bends[k]
        if abs(J) > tol:
            s = int(np.sign(J))
            if problem is Problem.TV2:
                events.append(StructuralEvent("Jump", b, s, False, math.inf, "no jumps allowed"))
                continue
            m = abs(sig.at(1, b) - s * l1)
            events.append(StructuralEvent("Jump", b, s, m <= thr, m, "sigma1 = sign*lam1"))
        elif abs(B) > tol:
            s = int(np.sign(B))
            cands = []
            if problem in (Problem.TV2, Problem.TGV):
                cands.append((abs(sig.at(2, b) + s * l2), "sigma2 = -sign*lam2"))
            if problem in (Problem.TV1, Problem.TGV):
                cands.append((abs(abs(sig.at(1, b)) - l1), "|sigma1| = lam1"))
            m, cond = min(cands)
            events.append(StructuralEvent("Bend", b, s, m <= thr, m, cond))
    for a, b, slope in matches:
        if problem is Problem.TV1:
            if abs(slope) <= tol:
                events.append(StructuralEvent("DataMatch", (a, b), 0, True, 0.0, "flat, no condition"))
                continue
            s = int(np.sign(slope))
            m = sig.dev(1, a, b, s * l1)
            events.append(StructuralEvent("DataMatch", (a, b), s, m <= thr, m, "sigma1 = sign(slope)*lam1"))
            continue
        cands = []
        if problem is Problem.TGV:
            s1 = int(np.sign(sig.mid(1, a, b))) or 1
            cands.append((sig.dev(1, a, b, s1 * l1), s1, "|sigma1| = lam1"))
        s2 = int(np.sign(sig.mid(2, a, b))) or 1
        m2 = max(sig.dev(1, a, b, 0.0), sig.dev(2, a, b, s2 * l2))
        cands.append((m2, s2, "sigma1 = 0 and |sigma2| = lam2"))
        m, s, cond = min(cands, key=lambda c: c[0])
        events.append(StructuralEvent("DataMatch", (a, b), s, m <= thr, m, cond))
    return events


def structure_ok(events) -> bool:
    return all(e.satisfied for e in events)


def fit_piecewise(u: GridSignal, merge: int = 3) -> PiecewiseAffineSignal:
    """Piecewise-affine fit of a grid solution.

    A cell edge is a jump if ``|Du|`` exceeds ten times its median and four
    times both neighbouring differences, a cell
    a bend if ``|D2 u| / h`` exceeds ten times its median and ``10 h``;
    detections within ``merge`` cells are merged.  Each segment is fitted
    by least squares away from its breakpoints, and each bend is moved to
    the intersection of its two neighbouring lines.
    """
    v = np.asarray(u.values)
    n, h, x = u.n, u.h, u.x
    du = np.abs(np.diff(v))
    d2 = np.abs(np.diff(v, 2)) / h
    jthr = max(10.0 * float(np.median(du)), 1e-9 * (1.0 + float(np.max(np.abs(v)))), 10.0 * h * float(np.median(du / h)))
    bthr = max(10.0 * float(np.median(d2)), 10.0 * h)
    # a jump is an isolated large edge; a run of them is a steep ramp
    nb = np.maximum(np.concatenate([[0.0], du[:-1]]), np.concatenate([du[1:], [0.0]]))
    jumps = np.nonzero((du > jthr) & (du > 4.0 * nb))[0]
    # a jump at edge j inflates the second differences at cells j-1 and j
    near_jump = np.zeros(n - 2, bool)
    for j in jumps:
        near_jump[max(j - 2, 0): min(j + 2, n - 2)] = True
    bends = np.nonzero((d2 > bthr) & ~near_jump)[0]
    cand = [(x[j] + 0.5 * h, du[j], "J") for j in jumps] + [(x[k + 1], d2[k], "B") for k in bends]
    cand.sort()
    groups = []
    for pos, wt, kind in cand:
        if groups and pos - groups[-1][-1][0] <= merge * h:
            groups[-1].append((pos, wt, kind))
        else:
            groups.append([(pos, wt, kind)])
    bps, isjump = [], []
    for g in groups:
        js = [c for c in g if c[2] == "J"]
        sel = js or g
        w = np.array([c[1] for c in sel])
        bps.append(float(np.dot(w, [c[0] for c in sel]) / w.sum()))
        isjump.append(bool(js))
    keep = [k for k, b in enumerate(bps) if -1.0 + h < b < 1.0 - h]
    bps = [bps[k] for k in keep]
    isjump = [isjump[k] for k in keep]
    br = [-1.0] + bps + [1.0]
    slopes, icpts = [], []
    for a, b in zip(br[:-1], br[1:]):
        inside = (x > a) & (x < b)
        core = (x > a + 2.5 * h) & (x < b - 2.5 * h)
        sel = core if core.sum() >= 2 else inside
        xs, ys = x[sel], v[sel]
        if xs.size >= 2:
            s, c = np.polyfit(xs, ys, 1)
        elif xs.size == 1:
            s, c = 0.0, float(ys[0])
        else:
            s, c = 0.0, float(v[np.argmin(np.abs(x - 0.5 * (a + b)))])
        slopes.append(float(s))
        icpts.append(float(c))
    # a bend sits where the neighbouring lines meet, which keeps the fit continuous
    for k, jmp in enumerate(isjump):
        ds = slopes[k] - slopes[k + 1]
        if jmp or ds == 0.0:
            continue
        bx = (icpts[k + 1] - icpts[k]) / ds
        if abs(bx - br[k + 1]) <= (merge + 1) * h and br[k] < bx < br[k + 2]:
            br[k + 1] = bx
    return PiecewiseAffineSignal(tuple(br), tuple(slopes), tuple(icpts))


# --------------------------------------------------------------------------
# regions


class Verdict(enum.Enum):
    Zero = "Zero"
    EqualsTV1 = "EqualsTV1"
    EqualsTV2 = "EqualsTV2"
    StrictTGV = "StrictTGV"
    Boundary = "Boundary"
    Failed = "Failed"


@dataclass(frozen=True)
class RegionVerdict:
    """Region of one parameter pair.

    ``margin1 = lam2 - ||σ²[v1 - f]||`` tests equality with the TV1
    minimizer ``v1``; ``margin2 = lam1 - ||σ¹[v2 - f]||`` tests equality
    with the TV2 minimizer ``v2``; ``zero_margins`` compare the lambdas
    with the dual norms of the data.
    """

    verdict: Verdict
    margin1: float
    margin2: float
    zero_margins: tuple
    tol: float


def default_boundary_tol(h: float) -> float:
    return 10.0 * h + 1e-6


def _data_signal(data, n):
    if isinstance(data, GridSignal):
        return data
    return sample(DataId.parse(data), n)


def _classify(f, l1, l2, cfg, tol, keep=False):
    st = sigma_transforms(f)
    z1, z2 = l1 - st.sup1, l2 - st.sup2
    r1 = solve(f, Problem.TV1, lam1=l1, cfg=cfg)
    r2 = solve(f, Problem.TV2, lam2=l2, cfg=cfg)
    for r in (r1, r2):
        if not r.converged:
            raise ConvergenceError(f"{r.method} solve did not converge", r.final_gap)
    m1 = l2 - sigma_transforms(r1.u - f).sup2
    m2 = l1 - sigma_transforms(r2.u - f).sup1
    all_sub = in_subspace(f, 2, 1e-8 * math.sqrt(f.n) * (1.0 + float(np.max(np.abs(f.values)))))
    if all_sub and min(z1, z2) > tol:
        v = Verdict.Zero
    elif m1 > tol:
        v = Verdict.EqualsTV1
    elif m2 > tol:
        v = Verdict.EqualsTV2
    elif m1 < -tol and m2 < -tol:
        v = Verdict.StrictTGV
    else:
        v = Verdict.Boundary
    rv = RegionVerdict(v, m1, m2, (z1, z2), tol)
    return (rv, r1, r2) if keep else rv


def classify_region(data, lam, cfg: SolverConfig | None = None, tol: float | None = None, n: int = 8192) -> RegionVerdict:
    """Classify ``(lam1, lam2)`` from the TV1 and TV2 minimizers of the data.

    ``data`` is a data id (sampled at ``n`` cells) or a grid signal.  The
    default tolerance is ``10 h + 1e-6``.
    """
    f = _data_signal(data, n)
    l1, l2 = (lam.lambda1, lam.lambda2) if isinstance(lam, LambdaPair) else map(float, lam)
    LambdaPair(l1, l2)
    tol = default_boundary_tol(f.h) if tol is None else tol
    return _classify(f, l1, l2, cfg, tol)


@dataclass
class RegionMap:
    """Verdict matrices indexed ``[i, j]`` for ``lam1_grid[i]``, ``lam2_grid[j]``."""

    lam1: np.ndarray
    lam2: np.ndarray
    verdicts: list
    brute: list
    dist_tv1: np.ndarray
    dist_tv2: np.ndarray
    failed: np.ndarray

    def verdict_names(self, brute: bool = False):
        m = self.brute if brute else self.verdicts
        return [[(c.verdict if isinstance(c, RegionVerdict) else c).value for c in row] for row in m]

    def success_fraction(self) -> float:
        return 1.0 - float(self.failed.mean()) if self.failed.size else 1.0


def _threads(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("TGV1D_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def region_map(data, lam1_grid, lam2_grid, cfg: SolverConfig | None = None, n: int = 1024, tol: float | None = None, threads: int | None = None, brute: bool = True) -> RegionMap:
    """Classify every grid cell, plus a brute-force cross-check.

    The brute-force verdict compares the TGV minimizer with the TV1 and
    TV2 minimizers in L2: within ``10 h`` counts as equal, and a TGV
    minimizer of norm below ``1e-6`` as zero.  Cells whose solves fail
    are marked ``Failed`` instead of aborting the sweep.
    """
    f = _data_signal(data, n)
    h = f.h
    tol = default_boundary_tol(h) if tol is None else tol
    L1 = np.asarray(lam1_grid, dtype=float).ravel()
    L2 = np.asarray(lam2_grid, dtype=float).ravel()
    if L1.size == 0 or L2.size == 0 or np.any(L1 <= 0) or np.any(L2 <= 0):
        raise ValueError("lambda grids must be nonempty and positive")
    thr = 10.0 * h

    def cell(ij):
        i, j = ij
        l1, l2 = float(L1[i]), float(L2[j])
        try:
            rv, r1, r2 = _classify(f, l1, l2, cfg, tol, keep=True)
            if not brute:
                return rv, Verdict.Boundary, math.nan, math.nan, False
            rt = solve(f, Problem.TGV, lam1=l1, lam2=l2, cfg=cfg)
            if not rt.converged:
                raise ConvergenceError("TGV solve did not converge", rt.final_gap)
            d1, d2 = (rt.u - r1.u).l2(), (rt.u - r2.u).l2()
            if rt.u.l2() <= 1e-6:
                bv = Verdict.Zero
            elif d1 <= thr and d2 <= thr:
                bv = Verdict.Boundary
            elif d1 <= thr:
                bv = Verdict.EqualsTV1
            elif d2 <= thr:
                bv = Verdict.EqualsTV2
            else:
                bv = Verdict.StrictTGV
            return rv, bv, d1, d2, False
        except (ConvergenceError, ValueError, RuntimeError) as exc:
            log.warning("region cell (%g, %g) failed: %s", l1, l2, exc)
            fail = RegionVerdict(Verdict.Failed, math.nan, math.nan, (math.nan, math.nan), tol)
            return fail, Verdict.Failed, math.nan, math.nan, True

    idx = [(i, j) for i in range(L1.size) for j in range(L2.size)]
    nt = _threads(threads)
    if nt > 1:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            results = list(ex.map(cell, idx))
    else:
        results = [cell(ij) for ij in idx]
    V = [[None] * L2.size for _ in range(L1.size)]
    B = [[None] * L2.size for _ in range(L1.size)]
    D1 = np.full((L1.size, L2.size), np.nan)
    D2 = np.full_like(D1, np.nan)
    F = np.zeros(D1.shape, bool)
    for (i, j), (rv, bv, d1, d2, failed) in zip(idx, results):
        V[i][j], B[i][j], D1[i, j], D2[i, j], F[i, j] = rv, bv, d1, d2, failed
    return RegionMap(L1, L2, V, B, D1, D2, F)
