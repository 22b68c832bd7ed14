"""Grid and piecewise signals on (-1, 1), σ-transforms and discrete seminorms.

All grid quantities use the midpoint rule on ``n`` uniform cells of width
``h = 2/n``.  The σ-transforms are cumulative sums evaluated at the right
cell edges, so ``sigma1[j] = h * sum(r[:j+1])``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "DataId",
    "GridSignal",
    "PiecewiseAffineSignal",
    "PiecewisePolynomial",
    "SigmaTransforms",
    "sample",
    "grid_points",
    "sigma_transforms",
    "moment",
    "in_subspace",
    "default_moment_tol",
    "tv_seminorm",
    "eval_piecewise",
    "data_piecewise",
    "data_polynomial",
    "exact_sigma",
    "write_grid_csv",
    "read_grid_csv",
    "format_float",
]


def format_float(v: float) -> str:
    """17 significant digits, enough for a lossless round trip."""
    return "%.17g" % v


def grid_points(n: int) -> np.ndarray:
    """Cell midpoints ``x_i = -1 + (i + 1/2) h``."""
    h = 2.0 / n
    return -1.0 + (np.arange(n) + 0.5) * h


class DataId(enum.Enum):
    """The three built-in data sets."""

    AbsData = "abs"
    IndData = "ind"
    QuadData = "quad"

    @classmethod
    def parse(cls, s: "str | DataId") -> "DataId":
        if isinstance(s, DataId):
            return s
        for d in cls:
            if s.lower() in (d.value, d.name.lower()):
                return d
        raise ValueError(f"unknown data set {s!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self is DataId.AbsData:
            return np.abs(x) - 0.5
        if self is DataId.IndData:
            return np.where(np.abs(x) <= 0.5, 0.5, -0.5)
        return x * x - 1.0 / 3.0


@dataclass(frozen=True)
class GridSignal:
    """Uniformly sampled function on (-1, 1).

    Parameters
    ----------
    values : array_like
        Samples at the cell midpoints; the length fixes ``n``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 4:
            raise ValueError(f"need n >= 4 samples, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 2.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return grid_points(self.n)

    @property
    def edges(self) -> np.ndarray:
        """Right cell edges, where σ-transforms are stored."""
        return -1.0 + np.arange(1, self.n + 1) * self.h

    def l2(self) -> float:
        return float(math.sqrt(self.h * np.dot(self.values, self.values)))

    def __add__(self, other):
        if isinstance(other, GridSignal):
            _check_same_grid(self, other)
            return GridSignal(self.values + other.values)
        return GridSignal(self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, GridSignal):
            _check_same_grid(self, other)
            return GridSignal(self.values - other.values)
        return GridSignal(self.values - float(other))

    def __mul__(self, c):
        return GridSignal(float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return GridSignal(-self.values)

    def __len__(self):
        return self.n


def _check_same_grid(a: GridSignal, b: GridSignal):
    if a.n != b.n:
        raise ValueError(f"grid size mismatch: {a.n} vs {b.n}")


def sample(data: "DataId | str", n: int) -> GridSignal:
    """Sample a built-in data set at the ``n`` cell midpoints."""
    if n < 4:
        raise ValueError(f"need n >= 4, got {n}")
    data = DataId.parse(data)
    return GridSignal(data(grid_points(n)))


# --------------------------------------------------------------------------
# piecewise representations


@dataclass(frozen=True)
class PiecewiseAffineSignal:
    """Piecewise-affine function on [-1, 1] with possible jumps.

    On segment ``k`` (between ``breakpoints[k]`` and ``breakpoints[k+1]``)
    the value is ``slopes[k] * x + intercepts[k]``.  ``left_values`` and
    ``right_values`` hold the one-sided limits at the interior breakpoints.
    """

    breakpoints: tuple
    slopes: tuple
    intercepts: tuple
    left_values: tuple = field(default=None)
    right_values: tuple = field(default=None)

    def __post_init__(self):
        b = tuple(float(v) for v in self.breakpoints)
        s = tuple(float(v) for v in self.slopes)
        c = tuple(float(v) for v in self.intercepts)
        if len(b) < 2 or b[0] != -1.0 or b[-1] != 1.0:
            raise ValueError("breakpoints must start at -1 and end at 1")
        if any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(s) != len(b) - 1 or len(c) != len(b) - 1:
            raise ValueError("need one (slope, intercept) pair per segment")
        left = tuple(s[k] * b[k + 1] + c[k] for k in range(len(b) - 2))
        right = tuple(s[k + 1] * b[k + 1] + c[k + 1] for k in range(len(b) - 2))
        for given, computed in ((self.left_values, left), (self.right_values, right)):
            if given is not None:
                if len(given) != len(computed) or not np.allclose(
                    given, computed, rtol=0, atol=1e-12
                ):
                    raise ValueError("stored one-sided limits do not match segments")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "intercepts", c)
        object.__setattr__(self, "left_values", left)
        object.__setattr__(self, "right_values", right)

    @classmethod
    def from_nodes(cls, breakpoints, left_end, right_limits, left_limits, right_end):
        """Build from nodal values.

        ``right_limits[k]`` is the value just right of ``breakpoints[k]`` and
        ``left_limits[k]`` the value just left of ``breakpoints[k+1]``.
        """
        b = np.asarray(breakpoints, dtype=float)
        a0 = np.asarray(right_limits, dtype=float)
        a1 = np.asarray(left_limits, dtype=float)
        s = (a1 - a0) / np.diff(b)
        c = a0 - s * b[:-1]
        return cls(tuple(b), tuple(s), tuple(c))

    @classmethod
    def zero(cls):
        return cls((-1.0, 1.0), (0.0,), (0.0,))

    @property
    def n_segments(self) -> int:
        return len(self.slopes)

    def segment_index(self, x):
        """Segment containing each ``x`` (right-continuous at breakpoints)."""
        b = np.asarray(self.breakpoints)
        k = np.searchsorted(b, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(k, 0, self.n_segments - 1)

    def __call__(self, x):
        """Evaluate; at an interior breakpoint the two limits are averaged."""
        x = np.asarray(x, dtype=float)
        s = np.asarray(self.slopes)
        c = np.asarray(self.intercepts)
        k = self.segment_index(x)
        out = s[k] * x + c[k]
        b = np.asarray(self.breakpoints[1:-1])
        if b.size:
            j = np.searchsorted(b, x)
            jc = np.clip(j, 0, b.size - 1)
            hit = (j < b.size) & (b[jc] == x)
            if np.any(hit):
                lv = np.asarray(self.left_values)[jc]
                rv = np.asarray(self.right_values)[jc]
                out = np.where(hit, 0.5 * (lv + rv), out)
        return out

    def jumps(self) -> np.ndarray:
        """Right minus left limit at each interior breakpoint."""
        return np.asarray(self.right_values) - np.asarray(self.left_values)

    def bends(self) -> np.ndarray:
        """Slope change at each interior breakpoint."""
        return np.diff(np.asarray(self.slopes))

    def tv(self) -> float:
        """Exact total variation."""
        lengths = np.diff(np.asarray(self.breakpoints))
        return float(np.sum(np.abs(self.slopes) * lengths) + np.sum(np.abs(self.jumps())))

    def tv2(self, jump_tol: float = 0.0) -> float:
        """Exact total variation of the derivative; infinite if it jumps."""
        if np.any(np.abs(self.jumps()) > jump_tol):
            return math.inf
        return float(np.sum(np.abs(self.bends())))

    def _binary(self, other, op):
        if not isinstance(other, PiecewiseAffineSignal):
            other = PiecewiseAffineSignal((-1.0, 1.0), (0.0,), (float(other),))
        b = np.union1d(self.breakpoints, other.breakpoints)
        mid = 0.5 * (b[:-1] + b[1:])
        ka, kb = self.segment_index(mid), other.segment_index(mid)
        s = op(np.asarray(self.slopes)[ka], np.asarray(other.slopes)[kb])
        c = op(np.asarray(self.intercepts)[ka], np.asarray(other.intercepts)[kb])
        return PiecewiseAffineSignal(tuple(b), tuple(s), tuple(c))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, a):
        a = float(a)
        return PiecewiseAffineSignal(
            self.breakpoints,
            tuple(a * v for v in self.slopes),
            tuple(a * v for v in self.intercepts),
        )

    __rmul__ = __mul__

    def simplify(self, tol: float = 1e-14) -> "PiecewiseAffineSignal":
        """Drop breakpoints where neither value nor slope changes."""
        keep = [0]
        for k in range(1, self.n_segments):
            j = keep[-1]
            same = abs(self.slopes[k] - self.slopes[j]) <= tol and abs(
                self.intercepts[k] - self.intercepts[j]
            ) <= tol
            if not same:
                keep.append(k)
        b = [self.breakpoints[k] for k in keep] + [1.0]
        return PiecewiseAffineSignal(
            tuple(b),
            tuple(self.slopes[k] for k in keep),
            tuple(self.intercepts[k] for k in keep),
        )

    def to_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "segments": [
                {"slope": s, "intercept": c} for s, c in zip(self.slopes, self.intercepts)
            ],
            "left_values": list(self.left_values),
            "right_values": list(self.right_values),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseAffineSignal":
        seg = d["segments"]
        return cls(
            tuple(d["breakpoints"]),
            tuple(s["slope"] for s in seg),
            tuple(s["intercept"] for s in seg),
            tuple(d["left_values"]) if "left_values" in d else None,
            tuple(d["right_values"]) if "right_values" in d else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, s: str) -> "PiecewiseAffineSignal":
        return cls.from_dict(json.loads(s))


class PiecewisePolynomial:
    """Piecewise polynomial on [-1, 1] used for exact σ-transforms.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing, from -1 to 1.
    pieces : sequence of numpy.polynomial.Polynomial
        One polynomial in the global variable ``x`` per segment.
    """

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[Polynomial]):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.pieces = list(pieces)
        if len(self.pieces) != self.breakpoints.size - 1:
            raise ValueError("need one polynomial per segment")

    @classmethod
    def from_affine(cls, p: PiecewiseAffineSignal) -> "PiecewisePolynomial":
        return cls(
            p.breakpoints,
            [Polynomial([c, s]) for s, c in zip(p.slopes, p.intercepts)],
        )

    def _index(self, x):
        k = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(k, 0, len(self.pieces) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self._index(x)
        out = np.empty_like(x)
        for i in np.unique(k):
            m = k == i
            out[m] = self.pieces[i](x[m])
        return out

    def left_limit(self, x: float) -> float:
        k = int(np.clip(np.searchsorted(self.breakpoints, x, side="left") - 1, 0, len(self.pieces) - 1))
        return float(self.pieces[k](x))

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        b = np.union1d(self.breakpoints, other.breakpoints)
        mid = 0.5 * (b[:-1] + b[1:])
        ka, kb = self._index(mid), other._index(mid)
        return PiecewisePolynomial(
            b, [self.pieces[i] - other.pieces[j] for i, j in zip(ka, kb)]
        )

    def __mul__(self, a: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breakpoints, [a * q for q in self.pieces])

    __rmul__ = __mul__

    def antiderivative(self) -> "PiecewisePolynomial":
        """Continuous antiderivative vanishing at -1."""
        out, acc = [], 0.0
        for a, b, q in zip(self.breakpoints, self.breakpoints[1:], self.pieces):
            Q = q.integ(lbnd=a, k=acc)
            out.append(Q)
            acc = float(Q(b))
        return PiecewisePolynomial(self.breakpoints, out)

    def max_abs(self, a: float = -1.0, b: float = 1.0, shift: float = 0.0):
        """Maximum of ``|p(x) - shift|`` on [a, b] and a maximizer."""
        best, where = -1.0, a
        for lo, hi, q in zip(self.breakpoints, self.breakpoints[1:], self.pieces):
            lo, hi = max(lo, a), min(hi, b)
            if hi < lo:
                continue
            cand = [lo, hi]
            dq = q.deriv()
            if dq.degree() >= 1 or np.any(dq.coef != 0):
                for r in np.atleast_1d(dq.roots()):
                    if abs(r.imag) < 1e-12 and lo < r.real < hi:
                        cand.append(r.real)
            vals = np.abs(q(np.asarray(cand)) - shift)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, where = float(vals[i]), float(cand[i])
        return best, where

    def sup(self) -> float:
        return self.max_abs()[0]


def data_piecewise(data: "DataId | str") -> PiecewiseAffineSignal:
    """Exact piecewise-affine form of the abs and indicator data."""
    data = DataId.parse(data)
    if data is DataId.AbsData:
        return PiecewiseAffineSignal((-1.0, 0.0, 1.0), (-1.0, 1.0), (-0.5, -0.5))
    if data is DataId.IndData:
        return PiecewiseAffineSignal((-1.0, -0.5, 0.5, 1.0), (0.0, 0.0, 0.0), (-0.5, 0.5, -0.5))
    raise ValueError("quadratic data is not piecewise affine")


def data_polynomial(data: "DataId | str") -> PiecewisePolynomial:
    """Exact piecewise-polynomial form of any built-in data set."""
    data = DataId.parse(data)
    if data is DataId.QuadData:
        return PiecewisePolynomial([-1.0, 1.0], [Polynomial([-1.0 / 3.0, 0.0, 1.0])])
    return PiecewisePolynomial.from_affine(data_piecewise(data))


def exact_sigma(p: "PiecewiseAffineSignal | PiecewisePolynomial", data=None):
    """Exact σ¹ and σ² of ``p`` (or of the residual ``p - data``).

    Returns
    -------
    (PiecewisePolynomial, PiecewisePolynomial)
    """
    r = p if isinstance(p, PiecewisePolynomial) else PiecewisePolynomial.from_affine(p)
    if data is not None:
        d = data if isinstance(data, PiecewisePolynomial) else (
            PiecewisePolynomial.from_affine(data)
            if isinstance(data, PiecewiseAffineSignal)
            else data_polynomial(data)
        )
        r = r - d
    s1 = r.antiderivative()
    return s1, s1.antiderivative()


# --------------------------------------------------------------------------
# σ-transforms, moments, seminorms


@dataclass(frozen=True)
class SigmaTransforms:
    """σ¹ and σ² of a grid residual at the right cell edges."""

    sigma1: np.ndarray
    sigma2: np.ndarray
    sup1: float
    sup2: float
    argmax1: int
    argmax2: int

    @property
    def n(self) -> int:
        return self.sigma1.size

    @property
    def edges(self) -> np.ndarray:
        return -1.0 + np.arange(1, self.n + 1) * (2.0 / self.n)

    def saturated(self, i: int, lam: float, tol: float) -> np.ndarray:
        """Edges where ``|σ^i| >= lam - tol``."""
        s = self.sigma1 if i == 1 else self.sigma2
        return np.abs(s) >= lam - tol


def sigma_transforms(r: GridSignal) -> SigmaTransforms:
    """Discrete σ-transforms of ``r``."""
    h = r.h
    s1 = h * np.cumsum(r.values)
    s2 = h * np.cumsum(s1)
    a1, a2 = int(np.argmax(np.abs(s1))), int(np.argmax(np.abs(s2)))
    s1.setflags(write=False)
    s2.setflags(write=False)
    return SigmaTransforms(s1, s2, float(abs(s1[a1])), float(abs(s2[a2])), a1, a2)


def moment(u: GridSignal, j: int) -> float:
    """Midpoint quadrature of the integral of ``u * x**j``, for j in {0, 1}."""
    if j not in (0, 1):
        raise ValueError("only moments of order 0 and 1 are supported")
    w = u.values if j == 0 else u.values * u.x
    return float(u.h * np.sum(w))


def default_moment_tol(u: GridSignal) -> float:
    return 1e-8 * math.sqrt(u.n) * max(float(np.max(np.abs(u.values))), 1e-300)


def in_subspace(u: GridSignal, i: int, tol: float | None = None) -> bool:
    """True if the moments of order below ``i`` vanish up to ``tol``."""
    if i not in (1, 2):
        raise ValueError("i must be 1 or 2")
    if tol is None:
        tol = default_moment_tol(u)
    return all(abs(moment(u, j)) <= tol for j in range(i))


def tv_seminorm(u: "GridSignal | PiecewiseAffineSignal", order: int) -> float:
    """Discrete (or exact, for piecewise signals) TV of order 1 or 2."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if isinstance(u, PiecewiseAffineSignal):
        return u.tv() if order == 1 else u.tv2()
    v = u.values
    if order == 1:
        return float(np.sum(np.abs(np.diff(v))))
    return float(np.sum(np.abs(np.diff(v, 2))) / u.h)


def eval_piecewise(p: PiecewiseAffineSignal, grid: "GridSignal | int") -> GridSignal:
    """Sample ``p`` at the midpoints of ``grid`` (a signal or a size)."""
    n = grid.n if isinstance(grid, GridSignal) else int(grid)
    return GridSignal(p(grid_points(n)))


# --------------------------------------------------------------------------
# CSV


def write_grid_csv(path, u: GridSignal, column: str = "value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", column])
        for x, v in zip(u.x, u.values):
            w.writerow([format_float(x), format_float(v)])


def read_grid_csv(path, column: str | None = None) -> GridSignal:
    """Read a ``x,value`` CSV; the x column must be the midpoint grid."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2 or rows[0][0].strip() != "x":
        raise ValueError(f"{path}: expected a header starting with 'x'")
    header = [c.strip() for c in rows[0]]
    col = 1 if column is None else header.index(column)
    try:
        data = np.array([[float(r[0]), float(r[col])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    if data.shape[0] < 4:
        raise ValueError(f"{path}: need at least 4 samples")
    n = data.shape[0]
    if not np.allclose(data[:, 0], grid_points(n), rtol=0, atol=1e-9):
        raise ValueError(f"{path}: x column is not the uniform midpoint grid of (-1, 1)")
    return GridSignal(data[:, 1])
