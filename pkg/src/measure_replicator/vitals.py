"""Birth and mortality rate families, reproductive numbers and carrying capacities.

A :class:`VitalRates` holds per-strategy parameters for one family:

* ``logistic``:       f1 = b,               f2 = d + c X
* ``ricker``:         f1 = b exp(-a X),     f2 = d
* ``beverton_holt``:  f1 = b / (1 + a X),   f2 = d
* ``tabulated``:      f1, f2 given on an X grid, linear in X between nodes
  and constant beyond the last node.

All rate methods take a total population ``X`` (a scalar, or one value per
strategy) and return one value per strategy.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_finite_array, check_index

FAMILIES = ("logistic", "ricker", "beverton_holt", "tabulated")

BISECTION_TOL = 1e-10


def _per_point(values, n, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have one value per strategy ({n})")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite entries")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VitalRates:
    family: str
    b: np.ndarray | None = None
    d: np.ndarray | None = None
    a: np.ndarray | None = None
    c: np.ndarray | None = None
    X_max: float | None = None
    X_grid: np.ndarray | None = None
    f1_table: np.ndarray | None = None
    f2_table: np.ndarray | None = None
    n_points: int = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown vital-rate family {self.family!r}")
        if self.family == "tabulated":
            grid = check_finite_array(self.X_grid, "X_grid", ndim=1)
            t1 = check_finite_array(self.f1_table, "f1 table", ndim=2)
            t2 = check_finite_array(self.f2_table, "f2 table", ndim=2)
            if t1.shape != t2.shape or t1.shape[0] != grid.shape[0]:
                raise ValidationError("f1/f2 tables must have shape (len(X_grid), n_points)")
            if grid[0] != 0 or np.any(np.diff(grid) <= 0):
                raise ValidationError("X_grid must start at 0 and be strictly increasing")
            for name, arr in (("X_grid", grid), ("f1_table", t1), ("f2_table", t2)):
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
            n = t1.shape[1]
        else:
            if self.b is None or self.d is None:
                raise ValidationError(f"{self.family} rates need b and d")
            n = np.asarray(self.b, dtype=float).size
            object.__setattr__(self, "b", _per_point(self.b, n, "b"))
            object.__setattr__(self, "d", _per_point(self.d, n, "d"))
            coeff = "c" if self.family == "logistic" else "a"
            if getattr(self, coeff) is None:
                raise ValidationError(f"{self.family} rates need {coeff}")
            object.__setattr__(self, coeff, _per_point(getattr(self, coeff), n, coeff))
            if np.any(self.b < 0) or np.any(self.d <= 0) or np.any(getattr(self, coeff) < 0):
                raise ValidationError(f"{self.family} rates need b >= 0, d > 0, {coeff} >= 0")
        object.__setattr__(self, "n_points", int(n))
        if self.X_max is None:
            object.__setattr__(self, "X_max", self._default_x_max())
        elif not (np.isfinite(self.X_max) and self.X_max > 0):
            raise ValidationError("X_max must be positive and finite")

    # -- constructors -------------------------------------------------
    @classmethod
    def logistic(cls, b, d, c, n_points=None, X_max=None):
        b, d, c = _broadcast(n_points, b, d, c)
        return cls("logistic", b=b, d=d, c=c, X_max=X_max)

    @classmethod
    def ricker(cls, b, d, a, n_points=None, X_max=None):
        b, d, a = _broadcast(n_points, b, d, a)
        return cls("ricker", b=b, d=d, a=a, X_max=X_max)

    @classmethod
    def beverton_holt(cls, b, d, a, n_points=None, X_max=None):
        b, d, a = _broadcast(n_points, b, d, a)
        return cls("beverton_holt", b=b, d=d, a=a, X_max=X_max)

    @classmethod
    def tabulated(cls, X_grid, f1_table, f2_table, X_max=None):
        return cls("tabulated", X_grid=X_grid, f1_table=f1_table, f2_table=f2_table, X_max=X_max)

    def _default_x_max(self):
        if self.family == "tabulated":
            return float(self.X_grid[-1])
        ratio = self.b / self.d
        scale = ratio.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == "logistic":
                closed = np.where(self.c > 0, (self.b - self.d) / self.c, np.nan)
            elif self.family == "ricker":
                closed = np.where((self.a > 0) & (self.b > 0), np.log(ratio) / self.a, np.nan)
            else:
                closed = np.where(self.a > 0, (ratio - 1.0) / self.a, np.nan)
        has_closed = np.isfinite(closed)
        scale[has_closed] = np.maximum(closed[has_closed], 0.0)
        return float(max(10.0 * scale.max(), 1.0))

    # -- rates --------------------------------------------------------
    def _interp(self, table, X):
        grid = self.X_grid
        if grid.size == 1:
            return table[0].copy()
        X = np.clip(np.asarray(X, dtype=float), grid[0], grid[-1])
        k = np.clip(np.searchsorted(grid, X, side="right") - 1, 0, grid.size - 2)
        t = (X - grid[k]) / (grid[k + 1] - grid[k])
        if X.ndim == 0:
            return (1.0 - t) * table[k] + t * table[k + 1]
        cols = np.arange(self.n_points)
        return (1.0 - t) * table[k, cols] + t * table[k + 1, cols]

    def f1(self, X):
        if self.family == "logistic":
            return self.b + 0.0 * np.asarray(X)
        if self.family == "ricker":
            return self.b * np.exp(-self.a * X)
        if self.family == "beverton_holt":
            return self.b / (1.0 + self.a * X)
        return self._interp(self.f1_table, X)

    def f2(self, X):
        if self.family == "logistic":
            return self.d + self.c * X
        if self.family in ("ricker", "beverton_holt"):
            return self.d + 0.0 * np.asarray(X)
        return self._interp(self.f2_table, X)

    def _fd(self, fn, X):
        # One-sided step into the positive cone.
        h = 1e-6 * np.maximum(1.0, np.abs(X))
        return (fn(X + h) - fn(X)) / h

    def df1(self, X):
        """Derivative of f1 in X."""
        if self.family == "logistic":
            return np.zeros(self.n_points)
        if self.family == "ricker":
            return -self.a * self.b * np.exp(-self.a * X)
        if self.family == "beverton_holt":
            return -self.a * self.b / (1.0 + self.a * X) ** 2
        return self._fd(self.f1, X)

    def df2(self, X):
        """Derivative of f2 in X."""
        if self.family == "logistic":
            return self.c.copy()
        if self.family in ("ricker", "beverton_holt"):
            return np.zeros(self.n_points)
        return self._fd(self.f2, X)

    def net_growth(self, X):
        return self.f1(X) - self.f2(X)

    def reproductive_numbers(self, X):
        f2 = self.f2(X)
        if np.any(f2 == 0):
            raise ValidationError("mortality rate vanishes; f2 must stay positive")
        return self.f1(X) / f2

    def to_dict(self):
        out = {"family": self.family, "X_max": self.X_max}
        if self.family == "tabulated":
            out.update(
                X_grid=self.X_grid.tolist(),
                f1_table=self.f1_table.tolist(),
                f2_table=self.f2_table.tolist(),
            )
        else:
            for key in ("b", "d", "a", "c"):
                val = getattr(self, key)
                if val is not None:
                    out[key] = val.tolist()
        return out


def _broadcast(n_points, *arrays):
    arrs = [np.asarray(x, dtype=float) for x in arrays]
    n = n_points or max(a.size for a in arrs)
    return [np.full(n, float(a)) if a.ndim == 0 else a for a in arrs]


def load_tabulated_csv(text, n_points=None, X_max=None, enforce_monotone=True):
    """Read tabulated rates from CSV with columns ``X, point, f1, f2``.

    Every point must be listed on the same X grid. With ``enforce_monotone``
    the table is rejected unless f1 is nonincreasing and f2 nondecreasing in X.
    """
    reader = csv.DictReader(io.StringIO(text))
    missing = {"X", "point", "f1", "f2"} - set(reader.fieldnames or [])
    if missing:
        raise ValidationError(f"tabulated rate CSV lacks column {sorted(missing)[0]!r}")
    try:
        rows = [(float(r["X"]), int(r["point"]), float(r["f1"]), float(r["f2"])) for r in reader]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"tabulated rate CSV has a malformed row: {exc}") from exc
    if not rows:
        raise ValidationError("tabulated rate CSV is empty")
    grid = np.array(sorted({r[0] for r in rows}))
    n = n_points or (max(r[1] for r in rows) + 1)
    if any(not 0 <= r[1] < n for r in rows):
        raise ValidationError(f"tabulated rate CSV has a point index outside 0..{n - 1}")
    t1 = np.full((grid.size, n), np.nan)
    t2 = np.full((grid.size, n), np.nan)
    pos = {x: k for k, x in enumerate(grid)}
    for x, q, v1, v2 in rows:
        t1[pos[x], q], t2[pos[x], q] = v1, v2
    if np.isnan(t1).any() or np.isnan(t2).any():
        raise ValidationError("tabulated rates are missing (X, point) entries")
    if enforce_monotone:
        if np.any(np.diff(t1, axis=0) > 0):
            raise ValidationError("tabulated f1 must be nonincreasing in X (A1)")
        if np.any(np.diff(t2, axis=0) < 0):
            raise ValidationError("tabulated f2 must be nondecreasing in X (A2)")
    return VitalRates.tabulated(grid, t1, t2, X_max=X_max)


def reproductive_number(v, X, q):
    """f1(X, q) / f2(X, q)."""
    if X < 0:
        raise ValidationError("total population X must be >= 0")
    q = check_index(q, v.n_points, "q")
    f2 = v.f2(X)[q]
    if f2 == 0:
        raise ValidationError("f2 vanishes, violating (A2)")
    return float(v.f1(X)[q] / f2)


def carrying_capacities(v, tol=BISECTION_TOL):
    """Carrying capacity of every strategy, vectorized bisection.

    ``K = inf{X : R(X) <= 1}``; 0 when R(0) <= 1 and ``inf`` when R stays above
    one on the whole bracket ``[0, X_max]``.
    """
    R0 = v.reproductive_numbers(0.0)
    K = np.zeros(v.n_points)
    active = R0 > 1.0
    if not active.any():
        return K
    R_top = v.reproductive_numbers(v.X_max)
    unbounded = active & (R_top > 1.0)
    K[unbounded] = np.inf
    todo = np.flatnonzero(active & ~unbounded)
    lo = np.zeros(todo.size)
    hi = np.full(todo.size, float(v.X_max))
    X = np.zeros(v.n_points)
    while todo.size and np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        X[todo] = mid
        below = (v.f1(X) <= v.f2(X))[todo]
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
    K[todo] = hi
    return K


def carrying_capacity(v, q):
    q = check_index(q, v.n_points, "q")
    R0 = reproductive_number(v, 0.0, q)
    if R0 <= 1.0:
        return 0.0
    if reproductive_number(v, v.X_max, q) > 1.0:
        return float("inf")
    lo, hi = 0.0, float(v.X_max)
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if reproductive_number(v, mid, q) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class FitnessReport:
    R0: np.ndarray
    K: np.ndarray
    fittest_indices: np.ndarray
    weakest_indices: np.ndarray
    K_Q: float
    k_q: float
    a3_violated: bool = False

    @property
    def fittest(self):
        """Representative fittest index (lowest index of the fittest class)."""
        return int(self.fittest_indices[0])

    @property
    def weakest(self):
        return int(self.weakest_indices[0])

    def to_dict(self):
        return {
            "R0": self.R0.tolist(),
            "K": [None if not np.isfinite(k) else float(k) for k in self.K],
            "fittest_indices": self.fittest_indices.tolist(),
            "weakest_indices": self.weakest_indices.tolist(),
            "K_Q": None if not np.isfinite(self.K_Q) else self.K_Q,
            "k_q": None if not np.isfinite(self.k_q) else self.k_q,
            "a3_violated": self.a3_violated,
        }


def tie_band(values, tie_tol):
    """Absolute width of the tie band, relative to the value scale."""
    return tie_tol * max(1.0, float(np.max(np.abs(values))))


def fitness_report(v, space=None, tie_tol=1e-12):
    """Reproductive numbers, carrying capacities and the fittest/weakest classes.

    The fittest class collects every strategy whose R(0, q) lies within the
    tie band of the maximum; ``tie_tol`` is relative to ``max(1, |R0|)``.
    """
    if tie_tol < 0:
        raise ValidationError("tie_tol must be >= 0")
    if space is not None and space.n_points != v.n_points:
        raise ValidationError("vital rates and space disagree on the number of strategies")
    R0 = v.reproductive_numbers(0.0)
    K = carrying_capacities(v)
    band = tie_band(R0, tie_tol)
    fittest = np.flatnonzero(R0 >= R0.max() - band)
    weakest = np.flatnonzero(R0 <= R0.min() + band)
    K_Q = float(K[fittest[0]])
    k_q = float(K[weakest[0]])
    a3 = not np.isfinite(K_Q)
    if a3:
        warnings.warn("carrying capacity of the fittest class is unbounded (A3 fails)", RuntimeWarning)
    return FitnessReport(R0, K, fittest, weakest, K_Q, k_q, a3)


@dataclass
class AssumptionReport:
    checks: dict
    details: dict

    @property
    def all_pass(self):
        return all(self.checks.values())

    def failed(self):
        return [k for k, ok in self.checks.items() if not ok]

    def to_dict(self):
        return {"checks": dict(self.checks), "all_pass": self.all_pass, "details": self.details}


def _sign(x, band):
    return np.where(x > band, 1, np.where(x < -band, -1, 0))


def check_assumptions(v, space=None, X_grid=None, tie_tol=1e-12):
    """Sampled verdicts for assumptions A1 to A6 on an X grid."""
    if X_grid is None:
        X_grid = np.linspace(0.0, v.X_max, 21)
    grid = np.asarray(X_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) < 0):
        raise ValidationError("X_grid must be nonempty and sorted")
    if grid[0] < 0 or grid[-1] > v.X_max * (1 + 1e-12):
        raise ValidationError("X_grid must lie within [0, X_max]")
    F1 = np.array([v.f1(x) for x in grid])
    F2 = np.array([v.f2(x) for x in grid])
    checks, details = {}, {}

    a1 = bool(np.all(F1 >= 0) and np.all(np.diff(F1, axis=0) <= 0))
    checks["A1"] = a1
    varpi = float(v.f2(0.0).min())
    a2 = bool(np.all(F2 > 0) and np.all(np.diff(F2, axis=0) >= 0) and varpi > 0)
    checks["A2"] = a2
    details["varpi"] = varpi
    if not a2:
        # The remaining checks divide by f2.
        for key in ("A3", "A4", "A5", "A6"):
            checks[key] = False
        return AssumptionReport(checks, details)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = fitness_report(v, space, tie_tol)
    details["K_Q"] = rep.K_Q if np.isfinite(rep.K_Q) else None
    details["k_q"] = rep.k_q if np.isfinite(rep.k_q) else None
    details["fittest_indices"] = rep.fittest_indices.tolist()
    checks["A3"] = bool(np.isfinite(rep.K_Q))

    R = F1 / F2
    band0 = tie_band(rep.R0, tie_tol)
    s0 = _sign(rep.R0[:, None] - rep.R0[None, :], band0)
    a4 = True
    for row in R:
        s = _sign(row[:, None] - row[None, :], tie_band(row, tie_tol) + band0)
        if np.any(s != s0):
            a4 = False
            break
    checks["A4"] = a4

    a5, plateaus = True, []
    for q in sorted({rep.fittest, rep.weakest}):
        K = rep.K[q]
        if rep.R0[q] < 1.0 or not np.isfinite(K):
            continue
        h = 1e-6 * max(1.0, K)
        left = reproductive_number(v, max(K - h, 0.0), q) if K > 0 else np.inf
        right = reproductive_number(v, K + h, q)
        if not right < 1.0:
            plateaus.append(q)
        if not (left > 1.0 or K == 0) or not right < 1.0:
            a5 = False
    checks["A5"] = a5
    details["plateau_indices"] = plateaus

    if np.isfinite(rep.K_Q):
        q, K = rep.fittest, rep.K_Q
        h = 1e-6 * max(1.0, K)
        if K >= h:
            slope = (v.net_growth(K + h)[q] - v.net_growth(K - h)[q]) / (2 * h)
        else:
            slope = (v.net_growth(K + h)[q] - v.net_growth(K)[q]) / h
        details["f_X_at_K_Q"] = float(slope)
        checks["A6"] = bool(slope < 0)
    else:
        checks["A6"] = False
    return AssumptionReport(checks, details)
