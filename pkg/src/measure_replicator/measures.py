"""Finite signed measures on a :class:`StrategySpace` and the flat metric.

A measure is a weight vector over the points of a space. All operations
return new measures; weight arrays are read-only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._validation import NumericalError, ValidationError, check_weights, index_mask
from .space import StrategySpace, build_finite


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    space: StrategySpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(check_weights(self.weights, self.space.n_points), copy=True)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, space):
        return cls(space, np.zeros(space.n_points))

    @classmethod
    def dirac(cls, space, index, mass=1.0):
        w = np.zeros(space.n_points)
        w[index] = mass
        return cls(space, w)

    @property
    def n_points(self):
        return self.space.n_points

    @property
    def total_variation(self):
        return float(np.abs(self.weights).sum())

    @property
    def is_positive(self):
        """Membership in the positive cone."""
        return bool(np.all(self.weights >= 0))

    @property
    def support(self):
        return np.flatnonzero(self.weights != 0)

    def __add__(self, other):
        return linear_combine(1.0, self, 1.0, other)

    def __sub__(self, other):
        return linear_combine(1.0, self, -1.0, other)

    def __mul__(self, scalar):
        return AtomicMeasure(self.space, float(scalar) * self.weights)

    __rmul__ = __mul__

    def __neg__(self):
        return AtomicMeasure(self.space, -self.weights)

    def __repr__(self):
        return f"AtomicMeasure(space={self.space.space_id!r}, weights={self.weights.tolist()!r})"

    def to_dict(self):
        return {"space_id": self.space.space_id, "weights": self.weights.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())

    def to_csv(self):
        """CSV rows ``x0, x1, ..., weight`` with 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{k}" for k in range(self.space.dim)] + ["weight"])
        for p, w in zip(self.space.points, self.weights):
            writer.writerow([f"{c:.17g}" for c in p] + [f"{w:.17g}"])
        return buf.getvalue()


def _same_space(mu, nu):
    if mu.space != nu.space:
        raise ValidationError(
            f"measures live on different spaces ({mu.space.space_id} vs {nu.space.space_id})"
        )


def total_mass(mu):
    return float(mu.weights.sum())


def _function_values(mu, f):
    if callable(f):
        vals = np.array([f(p) for p in mu.space.points], dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != (mu.n_points,):
            raise ValidationError(f"function values must have shape ({mu.n_points},)")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("test function is not finite on the support points")
    return vals


def integrate(mu, f):
    """Integral of ``f`` against ``mu``.

    ``f`` is either a callable on coordinate vectors or an array of values,
    one per point.
    """
    return float(np.dot(_function_values(mu, f), mu.weights))


def restrict(mu, selector):
    """Restriction of ``mu`` to the index set given by a mask, list or predicate."""
    keep = index_mask(selector, mu.n_points)
    return AtomicMeasure(mu.space, np.where(keep, mu.weights, 0.0))


def _as_point_map(phi, n_source, n_target):
    if isinstance(phi, dict):
        missing = [i for i in range(n_source) if i not in phi]
        if missing:
            raise ValidationError(f"map is not defined on source points {missing[:5]}")
        phi = [phi[i] for i in range(n_source)]
    arr = np.asarray(phi)
    if arr.shape != (n_source,):
        raise ValidationError(f"map must assign a target to each of {n_source} source points")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr.astype(float))) or np.any(arr != np.round(arr)):
            raise ValidationError("map targets must be integer indices")
        arr = arr.astype(int)
    if arr.size and (arr.min() < 0 or arr.max() >= n_target):
        raise ValidationError("map has targets outside the target space")
    return arr


def pushforward(mu, phi, target_space):
    """Image measure ``mu(phi^{-1}(.))`` on ``target_space``.

    ``phi`` maps each source index to a target index (sequence or dict).
    """
    targets = _as_point_map(phi, mu.n_points, target_space.n_points)
    out = np.bincount(targets, weights=mu.weights, minlength=target_space.n_points)
    return AtomicMeasure(target_space, out)


def linear_combine(a, mu, b, nu):
    _same_space(mu, nu)
    return AtomicMeasure(mu.space, float(a) * mu.weights + float(b) * nu.weights)


def _flat_norm(signed, dist):
    """Bounded-Lipschitz norm of a signed weight vector under distance ``dist``.

    Maximizes sum_i f_i s_i over |f_i| <= 1 and f_i - f_j <= d_ij. Pairs with
    d_ij >= 2 are implied by the box and dropped.
    """
    n = signed.shape[0]
    if n == 1:
        return float(abs(signed[0]))
    iu, ju = np.nonzero(np.triu(dist < 2.0, k=1))
    m = iu.shape[0]
    if m == 0:
        return float(np.abs(signed).sum())
    rows = np.repeat(np.arange(2 * m), 2)
    cols = np.empty(4 * m, dtype=int)
    vals = np.empty(4 * m)
    cols[0::4], vals[0::4] = iu, 1.0
    cols[1::4], vals[1::4] = ju, -1.0
    cols[2::4], vals[2::4] = ju, 1.0
    cols[3::4], vals[3::4] = iu, -1.0
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * m, n))
    d = dist[iu, ju]
    b = np.repeat(d, 2)
    res = linprog(
        -signed,
        A_ub=A,
        b_ub=b,
        bounds=[(-1.0, 1.0)] * n,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NumericalError(f"flat-distance LP failed: {res.message}")
    # Constant f = +-1 and the triangle inequality pin the value to this interval;
    # clamping removes solver round-off of order 1e-10.
    return float(np.clip(-res.fun, abs(signed.sum()), np.abs(signed).sum()))


def flat_distance(mu, nu, atol=0.0):
    """Bounded-Lipschitz (flat) distance between two measures on one space.

    Solved exactly as a linear program over the union of the supports.
    Weights with magnitude at or below ``atol`` are ignored when forming the
    support.
    """
    _same_space(mu, nu)
    s = mu.weights - nu.weights
    support = np.flatnonzero(np.abs(mu.weights) + np.abs(nu.weights) > atol)
    if support.size == 0:
        return 0.0
    dist = mu.space.distance_matrix[np.ix_(support, support)]
    return _flat_norm(s[support], dist)


def measure_from_dict(data, space):
    if data.get("space_id") not in (None, space.space_id):
        raise ValidationError(
            f"measure belongs to space {data['space_id']!r}, not {space.space_id!r}"
        )
    return AtomicMeasure(space, np.asarray(data["weights"], dtype=float))


def measure_from_json(text, space):
    return measure_from_dict(json.loads(text), space)


def measure_from_csv(text, space=None):
    """Read rows ``x0, ..., weight``; builds a finite space when none is given."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValidationError("empty measure CSV")
    body = rows[1:] if rows[0] and rows[0][-1] == "weight" else rows
    data = np.array([[float(c) for c in r] for r in body if r], dtype=float)
    coords, weights = data[:, :-1], data[:, -1]
    if space is None:
        space = build_finite(coords)
    elif coords.shape != space.points.shape or not np.array_equal(coords, space.points):
        raise ValidationError("CSV coordinates do not match the given space")
    return AtomicMeasure(space, weights)
