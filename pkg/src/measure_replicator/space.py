"""Finite strategy spaces: grids over boxes or explicit point lists with a metric."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import ValidationError, check_finite_array, check_index

EUCLIDEAN = "euclidean"
TABLE = "table"


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StrategySpace:
    """An ordered, finite set of trait vectors with a metric.

    ``points`` has shape ``(n_points, dim)``. With ``metric_kind="table"`` the
    pairwise distances come from ``table`` instead of the coordinates.
    """

    points: np.ndarray
    metric_kind: str = EUCLIDEAN
    bounds: np.ndarray | None = None
    table: np.ndarray | None = None
    name: str = ""
    _id: str = field(init=False, repr=False)

    def __post_init__(self):
        pts = check_finite_array(self.points, name="points")
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValidationError("empty strategy space")
        if len({tuple(p) for p in pts.tolist()}) != pts.shape[0]:
            raise ValidationError("strategy space has duplicate points")
        if self.bounds is None:
            bounds = np.column_stack([pts.min(axis=0), pts.max(axis=0)])
        else:
            bounds = check_finite_array(self.bounds, name="bounds", ndim=2)
            if bounds.shape != (pts.shape[1], 2) or np.any(bounds[:, 0] > bounds[:, 1]):
                raise ValidationError(f"bounds must have shape ({pts.shape[1]}, 2) with lo <= hi")
            if np.any(pts < bounds[:, 0]) or np.any(pts > bounds[:, 1]):
                raise ValidationError("points lie outside bounds")
        if self.metric_kind == TABLE:
            if self.table is None:
                raise ValidationError("metric_kind 'table' needs a distance table")
            tab = check_finite_array(self.table, name="table", ndim=2)
            n = pts.shape[0]
            if tab.shape != (n, n):
                raise ValidationError(f"distance table must be {n}x{n}")
            if np.any(np.diag(tab) != 0) or not np.allclose(tab, tab.T, rtol=0, atol=0):
                raise ValidationError("distance table must be symmetric with zero diagonal")
            off = tab[~np.eye(n, dtype=bool)]
            if np.any(off <= 0):
                raise ValidationError("distance table must be positive off the diagonal")
            object.__setattr__(self, "table", _frozen(tab))
        elif self.metric_kind != EUCLIDEAN:
            raise ValidationError(f"unknown metric_kind {self.metric_kind!r}")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "bounds", _frozen(bounds))
        digest = hashlib.sha1(self.points.tobytes())
        digest.update(self.metric_kind.encode())
        if self.table is not None:
            digest.update(self.table.tobytes())
        object.__setattr__(self, "_id", digest.hexdigest()[:16])

    @property
    def space_id(self):
        """Content hash; two spaces with equal points and metric share it."""
        return self.name or self._id

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n_points

    def __eq__(self, other):
        return isinstance(other, StrategySpace) and self._id == other._id

    def __hash__(self):
        return hash(self._id)

    @cached_property
    def distance_matrix(self):
        if self.metric_kind == TABLE:
            return self.table
        diff = self.points[:, None, :] - self.points[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dist.setflags(write=False)
        return dist

    def distance(self, i, j):
        i = check_index(i, self.n_points, "i")
        j = check_index(j, self.n_points, "j")
        return float(self.distance_matrix[i, j])

    def subset(self, indices):
        """Sub-space on the given point indices, keeping the metric."""
        idx = np.asarray(indices, dtype=int)
        table = None if self.table is None else self.table[np.ix_(idx, idx)]
        return StrategySpace(self.points[idx], self.metric_kind, self.bounds, table)

    def to_dict(self):
        out = {
            "space_id": self.space_id,
            "metric_kind": self.metric_kind,
            "points": self.points.tolist(),
            "bounds": self.bounds.tolist(),
        }
        if self.table is not None:
            out["table"] = self.table.tolist()
        return out


def build_grid(bounds, resolution, mask=None, name=""):
    """Regular lattice over an axis-aligned box, in row-major order.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs and ``resolution`` the
    number of lattice points per axis (a scalar applies to every axis). A single point on an axis sits at
    ``lo``. ``mask`` is an optional predicate on coordinate vectors; points for
    which it returns False are dropped.
    """
    box = np.asarray(bounds, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    res = np.atleast_1d(np.asarray(resolution))
    if res.size == 1:
        res = np.repeat(res, box.shape[0])
    if res.shape[0] != box.shape[0]:
        raise ValidationError("resolution needs one entry per axis")
    if np.any(res < 1) or not np.all(res == np.round(res)):
        raise ValidationError("resolution must be a positive integer per axis")
    axes = [
        np.linspace(lo, hi, int(n)) if n > 1 else np.array([lo])
        for (lo, hi), n in zip(box, res)
    ]
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    if mask is not None:
        keep = np.array([bool(mask(p)) for p in pts], dtype=bool)
        pts = pts[keep]
    if pts.shape[0] == 0:
        raise ValidationError("empty strategy space")
    return StrategySpace(pts, EUCLIDEAN, box, name=name)


def build_finite(points, metric_table=None, name=""):
    """Space over an explicit list of points; order is preserved."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    kind = EUCLIDEAN if metric_table is None else TABLE
    return StrategySpace(pts, kind, None, metric_table, name=name)
