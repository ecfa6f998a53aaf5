"""Partitions of a strategy space, quotient spaces and projected measures.

A partition labels every source point with a class id ``0..n_classes-1``;
ids follow the order in which classes first appear among the source points.
Each partition carries a quotient :class:`StrategySpace` whose points are the
classes:

* ``r_level_sets``: the class's inherent reproductive number, so the quotient
  metric is ``|R(0, q) - R(0, q')|``;
* ``bottom``: the source space itself;
* everything else: the coordinates of a representative source point per
  class, with the source metric between representatives.

The ordering convention is the usual one for partitions: ``p1`` refines
``p2`` (``p1 <= p2``) when each class of ``p2`` is a union of classes of ``p1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import NumericalError, ValidationError, check_fraction
from .measures import AtomicMeasure, flat_distance, pushforward
from .space import StrategySpace

KINDS = ("bottom", "top", "r_level_sets", "dyadic", "custom")


@dataclass(frozen=True, eq=False)
class Partition:
    source: StrategySpace
    labels: np.ndarray
    kind: str
    quotient: StrategySpace
    representatives: np.ndarray
    class_values: np.ndarray | None = None
    level: int | None = None
    canonical_metric: bool = True

    @property
    def n_classes(self):
        return self.quotient.n_points

    @property
    def classes(self):
        return list(range(self.n_classes))

    def members(self, k):
        return np.flatnonzero(self.labels == k)

    def class_of(self, i):
        return int(self.labels[i])

    def class_diameters(self):
        D = self.source.distance_matrix
        out = np.zeros(self.n_classes)
        for k in range(self.n_classes):
            idx = self.members(k)
            if idx.size > 1:
                out[k] = D[np.ix_(idx, idx)].max()
        return out

    @property
    def max_diameter(self):
        return float(self.class_diameters().max())

    def to_dict(self):
        out = {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "labels": self.labels.tolist(),
            "class_diameters": self.class_diameters().tolist(),
            "representatives": self.representatives.tolist(),
            "canonical_metric": self.canonical_metric,
        }
        if self.level is not None:
            out["level"] = self.level
        if self.class_values is not None:
            out["class_values"] = self.class_values.tolist()
        return out


def _relabel(raw):
    """Map arbitrary hashable labels to 0..m-1 in order of first appearance."""
    ids = {}
    out = np.empty(len(raw), dtype=int)
    for i, lab in enumerate(raw):
        out[i] = ids.setdefault(lab, len(ids))
    return out


def _nearest(space, members, target):
    """Member closest to ``target`` coordinates; ties go to the lowest index."""
    d = np.linalg.norm(space.points[members] - target, axis=1)
    best = d.min()
    return int(members[np.flatnonzero(d <= best + 1e-12 * max(1.0, best))[0]])


def _centroid_representatives(space, labels):
    m = labels.max() + 1
    reps = np.empty(m, dtype=int)
    for k in range(m):
        members = np.flatnonzero(labels == k)
        reps[k] = _nearest(space, members, space.points[members].mean(axis=0))
    return reps


def _rep_quotient(space, reps):
    return space.subset(reps)


def _dyadic_cells_per_axis(space, level):
    extent = space.bounds[:, 1] - space.bounds[:, 0]
    target = level * math.sqrt(space.dim)
    cells = []
    for L in extent:
        k = 0
        while 2**k <= L * target:
            k += 1
        cells.append(2**k)
    return np.array(cells, dtype=int)


def _dyadic_partition(space, level):
    if level < 1:
        raise ValidationError("dyadic level must be >= 1")
    if space.metric_kind != "euclidean":
        raise ValidationError("dyadic partitions need euclidean coordinates")
    lo = space.bounds[:, 0]
    extent = space.bounds[:, 1] - lo
    m = _dyadic_cells_per_axis(space, level)
    side = np.where(extent > 0, extent / m, 1.0)
    cell = np.floor((space.points - lo) / side).astype(int)
    cell = np.clip(cell, 0, m - 1)
    labels = _relabel([tuple(c) for c in cell])
    reps = np.empty(labels.max() + 1, dtype=int)
    for k in range(reps.size):
        members = np.flatnonzero(labels == k)
        centre = lo + (cell[members[0]] + 0.5) * side
        centre = np.where(extent > 0, centre, lo)
        reps[k] = _nearest(space, members, centre)
    return labels, reps


def _r_level_labels(R0, bin_tol):
    order = np.argsort(R0, kind="stable")
    sorted_vals = R0[order]
    cluster = np.zeros(R0.size, dtype=int)
    gaps = np.diff(sorted_vals) > bin_tol * np.maximum(1.0, np.abs(sorted_vals[1:]))
    cluster[order] = np.concatenate([[0], np.cumsum(gaps)])
    return _relabel(cluster.tolist())


def make_partition(space, kind, vitals=None, bin_tol=1e-9, level=None, labels=None, representatives=None):
    """Build a partition of ``space`` and its quotient space.

    ``kind`` is one of ``bottom``, ``top``, ``r_level_sets`` (needs
    ``vitals``; R(0, .) values closer than ``bin_tol`` relative share a class),
    ``dyadic`` (needs ``level``; cells of diameter below ``1/level``) or
    ``custom`` (needs ``labels``, optional ``representatives``).
    """
    n = space.n_points
    if kind == "bottom":
        lab = np.arange(n)
        return Partition(space, lab, kind, space, lab.copy())
    if kind == "top":
        lab = np.zeros(n, dtype=int)
        reps = _centroid_representatives(space, lab)
        return Partition(space, lab, kind, _rep_quotient(space, reps), reps)
    if kind == "r_level_sets":
        if vitals is None:
            raise ValidationError("r_level_sets partition needs vital rates")
        if vitals.n_points != n:
            raise ValidationError("vital rates and space disagree on the number of strategies")
        R0 = vitals.reproductive_numbers(0.0)
        lab = _r_level_labels(R0, bin_tol)
        values = np.array([R0[lab == k].mean() for k in range(lab.max() + 1)])
        reps = _centroid_representatives(space, lab)
        quotient = StrategySpace(values[:, None], name="")
        return Partition(space, lab, kind, quotient, reps, class_values=values)
    if kind == "dyadic":
        if level is None:
            raise ValidationError("dyadic partition needs a level")
        lab, reps = _dyadic_partition(space, int(level))
        return Partition(space, lab, kind, _rep_quotient(space, reps), reps, level=int(level))
    if kind == "custom":
        if labels is None or len(labels) != n:
            raise ValidationError("custom partition needs one label per source point")
        lab = _relabel(list(labels))
        if representatives is None:
            reps = _centroid_representatives(space, lab)
        else:
            reps = np.asarray(representatives, dtype=int)
            if reps.shape != (lab.max() + 1,) or np.any(lab[reps] != np.arange(reps.size)):
                raise ValidationError("each class needs exactly one representative among its members")
        return Partition(space, lab, kind, _rep_quotient(space, reps), reps, canonical_metric=False)
    raise ValidationError(f"unknown partition kind {kind!r}")


def _same_source(p1, p2):
    if p1.source != p2.source:
        raise ValidationError("partitions are defined on different spaces")


def refines(p1, p2):
    """True when every class of ``p2`` is a union of classes of ``p1``."""
    _same_source(p1, p2)
    for k in range(p1.n_classes):
        if np.unique(p2.labels[p1.labels == k]).size != 1:
            return False
    return True


def quotient_map(p1, p2):
    """Class map from ``p1`` to the coarser ``p2``, as an index array."""
    if not refines(p1, p2):
        raise ValidationError("first partition does not refine the second")
    out = np.empty(p1.n_classes, dtype=int)
    for k in range(p1.n_classes):
        out[k] = p2.labels[p1.representatives[k]]
    return out


def project(mu, p):
    """Image of ``mu`` on the quotient space of ``p``."""
    if mu.space != p.source:
        raise ValidationError("measure and partition live on different spaces")
    return pushforward(mu, p.labels, p.quotient)


def refine_sequence(space, depth):
    """Nested dyadic partitions ``P_1 >= P_2 >= ... >= P_depth``.

    Cells at level ``i`` have diameter below ``1/i``; per-axis cell counts
    are powers of two, so each level refines the previous one.
    """
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    return [make_partition(space, "dyadic", level=i) for i in range(1, depth + 1)]


def approximate(mu, p):
    """Atomic measure putting each class's mass on its representative point."""
    if mu.space != p.source:
        raise ValidationError("measure and partition live on different spaces")
    out = np.zeros(mu.n_points)
    np.add.at(out, p.representatives[p.labels], mu.weights)
    return AtomicMeasure(mu.space, out)


def _thin(indices, max_states):
    if max_states is None or indices.size <= max_states:
        return indices
    pick = np.unique(np.round(np.linspace(0, indices.size - 1, max_states)).astype(int))
    return indices[pick]


def tail_spread(traj, p, tail_fraction=0.2, tol=None, max_states=50):
    """Largest pairwise flat distance between projected tail states.

    With ``tol`` given, the search stops as soon as the comparison with
    ``tol`` is decided: distances to the final state bound the pairwise
    maximum from below and (doubled) from above. The returned value is then
    one of those bounds, on the same side of ``tol`` as the exact maximum.
    """
    tail_fraction = check_fraction(tail_fraction, "tail_fraction")
    idx = np.arange(len(traj))[traj.tail_slice(tail_fraction)]
    idx = _thin(idx, max_states)
    projected = [project(traj.state(k), p) for k in idx]
    last = projected[-1]
    to_last = np.array([flat_distance(m, last) for m in projected[:-1]] or [0.0])
    lower = float(to_last.max())
    if tol is not None and (lower >= tol or 2 * lower < tol):
        return lower if lower >= tol else 2 * lower
    spread = lower
    for a in range(len(projected) - 1):
        for b in range(a + 1, len(projected) - 1):
            # d(a, b) <= d(a, last) + d(b, last); skip pairs that cannot beat the max.
            if to_last[a] + to_last[b] <= spread:
                continue
            spread = max(spread, flat_distance(projected[a], projected[b]))
    return spread


def mod_limit(traj, p, tail_fraction=0.2, tol=1e-4, max_states=50):
    """Detected asymptotic limit of the projected trajectory, or None.

    The projected tail is treated as converged when its states are pairwise
    within ``tol`` in the flat metric. This is a convergence detector over
    the recorded states, not a proof. At most ``max_states`` tail states,
    evenly spaced and including the last, are compared.
    """
    if len(traj) == 0:
        raise ValidationError("empty trajectory")
    spread = tail_spread(traj, p, tail_fraction, tol, max_states)
    if not np.isfinite(spread):
        raise NumericalError("non-finite tail spread")
    if spread < tol:
        return project(traj.final, p)
    return None
