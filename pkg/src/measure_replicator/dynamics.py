"""Replicator-mutator vector field on atomic measures and its time integration.

On a finite space with weights ``w`` and total mass ``X`` the field reads

    F_i = sum_j f1(X, q_j) P[j, i] w_j - f2(X, q_i) w_i

where row ``P[j]`` is the offspring distribution of strategy ``j``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    NumericalError,
    ValidationError,
    check_positive,
    check_row_stochastic,
    check_weights,
)
from .measures import AtomicMeasure

NEG_CLIP = 1e-9
MIN_STEP = 1e-12


@dataclass(frozen=True, eq=False)
class MutationKernel:
    """Row-stochastic offspring matrix; ``matrix[j, i]`` is the share of
    offspring of strategy ``j`` born with strategy ``i``."""

    matrix: np.ndarray
    tag: str = "custom"
    param: float | None = None

    def __post_init__(self):
        P = np.array(check_row_stochastic(self.matrix), copy=True)
        P.setflags(write=False)
        object.__setattr__(self, "matrix", P)

    @property
    def n_points(self):
        return self.matrix.shape[0]

    @classmethod
    def pure_selection(cls, n_points):
        return cls(np.eye(n_points), "pure_selection")

    @classmethod
    def epsilon_uniform(cls, n_points, eps):
        """``(1 - eps) I + (eps / n) J``: a fraction ``eps`` of offspring is
        spread uniformly over all strategies."""
        if not 0 <= eps <= 1:
            raise ValidationError("eps must lie in [0, 1]")
        n = n_points
        P = (1.0 - eps) * np.eye(n) + (eps / n) * np.ones((n, n))
        return cls(P, "pure_selection" if eps == 0 else "epsilon_uniform", float(eps))

    @classmethod
    def gaussian(cls, space, width):
        """Offspring of ``q`` land near ``q`` with Gaussian weights in the space metric."""
        width = check_positive(width, "width")
        D = space.distance_matrix
        P = np.exp(-0.5 * (D / width) ** 2)
        P /= P.sum(axis=1, keepdims=True)
        return cls(P, "gaussian", width)

    @classmethod
    def custom(cls, matrix):
        return cls(np.asarray(matrix, dtype=float), "custom")

    @property
    def is_pure_selection(self):
        return bool(np.array_equal(self.matrix, np.eye(self.n_points)))

    def to_dict(self):
        return {"tag": self.tag, "param": self.param, "matrix": self.matrix.tolist()}


def _check_shapes(n, kernel, vitals):
    if kernel.n_points != n or vitals.n_points != n:
        raise ValidationError(
            f"shape mismatch: measure has {n} points, kernel {kernel.n_points}, "
            f"vital rates {vitals.n_points}"
        )


def _field(w, P, vitals):
    X = w.sum()
    f1 = vitals.f1(X)
    f2 = vitals.f2(X)
    out = P.T @ (f1 * w) - f2 * w
    if not np.all(np.isfinite(out)):
        raise NumericalError("vector field is not finite; check the vital rates")
    return out


def vector_field(mu, kernel, vitals):
    _check_shapes(mu.n_points, kernel, vitals)
    return AtomicMeasure(mu.space, _field(mu.weights, kernel.matrix, vitals))


def mass_rate(mu, vitals):
    """d/dt of the total mass; the kernel drops out because its rows sum to one."""
    X = float(mu.weights.sum())
    return float(np.dot(vitals.f1(X) - vitals.f2(X), mu.weights))


def steady_state_residual(mu, kernel, vitals):
    """Total variation of the vector field at ``mu``."""
    return vector_field(mu, kernel, vitals).total_variation


def jacobian_matrix(weights, kernel, vitals):
    """Derivative of the field with respect to the weights.

    Uses the closed-form X-derivatives of the vital family (one-sided
    differences for tabulated rates).
    """
    w = np.asarray(weights, dtype=float)
    P = kernel.matrix
    X = w.sum()
    f1, f2 = vitals.f1(X), vitals.f2(X)
    dX = P.T @ (vitals.df1(X) * w) - vitals.df2(X) * w
    return P.T * f1[None, :] - np.diag(f2) + dX[:, None]


def finite_difference_jacobian(weights, kernel, vitals, step=1e-7):
    """Central-difference Jacobian of the field; used as an independent check."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    J = np.empty((n, n))
    for k in range(n):
        h = step * max(1.0, abs(w[k]))
        e = np.zeros(n)
        e[k] = h
        J[:, k] = (_field(w + e, kernel.matrix, vitals) - _field(w - e, kernel.matrix, vitals)) / (2 * h)
    return J


@dataclass
class SolverStats:
    steps: int = 0
    rejected: int = 0
    max_residual: float = 0.0
    final_residual: float = 0.0
    budget: int = field(default=1_000_000, repr=False)

    def to_dict(self):
        return {
            "steps": self.steps,
            "rejected": self.rejected,
            "max_residual": self.max_residual,
            "final_residual": self.final_residual,
        }


@dataclass(eq=False)
class Trajectory:
    """Recorded states of one forward run.

    ``weights[k]`` is the state at ``times[k]``. ``solver_stats.max_residual``
    is the largest negative weight clipped back to zero and ``final_residual``
    the equilibrium residual of the last state.
    """

    space: object
    times: np.ndarray
    weights: np.ndarray
    solver_stats: SolverStats = field(default_factory=SolverStats)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValidationError("trajectory needs at least one time")
        if self.weights.shape != (self.times.size, self.space.n_points):
            raise ValidationError("trajectory weights must have shape (n_times, n_points)")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def state(self, k):
        return AtomicMeasure(self.space, self.weights[k])

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]

    @property
    def initial(self):
        return self.state(0)

    @property
    def final(self):
        return self.state(-1)

    @property
    def total_mass(self):
        return self.weights.sum(axis=1)

    def tail_slice(self, tail_fraction):
        n = len(self)
        start = min(n - 1, int(math.floor((1.0 - tail_fraction) * n)))
        return slice(start, n)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "total_mass"] + [f"w{i}" for i in range(self.space.n_points)])
        for t, w in zip(self.times, self.weights):
            writer.writerow([f"{t:.17g}", f"{w.sum():.17g}"] + [f"{x:.17g}" for x in w])
        return buf.getvalue()

    def summary(self):
        return {
            "t_final": float(self.times[-1]),
            "final_state": self.final.to_dict(),
            "final_total_mass": float(self.weights[-1].sum()),
            "n_records": len(self),
            "solver_stats": self.solver_stats.to_dict(),
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=2)


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _dp_step(f, x, h, k1):
    ks = [k1]
    for stage in range(1, 7):
        incr = sum(a * k for a, k in zip(_DP_A[stage], ks))
        ks.append(f(x + h * incr))
    K = np.array(ks)
    x5 = x + h * (_DP_B5 @ K)
    err = h * ((_DP_B5 - _DP_B4) @ K)
    return x5, err, ks[-1]


class _Clipper:
    def __init__(self):
        self.max_clipped = 0.0

    def admissible(self, x):
        return not np.any(x < -NEG_CLIP)

    def __call__(self, x):
        neg = x < 0
        if neg.any():
            self.max_clipped = max(self.max_clipped, float(-x[neg].min()))
            x = np.where(neg, 0.0, x)
        return x


def _record_grid(T, record_every):
    n = max(1, int(round(T / record_every)))
    times = np.linspace(0.0, T, n + 1)
    return times


def integrate_ode(
    u, kernel, vitals, T, method="rk4", h=0.01, rtol=1e-8, atol=1e-12, record_every=None, max_steps=1_000_000
):
    """Integrate the replicator-mutator flow forward from ``u`` to time ``T``.

    ``method="rk4"`` takes fixed steps of size ``h``; ``"rk45"`` is the
    Dormand-Prince embedded pair with relative tolerance ``rtol``. States are
    recorded every ``record_every`` time units (default: at most 1000
    intervals). Any stage that would push a weight below ``-1e-9`` is
    rejected and retried with half the step; smaller negative weights are
    clipped to zero. More than ``max_steps`` attempted steps (accepted plus
    rejected) raise :class:`NumericalError`.
    """
    T = check_positive(T, "T")
    w0 = check_weights(u.weights, u.n_points, "initial weights")
    _check_shapes(u.n_points, kernel, vitals)
    if np.any(w0 < 0):
        raise ValidationError("initial measure must lie in the positive cone")
    if method not in ("rk4", "rk45"):
        raise ValidationError(f"unknown method {method!r}")
    P = kernel.matrix

    def f(x):
        return _field(x, P, vitals)

    stats = SolverStats()
    stats.budget = int(max_steps)
    clip = _Clipper()
    if method == "rk4":
        h = check_positive(h, "h")
        n_steps = max(1, int(round(T / h)))
        h = T / n_steps
        if record_every is None:
            stride = max(1, math.ceil(n_steps / 1000))
        else:
            stride = max(1, int(round(check_positive(record_every, "record_every") / h)))
        times, states = [0.0], [w0.copy()]
        x = w0.copy()
        for step in range(1, n_steps + 1):
            x = _rk4_interval(f, x, h, stats, clip)
            if step % stride == 0 or step == n_steps:
                times.append(step * h if step < n_steps else T)
                states.append(x.copy())
    else:
        if record_every is None:
            record_every = T / 1000
        grid = _record_grid(T, check_positive(record_every, "record_every"))
        times, states = _rk45_run(f, w0.copy(), grid, rtol, atol, stats, clip)
    stats.max_residual = clip.max_clipped
    final = np.asarray(states[-1])
    stats.final_residual = float(np.abs(f(final)).sum())
    return Trajectory(u.space, np.array(times), np.array(states), stats)


def _spend(stats):
    if stats.steps + stats.rejected >= stats.budget:
        raise NumericalError(f"step budget of {stats.budget} exhausted: stiffness or invalid rates")


def _rk4_interval(f, x, h, stats, clip):
    """Advance one fixed RK4 interval, halving sub-steps on cone violations."""
    remaining, hs = h, h
    while remaining > 0:
        step = min(hs, remaining)
        _spend(stats)
        cand = _rk4_step(f, x, step)
        if not clip.admissible(cand):
            stats.rejected += 1
            hs = step / 2
            if hs < MIN_STEP:
                raise NumericalError("step size underflow: stiffness or invalid rates")
            continue
        x = clip(cand)
        stats.steps += 1
        remaining -= step
        if remaining < MIN_STEP * h:
            break
    return x


def _rk45_run(f, x, grid, rtol, atol, stats, clip):
    times, states = [0.0], [x.copy()]
    t = 0.0
    h = min(grid[1] - grid[0], 0.01)
    k1 = f(x)
    for t_next in grid[1:]:
        while t < t_next:
            last = t + h >= t_next
            step = t_next - t if last else h
            _spend(stats)
            x_new, err, k_last = _dp_step(f, x, step, k1)
            scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
            if not np.isfinite(err_norm):
                raise NumericalError("non-finite error estimate: stiffness or invalid rates")
            if err_norm > 1.0 or not clip.admissible(x_new):
                stats.rejected += 1
                if err_norm > 1.0:
                    h = step * max(0.2, 0.9 * err_norm ** -0.2)
                else:
                    h = step / 2
                if h < MIN_STEP:
                    raise NumericalError("step size underflow: stiffness or invalid rates")
                continue
            stats.steps += 1
            t = t_next if last else t + step
            x = clip(x_new)
            k1 = f(x) if np.any(x != x_new) else k_last
            factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
            # A short landing step must not shrink the next regular step.
            h = max(h, step * factor) if last else step * factor
        times.append(float(t_next))
        states.append(x.copy())
    return times, states
