"""Long-time diagnostics: permanence, persistence, ESS/CSS checks, equilibria,
spectra and small-mutation continuation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import NumericalError, ValidationError, check_fraction, index_mask
from .dynamics import integrate_ode, jacobian_matrix, steady_state_residual
from .measures import AtomicMeasure, flat_distance
from .partitions import make_partition, project
from .space import build_finite
from .vitals import carrying_capacity, fitness_report, tie_band

ENVELOPE_TOL = 1e-6


def _quiet_fitness(v, space=None, tie_tol=1e-12):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fitness_report(v, space, tie_tol)


@dataclass
class PermanenceReport:
    k_q: float
    K_Q: float
    envelope_ok: bool
    liminf_est: float
    limsup_est: float
    permanent: bool
    worst_violation: float = 0.0

    def to_dict(self):
        return {
            "k_q": self.k_q,
            "K_Q": self.K_Q if np.isfinite(self.K_Q) else None,
            "envelope_ok": self.envelope_ok,
            "liminf_est": self.liminf_est,
            "limsup_est": self.limsup_est,
            "permanent": self.permanent,
            "worst_violation": self.worst_violation,
        }


def permanence_check(traj, v, tail_fraction=0.2, tol=ENVELOPE_TOL):
    """Check the total-mass envelope ``min(k_q, X0) <= X(t) <= max(X0, K_Q)``.

    ``liminf_est``/``limsup_est`` are the min/max of X(t) over the recorded
    tail: estimates, not limits. ``permanent`` requires ``k_q > 0``, a
    nonzero start and an intact envelope.
    """
    tail_fraction = check_fraction(tail_fraction, "tail_fraction")
    rep = _quiet_fitness(v)
    X = traj.total_mass
    X0 = float(X[0])
    lower = min(rep.k_q, X0)
    upper = max(X0, rep.K_Q)
    violation = float(max(np.max(lower - X), np.max(X - upper), 0.0))
    envelope_ok = violation <= tol
    tail = X[traj.tail_slice(tail_fraction)]
    permanent = bool(rep.k_q > 0 and X0 > 0 and envelope_ok)
    return PermanenceReport(
        rep.k_q, rep.K_Q, bool(envelope_ok), float(tail.min()), float(tail.max()), permanent, violation
    )


def persistence_margin(v, kernel, E, eps):
    """``min over q in E of R(eps, q) * P[q](E)``."""
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    mask = index_mask(E, v.n_points, "E")
    if not mask.any():
        raise ValidationError("E must be nonempty")
    R = v.reproductive_numbers(float(eps))
    kept = kernel.matrix[:, mask].sum(axis=1)
    return float(np.min(R[mask] * kept[mask]))


def persistence_condition(v, kernel, E, eps):
    """Sufficient condition for ``limsup X(t) >= eps`` when the start charges E."""
    return persistence_margin(v, kernel, E, eps) > 1.0


def relative_fitness(v, q, q_hat):
    """``R(K(q), q_hat) - 1``: growth prospects of ``q_hat`` at ``q``'s equilibrium."""
    K = carrying_capacity(v, q)
    if not np.isfinite(K):
        raise ValidationError(f"carrying capacity of strategy {q} is unbounded")
    return float(v.reproductive_numbers(K)[q_hat] - 1.0)


def is_ess(v, space, q, tie_tol=1e-12):
    """True when every strategy outside q's R-class has negative relative fitness."""
    K = carrying_capacity(v, q)
    if not np.isfinite(K):
        raise ValidationError(f"carrying capacity of strategy {q} is unbounded")
    R0 = v.reproductive_numbers(0.0)
    others = np.abs(R0 - R0[q]) > tie_band(R0, tie_tol)
    lam = v.reproductive_numbers(K) - 1.0
    return bool(np.all(lam[others] < 0))


@dataclass
class CSSReport:
    distance_to_target: float
    converged: bool
    hypothesis_ok: bool
    fittest_class: int
    target_mass: float
    projected_final: AtomicMeasure | None = None

    def to_dict(self):
        return {
            "distance_to_target": self.distance_to_target,
            "converged": self.converged,
            "hypothesis_ok": self.hypothesis_ok,
            "fittest_class": self.fittest_class,
            "target_mass": self.target_mass,
            "projected_final": None if self.projected_final is None else self.projected_final.to_dict(),
        }


def css_diagnostic(traj, v, tie_tol=1e-12, tol=1e-3, bin_tol=1e-9):
    """Flat distance of the R-projected final state to ``K_Q`` times the Dirac
    mass at the fittest class.

    When the initial state does not charge the fittest class the hypothesis
    flag is False and the run is never reported as converged.
    """
    rep = _quiet_fitness(v, traj.space, tie_tol)
    p = make_partition(traj.space, "r_level_sets", v, bin_tol=bin_tol)
    target_class = p.class_of(rep.fittest)
    hypothesis_ok = bool(np.any(traj.weights[0][rep.fittest_indices] > 0))
    final = project(traj.final, p)
    if not np.isfinite(rep.K_Q):
        return CSSReport(float("inf"), False, hypothesis_ok, target_class, float("inf"), final)
    target = AtomicMeasure.dirac(p.quotient, target_class, rep.K_Q)
    dist = flat_distance(final, target)
    return CSSReport(dist, bool(hypothesis_ok and dist < tol), hypothesis_ok, target_class, rep.K_Q, final)


@dataclass
class EquilibriumResult:
    state: AtomicMeasure
    residual: float
    eigenvalues: np.ndarray
    stable: bool
    newton_iters: int
    in_cone: bool = True

    def to_dict(self):
        return {
            "state": self.state.to_dict(),
            "residual": self.residual,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "stable": self.stable,
            "newton_iters": self.newton_iters,
            "in_cone": self.in_cone,
        }


class NewtonDivergence(NumericalError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


def find_equilibrium(v, kernel, guess, tol=1e-10, max_iter=100, max_halvings=30, cone_tol=1e-9):
    """Damped Newton iteration for a zero of the vector field.

    The step is halved while the residual (total variation of the field)
    fails to decrease, up to ``max_halvings`` times. Iterates may leave the
    positive cone; the result records whether the solution lies in it.
    """
    space = guess.space
    x = guess.weights.astype(float).copy()

    def F(w):
        X = w.sum()
        with np.errstate(all="ignore"):
            return kernel.matrix.T @ (v.f1(X) * w) - v.f2(X) * w

    def residual(w):
        out = float(np.abs(F(w)).sum())
        return out if np.isfinite(out) else np.inf

    if space.n_points != v.n_points or kernel.n_points != v.n_points:
        raise ValidationError("guess, kernel and vital rates disagree on the number of strategies")
    r = residual(x)
    best_x, best_r = x.copy(), r
    iters = 0
    while r > tol:
        if iters >= max_iter:
            raise NewtonDivergence(
                f"Newton did not converge in {max_iter} iterations (residual {best_r:.3e})",
                AtomicMeasure(space, best_x),
            )
        iters += 1
        J = jacobian_matrix(x, kernel, v)
        Fx = F(x)
        try:
            step = np.linalg.solve(J, -Fx)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -Fx, rcond=None)[0]
        lam = 1.0
        for _ in range(max_halvings):
            trial = x + lam * step
            r_trial = residual(trial)
            if r_trial < r:
                break
            lam *= 0.5
        x, r = trial, r_trial
        if not np.all(np.isfinite(x)):
            raise NewtonDivergence("Newton iterate is not finite", AtomicMeasure(space, best_x))
        if r < best_r:
            best_x, best_r = x.copy(), r
    state = AtomicMeasure(space, x)
    eig = np.linalg.eigvals(jacobian_matrix(x, kernel, v))
    in_cone = bool(np.all(x >= -cone_tol))
    return EquilibriumResult(state, r, eig, bool(np.all(eig.real < 0)), iters, in_cone)


def analytic_spectrum_pure_selection(v, space=None, tie_tol=1e-12):
    """Linearization spectrum of pure selection at ``K_Q`` times the Dirac mass
    at the fittest strategy.

    Returns the net growth rates ``f(K_Q, q)`` of every other strategy and,
    last, ``K_Q * f_X(K_Q, fittest)`` for the total-mass direction.
    """
    rep = _quiet_fitness(v, space, tie_tol)
    if rep.fittest_indices.size != 1:
        raise ValidationError("analytic spectrum needs a unique fittest strategy")
    Q, K = rep.fittest, rep.K_Q
    if not np.isfinite(K):
        raise ValidationError("carrying capacity of the fittest strategy is unbounded")
    f = v.net_growth(K)
    fX = float(v.df1(K)[Q] - v.df2(K)[Q])
    others = [float(f[i]) for i in range(v.n_points) if i != Q]
    return np.array(others + [K * fX])


def pure_selection_equilibrium(v, space, tie_tol=1e-12):
    """``K_Q`` on the fittest strategy, zero elsewhere."""
    rep = _quiet_fitness(v, space, tie_tol)
    return AtomicMeasure.dirac(space, rep.fittest, rep.K_Q)


@dataclass
class ContinuationResult:
    eps: list = field(default_factory=list)
    results: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    baseline: AtomicMeasure | None = None
    failure: dict | None = None

    def __len__(self):
        return len(self.results)

    def to_dict(self):
        return {
            "eps": list(self.eps),
            "distances": list(self.distances),
            "equilibria": [r.to_dict() for r in self.results],
            "baseline": None if self.baseline is None else self.baseline.to_dict(),
            "failure": self.failure,
        }


def continuation(v, kernel_family, eps_list, space=None, tie_tol=1e-12, tol=1e-10):
    """Track equilibria along decreasing mutation strengths.

    The largest ``eps`` starts from the pure-selection equilibrium and every
    later one from its predecessor. A Newton failure ends the sweep and is
    recorded in ``failure``.
    """
    eps = [float(e) for e in eps_list]
    if not eps or any(e < 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("eps_list must be nonempty, nonnegative and strictly decreasing")
    if space is None:
        space = build_finite(np.arange(v.n_points, dtype=float))
    base = pure_selection_equilibrium(v, space, tie_tol)
    out = ContinuationResult(baseline=base)
    guess = base
    for e in eps:
        kernel = kernel_family(e)
        if kernel.n_points != v.n_points:
            raise ValidationError("kernel family returned a kernel of the wrong size")
        try:
            res = find_equilibrium(v, kernel, guess, tol=tol)
        except NewtonDivergence as exc:
            out.failure = {"eps": e, "message": str(exc), "best": exc.best.to_dict()}
            break
        out.eps.append(e)
        out.results.append(res)
        out.distances.append(float(np.linalg.norm(res.state.weights - base.weights)))
        guess = res.state
    return out


def match_spectra(a, b):
    """Largest pairwise gap after optimally matching two eigenvalue multisets."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return float("inf")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) if a.size else 0.0


def equilibrium_drift(result, kernel, v, T=10.0, h=0.01):
    """Flat distance moved by the flow started at an equilibrium over time T."""
    start = AtomicMeasure(result.state.space, np.clip(result.state.weights, 0.0, None))
    traj = integrate_ode(start, kernel, v, T, method="rk4", h=h)
    return flat_distance(traj.final, result.state)


__all__ = [
    "PermanenceReport",
    "permanence_check",
    "persistence_margin",
    "persistence_condition",
    "relative_fitness",
    "is_ess",
    "CSSReport",
    "css_diagnostic",
    "EquilibriumResult",
    "NewtonDivergence",
    "find_equilibrium",
    "analytic_spectrum_pure_selection",
    "pure_selection_equilibrium",
    "ContinuationResult",
    "continuation",
    "match_spectra",
    "equilibrium_drift",
    "steady_state_residual",
]
