import math

import numpy as np
import pytest

from measure_replicator import (
    AtomicMeasure,
    MutationKernel,
    NewtonDivergence,
    ValidationError,
    VitalRates,
    analytic_spectrum_pure_selection,
    build_finite,
    continuation,
    css_diagnostic,
    find_equilibrium,
    integrate_ode,
    is_ess,
    permanence_check,
    persistence_condition,
    relative_fitness,
    steady_state_residual,
)
from measure_replicator.analysis import equilibrium_drift, match_spectra, persistence_margin


def line(n):
    return build_finite(np.arange(n, dtype=float)[:, None])


def test_permanence_single_atom():
    v = VitalRates.logistic(2, 1, 1, n_points=1)
    traj = integrate_ode(AtomicMeasure(line(1), [0.1]), MutationKernel.pure_selection(1), v, 100.0)
    rep = permanence_check(traj, v)
    assert rep.k_q == pytest.approx(1, abs=1e-9) and rep.K_Q == pytest.approx(1, abs=1e-9)
    assert abs(rep.liminf_est - 1) < 1e-4 and abs(rep.limsup_est - 1) < 1e-4
    assert rep.permanent and rep.envelope_ok


def test_permanence_subcritical():
    v = VitalRates.logistic([0.5, 0.8], 1, 1)
    traj = integrate_ode(AtomicMeasure(line(2), [0.5, 0.5]), MutationKernel.epsilon_uniform(2, 0.1), v, 100.0)
    rep = permanence_check(traj, v)
    assert rep.K_Q == 0 and rep.limsup_est < 1e-6 and not rep.permanent


def test_permanence_zero_start():
    v = VitalRates.logistic(2, 1, 1, n_points=2)
    traj = integrate_ode(AtomicMeasure.zero(line(2)), MutationKernel.pure_selection(2), v, 5.0)
    rep = permanence_check(traj, v)
    assert rep.envelope_ok and not rep.permanent and rep.limsup_est == 0


def test_persistence_examples():
    v = VitalRates.logistic(2, 1, 1, n_points=1)
    k = MutationKernel.pure_selection(1)
    assert persistence_margin(v, k, [0], 0.5) == pytest.approx(4 / 3)
    assert persistence_condition(v, k, [0], 0.5)
    assert not persistence_condition(v, k, [0], 1.5)
    v2 = VitalRates.logistic([2, 2], 1, 1)
    leave = MutationKernel.custom([[0, 1], [0, 1]])
    assert not persistence_condition(v2, leave, [0], 0.1)
    with pytest.raises(ValidationError):
        persistence_condition(v, k, [0], 0.0)


def test_relative_fitness_and_ess(two_atom):
    space, v = two_atom
    assert relative_fitness(v, 0, 0) == pytest.approx(0, abs=1e-9)
    assert relative_fitness(v, 0, 1) == pytest.approx(-0.25, abs=1e-9)
    assert relative_fitness(v, 1, 0) == pytest.approx(1 / 3, abs=1e-9)
    assert is_ess(v, space, 0) and not is_ess(v, space, 1)
    same = VitalRates.logistic(2, 1, 1, n_points=3)
    assert is_ess(same, line(3), 1)
    with pytest.raises(ValidationError):
        relative_fitness(VitalRates.logistic(2, 1, 0, n_points=1), 0, 0)


def test_lambda_sign_antisymmetry():
    rng = np.random.default_rng(4)
    for _ in range(50):
        b = rng.uniform(0.5, 3, 2)
        d, c = rng.uniform(0.5, 2), rng.uniform(0.5, 2)
        v = VitalRates.logistic(b, d, c)
        if min(b) <= d or abs(b[0] - b[1]) < 1e-6:
            continue
        assert np.sign(relative_fitness(v, 0, 1)) == -np.sign(relative_fitness(v, 1, 0))


def test_css_two_atom(two_atom):
    space, v = two_atom
    traj = integrate_ode(AtomicMeasure(space, [0.1, 0.1]), MutationKernel.pure_selection(2), v, 200.0)
    rep = css_diagnostic(traj, v, tol=1e-3)
    assert rep.converged and rep.hypothesis_ok
    off = integrate_ode(AtomicMeasure(space, [0.0, 0.2]), MutationKernel.pure_selection(2), v, 20.0)
    rep2 = css_diagnostic(off, v)
    assert not rep2.hypothesis_ok and not rep2.converged


def test_newton_two_atom(two_atom):
    space, v = two_atom
    res = find_equilibrium(v, MutationKernel.pure_selection(2), AtomicMeasure(space, [0.9, 0.1]))
    np.testing.assert_allclose(res.state.weights, [1, 0], atol=1e-12)
    assert res.residual < 1e-12 and res.stable and res.in_cone
    assert match_spectra(res.eigenvalues, analytic_spectrum_pure_selection(v, space)) < 1e-6
    np.testing.assert_allclose(sorted(analytic_spectrum_pure_selection(v)), [-1, -0.5], atol=1e-8)


def test_newton_small_mutation(two_atom):
    space, v = two_atom
    k = MutationKernel.epsilon_uniform(2, 0.01)
    res = find_equilibrium(v, k, AtomicMeasure(space, [1.0, 0.0]))
    assert res.residual <= 1e-10 and res.stable and res.in_cone
    assert np.linalg.norm(res.state.weights - [1, 0]) < 0.05
    assert steady_state_residual(res.state, k, v) <= 1e-10
    assert equilibrium_drift(res, k, v) < 1e-6


def test_newton_zero_guess(two_atom):
    space, v = two_atom
    res = find_equilibrium(v, MutationKernel.pure_selection(2), AtomicMeasure.zero(space))
    assert res.residual == 0 and np.all(res.state.weights == 0) and res.newton_iters == 0


def test_newton_divergence_carries_best():
    v = VitalRates.logistic(2, 1, 1, n_points=1)
    with pytest.raises(NewtonDivergence) as info:
        find_equilibrium(v, MutationKernel.pure_selection(1), AtomicMeasure(line(1), [0.7]), tol=0.0, max_iter=3)
    assert info.value.best.weights[0] == pytest.approx(1.0, abs=1e-3)


def test_analytic_spectrum_examples():
    assert analytic_spectrum_pure_selection(VitalRates.logistic(2, 1, 1, n_points=1)).tolist() == pytest.approx([-1.0], abs=1e-8)
    v3 = VitalRates.logistic([2, 1.5, 1.2], 1, 1)
    np.testing.assert_allclose(sorted(analytic_spectrum_pure_selection(v3)), [-1, -0.8, -0.5], atol=1e-8)
    with pytest.raises(ValidationError):
        analytic_spectrum_pure_selection(VitalRates.logistic(2, 1, 1, n_points=2))


def test_analytic_spectrum_scales_with_K():
    # With K != 1 the mass-direction eigenvalue is K * f_X, not f_X.
    v = VitalRates.logistic([3, 2], 1, 0.5)
    space = line(2)
    K = 4.0
    res = find_equilibrium(v, MutationKernel.pure_selection(2), AtomicMeasure(space, [3.5, 0.1]))
    np.testing.assert_allclose(res.state.weights, [K, 0], atol=1e-9)
    analytic = analytic_spectrum_pure_selection(v, space)
    assert match_spectra(res.eigenvalues, analytic) < 1e-6
    assert -2.0 in np.round(analytic, 9) and K * -0.5 in np.round(analytic, 9)


@pytest.mark.parametrize("family", ["ricker", "beverton_holt"])
def test_spectrum_other_families(family):
    v = getattr(VitalRates, family)([2.5, 1.5, 1.2], 1, 0.7)
    space = line(3)
    res = find_equilibrium(v, MutationKernel.pure_selection(3), AtomicMeasure(space, [1.0, 0.1, 0.1]))
    assert match_spectra(res.eigenvalues, analytic_spectrum_pure_selection(v, space)) < 1e-6


def five():
    return VitalRates.logistic([2, 1.8, 1.6, 1.4, 1.2], 1, 1)


def test_continuation_five():
    v = five()
    res = continuation(v, lambda e: MutationKernel.epsilon_uniform(5, e), [0.1, 0.01, 0.001], line(5))
    assert res.failure is None and len(res) == 3
    assert all(r.residual <= 1e-10 and r.stable for r in res.results)
    assert res.distances[0] > res.distances[1] > res.distances[2]


def test_continuation_eps_zero_is_pure_selection():
    v = five()
    res = continuation(v, lambda e: MutationKernel.epsilon_uniform(5, e), [0.0], line(5))
    np.testing.assert_allclose(res.results[0].state.weights, [1, 0, 0, 0, 0], atol=1e-12)
    assert res.distances[0] < 1e-9


def test_continuation_identical_strategies():
    v = VitalRates.logistic(2, 1, 1, n_points=4)
    eps = 0.2
    res = continuation(v, lambda e: MutationKernel.epsilon_uniform(4, e), [eps], line(4))
    x = res.results[0].state.weights
    assert x.sum() == pytest.approx(1.0, abs=1e-10)
    # Zero-sum directions decay at -eps * f1(K); the mass direction at K * f_X.
    expected = [-eps * 2.0] * 3 + [-1.0]
    assert match_spectra(res.results[0].eigenvalues, expected) < 1e-6


def test_continuation_rejects_bad_eps():
    with pytest.raises(ValidationError):
        continuation(five(), lambda e: MutationKernel.epsilon_uniform(5, e), [0.01, 0.1])


def test_continuation_records_failure(monkeypatch):
    import measure_replicator.analysis as analysis

    real = analysis.find_equilibrium

    def flaky(v, kernel, guess, tol=1e-10):
        if kernel.param is not None and kernel.param < 0.05:
            raise NewtonDivergence("forced failure", guess)
        return real(v, kernel, guess, tol=tol)

    monkeypatch.setattr(analysis, "find_equilibrium", flaky)
    res = continuation(five(), lambda e: MutationKernel.epsilon_uniform(5, e), [0.1, 0.01, 0.001], line(5))
    assert res.eps == [0.1] and len(res) == 1
    assert res.failure["eps"] == 0.01 and "forced failure" in res.failure["message"]


def test_ess_css_consistency_on_runs(two_atom):
    space, v = two_atom
    for u in ([0.1, 0.1], [0.01, 1.5], [2.0, 0.3]):
        traj = integrate_ode(AtomicMeasure(space, u), MutationKernel.pure_selection(2), v, 200.0)
        rep = css_diagnostic(traj, v)
        if rep.converged:
            assert is_ess(v, space, 0)


def test_envelope_can_fail_without_a4():
    # R0 = (2, 1.5) but K = (0.5, 1): the less fit strategy carries more mass,
    # so X(t) exceeds max(X(0), K_Q) once the ordering assumption is dropped.
    v = VitalRates.logistic([2, 1.5], 1, [2, 0.5])
    from measure_replicator import check_assumptions

    assert check_assumptions(v).checks["A4"] is False
    traj = integrate_ode(AtomicMeasure(line(2), [0.05, 0.05]), MutationKernel.pure_selection(2), v, 100.0)
    assert not permanence_check(traj, v).envelope_ok
