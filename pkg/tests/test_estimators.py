import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from measure_replicator import MutationKernel, ValidationError, VitalRates, build_finite
from measure_replicator.estimators import EquilibriumFinder, QuotientProjector, ReplicatorMutatorFlow


@pytest.fixture
def setup():
    v = VitalRates.logistic([2, 1.5, 2], 1, 1)
    return v, build_finite([[0.0], [1.0], [2.0]])


def test_get_params_and_clone(setup):
    v, sp = setup
    for est in (ReplicatorMutatorFlow(vitals=v, space=sp, T=7.0), QuotientProjector(space=sp, vitals=v), EquilibriumFinder(vitals=v)):
        params = est.get_params()
        twin = clone(est)
        assert twin.get_params().keys() == params.keys()
    assert ReplicatorMutatorFlow(T=3.0).set_params(T=5.0).T == 5.0


def test_pipeline(setup):
    v, sp = setup
    pipe = make_pipeline(ReplicatorMutatorFlow(vitals=v, space=sp, T=60.0), QuotientProjector("r_level_sets", space=sp, vitals=v))
    X = np.array([[0.1, 0.1, 0.1], [0.0, 0.3, 0.0]])
    Z = pipe.fit(X).transform(X)
    np.testing.assert_allclose(Z[0], [1.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(Z[1], [0.0, 0.5], atol=1e-6)
    assert pipe[-1].get_feature_names_out().tolist() == ["class0", "class1"]


def test_projector_roundtrip(setup):
    v, sp = setup
    qp = QuotientProjector("r_level_sets", space=sp, vitals=v).fit()
    X = np.array([[1.0, 2.0, 3.0]])
    Z = qp.transform(X)
    np.testing.assert_allclose(Z, [[4.0, 2.0]])
    back = qp.inverse_transform(Z)
    assert back.sum() == pytest.approx(6.0)
    np.testing.assert_allclose(qp.transform(back), Z)


def test_equilibrium_finder(setup):
    v, sp = setup
    est = EquilibriumFinder(vitals=VitalRates.logistic([2, 1.5], 1, 1)).fit([[0.9, 0.1]])
    np.testing.assert_allclose(est.equilibrium_, [1, 0], atol=1e-12)
    assert est.stable_ and est.predict([[0, 0], [1, 1]]).shape == (2, 2)


def test_validation(setup):
    v, sp = setup
    with pytest.raises(NotFittedError):
        QuotientProjector(space=sp, vitals=v).transform([[1, 2, 3]])
    with pytest.raises(ValidationError):
        ReplicatorMutatorFlow(vitals=v, space=sp).fit([[1, 2]])
    with pytest.raises(ValueError):
        ReplicatorMutatorFlow(vitals=v, space=sp, T=1.0).fit([[np.nan, 1, 1]])
    with pytest.raises(ValidationError):
        ReplicatorMutatorFlow().fit([[1.0]])
