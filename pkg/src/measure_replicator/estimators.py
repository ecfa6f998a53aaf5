"""scikit-learn style wrappers.

Rows of a data matrix are weight vectors of measures on one strategy space,
so the flow, the quotient projection and the equilibrium solver compose with
``sklearn.pipeline.Pipeline`` and support ``get_params``/``set_params``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import ValidationError
from .analysis import find_equilibrium
from .dynamics import MutationKernel, integrate_ode
from .measures import AtomicMeasure
from .partitions import make_partition
from .space import build_finite


def _resolve_space(space, n_points):
    if space is None:
        return build_finite(np.arange(n_points, dtype=float))
    if space.n_points != n_points:
        raise ValidationError(f"space has {space.n_points} points but data has {n_points} columns")
    return space


def _rows(X, n_points=None):
    if isinstance(X, AtomicMeasure):
        X = X.weights
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if n_points is not None and X.shape[1] != n_points:
        raise ValidationError(f"expected {n_points} columns, got {X.shape[1]}")
    return X


class ReplicatorMutatorFlow(TransformerMixin, BaseEstimator):
    """Forward flow of the replicator-mutator dynamics over a horizon ``T``.

    ``fit`` integrates from the first row of ``X`` and keeps the trajectory;
    ``transform`` maps every row (an initial state) to its state at ``T``.
    """

    def __init__(self, vitals=None, kernel=None, space=None, T=100.0, method="rk4", h=0.01, rtol=1e-8, record_every=None):
        self.vitals = vitals
        self.kernel = kernel
        self.space = space
        self.T = T
        self.method = method
        self.h = h
        self.rtol = rtol
        self.record_every = record_every

    def _kernel(self, n):
        return MutationKernel.pure_selection(n) if self.kernel is None else self.kernel

    def _run(self, row, space):
        return integrate_ode(
            AtomicMeasure(space, row),
            self._kernel(space.n_points),
            self.vitals,
            self.T,
            method=self.method,
            h=self.h,
            rtol=self.rtol,
            record_every=self.record_every,
        )

    def fit(self, X, y=None):
        if self.vitals is None:
            raise ValidationError("ReplicatorMutatorFlow needs vital rates")
        X = _rows(X, self.vitals.n_points)
        self.space_ = _resolve_space(self.space, X.shape[1])
        self.n_features_in_ = X.shape[1]
        self.trajectory_ = self._run(X[0], self.space_)
        self.final_state_ = self.trajectory_.final
        return self

    def transform(self, X):
        check_is_fitted(self, "trajectory_")
        X = _rows(X, self.n_features_in_)
        return np.array([self._run(row, self.space_).weights[-1] for row in X])


class QuotientProjector(TransformerMixin, BaseEstimator):
    """Pushforward of measures onto the classes of a partition.

    ``inverse_transform`` places each class mass on the class representative,
    giving the atomic approximation on the source space.
    """

    def __init__(self, kind="r_level_sets", space=None, vitals=None, level=None, bin_tol=1e-9, labels=None):
        self.kind = kind
        self.space = space
        self.vitals = vitals
        self.level = level
        self.bin_tol = bin_tol
        self.labels = labels

    def fit(self, X=None, y=None):
        if X is None:
            if self.space is None:
                raise ValidationError("QuotientProjector needs a space or data to fit")
            n = self.space.n_points
        else:
            n = _rows(X).shape[1]
        space = _resolve_space(self.space, n)
        self.partition_ = make_partition(
            space, self.kind, self.vitals, bin_tol=self.bin_tol, level=self.level, labels=self.labels
        )
        self.n_features_in_ = n
        self.n_classes_ = self.partition_.n_classes
        return self

    def transform(self, X):
        check_is_fitted(self, "partition_")
        X = _rows(X, self.n_features_in_)
        out = np.zeros((X.shape[0], self.n_classes_))
        np.add.at(out.T, self.partition_.labels, X.T)
        return out

    def inverse_transform(self, Z):
        check_is_fitted(self, "partition_")
        Z = _rows(Z, self.n_classes_)
        out = np.zeros((Z.shape[0], self.n_features_in_))
        out[:, self.partition_.representatives] = Z
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array([f"class{k}" for k in range(self.n_classes_)], dtype=object)


class EquilibriumFinder(BaseEstimator):
    """Damped Newton solve for a rest point, started from the first row of ``X``."""

    def __init__(self, vitals=None, kernel=None, space=None, tol=1e-10, max_iter=100):
        self.vitals = vitals
        self.kernel = kernel
        self.space = space
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if self.vitals is None:
            raise ValidationError("EquilibriumFinder needs vital rates")
        X = _rows(X, self.vitals.n_points)
        space = _resolve_space(self.space, X.shape[1])
        kernel = MutationKernel.pure_selection(X.shape[1]) if self.kernel is None else self.kernel
        res = find_equilibrium(self.vitals, kernel, AtomicMeasure(space, X[0]), tol=self.tol, max_iter=self.max_iter)
        self.n_features_in_ = X.shape[1]
        self.result_ = res
        self.equilibrium_ = res.state.weights
        self.eigenvalues_ = res.eigenvalues
        self.stable_ = res.stable
        self.residual_ = res.residual
        return self

    def predict(self, X=None):
        """The fitted equilibrium, one copy per input row."""
        check_is_fitted(self, "equilibrium_")
        n = 1 if X is None else _rows(X, self.n_features_in_).shape[0]
        return np.tile(self.equilibrium_, (n, 1))
