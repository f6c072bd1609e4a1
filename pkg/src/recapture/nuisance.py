"""Cross-fitted estimation of the per-unit q-probabilities.

Each learner treats the problem as classification over ``2**J`` classes: the
``2**J - 1`` canonical suffix-zero profiles individually, plus one pooled
class for every other observed pattern. Fitting the pooled class jointly
keeps the exported suffix-zero probabilities proper conditional probabilities
of the observed distribution, so their mass never exceeds 1 before
truncation. Only the suffix-zero columns are exported.

Learners and predictions are pure given their inputs; fold models could be
fitted concurrently, and :class:`QEstimates` is immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .core import (
    CaptureProfile,
    ListSubset,
    enumerate_suffix_zero_profiles,
    suffix_zero_column_indices,
)
from .data import CATEGORICAL, NUMERIC, ObservedDataset
from .exceptions import ConfigurationError, DataValidationError, ProbabilityDomainError

EMPIRICAL_CELL = "empirical-cell"
KNN = "knn"
MULTINOMIAL_LOGISTIC = "multinomial-logistic"
LEARNER_KINDS = (EMPIRICAL_CELL, KNN, MULTINOMIAL_LOGISTIC)


@dataclass(frozen=True)
class LearnerSpec:
    """Learner choice plus its kind-specific hyperparameters.

    ``seed`` drives the cross-fitting fold split (and any future stochastic
    learner); the three built-in learners are themselves deterministic.
    """

    kind: str = MULTINOMIAL_LOGISTIC
    n_neighbors: int = 25
    ridge: float = 1e-3
    max_iter: int = 500
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ConfigurationError(
                f"unknown learner kind {self.kind!r}; expected one of {LEARNER_KINDS}"
            )
        if self.n_neighbors < 1:
            raise ConfigurationError("n_neighbors must be at least 1")
        if self.ridge < 0:
            raise ConfigurationError("ridge penalty must be nonnegative")
        if self.tol <= 0:
            raise ConfigurationError("tolerance must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")


def _split_columns(schema):
    numeric = [j for j, c in enumerate(schema) if c.kind == NUMERIC]
    categorical = [j for j, c in enumerate(schema) if c.kind == CATEGORICAL]
    return numeric, categorical


def _standardizer(values: np.ndarray):
    mean = values.mean(axis=0) if values.size else np.zeros(values.shape[1])
    std = values.std(axis=0) if values.size else np.ones(values.shape[1])
    std = np.where(std > 0, std, 1.0)
    return mean, std


class EmpiricalCellLearner(BaseEstimator):
    """Within-cell class frequencies over an all-categorical schema.

    Queries landing in a cell never seen in training fall back to the global
    class frequencies.
    """

    def __init__(self, n_classes=2, schema=()):
        self.n_classes = n_classes
        self.schema = schema

    def fit(self, X, y):
        numeric, _ = _split_columns(self.schema)
        if numeric:
            names = [self.schema[j].name for j in numeric]
            raise ConfigurationError(
                f"empirical-cell learner requires an all-categorical schema; "
                f"numeric columns: {names}"
            )
        X = np.asarray(X)
        y = np.asarray(y)
        counts: dict[tuple, np.ndarray] = {}
        for row, label in zip(X.astype(np.int64), y):
            key = tuple(row.tolist())
            if key not in counts:
                counts[key] = np.zeros(self.n_classes)
            counts[key][label] += 1.0
        self.cell_probs_ = {key: c / c.sum() for key, c in counts.items()}
        global_counts = np.bincount(y, minlength=self.n_classes).astype(np.float64)
        self.global_probs_ = global_counts / global_counts.sum()
        return self

    def predict_proba(self, X):
        X = np.asarray(X).astype(np.int64)
        out = np.empty((X.shape[0], self.n_classes))
        for i, row in enumerate(X):
            out[i] = self.cell_probs_.get(tuple(row.tolist()), self.global_probs_)
        return out


class KnnLearner(BaseEstimator):
    """Class frequencies among the k nearest training units.

    Distance is Euclidean over standardized numeric columns plus a 0/1
    mismatch contribution per categorical column; ties are broken by the
    training units' ids so predictions are deterministic.
    """

    def __init__(self, n_classes=2, schema=(), n_neighbors=25):
        self.n_classes = n_classes
        self.schema = schema
        self.n_neighbors = n_neighbors

    def fit(self, X, y, unit_ids=None):
        X = np.asarray(X, dtype=np.float64)
        self._labels = np.asarray(y)
        self._unit_ids = (
            np.arange(X.shape[0], dtype=np.int64)
            if unit_ids is None
            else np.asarray(unit_ids, dtype=np.int64)
        )
        self._numeric, self._categorical = _split_columns(self.schema)
        num = X[:, self._numeric]
        self._mean, self._std = _standardizer(num)
        self._train_numeric = (num - self._mean) / self._std
        self._train_categorical = X[:, self._categorical]
        return self

    def _squared_distances(self, X):
        X = np.asarray(X, dtype=np.float64)
        d2 = np.zeros((X.shape[0], self._train_numeric.shape[0]))
        if self._numeric:
            q = (X[:, self._numeric] - self._mean) / self._std
            diff = q[:, None, :] - self._train_numeric[None, :, :]
            d2 += np.einsum("qtf,qtf->qt", diff, diff)
        if self._categorical:
            mism = X[:, self._categorical][:, None, :] != self._train_categorical[None, :, :]
            d2 += mism.sum(axis=2)
        return d2

    def predict_proba(self, X):
        d2 = self._squared_distances(X)
        k = min(self.n_neighbors, self._labels.shape[0])
        out = np.empty((d2.shape[0], self.n_classes))
        for i in range(d2.shape[0]):
            order = np.lexsort((self._unit_ids, d2[i]))[:k]
            counts = np.bincount(self._labels[order], minlength=self.n_classes)
            out[i] = counts / k
        return out


class MultinomialLogisticLearner(BaseEstimator):
    """Ridge-penalized softmax regression, fitted deterministically.

    Full-batch gradient descent with Armijo backtracking from a zero start;
    stops when the gradient norm drops below ``tol`` or after ``max_iter``
    steps. The intercept row is never penalized, so constant class
    frequencies are recovered exactly on covariate-free structure.
    """

    def __init__(self, n_classes=2, schema=(), ridge=1e-3, max_iter=500, tol=1e-8):
        self.n_classes = n_classes
        self.schema = schema
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def _design(self, X, fit_scaler=False):
        X = np.asarray(X, dtype=np.float64)
        numeric, categorical = _split_columns(self.schema)
        blocks = [np.ones((X.shape[0], 1))]
        if numeric:
            num = X[:, numeric]
            if fit_scaler:
                self._mean, self._std = _standardizer(num)
            blocks.append((num - self._mean) / self._std)
        for j in categorical:
            levels = len(self.schema[j].levels)
            codes = X[:, j].astype(np.int64)
            onehot = np.zeros((X.shape[0], levels))
            onehot[np.arange(X.shape[0]), codes] = 1.0
            blocks.append(onehot)
        return np.hstack(blocks)

    @staticmethod
    def _softmax(z):
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def _loss_grad(self, design, onehot, weights, want_grad=True):
        probs = self._softmax(design @ weights)
        n = design.shape[0]
        logs = np.log(np.clip((probs * onehot).sum(axis=1), 1e-300, None))
        penalized = weights.copy()
        penalized[0] = 0.0  # intercept row stays unpenalized
        loss = -logs.mean() + 0.5 * self.ridge * float((penalized**2).sum())
        if not want_grad:
            return loss, None
        grad = design.T @ (probs - onehot) / n + self.ridge * penalized
        return loss, grad

    def fit(self, X, y):
        design = self._design(X, fit_scaler=True)
        y = np.asarray(y)
        onehot = np.zeros((design.shape[0], self.n_classes))
        onehot[np.arange(design.shape[0]), y] = 1.0
        weights = np.zeros((design.shape[1], self.n_classes))
        loss, grad = self._loss_grad(design, onehot, weights)
        self.n_iter_ = 0
        for _ in range(self.max_iter):
            grad_sq = float((grad**2).sum())
            if np.sqrt(grad_sq) <= self.tol:
                break
            step = 1.0
            while step > 1e-16:
                candidate = weights - step * grad
                cand_loss, _ = self._loss_grad(design, onehot, candidate, want_grad=False)
                if cand_loss <= loss - 1e-4 * step * grad_sq:
                    break
                step *= 0.5
            weights = candidate
            loss, grad = self._loss_grad(design, onehot, weights)
            self.n_iter_ += 1
        self.coef_ = weights
        return self

    def predict_proba(self, X):
        return self._softmax(self._design(X) @ self.coef_)


def make_learner(spec: LearnerSpec, schema, n_classes: int):
    """Instantiate the learner a :class:`LearnerSpec` describes."""
    if spec.kind == EMPIRICAL_CELL:
        return EmpiricalCellLearner(n_classes=n_classes, schema=schema)
    if spec.kind == KNN:
        return KnnLearner(n_classes=n_classes, schema=schema, n_neighbors=spec.n_neighbors)
    return MultinomialLogisticLearner(
        n_classes=n_classes,
        schema=schema,
        ridge=spec.ridge,
        max_iter=spec.max_iter,
        tol=spec.tol,
    )


def split_folds(data: ObservedDataset, n_folds: int, seed: int) -> np.ndarray:
    """Seeded partition into folds whose sizes differ by at most one.

    Returns a fold index per dataset row (rows are in ascending unit_id
    order); the same inputs always reproduce the same assignment.
    """
    if n_folds < 2:
        raise ConfigurationError("cross-fitting needs at least 2 folds")
    if data.n_units < n_folds:
        raise ConfigurationError(
            f"cannot split {data.n_units} units into {n_folds} folds"
        )
    rng = np.random.default_rng(seed)
    assignment = np.empty(data.n_units, dtype=np.int64)
    assignment[rng.permutation(data.n_units)] = np.arange(data.n_units) % n_folds
    return assignment


@dataclass(frozen=True)
class QModel:
    """Fitted q-probability model for one training sample.

    ``predict_proba`` maps covariates to a row-stochastic matrix over the
    canonical suffix-zero profiles plus the pooled other-observed class in
    the last column.
    """

    learner: BaseEstimator
    subset: ListSubset

    @property
    def n_classes(self) -> int:
        return 2 ** self.subset.n_selected

    def predict_proba(self, X) -> np.ndarray:
        return self.learner.predict_proba(X)


def class_labels(data: ObservedDataset, subset: ListSubset) -> np.ndarray:
    """Collapse observed profiles into the ``2**J`` learner classes."""
    idx = suffix_zero_column_indices(data.profiles, subset)
    return np.where(idx >= 0, idx, subset.n_profiles)


def fit_q(data: ObservedDataset, subset: ListSubset, spec: LearnerSpec) -> QModel:
    """Fit one q-probability model on the given (training) dataset."""
    if data.n_units == 0:
        raise ConfigurationError("cannot fit q-probabilities on an empty training set")
    if subset.n_lists != data.n_lists:
        raise ConfigurationError(
            f"subset declares {subset.n_lists} lists but data has {data.n_lists}"
        )
    labels = class_labels(data, subset)
    learner = make_learner(spec, data.schema, n_classes=2 ** subset.n_selected)
    if isinstance(learner, KnnLearner):
        learner.fit(data.covariates, labels, unit_ids=data.unit_ids)
    else:
        learner.fit(data.covariates, labels)
    return QModel(learner=learner, subset=subset)


@dataclass(frozen=True)
class QEstimates:
    """Cross-fitted, truncated q-probability estimates for every unit.

    ``q`` holds one row per unit (ascending unit_id, matching ``unit_ids``)
    with columns in canonical suffix-zero profile order. Values are clamped
    to ``[floor, 1]`` componentwise without renormalizing, so a row's mass
    may exceed 1 after truncation; identification formulas consume the
    entries individually. ``fold_assignment`` records which fold each unit
    belonged to, i.e. which model did *not* see it.
    """

    unit_ids: np.ndarray
    q: np.ndarray
    floor: float
    fold_assignment: np.ndarray
    subset: ListSubset

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", np.asarray(self.unit_ids, dtype=np.int64))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(
            self, "fold_assignment", np.asarray(self.fold_assignment, dtype=np.int64)
        )
        if not 0.0 <= self.floor < 1.0:
            raise ConfigurationError(f"floor must lie in [0, 1), got {self.floor}")
        n = self.unit_ids.shape[0]
        if self.q.shape != (n, self.subset.n_profiles):
            raise ConfigurationError(
                f"q matrix has shape {self.q.shape}, expected ({n}, {self.subset.n_profiles})"
            )
        if self.fold_assignment.shape != (n,):
            raise ConfigurationError("fold_assignment must align with unit_ids")
        if self.q.size and (not np.all(np.isfinite(self.q)) or self.q.min() <= 0.0):
            bad = np.argwhere(~np.isfinite(self.q) | (self.q <= 0.0))[0]
            raise ProbabilityDomainError(
                f"nonpositive q estimate at unit row {bad[0]}, profile column {bad[1]}"
            )
        if self.q.size and self.q.min() < self.floor * (1.0 - 1e-12):
            raise ConfigurationError(
                f"q estimates fall below the truncation floor {self.floor}"
            )

    @property
    def n_units(self) -> int:
        return self.unit_ids.shape[0]

    @property
    def profiles(self) -> list[CaptureProfile]:
        return enumerate_suffix_zero_profiles(self.subset)

    def vector_for(self, unit_id: int) -> np.ndarray:
        """The q-vector of one unit, in canonical profile order."""
        pos = np.searchsorted(self.unit_ids, unit_id)
        if pos >= self.n_units or self.unit_ids[pos] != unit_id:
            raise DataValidationError(f"unit {unit_id} has no q estimate")
        return self.q[pos].copy()


def cross_fit_q(
    data: ObservedDataset,
    subset: ListSubset,
    spec: LearnerSpec,
    n_folds: int = 2,
    floor: float = 0.01,
) -> QEstimates:
    """Cross-fitted q-estimates: each unit is predicted by the models that
    never saw it, then clamped to ``[floor, 1]`` componentwise.
    """
    if not 0.0 < floor < 1.0:
        raise ConfigurationError(f"truncation floor must lie in (0, 1), got {floor}")
    folds = split_folds(data, n_folds, spec.seed)
    n_profiles = subset.n_profiles
    predictions = np.empty((data.n_units, n_profiles))
    for fold in range(n_folds):
        held_out = folds == fold
        model = fit_q(data.select(np.flatnonzero(~held_out)), subset, spec)
        predictions[held_out] = model.predict_proba(data.covariates[held_out])[:, :n_profiles]
    return QEstimates(
        unit_ids=data.unit_ids,
        q=np.clip(predictions, floor, 1.0),
        floor=floor,
        fold_assignment=folds,
        subset=subset,
    )
