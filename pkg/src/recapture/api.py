"""Scikit-learn style front end for the whole estimation pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import ListSubset, SensitivityParams
from .data import CATEGORICAL, NUMERIC, CovariateColumn, ObservedDataset
from .estimators import (
    bound_psi_inv_one_step,
    n_bounds_and_ci,
    n_point_and_ci,
    one_step_psi_inv,
    plug_in_psi_inv,
)
from .exceptions import ConfigurationError
from .nuisance import LearnerSpec, cross_fit_q


class PopulationSizeEstimator(BaseEstimator):
    """Estimate a closed population's size from multi-list capture data.

    Fitting cross-fits the per-unit conditional profile probabilities with
    the chosen learner, combines them through the subset-conditional
    log-linear identification into a debiased one-step estimate of the
    inverse capture probability, and scales up the observed count into a
    population-size estimate with a normal confidence interval.

    Parameters
    ----------
    subset : sequence of int, optional
        0-based indices of the lists entering the conditional model;
        ``None`` selects all lists.
    learner : str
        One of ``'empirical-cell'``, ``'knn'``, ``'multinomial-logistic'``.
    n_neighbors, ridge, max_iter, tol :
        Learner hyperparameters (k for knn; penalty, iteration cap, and
        gradient tolerance for the logistic learner).
    n_folds : int
        Cross-fitting folds; each unit is predicted by models that never
        trained on it.
    q_floor : float
        Positivity truncation: estimated probabilities are clamped to
        ``[q_floor, 1]`` componentwise without renormalizing.
    alpha : float
        Confidence level is ``1 - alpha``.
    categorical_features : sequence of int
        Covariate columns to treat as categorical; levels are frozen from
        the data seen in ``fit``.
    seed : int
        Drives the fold split; everything else is deterministic.

    Examples
    --------
    >>> import numpy as np
    >>> from recapture import PopulationSizeEstimator
    >>> rng = np.random.default_rng(0)
    >>> Y = rng.random((500, 2)) < 0.55
    >>> Y = Y[Y.any(axis=1)].astype(int)
    >>> X = rng.normal(size=(Y.shape[0], 1))
    >>> est = PopulationSizeEstimator(q_floor=0.02, seed=1).fit(X, Y)
    >>> bool(est.n_ >= Y.shape[0])
    True
    """

    def __init__(
        self,
        subset=None,
        learner="multinomial-logistic",
        n_neighbors=25,
        ridge=1e-3,
        max_iter=500,
        tol=1e-8,
        n_folds=2,
        q_floor=0.01,
        alpha=0.05,
        categorical_features=(),
        seed=0,
    ):
        self.subset = subset
        self.learner = learner
        self.n_neighbors = n_neighbors
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.n_folds = n_folds
        self.q_floor = q_floor
        self.alpha = alpha
        self.categorical_features = categorical_features
        self.seed = seed

    def _build_dataset(self, X, Y) -> ObservedDataset:
        Y = np.asarray(Y)
        if Y.ndim != 2:
            raise ConfigurationError("Y must be a (units, lists) 0/1 matrix")
        if X is None:
            X = np.empty((Y.shape[0], 0))
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        categorical = set(int(j) for j in self.categorical_features)
        schema = []
        encoded = X.copy()
        self._level_maps_ = {}
        for j in range(X.shape[1]):
            if j in categorical:
                levels = np.unique(X[:, j])
                codes = {v: i for i, v in enumerate(levels.tolist())}
                encoded[:, j] = [codes[v] for v in X[:, j].tolist()]
                labels = tuple(f"{v:g}" for v in levels.tolist())
                schema.append(CovariateColumn(f"x{j}", CATEGORICAL, labels))
                self._level_maps_[j] = codes
            else:
                schema.append(CovariateColumn(f"x{j}", NUMERIC))
        return ObservedDataset(
            unit_ids=np.arange(Y.shape[0]),
            covariates=encoded,
            profiles=Y,
            schema=tuple(schema),
        )

    def fit(self, X, Y):
        """Fit on covariates ``X`` (or ``None``) and capture profiles ``Y``."""
        dataset = self._build_dataset(X, Y)
        selected = (
            tuple(range(dataset.n_lists)) if self.subset is None else tuple(self.subset)
        )
        subset = ListSubset(selected, dataset.n_lists)
        spec = LearnerSpec(
            kind=self.learner,
            n_neighbors=self.n_neighbors,
            ridge=self.ridge,
            max_iter=self.max_iter,
            tol=self.tol,
            seed=self.seed,
        )
        q = cross_fit_q(dataset, subset, spec, n_folds=self.n_folds, floor=self.q_floor)
        eif = one_step_psi_inv(dataset, subset, q)
        plug_in = plug_in_psi_inv(q)
        self.dataset_ = dataset
        self.subset_ = subset
        self.q_estimates_ = q
        self.eif_ = eif
        self.report_ = n_point_and_ci(eif, dataset.n_units, self.alpha, method="one-step")
        self.plugin_report_ = n_point_and_ci(
            eif.recentered(plug_in), dataset.n_units, self.alpha, method="plug-in"
        )
        self.psi_inv_ = self.report_.psi_inv_hat
        self.psi_ = self.report_.psi_hat
        self.n_ = self.report_.n_hat
        self.ci_n_ = self.report_.ci_n
        self.ci_psi_inv_ = self.report_.ci_psi_inv
        return self

    def _require_fitted(self):
        if not hasattr(self, "report_"):
            raise NotFittedError(
                "this PopulationSizeEstimator instance is not fitted yet; call fit first"
            )

    def sensitivity_bounds(self, delta: float, epsilon: float):
        """Population-size bounds when the top interaction is only bounded.

        Reuses the fitted q-estimates; ``delta`` bounds the absolute
        interaction coefficient and ``epsilon`` floors the conditional
        capture probability.
        """
        self._require_fitted()
        params = SensitivityParams(delta=delta, epsilon=epsilon)
        lower = bound_psi_inv_one_step(
            self.dataset_, self.subset_, self.q_estimates_, params, "lower"
        )
        upper = bound_psi_inv_one_step(
            self.dataset_, self.subset_, self.q_estimates_, params, "upper"
        )
        return n_bounds_and_ci(lower, upper, self.dataset_.n_units, self.alpha, params)
