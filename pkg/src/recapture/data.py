"""Observed capture-recapture datasets and their covariate schema."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError, DataValidationError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class CovariateColumn:
    """Declared name and kind of one covariate column.

    Categorical columns carry their frozen level labels; values in the data
    matrix are indices into ``levels``. Numeric columns have ``levels=None``.
    """

    name: str
    kind: str
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ConfigurationError(
                f"covariate {self.name!r}: kind must be '{NUMERIC}' or '{CATEGORICAL}', "
                f"got {self.kind!r}"
            )
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise ConfigurationError(
                    f"categorical covariate {self.name!r} needs a nonempty level set"
                )
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        elif self.levels is not None:
            raise ConfigurationError(f"numeric covariate {self.name!r} cannot carry levels")


@dataclass
class ObservedDataset:
    """The observed units: covariates plus a nonzero capture profile each.

    Rows are normalized to ascending ``unit_ids`` at construction so that all
    downstream reductions run in a deterministic order. Only captured units
    belong here; all-zero profiles are rejected with their row positions.
    """

    unit_ids: np.ndarray
    covariates: np.ndarray
    profiles: np.ndarray
    schema: tuple[CovariateColumn, ...] = ()

    def __post_init__(self):
        self.unit_ids = np.asarray(self.unit_ids, dtype=np.int64)
        self.covariates = np.asarray(self.covariates, dtype=np.float64)
        self.profiles = np.asarray(self.profiles)
        self.schema = tuple(self.schema)
        if self.unit_ids.ndim != 1:
            raise DataValidationError("unit_ids must be one-dimensional")
        n = self.unit_ids.shape[0]
        if self.covariates.ndim != 2 or self.covariates.shape[0] != n:
            raise DataValidationError(
                f"covariates have shape {self.covariates.shape}, expected ({n}, d)"
            )
        if self.profiles.ndim != 2 or self.profiles.shape[0] != n:
            raise DataValidationError(
                f"profiles have shape {self.profiles.shape}, expected ({n}, K)"
            )
        if self.profiles.shape[1] < 1:
            raise DataValidationError("profiles need at least one list column")
        if len(self.schema) != self.covariates.shape[1]:
            raise DataValidationError(
                f"schema declares {len(self.schema)} columns but covariates have "
                f"{self.covariates.shape[1]}"
            )
        if np.unique(self.unit_ids).shape[0] != n:
            raise DataValidationError("unit_ids contain duplicates")
        bad_bits = ~np.isin(self.profiles, (0, 1))
        if bad_bits.any():
            rows = np.unique(np.argwhere(bad_bits)[:, 0])[:10]
            raise DataValidationError(
                f"profiles must be 0/1; offending rows (positions): {rows.tolist()}"
            )
        self.profiles = self.profiles.astype(np.int8)
        zero_rows = ~self.profiles.any(axis=1)
        if zero_rows.any():
            ids = self.unit_ids[zero_rows][:10]
            raise DataValidationError(
                "observed units must appear on at least one list; all-zero profiles "
                f"at unit_ids {ids.tolist()}"
            )
        for j, column in enumerate(self.schema):
            values = self.covariates[:, j]
            if column.kind == CATEGORICAL:
                if np.any(values != np.round(values)):
                    raise DataValidationError(
                        f"categorical column {column.name!r} holds non-integer codes"
                    )
                if values.size and (values.min() < 0 or values.max() >= len(column.levels)):
                    raise DataValidationError(
                        f"categorical column {column.name!r} holds codes outside its "
                        f"{len(column.levels)} levels"
                    )
            elif not np.all(np.isfinite(values)):
                raise DataValidationError(f"numeric column {column.name!r} holds non-finite values")
        order = np.argsort(self.unit_ids, kind="stable")
        if not np.array_equal(order, np.arange(n)):
            self.unit_ids = self.unit_ids[order]
            self.covariates = self.covariates[order]
            self.profiles = self.profiles[order]

    @property
    def n_units(self) -> int:
        return self.unit_ids.shape[0]

    @property
    def n_lists(self) -> int:
        return self.profiles.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def select(self, indices) -> "ObservedDataset":
        """New dataset restricted to the given row positions."""
        indices = np.asarray(indices)
        return ObservedDataset(
            unit_ids=self.unit_ids[indices],
            covariates=self.covariates[indices],
            profiles=self.profiles[indices],
            schema=self.schema,
        )
