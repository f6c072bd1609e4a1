"""Point, one-step, and sensitivity-bound estimators with confidence intervals.

Per-unit influence values are folded over immutable inputs in ascending
unit_id order (numpy's pairwise summation), so repeated runs on identical
inputs reproduce identical floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .core import (
    ListSubset,
    QVector,
    SensitivityParams,
    eif_signs,
    gamma_inverse_matrix,
    profile_orders,
    suffix_zero_column_indices,
)
from .data import ObservedDataset
from .exceptions import ConfigurationError, DataValidationError
from .nuisance import QEstimates

LOWER = "lower"
UPPER = "upper"

#: absolute tolerance for the plug-in/correction decomposition identity,
#: checked on every one-step evaluation
DECOMPOSITION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class EifSample:
    """Per-unit uncentered influence values and their summary statistics.

    ``values[i]`` is the uncentered influence contribution of
    ``unit_ids[i]``; ``center`` is their mean (the estimator itself) and
    ``variance`` the unbiased empirical variance of the centered values.
    """

    unit_ids: np.ndarray
    values: np.ndarray
    center: float
    variance: float

    @classmethod
    def from_values(cls, unit_ids, values) -> "EifSample":
        unit_ids = np.asarray(unit_ids, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        center = float(values.mean())
        variance = float(values.var(ddof=1)) if values.shape[0] > 1 else 0.0
        return cls(unit_ids=unit_ids, values=values, center=center, variance=variance)

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def recentered(self, new_center: float) -> "EifSample":
        """Shift all values so the sample mean lands on ``new_center``.

        Keeps the dispersion intact; used to attach the one-step variance to
        the plug-in point estimate, which has no variance formula of its own.
        """
        shift = new_center - self.center
        return EifSample.from_values(self.unit_ids, self.values + shift)


@dataclass(frozen=True)
class EstimateReport:
    """Inverse-capture-probability and population-size estimates with CIs.

    ``clamped`` is set whenever a reported quantity was raised to its logical
    floor: the inverse capture probability CI at 1, or the population size
    point/CI at the observed count.
    """

    psi_inv_hat: float
    psi_hat: float
    sigma_hat: float
    ci_psi_inv: tuple[float, float]
    n_hat: float
    ci_n: tuple[float, float]
    n_observed: int
    method: str
    clamped: bool

    def __post_init__(self):
        if self.ci_psi_inv[0] > self.ci_psi_inv[1] or self.ci_n[0] > self.ci_n[1]:
            raise ConfigurationError("confidence interval endpoints are out of order")


@dataclass(frozen=True)
class BoundsReport:
    """Partial-identification results for one (delta, epsilon) setting."""

    lower: EstimateReport
    upper: EstimateReport
    params: SensitivityParams
    combined_ci_n: tuple[float, float]


def _check_alignment(data: ObservedDataset, subset: ListSubset, q: QEstimates):
    if q.subset != subset:
        raise ConfigurationError(
            f"q estimates were built for subset {q.subset.selected}, not {subset.selected}"
        )
    if data.n_units != q.n_units or not np.array_equal(data.unit_ids, q.unit_ids):
        missing = np.setdiff1d(data.unit_ids, q.unit_ids)
        raise DataValidationError(
            f"q estimates do not cover the dataset; first missing unit_ids: "
            f"{missing[:5].tolist()}"
        )


def _indicator_weights(data: ObservedDataset, subset: ListSubset, q: QEstimates):
    """Per-unit signed inverse-probability weight of the observed profile.

    Units whose profile touches a non-selected list carry weight 0 and
    contribute only the constant term of the influence function.
    """
    idx = suffix_zero_column_indices(data.profiles, subset)
    signs = eif_signs(profile_orders(subset))
    rows = np.arange(data.n_units)
    safe_idx = np.where(idx >= 0, idx, 0)
    weights = signs[safe_idx] / q.q[rows, safe_idx]
    return np.where(idx >= 0, weights, 0.0)


def plug_in_psi_inv(q: QEstimates) -> float:
    """Plug-in estimate of the inverse capture probability.

    The empirical mean of the per-unit inverse conditional capture
    probabilities implied by the q-estimates; always at least 1.
    """
    if q.n_units == 0:
        raise ConfigurationError("cannot estimate from an empty set of q estimates")
    gamma_inv = gamma_inverse_matrix(q.q, profile_orders(q.subset))
    return float(gamma_inv.mean())


def one_step_psi_inv(data: ObservedDataset, subset: ListSubset, q: QEstimates) -> EifSample:
    """Debiased one-step estimate of the inverse capture probability.

    Each unit contributes ``(1/gamma_hat - 1) * s_y / q_hat_y + 1`` where
    ``s_y`` is the alternating sign of its observed suffix-zero profile (zero
    weight for other profiles); the sample mean of these uncentered influence
    values is the estimator, and it decomposes exactly into the plug-in
    estimate plus the mean influence correction.
    """
    _check_alignment(data, subset, q)
    gamma_inv = gamma_inverse_matrix(q.q, profile_orders(subset))
    weights = _indicator_weights(data, subset, q)
    values = (gamma_inv - 1.0) * weights + 1.0
    sample = EifSample.from_values(data.unit_ids, values)
    decomposition = float(gamma_inv.mean()) + float((values - gamma_inv).mean())
    if abs(sample.center - decomposition) > DECOMPOSITION_TOLERANCE:
        raise FloatingPointError(
            "one-step center drifted from its plug-in + correction decomposition: "
            f"{sample.center} vs {decomposition}"
        )
    return sample


def bound_psi_inv_one_step(
    data: ObservedDataset,
    subset: ListSubset,
    q: QEstimates,
    s: SensitivityParams,
    side: str,
) -> EifSample:
    """One-step estimate of the lower or upper inverse-capture bound.

    The interaction shift moves the signed log-sum by ``-delta`` (lower) or
    ``+delta`` (upper); units whose shifted inverse conditional capture
    probability exceeds the ``1/epsilon`` cap are pinned at the cap, with
    ties counting as capped. When ``delta`` is 0 and no unit is capped this
    reproduces the point one-step values.
    """
    if side not in (LOWER, UPPER):
        raise ConfigurationError(f"side must be '{LOWER}' or '{UPPER}', got {side!r}")
    _check_alignment(data, subset, q)
    orders = profile_orders(subset)
    shift = -s.delta if side == LOWER else s.delta
    log_sum = np.log(q.q) @ eif_signs(orders)
    gamma_inv_shifted = 1.0 + np.exp(log_sum + shift)
    weights = _indicator_weights(data, subset, q)
    uncentered = (gamma_inv_shifted - 1.0) * weights + 1.0
    below_cap = gamma_inv_shifted <= s.cap
    values = np.where(below_cap, uncentered - s.cap, 0.0) + s.cap
    return EifSample.from_values(data.unit_ids, values)


def psi_inv_ci(e: EifSample, alpha: float) -> tuple[float, float]:
    """Normal confidence interval for the inverse capture probability.

    Symmetric around the sample center with half-width
    ``z_{1-alpha/2} * sigma / sqrt(N)``; the lower end is clamped at 1
    because an inverse capture probability cannot fall below it.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    half_width = norm.ppf(1.0 - alpha / 2.0) * e.sigma / math.sqrt(e.n_units)
    return (max(1.0, e.center - half_width), e.center + half_width)


def efficiency_bound(weights: Sequence[float], q_vectors: Sequence[QVector]) -> float:
    """Best achievable scaled mean squared error for the inverse capture
    probability on an exactly known stratified population.

    Computed as the variance of the per-stratum inverse conditional capture
    probabilities plus the expected product of their squared excess over 1
    and the summed reciprocal q-probabilities minus 1. Agrees with the exact
    variance of the influence function under enumeration.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or len(q_vectors) != weights.shape[0]:
        raise ConfigurationError("need one weight per stratum q-vector")
    if weights.size == 0:
        raise ConfigurationError("population must have at least one stratum")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-8:
        raise ConfigurationError("stratum weights must be nonnegative and sum to 1")
    subset = q_vectors[0].subset
    if any(qv.subset != subset for qv in q_vectors):
        raise ConfigurationError("all stratum q-vectors must share one list subset")
    orders = profile_orders(subset)
    q_matrix = np.vstack([qv.to_array() for qv in q_vectors])
    gamma_inv = gamma_inverse_matrix(q_matrix, orders)
    mean_gamma_inv = float(weights @ gamma_inv)
    var_gamma_inv = float(weights @ (gamma_inv - mean_gamma_inv) ** 2)
    conditional = (gamma_inv - 1.0) ** 2 * ((1.0 / q_matrix).sum(axis=1) - 1.0)
    return var_gamma_inv + float(weights @ conditional)


def _z(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    return float(norm.ppf(1.0 - alpha / 2.0))


def _n_interval(center_n: float, half_width: float, n_observed: int):
    lo, hi = center_n - half_width, center_n + half_width
    clamped = False
    if center_n < n_observed:
        center_n, clamped = float(n_observed), True
    if lo < n_observed:
        lo, clamped = float(n_observed), True
    hi = max(hi, center_n)
    return center_n, (lo, hi), clamped


def _report_from_sample(
    e: EifSample, n_observed: int, alpha: float, method: str, half_width_n: float
) -> EstimateReport:
    psi_inv = e.center
    psi = 1.0 / psi_inv
    ci_lo_raw = psi_inv - _z(alpha) * e.sigma / math.sqrt(e.n_units)
    ci_hi = psi_inv + _z(alpha) * e.sigma / math.sqrt(e.n_units)
    clamped_psi = ci_lo_raw < 1.0
    n_hat, ci_n, clamped_n = _n_interval(n_observed * psi_inv, half_width_n, n_observed)
    return EstimateReport(
        psi_inv_hat=psi_inv,
        psi_hat=psi,
        sigma_hat=e.sigma,
        ci_psi_inv=(max(1.0, ci_lo_raw), ci_hi),
        n_hat=n_hat,
        ci_n=ci_n,
        n_observed=n_observed,
        method=method,
        clamped=clamped_psi or clamped_n or psi_inv < 1.0,
    )


def n_point_and_ci(
    e: EifSample, n_observed: int, alpha: float, method: str = "one-step"
) -> EstimateReport:
    """Population-size estimate ``N * psi_inv_hat`` with its confidence interval.

    The half-width is ``z * sqrt(n_hat * (psi_hat * sigma^2 +
    (1 - psi_hat) / psi_hat))`` evaluated at the unclamped point estimate;
    the point and the lower CI limit are then raised to the observed count
    when they fall below it, with the ``clamped`` flag set.
    """
    psi_inv = e.center
    psi = 1.0 / psi_inv
    n_raw = n_observed * psi_inv
    # a noisy one-step can land below 1/psi_inv=1; the binomial variance
    # component is floored at zero to keep the radicand valid
    binom = max(0.0, 1.0 - psi) / psi
    half_width = _z(alpha) * math.sqrt(n_raw * (psi * e.variance + binom))
    return _report_from_sample(e, n_observed, alpha, method, half_width)


def _bound_half_width(e: EifSample, n_observed: int, alpha: float) -> float:
    psi = 1.0 / e.center
    binom = max(0.0, 1.0 - psi) / psi**2
    return _z(alpha) * math.sqrt(n_observed * (e.variance + binom))


def n_bounds_and_ci(
    lower_e: EifSample,
    upper_e: EifSample,
    n_observed: int,
    alpha: float,
    params: SensitivityParams,
) -> BoundsReport:
    """Population-size bounds with per-side and combined confidence intervals.

    Per-side half-widths take the form ``z * sqrt(N * (sigma^2 +
    (1 - psi_hat) / psi_hat^2))``; the combined interval joins the lower
    side's lower CI limit with the upper side's upper CI limit.
    """
    lower_report = _report_from_sample(
        lower_e, n_observed, alpha, "one-step", _bound_half_width(lower_e, n_observed, alpha)
    )
    upper_report = _report_from_sample(
        upper_e, n_observed, alpha, "one-step", _bound_half_width(upper_e, n_observed, alpha)
    )
    combined = (lower_report.ci_n[0], max(upper_report.ci_n[1], lower_report.ci_n[0]))
    return BoundsReport(
        lower=lower_report, upper=upper_report, params=params, combined_ci_n=combined
    )
