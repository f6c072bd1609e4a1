"""Capture-profile arithmetic and closed-form identification formulas.

Connects the per-profile conditional probabilities of the observed population
(q-probabilities) to the conditional capture probability, the highest-order
interaction coefficient of the saturated log-linear model, and the partial
identification bounds used by the sensitivity analysis.

Every function here is a pure function of immutable inputs, so the module is
safe to use concurrently without synchronization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigurationError, ProbabilityDomainError

#: tolerance used when deciding whether a probability table needs renormalizing
NORMALIZATION_TOLERANCE = 1e-8

#: slack allowed on the "q-vector mass cannot exceed 1" constraint
MASS_SLACK = 1e-9


@dataclass(frozen=True)
class CaptureProfile:
    """Membership pattern of one unit across the capture lists.

    ``bits[k]`` is 1 when the unit appears on list ``k`` and 0 otherwise.
    """

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) == 0:
            raise ConfigurationError("a capture profile needs at least one list")
        coerced = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in coerced):
            raise ConfigurationError(f"profile bits must be 0/1, got {self.bits!r}")
        object.__setattr__(self, "bits", coerced)

    @property
    def n_lists(self) -> int:
        return len(self.bits)

    @property
    def order(self) -> int:
        """Number of lists that captured the unit (L1 norm of the bits)."""
        return sum(self.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class ListSubset:
    """The lists entering the conditional model, out of ``n_lists`` total.

    ``selected`` holds 0-based list indices in the order that defines the
    canonical profile enumeration (binary counting, least-significant bit is
    the first selected list). The remaining indices form the complement whose
    lists are conditioned to be zero.
    """

    selected: tuple[int, ...]
    n_lists: int

    def __post_init__(self):
        object.__setattr__(self, "selected", tuple(int(i) for i in self.selected))
        if self.n_lists < 1:
            raise ConfigurationError("n_lists must be positive")
        if not self.selected:
            raise ConfigurationError("at least one list must be selected")
        if len(set(self.selected)) != len(self.selected):
            raise ConfigurationError(f"selected lists contain duplicates: {self.selected}")
        bad = [i for i in self.selected if not 0 <= i < self.n_lists]
        if bad:
            raise ConfigurationError(
                f"selected list indices {bad} out of range for {self.n_lists} lists"
            )

    @property
    def n_selected(self) -> int:
        return len(self.selected)

    @property
    def complement(self) -> tuple[int, ...]:
        chosen = set(self.selected)
        return tuple(i for i in range(self.n_lists) if i not in chosen)

    @property
    def n_profiles(self) -> int:
        """Number of nonzero suffix-zero profiles, ``2**n_selected - 1``."""
        return 2 ** self.n_selected - 1


def enumerate_suffix_zero_profiles(subset: ListSubset) -> list[CaptureProfile]:
    """Nonzero profiles that are zero on every non-selected list.

    Canonical order is binary counting over the selected indices with the
    least-significant bit on the first selected list; all vectorized storage
    of q-probabilities follows this order.
    """
    profiles = []
    for m in range(1, 2 ** subset.n_selected):
        bits = [0] * subset.n_lists
        for j, pos in enumerate(subset.selected):
            bits[pos] = (m >> j) & 1
        profiles.append(CaptureProfile(tuple(bits)))
    return profiles


def profile_orders(subset: ListSubset) -> np.ndarray:
    """Capture orders of the canonical suffix-zero profiles, as an array."""
    return np.array(
        [bin(m).count("1") for m in range(1, 2 ** subset.n_selected)], dtype=np.int64
    )


def eif_signs(orders: np.ndarray) -> np.ndarray:
    """Alternating signs ``(-1)**(order + 1)``: +1 for odd, -1 for even order."""
    return np.where(np.asarray(orders) % 2 == 1, 1.0, -1.0)


def suffix_zero_column_indices(profiles: np.ndarray, subset: ListSubset) -> np.ndarray:
    """Map each profile row to its canonical q-vector column, or -1.

    Rows that touch any non-selected list (or are all-zero on the selected
    lists) do not correspond to a suffix-zero profile and map to -1.
    """
    profiles = np.asarray(profiles)
    if profiles.ndim != 2 or profiles.shape[1] != subset.n_lists:
        raise ConfigurationError(
            f"profile matrix has shape {profiles.shape}, expected (*, {subset.n_lists})"
        )
    weights = 1 << np.arange(subset.n_selected, dtype=np.int64)
    m = profiles[:, list(subset.selected)].astype(np.int64) @ weights
    touches_complement = (
        profiles[:, list(subset.complement)].any(axis=1)
        if subset.complement
        else np.zeros(profiles.shape[0], dtype=bool)
    )
    return np.where(touches_complement | (m == 0), -1, m - 1)


@dataclass(frozen=True)
class QVector:
    """Conditional suffix-zero profile probabilities for a single unit.

    ``values`` maps each of the ``2**J - 1`` canonical suffix-zero profiles to
    a probability in ``[floor, 1]``. The total mass may be below 1: whatever
    is left belongs to observed profiles touching the non-selected lists.
    Profiles that set bits outside the selected subset are rejected outright
    rather than silently masked.
    """

    subset: ListSubset
    values: Mapping
    floor: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.floor < 1.0:
            raise ConfigurationError(f"floor must lie in (0, 1), got {self.floor}")
        expected = enumerate_suffix_zero_profiles(self.subset)
        expected_set = set(expected)
        canonical: dict[CaptureProfile, float] = {}
        for key, value in self.values.items():
            profile = key if isinstance(key, CaptureProfile) else CaptureProfile(tuple(key))
            if profile.n_lists != self.subset.n_lists:
                raise ConfigurationError(
                    f"profile {profile} has {profile.n_lists} lists, expected {self.subset.n_lists}"
                )
            if profile not in expected_set:
                complement = set(self.subset.complement)
                if any(profile.bits[i] for i in complement):
                    raise ConfigurationError(
                        f"profile {profile} sets lists outside the selected subset "
                        f"{self.subset.selected}"
                    )
                raise ConfigurationError(f"profile {profile} is not a nonzero suffix-zero profile")
            canonical[profile] = float(value)
        missing = [str(p) for p in expected if p not in canonical]
        if missing:
            raise ConfigurationError(f"q-vector is missing profiles: {missing}")
        total = 0.0
        for profile in expected:
            v = canonical[profile]
            if not math.isfinite(v) or v <= 0.0:
                raise ProbabilityDomainError(
                    f"q[{profile}] = {v} is not a positive probability"
                )
            if v < self.floor * (1.0 - 1e-12):
                raise ProbabilityDomainError(
                    f"q[{profile}] = {v} falls below the positivity floor {self.floor}"
                )
            if v > 1.0 + 1e-12:
                raise ProbabilityDomainError(f"q[{profile}] = {v} exceeds 1")
            total += v
        if total > 1.0 + MASS_SLACK:
            raise ProbabilityDomainError(
                f"q-vector mass {total} exceeds 1; the suffix-zero profiles cannot "
                "carry more than the whole observed distribution"
            )
        object.__setattr__(self, "values", canonical)
        object.__setattr__(
            self, "_array", np.array([canonical[p] for p in expected], dtype=np.float64)
        )

    def to_array(self) -> np.ndarray:
        """Probabilities in canonical profile order."""
        return self._array.copy()


@dataclass(frozen=True)
class SensitivityParams:
    """Bound on the highest-order interaction and the positivity cap.

    ``delta`` bounds the absolute interaction coefficient; ``epsilon`` is the
    lower bound imposed on the conditional capture probability, so ``1/epsilon``
    caps its inverse.
    """

    delta: float
    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0.0):
            raise ConfigurationError(f"delta must be a finite nonnegative real, got {self.delta}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def cap(self) -> float:
        return 1.0 / self.epsilon


def _signed_log_sum(q_array: np.ndarray, orders: np.ndarray):
    # sum of signed logs with a single exponentiation downstream; avoids
    # overflow from chained ratio products when q values sit near the floor
    return np.log(q_array) @ eif_signs(orders)


def gamma_inverse(q: QVector) -> float:
    """Inverse conditional capture probability implied by a q-vector.

    Evaluates ``1 + exp(sum_y (-1)**(|y|+1) log q_y)`` over the nonzero
    suffix-zero profiles; under no highest-order interaction this equals the
    reciprocal of the probability of appearing on at least one list.
    Always strictly greater than 1.
    """
    orders = profile_orders(q.subset)
    return float(1.0 + math.exp(_signed_log_sum(q.to_array(), orders)))


def gamma_inverse_matrix(q_matrix: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """Vectorized :func:`gamma_inverse` over rows of a (units, profiles) matrix."""
    q_matrix = np.asarray(q_matrix, dtype=np.float64)
    if np.any(~np.isfinite(q_matrix)) or np.any(q_matrix <= 0.0):
        bad = np.argwhere(~np.isfinite(q_matrix) | (q_matrix <= 0.0))[0]
        raise ProbabilityDomainError(
            f"nonpositive q value at unit row {bad[0]}, profile column {bad[1]}"
        )
    return 1.0 + np.exp(_signed_log_sum(q_matrix, orders))


def gamma_inverse_bounds(q: QVector, s: SensitivityParams) -> tuple[float, float]:
    """Partial-identification interval for the inverse capture probability.

    Shifting the signed log-sum by ``-delta`` and ``+delta`` brackets the
    inverse capture probability when the interaction coefficient is only
    known to be bounded; both ends are capped at ``1/epsilon``.
    """
    orders = profile_orders(q.subset)
    s_val = _signed_log_sum(q.to_array(), orders)
    lower = min(1.0 + math.exp(s_val - s.delta), s.cap)
    upper = min(1.0 + math.exp(s_val + s.delta), s.cap)
    return float(lower), float(upper)


def _validated_log_table(p: Mapping, caller: str) -> tuple[int, dict[tuple, float]]:
    """Validate a full probability table keyed by bit tuples; return log-probs.

    Accepts unnormalized positive tables and normalizes internally, warning
    when the mass deviates from 1 by more than the tolerance.
    """
    if not p:
        raise ConfigurationError(f"{caller}: empty probability table")
    items = []
    width = None
    for key, value in p.items():
        bits = key.bits if isinstance(key, CaptureProfile) else tuple(int(b) for b in key)
        if any(b not in (0, 1) for b in bits):
            raise ConfigurationError(f"{caller}: table key {key!r} is not a bit pattern")
        if width is None:
            width = len(bits)
        elif len(bits) != width:
            raise ConfigurationError(f"{caller}: table keys mix profile lengths")
        items.append((bits, float(value)))
    if len(items) != 2 ** width:
        raise ConfigurationError(
            f"{caller}: expected all {2 ** width} profiles over {width} lists, got {len(items)}"
        )
    total = 0.0
    for bits, value in items:
        if not math.isfinite(value) or value <= 0.0:
            raise ProbabilityDomainError(
                f"{caller}: p[{''.join(map(str, bits))}] = {value} is not positive"
            )
        total += value
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        warnings.warn(
            f"{caller}: probability table sums to {total:.6g}; normalizing",
            RuntimeWarning,
            stacklevel=3,
        )
    log_total = math.log(total)
    return width, {bits: math.log(v) - log_total for bits, v in items}


def alpha1_from_conditional_probs(p: Mapping) -> float:
    """Highest-order interaction coefficient of a saturated log-linear model.

    ``p`` maps every profile of J binary lists (all ``2**J`` bit tuples,
    including the zero profile) to a positive probability. Returns
    ``sum_y (-1)**(J + |y|) log p_y``, which isolates the top interaction
    because every lower-order term cancels in the alternating sum.
    """
    width, log_p = _validated_log_table(p, "alpha1_from_conditional_probs")
    total = 0.0
    for bits, lp in log_p.items():
        sign = -1.0 if (width + sum(bits)) % 2 else 1.0
        total += sign * lp
    return float(total)


class OddsRatioFactor(NamedTuple):
    """One conditional odds ratio between the first two lists.

    ``condition`` fixes the remaining lists' bits, ``parity`` records whether
    the condition has an even or odd number of ones, and ``value`` is the
    odds ratio of joint capture by lists 1 and 2 under that condition.
    """

    condition: tuple[int, ...]
    parity: str
    value: float


def odds_ratio_decomposition(p: Mapping) -> tuple[float, list[OddsRatioFactor]]:
    """Factor the top interaction into conditional odds ratios.

    Returns ``lhs = exp((-1)**K * alpha_1)``, equal to the ratio of the
    product of even-order cell probabilities to the odd-order product, along
    with the conditional odds ratios ``OR_{1,2}(condition)`` whose
    even-condition product over odd-condition product reproduces ``lhs``.
    """
    width, log_p = _validated_log_table(p, "odds_ratio_decomposition")
    if width < 2:
        raise ConfigurationError(
            "odds_ratio_decomposition needs at least two lists to form odds ratios"
        )
    lhs_log = 0.0
    for bits, lp in log_p.items():
        lhs_log += lp if sum(bits) % 2 == 0 else -lp
    factors = []
    for m in range(2 ** (width - 2)):
        condition = tuple((m >> j) & 1 for j in range(width - 2))
        log_or = (
            log_p[(1, 1) + condition]
            + log_p[(0, 0) + condition]
            - log_p[(1, 0) + condition]
            - log_p[(0, 1) + condition]
        )
        parity = "even" if sum(condition) % 2 == 0 else "odd"
        factors.append(OddsRatioFactor(condition, parity, float(math.exp(log_or))))
    return float(math.exp(lhs_log)), factors
