"""Gradient aggregation rules: mean, coordinate-wise median and Krum.

Each rule is a scikit-learn style estimator. ``fit(X)`` takes the ordered
``(m, d)`` stack of worker gradients (row ``i`` is worker ``i``) and stores
``aggregate_``; ``aggregate(X)`` returns an :class:`AggregationOutcome`
without touching fitted state.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_stacked
from .exceptions import ConfigurationError

__all__ = [
    "AggregationOutcome",
    "Mean",
    "CoordinateWiseMedian",
    "Krum",
    "make_rule",
    "aggregate",
    "coordinate_median",
    "krum_score",
    "krum_scores",
    "krum",
]


@dataclass(frozen=True)
class AggregationOutcome:
    aggregate: np.ndarray
    selected_index: Optional[int] = None
    scores: Optional[np.ndarray] = None


class _AggregationRule(BaseEstimator):
    name = "rule"

    def fit(self, X, y=None):
        out = self.aggregate(X)
        self.aggregate_ = out.aggregate
        self.selected_index_ = out.selected_index
        self.scores_ = out.scores
        self.n_inputs_, self.n_features_in_ = check_stacked(X).shape
        return self

    def aggregate(self, X):
        raise NotImplementedError

    def validate(self, m):
        """Raise :class:`ConfigurationError` if the rule cannot run on ``m`` inputs."""
        if m < 1:
            raise ConfigurationError("aggregation needs at least one input")

    def __call__(self, X):
        return self.aggregate(X).aggregate


class Mean(_AggregationRule):
    """Plain averaging."""

    name = "mean"

    def aggregate(self, X):
        X = check_stacked(X)
        return AggregationOutcome(np.sum(X, axis=0) / X.shape[0])


class CoordinateWiseMedian(_AggregationRule):
    """Independent one-dimensional median in every coordinate.

    Even input counts average the two middle order statistics.
    """

    name = "median"

    def aggregate(self, X):
        return AggregationOutcome(coordinate_median(X))


class Krum(_AggregationRule):
    """Select the input with the smallest sum of squared distances to its
    ``m - n_byzantine - 2`` nearest other inputs.

    Parameters
    ----------
    n_byzantine : int
        Declared number of Byzantine inputs ``q``.
    strict : bool
        Also require ``m - 2q > 2`` before aggregating, not only enough
        neighbours to score.
    """

    name = "krum"

    def __init__(self, n_byzantine=0, strict=False):
        self.n_byzantine = n_byzantine
        self.strict = strict

    def validate(self, m):
        super().validate(m)
        q = self.n_byzantine
        if q < 0:
            raise ConfigurationError("n_byzantine must be non-negative")
        if m - q - 2 < 1:
            raise ConfigurationError(
                f"Krum needs m - q - 2 >= 1 neighbours, got m={m}, q={q}")
        if self.strict and not m - 2 * q > 2:
            raise ConfigurationError(f"Krum requires m - 2q > 2, got m={m}, q={q}")

    def aggregate(self, X):
        X = check_stacked(X)
        self.validate(X.shape[0])
        return krum(X, self.n_byzantine)


_RULES = {"mean": Mean, "median": CoordinateWiseMedian, "krum": Krum}


def make_rule(kind, n_byzantine=0):
    """Build a rule from its name: ``mean``, ``median`` or ``krum``."""
    key = str(kind).lower().replace("-", "_")
    aliases = {"average": "mean", "coordinate_median": "median",
               "coordinatewisemedian": "median", "coordinate_wise_median": "median"}
    key = aliases.get(key, key)
    if key not in _RULES:
        raise ConfigurationError(f"unknown aggregation rule {kind!r}")
    if key == "krum":
        return Krum(n_byzantine=n_byzantine)
    return _RULES[key]()


def aggregate(rule, inputs):
    """Apply ``rule`` to the ordered list of worker gradients."""
    if isinstance(rule, str):
        rule = make_rule(rule)
    return rule.aggregate(inputs)


def coordinate_median(inputs):
    X = check_stacked(inputs)
    return np.median(X, axis=0)


def _pairwise_sq_dists(X):
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _neighbour_count(m, q):
    k = m - q - 2
    if k < 1:
        raise ConfigurationError(f"Krum needs m - q - 2 >= 1 neighbours, got m={m}, q={q}")
    return k


def krum_scores(inputs, q):
    """KR score of every input, shape ``(m,)``."""
    X = check_stacked(inputs)
    m = X.shape[0]
    k = _neighbour_count(m, q)
    dists = _pairwise_sq_dists(X)
    np.fill_diagonal(dists, np.inf)
    # the k smallest values do not depend on how equal distances are ordered
    return np.sum(np.sort(dists, axis=1)[:, :k], axis=1)


def krum_score(i, inputs, q):
    X = check_stacked(inputs)
    if not 0 <= i < X.shape[0]:
        raise IndexError(f"input index {i} out of range")
    return float(krum_scores(X, q)[i])


def krum(inputs, q):
    X = check_stacked(inputs)
    scores = krum_scores(X, q)
    k = int(np.argmin(scores))  # first minimum wins ties
    return AggregationOutcome(X[k].copy(), selected_index=k, scores=scores)
