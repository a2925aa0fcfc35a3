"""Omniscient Byzantine attacks.

An attack sees every honest gradient of the current iteration and returns
the ``q`` vectors the Byzantine workers send instead. Returning ``None``
means "no replacement": the Byzantine workers behave honestly.
"""

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_stacked
from .exceptions import ConfigurationError, NonFiniteError

__all__ = [
    "OmniscientView",
    "NoAttack",
    "ScaledNegativeMean",
    "make_attack",
    "craft",
    "CoordinateRecipe",
    "median_attack_recipe",
    "realizes_recipe",
]


@dataclass(frozen=True)
class OmniscientView:
    """Honest gradients of one iteration as seen by the colluding attackers."""

    correct_gradients: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "correct_gradients",
                           check_stacked(self.correct_gradients, "correct_gradients"))

    @property
    def mean(self):
        V = self.correct_gradients
        return np.sum(V, axis=0) / V.shape[0]


class NoAttack(BaseEstimator):
    name = "none"

    def is_active(self, iteration):
        return False

    def craft(self, view, q):
        return None


class ScaledNegativeMean(BaseEstimator):
    """Every Byzantine worker sends ``-epsilon * mean(correct gradients)``.

    Large positive ``epsilon`` drags the coordinate-wise median to the
    honest extreme opposite the mean; small positive ``epsilon`` plants a
    tight cluster that Krum prefers. The attack is silent before
    ``start_iteration``.
    """

    name = "scaled_negative_mean"

    def __init__(self, epsilon=1.0, start_iteration=0):
        self.epsilon = epsilon
        self.start_iteration = start_iteration

    def _check_params(self):
        if not math.isfinite(self.epsilon):
            raise NonFiniteError("epsilon must be finite")
        if self.start_iteration < 0:
            raise ConfigurationError("start_iteration must be non-negative")

    def is_active(self, iteration):
        return iteration >= self.start_iteration

    def craft(self, view, q):
        self._check_params()
        if q < 1:
            raise ConfigurationError("an attack needs q >= 1 Byzantine workers")
        if not isinstance(view, OmniscientView):
            view = OmniscientView(view)
        if not self.is_active(view.iteration):
            return None
        with np.errstate(over="ignore", invalid="ignore"):
            u = -float(self.epsilon) * view.mean
        if not np.all(np.isfinite(u)):
            raise NonFiniteError("crafted Byzantine gradient is not finite")
        return np.tile(u, (q, 1))


def make_attack(kind="none", epsilon=0.0, start_iteration=0):
    key = str(kind).lower().replace("-", "_")
    if key in ("none", "no", "honest"):
        return NoAttack()
    if key in ("scaled_negative_mean", "scalednegativemean", "inner_product", "ipm"):
        return ScaledNegativeMean(epsilon=epsilon, start_iteration=start_iteration)
    raise ConfigurationError(f"unknown attack {kind!r}")


def craft(attack, view, q):
    return attack.craft(view, q)


@dataclass(frozen=True)
class CoordinateRecipe:
    """Where a one-sided attack on one coordinate has to land.

    ``side`` is ``"below"`` (beat ``threshold`` = honest minimum), ``"above"``
    (beat the honest maximum) or ``"neutral"`` when the honest mean is zero.
    """

    coordinate: int
    mean_sign: int
    side: str
    threshold: Optional[float]


def median_attack_recipe(view):
    """Per-coordinate placement that pushes a coordinate-wise median to the
    honest extreme opposite the honest mean."""
    if not isinstance(view, OmniscientView):
        view = OmniscientView(view)
    V = view.correct_gradients
    mean = view.mean
    out = []
    for j in range(V.shape[1]):
        s = int(np.sign(mean[j]))
        if s > 0:
            out.append(CoordinateRecipe(j, 1, "below", float(V[:, j].min())))
        elif s < 0:
            out.append(CoordinateRecipe(j, -1, "above", float(V[:, j].max())))
        else:
            out.append(CoordinateRecipe(j, 0, "neutral", None))
    return out


def realizes_recipe(recipe, byzantine):
    """Per coordinate, whether every Byzantine value lies strictly on the
    recipe's side of its threshold (``None`` for neutral coordinates)."""
    U = check_stacked(byzantine, "byzantine")
    result = []
    for r in recipe:
        col = U[:, r.coordinate]
        if r.side == "below":
            result.append(bool(np.all(col < r.threshold)))
        elif r.side == "above":
            result.append(bool(np.all(col > r.threshold)))
        else:
            result.append(None)
    return result
