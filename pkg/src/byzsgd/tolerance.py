"""Monte-Carlo tolerance verdicts, attack-condition checkers and the exact
Krum attack instance constructor."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import itertools
import math
from statistics import NormalDist
from typing import Optional

import numpy as np

from ._validation import check_stacked
from .aggregation import Krum, krum, krum_scores
from .attacks import NoAttack, OmniscientView
from .exceptions import ConditionViolation, ConfigurationError
from .vec import RngStream, as_vector

__all__ = [
    "ToleranceVerdict",
    "check_tolerance",
    "ConditionResult",
    "median_attack_condition",
    "KrumAttackCondition",
    "krum_attack_condition",
    "KrumAttackReport",
    "KrumAttackInstance",
    "krum_attack_report",
    "build_krum_attack_instance",
    "OrderStatisticEstimate",
    "order_statistic_mean",
    "order_statistic_means",
]


@dataclass(frozen=True)
class ToleranceVerdict:
    """Estimated ``<g, E[aggregate]>`` with its one-sided test.

    ``tolerant`` is False only when the upper one-sided ``confidence``
    bound on the inner product is below zero.
    """

    estimated_expected_aggregate: np.ndarray
    inner_product_with_g: float
    standard_error: float
    trials: int
    confidence: float
    tolerant: bool

    @property
    def z_score(self):
        if self.standard_error == 0:
            return math.copysign(math.inf, self.inner_product_with_g) if self.inner_product_with_g else 0.0
        return self.inner_product_with_g / self.standard_error

    @property
    def upper_bound(self):
        z = NormalDist().inv_cdf(self.confidence)
        return self.inner_product_with_g + z * self.standard_error


def _trial_aggregates(rule, attack, g, sigma, m, q, first, last, seed):
    d = g.size
    n_honest = m - q if q and not isinstance(attack, NoAttack) else m
    iteration = getattr(attack, "start_iteration", 0)
    out = np.empty((last - first, d))
    for k, trial in enumerate(range(first, last)):
        gen = RngStream(seed, "tolerance", None, trial).generator()
        V = g + sigma * gen.standard_normal((n_honest, d))
        U = attack.craft(OmniscientView(V, iteration), q) if n_honest < m else None
        if U is None and n_honest < m:
            V = np.vstack([V, g + sigma * gen.standard_normal((m - n_honest, d))])
        inputs = V if U is None else np.vstack([V, U])
        out[k] = rule.aggregate(inputs).aggregate
    return out


def check_tolerance(rule, attack, g, sigma, m, q, trials=10_000, seed=0,
                    confidence=0.99, n_jobs=1):
    """Estimate whether ``rule`` keeps a non-negative inner product with the
    true gradient ``g`` under ``attack``.

    Correct gradients are i.i.d. ``Normal(g, sigma^2 I)``; the attack is a
    deterministic function of them, so the expectation is taken over the
    correct draws only. Trial ``k`` uses its own random stream, so the
    result does not depend on ``n_jobs``.
    """
    g = as_vector(g)
    if not 2 * q < m or q < 0:
        raise ConfigurationError(f"need 2q < m, got m={m}, q={q}")
    if trials < 100:
        raise ConfigurationError("check_tolerance needs at least 100 trials")
    if not sigma >= 0:
        raise ConfigurationError("sigma must be non-negative")
    rule.validate(m)
    if isinstance(rule, Krum) and not m - 2 * rule.n_byzantine > 2:
        raise ConfigurationError(f"Krum requires m - 2q > 2, got m={m}, q={rule.n_byzantine}")
    attack = NoAttack() if attack is None else attack

    if n_jobs > 1:
        bounds = np.linspace(0, trials, n_jobs + 1).astype(int)
        with ThreadPoolExecutor(n_jobs) as ex:
            parts = ex.map(lambda ab: _trial_aggregates(rule, attack, g, sigma, m, q,
                                                        ab[0], ab[1], seed),
                           zip(bounds[:-1], bounds[1:]))
            aggs = np.vstack(list(parts))
    else:
        aggs = _trial_aggregates(rule, attack, g, sigma, m, q, 0, trials, seed)

    mean_agg = np.sum(aggs, axis=0) / trials
    proj = aggs @ g
    ip = float(g @ mean_agg)
    # the inner product is linear in the mean, so its delta-method standard
    # error is the standard error of the per-trial projections
    se = float(np.std(proj, ddof=1) / math.sqrt(trials))
    z = NormalDist().inv_cdf(confidence)
    tolerant = not (ip + z * se < 0)
    return ToleranceVerdict(mean_agg, ip, se, trials, confidence, tolerant)


@dataclass(frozen=True)
class ConditionResult:
    holds: bool
    margin: float


def median_attack_condition(g, sigma, m, q):
    """Median attack condition ``max_j |g_j| < sigma / sqrt(m - q - 1)``.

    ``sigma`` must be a lower bound on every coordinate's standard deviation.
    """
    g = as_vector(g)
    if m - q < 2:
        raise ConfigurationError("need m - q >= 2")
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    bound = sigma / math.sqrt(m - q - 1)
    margin = bound - float(np.max(np.abs(g)))
    return ConditionResult(margin > 0, margin)


@dataclass(frozen=True)
class KrumAttackCondition:
    holds: bool
    threshold: float
    min_honest: int


def krum_attack_condition(m, q, epsilon):
    """Krum attack size condition ``m - q > 2 (eps + 2)^2 / eps^2 + 2``."""
    if epsilon == 0:
        raise ConfigurationError("epsilon must be non-zero")
    threshold = 2 * (epsilon + 2) ** 2 / epsilon ** 2 + 2
    return KrumAttackCondition(m - q > threshold, threshold, math.floor(threshold) + 1)


@dataclass(frozen=True)
class KrumAttackReport:
    honest_mean: np.ndarray
    beta_sq: float
    radius_ok: bool
    distinct_ok: bool
    epsilon_ok: bool
    size_ok: bool
    krum_score_gap: float
    selected_index: int
    selected_is_byzantine: bool
    aggregate: np.ndarray
    inner_product_with_mean: float

    @property
    def all_ok(self):
        return self.radius_ok and self.distinct_ok and self.epsilon_ok and self.size_ok


@dataclass(frozen=True)
class KrumAttackInstance:
    correct: np.ndarray
    byzantine: np.ndarray
    epsilon: float
    report: KrumAttackReport

    @property
    def inputs(self):
        """Correct gradients first, then the Byzantine copies."""
        return np.vstack([self.correct, self.byzantine])


def krum_attack_report(correct, byzantine, epsilon):
    """Check every hypothesis of the Krum attack on a concrete instance and
    run Krum on ``correct + byzantine``."""
    V = check_stacked(correct, "correct")
    U = check_stacked(byzantine, "byzantine")
    n_honest, q = V.shape[0], U.shape[0]
    m = n_honest + q
    vbar = np.sum(V, axis=0) / n_honest
    vbar_sq = float(vbar @ vbar)
    diff = V[:, None, :] - V[None, :, :]
    pair = np.einsum("ijk,ijk->ij", diff, diff)[np.triu_indices(n_honest, 1)]
    beta_sq = float(pair.min()) if pair.size else math.inf
    dev = V - vbar
    radius_ok = bool(np.all(np.einsum("ij,ij->i", dev, dev) <= vbar_sq))
    inputs = np.vstack([V, U])
    scores = krum_scores(inputs, q)
    out = krum(inputs, q)
    return KrumAttackReport(
        honest_mean=vbar,
        beta_sq=beta_sq,
        radius_ok=radius_ok,
        distinct_ok=beta_sq > 0,
        epsilon_ok=epsilon ** 2 * vbar_sq <= beta_sq,
        size_ok=krum_attack_condition(m, q, epsilon).holds,
        krum_score_gap=float(scores[:n_honest].min() - scores[n_honest:].max()),
        selected_index=out.selected_index,
        selected_is_byzantine=out.selected_index >= n_honest,
        aggregate=out.aggregate,
        inner_product_with_mean=float(vbar @ out.aggregate),
    )


_MAX_ENUMERATION = 2_000_000


def _lattice_points(d, radius_sq, checkerboard):
    """Integer points of Z^d (or of the even-sum sublattice D_d) with squared
    norm at most ``radius_sq``, as an int array."""
    k = math.isqrt(radius_sq)
    if (2 * k + 1) ** d > _MAX_ENUMERATION:
        return None
    grid = np.array(list(itertools.product(range(-k, k + 1), repeat=d)), dtype=np.int64)
    keep = np.einsum("ij,ij->i", grid, grid) <= radius_sq
    if checkerboard:
        keep &= grid.sum(axis=1) % 2 == 0
    return grid[keep]


def _symmetric_pattern(d, count, checkerboard, gen):
    """``count`` distinct lattice points closest to the origin, closed under
    negation (plus the origin when ``count`` is odd), so they sum to zero."""
    unit = 2 if checkerboard else 1
    radius_sq = unit
    while True:
        pts = _lattice_points(d, radius_sq, checkerboard)
        if pts is None:
            return None
        nonzero = pts[np.any(pts != 0, axis=1)]
        # one representative per antipodal pair: first nonzero coordinate positive
        first = nonzero[np.arange(len(nonzero)), np.argmax(nonzero != 0, axis=1)]
        reps = nonzero[first > 0]
        if 2 * len(reps) + 1 >= count + (radius_sq > 0):
            break
        radius_sq += unit
    norms = np.einsum("ij,ij->i", reps, reps)
    n_pairs = count // 2
    order = np.lexsort((gen.random(len(reps)), norms))
    chosen = reps[order[:n_pairs]]
    pattern = np.vstack([chosen, -chosen])
    if count % 2:
        pattern = np.vstack([np.zeros((1, d), dtype=np.int64), pattern])
    # a signed coordinate permutation maps both lattices onto themselves
    perm = gen.permutation(d)
    signs = gen.choice([-1, 1], size=d)
    return pattern[:, perm] * signs


def build_krum_attack_instance(m, q, epsilon, d, seed=0):
    """Construct correct gradients satisfying every hypothesis of the Krum
    attack exactly, together with ``q`` copies of ``-epsilon * mean``.

    Correct gradients are ``vbar + p_i`` with ``p_i`` a zero-sum set of
    lattice points (``Z^d`` or the checkerboard lattice, whichever separates
    better) and ``vbar`` a lattice vector as long as the farthest ``p_i``.
    All coordinates are small integers, so the hypotheses are checked
    without rounding error. ``seed`` picks among equally short lattice
    points and applies a random signed permutation of the axes.
    """
    if not epsilon > 0:
        raise ConditionViolation("epsilon must be a positive constant")
    if m - 2 * q != 3:
        raise ConditionViolation(f"the construction needs m - 2q = 3, got m={m}, q={q}")
    cond = krum_attack_condition(m, q, epsilon)
    if not cond.holds:
        raise ConditionViolation(
            f"size_ok: m - q = {m - q} must exceed {cond.threshold:.6g} "
            f"(need m - q >= {cond.min_honest})")
    if d < 1:
        raise ConditionViolation("d must be >= 1")
    n_honest = m - q
    gen = RngStream(seed, "krum-attack-instance").generator()

    best = None
    for checkerboard in ([False, True] if d >= 3 else [False]):
        pattern = _symmetric_pattern(d, n_honest, checkerboard, gen)
        if pattern is None:
            continue
        sq = np.einsum("ij,ij->i", pattern, pattern)
        radius_sq = int(sq.max())
        diff = pattern[:, None, :] - pattern[None, :, :]
        sep_sq = int(np.einsum("ijk,ijk->ij", diff, diff)[np.triu_indices(n_honest, 1)].min())
        if epsilon ** 2 * radius_sq <= sep_sq:
            if best is None or sep_sq * best[1] > best[2] * radius_sq:
                best = (pattern, radius_sq, sep_sq, sq)
    if best is None:
        raise ConditionViolation(
            f"epsilon_ok: cannot place {n_honest} distinct points in dimension {d} "
            f"with separation >= {epsilon} * ||vbar||")
    pattern, radius_sq, _, sq = best
    vbar = pattern[int(np.argmax(sq))].astype(np.float64)
    V = vbar + pattern.astype(np.float64)
    U = np.tile(-epsilon * vbar, (q, 1))
    return KrumAttackInstance(V, U, float(epsilon), krum_attack_report(V, U, epsilon))


@dataclass(frozen=True)
class OrderStatisticEstimate:
    estimate: float
    standard_error: float
    trials: int


def _sorted_draws(n_samples, mean, std, trials, seed):
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    gen = RngStream(seed, "order-statistic").generator()
    return np.sort(mean + std * gen.standard_normal((trials, n_samples)), axis=1)


def order_statistic_mean(n_samples, mean=0.0, std=1.0, which=1, trials=100_000, seed=0):
    """Monte-Carlo estimate of the expected ``which``-th smallest of
    ``n_samples`` i.i.d. normal draws (``which`` is 1-based)."""
    if not 1 <= which <= n_samples:
        raise ValueError("need 1 <= which <= n_samples")
    col = _sorted_draws(n_samples, mean, std, trials, seed)[:, which - 1]
    return OrderStatisticEstimate(float(np.mean(col)),
                                  float(np.std(col, ddof=1) / math.sqrt(trials)), trials)


def order_statistic_means(n_samples, mean=0.0, std=1.0, trials=100_000, seed=0):
    """All ``n_samples`` order-statistic estimates from one shared sample."""
    draws = _sorted_draws(n_samples, mean, std, trials, seed)
    est = np.mean(draws, axis=0)
    se = np.std(draws, axis=0, ddof=1) / math.sqrt(trials)
    return [OrderStatisticEstimate(float(e), float(s), trials) for e, s in zip(est, se)]
