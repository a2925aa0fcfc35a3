"""Synchronous parameter-server SGD with Byzantine workers.

Each iteration every worker draws a minibatch gradient from its own random
stream, a fresh random subset of ``q`` workers turns Byzantine, the attack
replaces their vectors after looking at the honest ones, the server
aggregates the ordered list of ``m`` vectors and takes a step.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_X_y

from .aggregation import Krum, Mean, _AggregationRule
from .attacks import NoAttack, OmniscientView
from .exceptions import ConfigurationError, NonFiniteError
from .problems import LogisticRegressionProblem, Problem
from .vec import RngStream, as_vector

__all__ = [
    "ExperimentConfig",
    "IterationMetrics",
    "RunTrace",
    "SimulatorState",
    "GradientRound",
    "collect_gradients",
    "select_byzantine_indices",
    "step",
    "run_experiment",
    "ByzantineSGD",
]

LOSS_BOUND = 1e12
NORM_BOUND = 1e9


def select_byzantine_indices(m, q, rng):
    """Uniform size-``q`` subset of ``range(m)``, returned sorted."""
    if q < 0 or not 2 * q < m:
        raise ConfigurationError(f"need 0 <= q and 2q < m, got m={m}, q={q}")
    if q == 0:
        return ()
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return tuple(sorted(int(i) for i in gen.choice(m, size=q, replace=False)))


@dataclass
class ExperimentConfig:
    problem: Problem
    rule: _AggregationRule = field(default_factory=Mean)
    attack: object = field(default_factory=NoAttack)
    m: int = 25
    q: int = 0
    n: int = 50
    T: int = 300
    gamma: float = 0.1
    gamma_decay: Optional[float] = None
    gamma_decay_interval: Optional[int] = None
    seed: int = 0
    x0: Optional[np.ndarray] = None
    n_jobs: int = 1
    loss_bound: float = LOSS_BOUND
    norm_bound: float = NORM_BOUND
    iterations_per_epoch: Optional[int] = None

    def validate(self):
        if self.m < 1:
            raise ConfigurationError("m must be >= 1", "m")
        if self.q < 0 or not 2 * self.q < self.m:
            raise ConfigurationError(
                f"Byzantine count must satisfy 2q < m, got m={self.m}, q={self.q}", "q")
        if isinstance(self.rule, Krum):
            for q, name in ((self.q, "q"), (self.rule.n_byzantine, "rule")):
                if not self.m - 2 * q > 2:
                    raise ConfigurationError(
                        f"Krum requires m - 2q > 2, got m={self.m}, q={q}", name)
            try:
                self.rule.validate(self.m)
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), "rule") from exc
        if self.T < 1:
            raise ConfigurationError("T must be >= 1", "T")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigurationError("gamma must be positive", "gamma")
        if self.gamma_decay is not None:
            if not 0 < self.gamma_decay <= 1:
                raise ConfigurationError("gamma_decay must lie in (0, 1]", "gamma_decay")
            if not self.gamma_decay_interval or self.gamma_decay_interval < 1:
                raise ConfigurationError("gamma_decay needs gamma_decay_interval >= 1",
                                         "gamma_decay_interval")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1", "n")
        if self.n_jobs < 1:
            raise ConfigurationError("n_jobs must be >= 1", "n_jobs")
        if self.x0 is not None and as_vector(self.x0).size != self.problem.dimension:
            raise ConfigurationError("x0 does not match the problem dimension", "x0")
        return self

    def learning_rate(self, t):
        if self.gamma_decay is None:
            return self.gamma
        return self.gamma * self.gamma_decay ** (t // self.gamma_decay_interval)

    def initial_point(self):
        if self.x0 is not None:
            return as_vector(self.x0)
        gen = RngStream(self.seed, "init").generator()
        x = gen.standard_normal(self.problem.dimension)
        x_star = self.problem.minimizer
        return x if x_star is None else x_star + x


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    loss: float
    grad_norm: float
    inner_product: float
    aggregate_norm: float
    byzantine_indices: Tuple[int, ...] = ()
    selected_index: Optional[int] = None
    selected_is_byzantine: Optional[bool] = None
    honest_mean_inner_product: float = float("nan")
    diverged: bool = False

    @property
    def byzantine_count(self):
        return len(self.byzantine_indices)


@dataclass
class RunTrace:
    config: ExperimentConfig
    metrics: List[IterationMetrics]
    final_x: np.ndarray

    @property
    def diverged(self):
        return bool(self.metrics) and self.metrics[-1].diverged

    def column(self, name):
        return np.array([getattr(r, name) for r in self.metrics], dtype=float)

    def __len__(self):
        return len(self.metrics)


@dataclass(frozen=True)
class SimulatorState:
    x: np.ndarray
    t: int = 0


def _honest_gradients(config, x, t, executor=None):
    def draw(i):
        return config.problem.sample_gradient(
            x, config.n, RngStream(config.seed, "gradient", i, t))

    if executor is None:
        rows = [draw(i) for i in range(config.m)]
    else:
        rows = list(executor.map(draw, range(config.m)))
    return np.stack(rows)


@dataclass(frozen=True)
class GradientRound:
    """What the server receives in one iteration, plus the honest draws."""

    honest: np.ndarray
    received: np.ndarray
    byzantine_indices: Tuple[int, ...]


def collect_gradients(x, t, config, executor=None):
    """Honest draws for all workers, then Byzantine replacement if the
    attack is active at iteration ``t``."""
    honest = _honest_gradients(config, x, t, executor)
    received = honest.copy()
    byz = ()
    if config.q > 0 and config.attack.is_active(t):
        byz = select_byzantine_indices(
            config.m, config.q, RngStream(config.seed, "byzantine", None, t))
        keep = np.setdiff1d(np.arange(config.m), byz)
        view = OmniscientView(honest[keep], iteration=t)
        try:
            crafted = config.attack.craft(view, config.q)
        except NonFiniteError:
            crafted = np.full((config.q, x.size), np.inf)
        if crafted is None:
            byz = ()
        else:
            received[list(byz)] = crafted
    return GradientRound(honest, received, tuple(byz))


def step(state, config, executor=None):
    """Run one iteration; returns ``(next_state, metrics)``.

    ``next_state`` is ``None`` when the run diverged at this iteration.
    """
    x, t = state.x, state.t
    problem = config.problem
    loss = problem.loss(x)
    g = problem.full_gradient(x)

    rnd = collect_gradients(x, t, config, executor)
    honest, received, byz = rnd.honest, rnd.received, rnd.byzantine_indices
    honest_mean = np.sum(np.delete(honest, list(byz), axis=0), axis=0) / (config.m - len(byz))
    diverged = not np.all(np.isfinite(received))
    if diverged:
        agg = np.full(x.size, np.nan)
        selected = None
    else:
        outcome = config.rule.aggregate(received)
        agg, selected = outcome.aggregate, outcome.selected_index

    with np.errstate(over="ignore", invalid="ignore"):
        x_next = x - config.learning_rate(t) * agg
        x_norm = float(np.linalg.norm(x_next))
    diverged = (diverged or abs(loss) > config.loss_bound
                or not math.isfinite(x_norm) or x_norm > config.norm_bound)

    with np.errstate(over="ignore", invalid="ignore"):
        metrics = IterationMetrics(
            iteration=t,
            loss=loss,
            grad_norm=float(np.linalg.norm(g)),
            inner_product=float(g @ agg),
            aggregate_norm=float(np.linalg.norm(agg)),
            byzantine_indices=tuple(byz),
            selected_index=selected,
            selected_is_byzantine=None if selected is None else selected in byz,
            honest_mean_inner_product=float(g @ honest_mean),
            diverged=diverged,
        )
    if diverged:
        return None, metrics
    return SimulatorState(x_next, t + 1), metrics


def run_experiment(config):
    """Run ``config.T`` iterations, or fewer if the run diverges."""
    config.validate()
    state = SimulatorState(config.initial_point(), 0)
    metrics = []
    executor = ThreadPoolExecutor(config.n_jobs) if config.n_jobs > 1 else None
    try:
        for _ in range(config.T):
            nxt, row = step(state, config, executor)
            metrics.append(row)
            if nxt is None:
                break
            state = nxt
    finally:
        if executor is not None:
            executor.shutdown()
    return RunTrace(config=config, metrics=metrics, final_x=state.x)


class ByzantineSGD(BaseEstimator):
    """Estimator front end for :func:`run_experiment`.

    ``fit`` accepts either a :class:`Problem` or a labelled dataset
    ``(X, y)``; the latter is wrapped as a ridge logistic regression and
    the estimator then behaves as a binary classifier.
    """

    def __init__(self, rule=None, attack=None, n_workers=25, n_byzantine=0,
                 batch_size=50, n_iter=300, learning_rate=0.1, lr_decay=None,
                 lr_decay_interval=None, l2=1e-3, x0=None, random_state=0, n_jobs=1):
        self.rule = rule
        self.attack = attack
        self.n_workers = n_workers
        self.n_byzantine = n_byzantine
        self.batch_size = batch_size
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.lr_decay_interval = lr_decay_interval
        self.l2 = l2
        self.x0 = x0
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _make_config(self, problem):
        return ExperimentConfig(
            problem=problem,
            rule=Mean() if self.rule is None else self.rule,
            attack=NoAttack() if self.attack is None else self.attack,
            m=self.n_workers, q=self.n_byzantine, n=self.batch_size, T=self.n_iter,
            gamma=self.learning_rate, gamma_decay=self.lr_decay,
            gamma_decay_interval=self.lr_decay_interval,
            seed=0 if self.random_state is None else self.random_state,
            x0=self.x0, n_jobs=self.n_jobs)

    def fit(self, X, y=None):
        if isinstance(X, Problem):
            problem = X
        else:
            X, y = check_X_y(X, y, dtype=np.float64)
            self.classes_ = np.unique(y)
            if self.classes_.size != 2:
                raise ValueError("ByzantineSGD classifies exactly two classes")
            signs = np.where(y == self.classes_[1], 1.0, -1.0)
            problem = LogisticRegressionProblem(X, signs, l2=self.l2)
        self.trace_ = run_experiment(self._make_config(problem))
        self.coef_ = self.trace_.final_x
        self.n_features_in_ = problem.dimension
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X, dtype=np.float64) @ self.coef_

    def predict(self, X):
        check_is_fitted(self, "classes_")
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))
