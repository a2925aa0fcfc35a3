"""Stochastic objectives the simulated workers draw minibatch gradients from."""

import csv

import numpy as np
from scipy.special import expit

from .exceptions import DimensionError
from .vec import RngStream, as_vector

__all__ = [
    "Problem",
    "GaussianQuadratic",
    "LogisticRegressionProblem",
    "make_logistic_problem",
    "make_problem",
]


def _generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class Problem:
    """Base class. Subclasses define ``dimension`` and the three oracles."""

    dimension: int

    def _check_x(self, x):
        x = as_vector(x)
        if x.size != self.dimension:
            raise DimensionError(f"expected {self.dimension} parameters, got {x.size}")
        return x

    def sample_gradient(self, x, n, rng):
        raise NotImplementedError

    def full_gradient(self, x):
        raise NotImplementedError

    def loss(self, x):
        raise NotImplementedError

    @property
    def minimizer(self):
        return None

    def optimal_loss(self):
        x_star = self.minimizer
        return None if x_star is None else self.loss(x_star)

    def excess_loss(self, x):
        """``loss(x) - loss(x*)``, the optimisation gap."""
        return self.loss(x) - self.optimal_loss()


class GaussianQuadratic(Problem):
    """``f(x; z) = 0.5 * ||x - z||^2`` with ``z ~ Normal(x_star, sigma^2 I)``.

    The population gradient is exactly ``x - x_star`` and a minibatch of
    ``n`` samples has per-coordinate gradient variance ``sigma**2 / n``.
    """

    def __init__(self, dimension=10, sigma=1.0, x_star=None):
        if dimension < 1:
            raise DimensionError("dimension must be >= 1")
        if not sigma >= 0:
            raise ValueError("sigma must be non-negative")
        self.dimension = int(dimension)
        self.sigma = float(sigma)
        self.x_star = (np.zeros(self.dimension) if x_star is None
                       else as_vector(x_star))
        if self.x_star.size != self.dimension:
            raise DimensionError("x_star does not match dimension")

    def __repr__(self):
        return f"GaussianQuadratic(dimension={self.dimension}, sigma={self.sigma})"

    @property
    def minimizer(self):
        return self.x_star.copy()

    def sample_gradient(self, x, n, rng):
        x = self._check_x(x)
        if n < 1:
            raise ValueError("minibatch size must be >= 1")
        noise = _generator(rng).standard_normal((n, self.dimension))
        # written as (x - x*) - sigma * mean(noise) so sigma = 0 is exact
        return (x - self.x_star) - self.sigma * (np.sum(noise, axis=0) / n)

    def full_gradient(self, x):
        return self._check_x(x) - self.x_star

    def loss(self, x):
        r = self._check_x(x) - self.x_star
        return 0.5 * float(r @ r) + 0.5 * self.dimension * self.sigma ** 2


class LogisticRegressionProblem(Problem):
    """Ridge-regularised logistic loss over a fixed labelled dataset.

    Labels are stored as -1/+1. Each sample contributes
    ``log(1 + exp(-y a.x)) + l2/2 ||x||^2`` so minibatch gradients are
    unbiased for the full-dataset gradient.
    """

    def __init__(self, X, y, l2=1e-3):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DimensionError("X must be (N, d) with one label per row")
        if not set(np.unique(y)) <= {-1.0, 1.0}:
            raise ValueError("labels must be -1 or +1")
        if not l2 > 0:
            raise ValueError("l2 must be positive so the minimiser is unique")
        self.X = X
        self.y = y
        self.l2 = float(l2)
        self.n_samples, self.dimension = X.shape
        self._x_star = None

    def __repr__(self):
        return (f"LogisticRegressionProblem(n_samples={self.n_samples}, "
                f"dimension={self.dimension}, l2={self.l2})")

    def _grad_on(self, x, idx):
        A = self.X[idx]
        y = self.y[idx]
        w = -y * expit(-y * (A @ x))
        return (w @ A) / len(idx) + self.l2 * x

    def sample_gradient(self, x, n, rng, replace=True):
        """Minibatch gradient over ``n`` rows drawn uniformly.

        ``replace=False`` draws distinct rows; they are visited in dataset
        order, so ``n == n_samples`` reproduces :meth:`full_gradient` exactly.
        """
        x = self._check_x(x)
        if n < 1:
            raise ValueError("minibatch size must be >= 1")
        gen = _generator(rng)
        if replace:
            idx = gen.integers(0, self.n_samples, size=n)
        else:
            if n > self.n_samples:
                raise ValueError("cannot draw more distinct rows than the dataset has")
            idx = np.sort(gen.choice(self.n_samples, size=n, replace=False))
        return self._grad_on(x, idx)

    def full_gradient(self, x):
        return self._grad_on(self._check_x(x), np.arange(self.n_samples))

    def loss(self, x):
        x = self._check_x(x)
        margins = self.y * (self.X @ x)
        return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * self.l2 * (x @ x))

    def hessian(self, x):
        x = self._check_x(x)
        p = expit(self.X @ x)
        return (self.X.T * (p * (1 - p))) @ self.X / self.n_samples + self.l2 * np.eye(self.dimension)

    @property
    def minimizer(self):
        if self._x_star is None:
            x = np.zeros(self.dimension)
            for _ in range(100):
                g = self.full_gradient(x)
                if np.linalg.norm(g) < 1e-13:
                    break
                x = x - np.linalg.solve(self.hessian(x), g)
            self._x_star = x
        return self._x_star.copy()

    def to_csv(self, path):
        """Write the dataset with columns ``x0 .. x{d-1}, label``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(self.dimension)] + ["label"])
            for row, label in zip(self.X, self.y):
                w.writerow([f"{v:.17g}" for v in row] + [int(label)])

    @classmethod
    def from_csv(cls, path, l2=1e-3):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1], l2=l2)


def make_logistic_problem(n_samples=2000, dimension=20, label_noise=0.05, l2=1e-3,
                          random_state=0):
    """Synthetic separable-plus-noise classification data.

    Features are standard normal, labels follow the sign of a random
    ground-truth separator and are flipped with probability ``label_noise``.
    """
    gen = _generator(RngStream(random_state, "logistic-dataset"))
    w_true = gen.standard_normal(dimension)
    X = gen.standard_normal((n_samples, dimension))
    y = np.where(X @ w_true >= 0, 1.0, -1.0)
    flip = gen.random(n_samples) < label_noise
    y[flip] = -y[flip]
    return LogisticRegressionProblem(X, y, l2=l2)


def make_problem(kind, dimension=10, sigma=1.0, n_samples=2000, l2=1e-3,
                 label_noise=0.05, random_state=0):
    key = str(kind).lower().replace("-", "_")
    if key in ("quadratic", "gaussian_quadratic", "gaussianquadratic"):
        return GaussianQuadratic(dimension=dimension, sigma=sigma)
    if key in ("logistic", "logistic_regression", "logisticregression"):
        return make_logistic_problem(n_samples=n_samples, dimension=dimension,
                                     label_noise=label_noise, l2=l2,
                                     random_state=random_state)
    raise ValueError(f"unknown problem kind {kind!r}")
