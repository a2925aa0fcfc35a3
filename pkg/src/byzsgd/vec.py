"""Dense float64 vector arithmetic and keyed random streams.

Gradients and parameters are plain 1-D ``numpy.ndarray`` objects of dtype
float64. Every helper here returns a fresh array and leaves its inputs alone.
"""

import zlib

import numpy as np

from .exceptions import DimensionError, NonFiniteError

__all__ = [
    "as_vector",
    "add",
    "sub",
    "scale",
    "inner_product",
    "l2_norm_sq",
    "mean_of",
    "RngStream",
]


def _ensure_finite(arr, what="result"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite {what}")
    return arr


def as_vector(values):
    """Validate ``values`` as a finite, non-empty 1-D float64 vector (copied)."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError("vector must have at least one coordinate")
    return _ensure_finite(arr, "input")


def _pair(a, b):
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.size} vs {b.size}")
    return a, b


def add(a, b):
    a, b = _pair(a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        return _ensure_finite(a + b)


def sub(a, b):
    a, b = _pair(a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        return _ensure_finite(a - b)


def scale(a, s):
    a = as_vector(a)
    s = float(s)
    if not np.isfinite(s):
        raise NonFiniteError("non-finite scale factor")
    with np.errstate(over="ignore", invalid="ignore"):
        return _ensure_finite(a * s)


def inner_product(a, b):
    a, b = _pair(a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_ensure_finite(np.dot(a, b)))


def l2_norm_sq(a):
    a = as_vector(a)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_ensure_finite(np.dot(a, a)))


def mean_of(vectors):
    """Coordinate-wise arithmetic mean of a non-empty sequence of vectors."""
    if len(vectors) == 0:
        raise ValueError("mean_of needs at least one vector")
    rows = [as_vector(v) for v in vectors]
    d = rows[0].size
    if any(r.size != d for r in rows):
        raise DimensionError("all vectors must share one dimension")
    # np.sum uses pairwise summation along the reduced axis
    with np.errstate(over="ignore", invalid="ignore"):
        return _ensure_finite(np.sum(np.stack(rows), axis=0) / len(rows))


def _tag_id(purpose):
    return zlib.crc32(purpose.encode("utf-8"))


class RngStream:
    """Random stream addressed by ``(master_seed, purpose, worker, iteration)``.

    Streams are derived with :class:`numpy.random.SeedSequence` and drive a
    PCG64 generator, so a given key reproduces the same numbers on every
    platform and distinct keys are statistically independent. ``worker`` and
    ``iteration`` may be ``None`` for streams not tied to a worker or step.

    >>> a = RngStream(7, "gradient", 3, 10).generator().standard_normal(2)
    >>> b = RngStream(7, "gradient", 3, 10).generator().standard_normal(2)
    >>> bool((a == b).all())
    True
    """

    __slots__ = ("master_seed", "purpose", "worker", "iteration")

    def __init__(self, master_seed, purpose, worker=None, iteration=None):
        if int(master_seed) < 0:
            raise ValueError("master_seed must be non-negative")
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.purpose = str(purpose)
        self.worker = worker
        self.iteration = iteration

    @property
    def stream_key(self):
        return (self.purpose, self.worker, self.iteration)

    def _spawn_key(self):
        # None is encoded as 0 and indices are shifted by one so they never collide
        w = 0 if self.worker is None else int(self.worker) + 1
        t = 0 if self.iteration is None else int(self.iteration) + 1
        return (_tag_id(self.purpose), w, t)

    def generator(self):
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self._spawn_key())
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, purpose=None, worker=None, iteration=None):
        """Same master seed, different key."""
        return RngStream(
            self.master_seed,
            self.purpose if purpose is None else purpose,
            self.worker if worker is None else worker,
            self.iteration if iteration is None else iteration,
        )

    def __eq__(self, other):
        return (
            isinstance(other, RngStream)
            and self.master_seed == other.master_seed
            and self.stream_key == other.stream_key
        )

    def __hash__(self):
        return hash((self.master_seed, self.stream_key))

    def __repr__(self):
        return (
            f"RngStream(master_seed={self.master_seed}, purpose={self.purpose!r}, "
            f"worker={self.worker}, iteration={self.iteration})"
        )
