import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError, NonFiniteError


def check_gradients(X, name="gradients"):
    """Return ``X`` as a finite ``(m, d)`` float64 array.

    A 1-D input is read as ``m`` scalar gradients, i.e. shape ``(m, 1)``.
    """
    if isinstance(X, (list, tuple)) and len(X) == 0:
        raise ValueError(f"{name}: need at least one vector")
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name}: expected a list of 1-D vectors, got shape {arr.shape}")
    arr = check_array(arr, dtype=np.float64, ensure_all_finite=False, copy=True,
                      input_name=name)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name}: non-finite entry")
    return arr


def check_stacked(vectors, name="gradients"):
    """Like :func:`check_gradients` but accepts ragged Python lists and
    reports them as a dimension mismatch rather than a numpy error."""
    if isinstance(vectors, np.ndarray):
        return check_gradients(vectors, name)
    rows = [np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in vectors]
    if not rows:
        raise ValueError(f"{name}: need at least one vector")
    if any(r.ndim != 1 for r in rows):
        raise DimensionError(f"{name}: every entry must be a 1-D vector")
    if len({r.size for r in rows}) != 1:
        raise DimensionError(f"{name}: vectors differ in dimension")
    return check_gradients(np.stack(rows), name)
