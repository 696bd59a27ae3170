"""Input validation helpers shared by the functional API and the estimator."""

import math
import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_points(points, *, name="points"):
    """Return ``points`` as a finite, C-contiguous float64 array of shape (n, d)."""
    arr = check_array(points, dtype=np.float64, ensure_2d=True, order="C",
                      input_name=name)
    return np.ascontiguousarray(arr, dtype=np.float64)


def check_labels(labels, n):
    """Map labels to +/-1 floats; accepts {-1, +1} or {0, 1} encodings."""
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.shape[0] != n:
        raise ValueError(f"expected {n} labels, got {y.shape[0]}")
    values = set(np.unique(y).tolist())
    if values <= {-1.0, 1.0}:
        return y
    if values <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    raise ValueError(f"labels must be in {{-1, +1}} or {{0, 1}}, got {sorted(values)}")


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_gamma(gamma, *, upper=1.0, inclusive_upper=False):
    gamma = check_positive(gamma, "gamma")
    if gamma > upper or (gamma == upper and not inclusive_upper):
        bound = "<=" if inclusive_upper else "<"
        raise ValueError(f"gamma must satisfy 0 < gamma {bound} {upper}, got {gamma}")
    return gamma


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_vector(w, d, name="w"):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (d,):
        raise ValueError(f"{name} must have shape ({d},), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} must be finite")
    return w
