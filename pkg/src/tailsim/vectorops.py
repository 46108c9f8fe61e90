"""Dense vector arithmetic shared by every other module.

Vectors are one-dimensional float64 numpy arrays.  All operations are pure
and thread-safe.  Non-finite values are not an error here: divergence is an
expected experimental outcome and is detected at module boundaries with
`is_finite`.
"""

import numpy as np


def as_vector(values):
    """Coerce to a 1-D float64 array (copying when needed)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D vector, got shape %r" % (x.shape,))
    return x


def axpy(a, x, y):
    """Return a*x + y. Inputs are unmodified."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError("dimension mismatch: %r vs %r" % (x.shape, y.shape))
    return a * x + y


def l2_norm(x):
    """Euclidean norm."""
    return float(np.linalg.norm(x))


def project_ball(x, radius):
    """Project x onto the closed Euclidean ball of the given radius.

    Interior points come back unchanged.  The rescale loop guarantees the
    measured norm of the output never exceeds the radius, which makes the
    projection exactly idempotent.
    """
    if not radius > 0:
        raise ValueError("radius must be positive, got %r" % (radius,))
    x = np.asarray(x, dtype=np.float64)
    n = float(np.linalg.norm(x))
    if n <= radius or not np.isfinite(n):
        return x
    y = x * (radius / n)
    n = float(np.linalg.norm(y))
    while n > radius:
        y = y * (radius / n)
        n = float(np.linalg.norm(y))
    return y


def is_finite(x):
    """True when every coordinate is finite (no NaN, no infinities)."""
    return bool(np.isfinite(x).all())
