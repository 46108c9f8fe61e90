"""Pure numpy implementations of the hot per-round kernels.

Call-compatible with the compiled module `tailsim._kernels`; selected by
`tailsim._backend` when the extension is unavailable or TAILSIM_KERNELS
forces it.  Clip codes: 0 none, 2 coordinate-wise biclip, 3 L2-wise biclip
(plain l2 clipping is code 3 with d=0).

Both epoch kernels accumulate the displacement from zero (acc -= eta*clip)
and evaluate gradients at x0 + acc, so the returned delta is a monotone
left-to-right sum of per-step updates, each bounded by eta*u under
coordinate-wise clipping.
"""

import numpy as np

CLIP_NONE = 0
CLIP_CW = 2
CLIP_L2 = 3


def biclip_cw(x, u, d):
    """Coordinate-wise biclip: magnitudes pushed into [d, u], sign kept."""
    a = np.abs(x)
    s = np.sign(x)
    with np.errstate(invalid="ignore"):
        return np.where(a <= d, s * d, np.where(a >= u, s * u, x))


def _clip(g, u, d, code):
    if code == CLIP_NONE:
        return g
    if code == CLIP_CW:
        return biclip_cw(g, u, d)
    n = float(np.linalg.norm(g))
    if not np.isfinite(n):
        return g  # divergence propagates
    if n == 0.0:
        return np.zeros_like(g)
    if n <= d:
        return g * (d / n)
    if n >= u:
        return g * (u / n)
    return g


def epoch_label(X, y, x0, idx, eta, u, d, code):
    """Run one local epoch of clipped minibatch steps on (X, y) rows.

    idx has shape (z, b): row indices into X for each step's batch.
    Returns the accumulated displacement.
    """
    acc = np.zeros_like(x0)
    xcur = x0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(idx.shape[0]):
            rows = idx[k]
            Xb = X[rows]
            resid = Xb @ xcur - y[rows]
            g = (Xb.T @ resid) / rows.shape[0]
            acc -= eta * _clip(g, u, d, code)
            np.add(x0, acc, out=xcur)
    return acc


def epoch_additive(A, b, x0, noise, eta, u, d, code):
    """Run one local epoch of clipped exact-gradient-plus-noise steps.

    A, b are the node's Gram pieces (gradient is A x - b); noise has shape
    (z, dim), one pre-drawn vector per step.  Returns the displacement.
    """
    acc = np.zeros_like(x0)
    xcur = x0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(noise.shape[0]):
            g = A @ xcur - b + noise[k]
            acc -= eta * _clip(g, u, d, code)
            np.add(x0, acc, out=xcur)
    return acc
