"""Light- and heavy-tailed gradient-noise samplers and moment diagnostics.

Every family has zero mean (symmetric construction).  Heavy-tailed families
are the point: student-t and symmetric-pareto with tail index in (1, 2) have
a finite alpha-moment only for alpha below the tail index, so their variance
is infinite while some fractional moment stays bounded.

Draw layout is part of the determinism contract: each sample_noise call
consumes a documented, fixed sequence of draws from the supplied generator,
and scaling is a single multiply after the unit draw, so draws at scale s
are bit-exactly s times the draws at scale 1 on the same substream.
"""

import math
from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
STUDENT_T = "student-t"
SYMMETRIC_PARETO = "symmetric-pareto"
ALPHA_STABLE = "alpha-stable"
NONE = "none"

FAMILIES = (GAUSSIAN, STUDENT_T, SYMMETRIC_PARETO, ALPHA_STABLE, NONE)


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution family, scale multiplier, and tail parameter.

    tail is the degrees of freedom for student-t, the tail index for
    symmetric-pareto, the stability index for alpha-stable, and is ignored
    for gaussian/none.  student-t and alpha-stable require tail in (1, 2]
    (the infinite-variance regime, with 2 as the light-tail boundary).
    """

    family: str
    scale: float = 1.0
    tail: float = 1.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError("unknown noise family %r" % (self.family,))
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError("noise scale must be positive, got %r" % (self.scale,))
        if self.family in (STUDENT_T, ALPHA_STABLE):
            if not 1.0 < self.tail <= 2.0:
                raise ValueError("%s needs tail in (1, 2], got %r" % (self.family, self.tail))
        elif self.family == SYMMETRIC_PARETO:
            if not (math.isfinite(self.tail) and self.tail > 0):
                raise ValueError("pareto tail index must be positive, got %r" % (self.tail,))


def sample_noise(spec, dim, rng):
    """Draw dim independent coordinates from spec, scaled by spec.scale.

    none: the zero vector, consuming no draws.  gaussian: standard normal.
    student-t: normal over sqrt(chi-square/df).  symmetric-pareto: classical
    Pareto (support [1, inf)) magnitude times a Rademacher sign, zero mean
    by symmetry.  alpha-stable: symmetric stable via the
    Chambers-Mallows-Stuck construction.
    """
    if spec.family == NONE:
        return np.zeros(dim)
    if spec.family == GAUSSIAN:
        out = rng.standard_normal(dim)
    elif spec.family == STUDENT_T:
        z = rng.standard_normal(dim)
        v = rng.chisquare(spec.tail, dim)
        out = z / np.sqrt(v / spec.tail)
    elif spec.family == SYMMETRIC_PARETO:
        mag = 1.0 + rng.pareto(spec.tail, dim)
        sign = 2.0 * rng.integers(0, 2, dim) - 1.0
        out = sign * mag
    else:  # alpha-stable, symmetric, tail in (1, 2]
        a = spec.tail
        u = rng.uniform(-np.pi / 2.0, np.pi / 2.0, dim)
        w = rng.standard_exponential(dim)
        out = (np.sin(a * u) / np.cos(u) ** (1.0 / a)
               * (np.cos(u - a * u) / w) ** ((1.0 - a) / a))
    return out * spec.scale


def sample_noise_block(spec, steps, dim, rng):
    """Draw a (steps, dim) block of noise, one row per local step.

    Uses one vectorized pass per underlying distribution, so the draw
    sequence differs from calling sample_noise steps times; a block of one
    step is bit-identical to a single sample_noise call on the same
    substream.  The engine draws whole epochs through this.
    """
    if spec.family == NONE:
        return np.zeros((steps, dim))
    shape = (steps, dim)
    if spec.family == GAUSSIAN:
        out = rng.standard_normal(shape)
    elif spec.family == STUDENT_T:
        z = rng.standard_normal(shape)
        v = rng.chisquare(spec.tail, shape)
        out = z / np.sqrt(v / spec.tail)
    elif spec.family == SYMMETRIC_PARETO:
        mag = 1.0 + rng.pareto(spec.tail, shape)
        sign = 2.0 * rng.integers(0, 2, shape) - 1.0
        out = sign * mag
    else:
        a = spec.tail
        u = rng.uniform(-np.pi / 2.0, np.pi / 2.0, shape)
        w = rng.standard_exponential(shape)
        out = (np.sin(a * u) / np.cos(u) ** (1.0 / a)
               * (np.cos(u - a * u) / w) ** ((1.0 - a) / a))
    return out * spec.scale


def empirical_moment(samples, alpha):
    """Mean of |s|^alpha over the samples."""
    s = np.asarray(samples, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empirical_moment of an empty sample")
    if not alpha > 0:
        raise ValueError("alpha must be positive, got %r" % (alpha,))
    return float(np.mean(np.abs(s) ** alpha))


def has_finite_moment(spec, alpha):
    """Analytic answer to whether E|xi|^alpha is finite for this family."""
    if not alpha > 0:
        raise ValueError("alpha must be positive, got %r" % (alpha,))
    if spec.family in (GAUSSIAN, NONE):
        return True
    if spec.family == ALPHA_STABLE and spec.tail == 2.0:
        return True  # the stability boundary is gaussian
    return alpha < spec.tail
