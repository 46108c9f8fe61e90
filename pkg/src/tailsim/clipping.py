"""Bi-directional clipping operators and scalar schedules.

Two clipping geometries are offered: coordinate-wise biclip, which pushes
every coordinate's magnitude into [d, u] (zero coordinates stay zero, by the
0/0 := 0 convention), and L2-wise biclip, which rescales the whole vector so
its norm lands in [d, u].  Plain l2clip(c, .) is the special case (u=c, d=0)
of the L2-wise operator.

Schedules map a round index t >= 1 to a scalar (learning rates, clip
thresholds).  Presets bundle the schedule exponents that the convergence
analyses prescribe, with their constraints checked at construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels

INF = float("inf")


@dataclass(frozen=True)
class BiClipThresholds:
    """Upper/lower clip thresholds (u, d) with 0 <= d <= u; u may be +inf."""

    upper: float
    lower: float = 0.0

    def __post_init__(self):
        u = float(self.upper)
        d = float(self.lower)
        if math.isnan(u) or math.isnan(d):
            raise ValueError("thresholds must not be NaN")
        if not math.isfinite(d) or d < 0:
            raise ValueError("lower threshold must be finite and >= 0, got %r" % (d,))
        if u < d:
            raise ValueError("need lower <= upper, got d=%r > u=%r" % (d, u))
        object.__setattr__(self, "upper", u)
        object.__setattr__(self, "lower", d)


def biclip_coordinatewise(thresholds, x):
    """Clip each coordinate's magnitude into [d, u], preserving sign.

    sign(0) = 0, so zero coordinates map to zero even when d > 0.  With
    (u=+inf, d=0) this is the identity on finite vectors.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    return kernels.biclip_cw(x, thresholds.upper, thresholds.lower)


def biclip_l2(thresholds, x):
    """Rescale x so its L2 norm lands in [d, u]; the zero vector stays zero."""
    x = np.asarray(x, dtype=np.float64)
    u = thresholds.upper
    d = thresholds.lower
    n = float(np.linalg.norm(x))
    if not math.isfinite(n):
        return x  # divergence propagates
    if n == 0.0:
        return np.zeros_like(x)
    if n <= d:
        return x * (d / n)
    if n >= u:
        return x * (u / n)
    return x


def l2clip(c, y):
    """Scale y by min{1, c/||y||}: norm capped at c, direction preserved."""
    if c < 0:
        raise ValueError("clip threshold must be >= 0, got %r" % (c,))
    return biclip_l2(BiClipThresholds(upper=float(c), lower=0.0), y)


# ---------------------------------------------------------------------------
# schedules

CONSTANT = "constant"
POWER_LAW = "power-law"
HARMONIC = "harmonic"
SCALED_POWER = "scaled-power"


@dataclass(frozen=True)
class Schedule:
    """A deterministic map from round index t >= 1 to a nonnegative scalar.

    Kinds: constant value; power-law t^exponent; scaled-power
    coefficient*t^exponent; harmonic r/(t+1).  Constant schedules may be 0
    (disabled lower threshold) or +inf (disabled upper threshold); the
    decaying/growing kinds require a positive finite coefficient.
    """

    kind: str
    coefficient: float = 1.0
    exponent: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in (CONSTANT, POWER_LAW, HARMONIC, SCALED_POWER):
            raise ValueError("unknown schedule kind %r" % (self.kind,))
        if self.kind == CONSTANT:
            if math.isnan(self.coefficient) or self.coefficient < 0:
                raise ValueError("constant schedule value must be >= 0")
        elif self.kind == HARMONIC:
            if not (math.isfinite(self.r) and self.r > 0):
                raise ValueError("harmonic schedule needs r > 0")
        else:
            if not (math.isfinite(self.coefficient) and self.coefficient > 0):
                raise ValueError("%s schedule needs a positive finite coefficient" % self.kind)
            if not math.isfinite(self.exponent):
                raise ValueError("schedule exponent must be finite")

    @staticmethod
    def constant(value):
        return Schedule(CONSTANT, coefficient=float(value))

    @staticmethod
    def power_law(exponent):
        return Schedule(POWER_LAW, coefficient=1.0, exponent=float(exponent))

    @staticmethod
    def scaled_power(coefficient, exponent):
        return Schedule(SCALED_POWER, coefficient=float(coefficient), exponent=float(exponent))

    @staticmethod
    def harmonic(r):
        return Schedule(HARMONIC, r=float(r))

    def __call__(self, t):
        return schedule_eval(self, t)


def schedule_eval(s, t):
    """Evaluate schedule s at integer round t >= 1. Pure and deterministic."""
    if t < 1:
        raise ValueError("schedules are defined for t >= 1, got %r" % (t,))
    if s.kind == CONSTANT:
        return s.coefficient
    if s.kind == HARMONIC:
        return s.r / (t + 1)
    return s.coefficient * float(t) ** s.exponent


# ---------------------------------------------------------------------------
# schedule presets

#: defaults for the exponents the analyses leave as "small enough" /
#: "close enough to zero": strictly inside the feasible region with margin.
DEFAULT_GAMMA = -1.0
DEFAULT_GAMMA_TILDE = -1.0
DEFAULT_ZETA_TILDE = 0.01


@dataclass(frozen=True)
class SchedulePreset:
    """Schedule exponents prescribed by a convergence analysis.

    omega: outer lr exponent (eta_t ~ t^omega); nu: inner lr exponent; zeta,
    gamma: inner upper/lower threshold exponents; zeta_tilde, gamma_tilde:
    outer threshold exponents; predicted_rate_exponent: the sigma in the
    O(T^-sigma) rate the schedules are supposed to deliver.
    """

    omega: float
    nu: float
    zeta: float
    gamma: float
    zeta_tilde: float
    gamma_tilde: float
    predicted_rate_exponent: float


def preset_bi2clip(alpha, gamma=DEFAULT_GAMMA, gamma_tilde=DEFAULT_GAMMA_TILDE,
                   zeta_tilde=DEFAULT_ZETA_TILDE):
    """Exponents for biclip at both tiers under an alpha-moment noise bound.

    omega=-1/2, nu=-alpha/(4a-2), zeta=1/(4a-2), rate sigma=(a-1)/(4a-2).
    Constraints checked: zeta > 0 > gamma, zeta_tilde > 0 > gamma_tilde,
    and omega + nu > -1.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2), got %r" % (alpha,))
    denom = 4.0 * alpha - 2.0
    preset = SchedulePreset(
        omega=-0.5,
        nu=-alpha / denom,
        zeta=1.0 / denom,
        gamma=float(gamma),
        zeta_tilde=float(zeta_tilde),
        gamma_tilde=float(gamma_tilde),
        predicted_rate_exponent=(alpha - 1.0) / denom,
    )
    if not (preset.zeta > 0 > preset.gamma and preset.zeta_tilde > 0 > preset.gamma_tilde):
        raise ValueError("need zeta > 0 > gamma and zeta_tilde > 0 > gamma_tilde")
    if not preset.omega + preset.nu > -1.0:
        raise ValueError("need omega + nu > -1")
    return preset


def preset_rmsprop_tailclip(alpha, gamma=DEFAULT_GAMMA):
    """Exponents for an rmsprop outer tier over clipped local updates.

    omega=0, nu=-(a+1)/(2a), zeta=1/(2a), rate sigma=(a-1)/(2a).
    Constraints checked: zeta > 0, gamma < -1/2, and omega - zeta + 1/2 > 0
    (the sign that makes the stated bound decay; the source's printed
    condition uses the opposite sign, which its own rate bound contradicts).
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2), got %r" % (alpha,))
    preset = SchedulePreset(
        omega=0.0,
        nu=-(alpha + 1.0) / (2.0 * alpha),
        zeta=1.0 / (2.0 * alpha),
        gamma=float(gamma),
        zeta_tilde=DEFAULT_ZETA_TILDE,
        gamma_tilde=DEFAULT_GAMMA_TILDE,
        predicted_rate_exponent=(alpha - 1.0) / (2.0 * alpha),
    )
    if not preset.zeta > 0:
        raise ValueError("need zeta > 0")
    if not preset.gamma < -0.5:
        raise ValueError("need gamma < -1/2, got %r" % (preset.gamma,))
    if not preset.omega - preset.zeta + 0.5 > 0:
        raise ValueError("need omega - zeta + 1/2 > 0")
    return preset


def preset_inner_schedules(preset, lr0, u0, d0):
    """Concrete inner schedules (lr, u, d) from preset exponents and bases."""
    return (
        Schedule.scaled_power(lr0, preset.nu),
        Schedule.scaled_power(u0, preset.zeta),
        Schedule.scaled_power(d0, preset.gamma) if d0 > 0 else Schedule.constant(0.0),
    )


def preset_outer_schedules(preset, eta0, u0=None, d0=None):
    """Concrete outer schedules (eta, u, d) from preset exponents and bases.

    u0/d0 default to disabled thresholds (inf, 0) for outer kinds that do
    not clip.
    """
    eta = Schedule.scaled_power(eta0, preset.omega) if preset.omega != 0.0 \
        else Schedule.constant(eta0)
    u = Schedule.constant(INF) if u0 is None else Schedule.scaled_power(u0, preset.zeta_tilde)
    d = Schedule.constant(0.0) if d0 is None or d0 == 0 \
        else Schedule.scaled_power(d0, preset.gamma_tilde)
    return eta, u, d
