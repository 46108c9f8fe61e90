"""The nested optimization state machines.

One synchronization round broadcasts the global iterate x to the
participating nodes, runs z clipped local gradient steps on each (the inner
optimizer), averages the resulting displacements into a pseudogradient
Delta, and hands Delta to the outer optimizer, which treats it as a
gradient-like update direction.

Determinism: every random decision is drawn from a counter-based substream
keyed by (seed, purpose, round, node), so per-node epochs may run on any
number of worker threads in any order and still reproduce bit-identical
results to a sequential run on the same backend.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .clipping import BiClipThresholds, Schedule, biclip_coordinatewise, schedule_eval
from .noise import NONE, sample_noise_block
from .problems import ADDITIVE_GRADIENT, node_objective
from .streams import EPOCH, PARTICIPATION, substream
from .vectorops import is_finite, project_ball

CLIP_KINDS = ("none", "l2", "biclip-coordinate", "biclip-l2")
OUTER_KINDS = ("avg", "biclip", "adagrad", "rmsprop", "adam")

# kernel clip codes; plain l2 is L2-wise biclip with d forced to 0
_CLIP_CODE = {"none": 0, "l2": 3, "biclip-coordinate": 2, "biclip-l2": 3}


@dataclass(frozen=True)
class InnerSpec:
    """Local-update rule: clip kind, schedules, steps per round, batch size.

    Schedules are evaluated once at the round index t and held fixed for the
    round's local_steps.  batch_size None means the full shard every step;
    otherwise batches are drawn uniformly with replacement from the node's
    shard.  For clip kind "l2" the u schedule is the clip threshold c_t and
    the d schedule is ignored (treated as 0).
    """

    clip_kind: str
    lr_schedule: Schedule
    u_schedule: Schedule = Schedule.constant(math.inf)
    d_schedule: Schedule = Schedule.constant(0.0)
    local_steps: int = 1
    batch_size: int = None

    def __post_init__(self):
        if self.clip_kind not in CLIP_KINDS:
            raise ValueError("unknown clip kind %r" % (self.clip_kind,))
        if self.local_steps < 1:
            raise ValueError("local_steps must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None for full shard")
        BiClipThresholds(upper=schedule_eval(self.u_schedule, 1),
                         lower=schedule_eval(self.d_schedule, 1))


@dataclass
class OuterOptState:
    """Outer-optimizer kind, global iterate, and accumulator state.

    The five kinds share one update shape x += eta(t) * step(Delta):
      avg      step = Delta
      biclip   step = biclip(u(t), d(t), Delta) coordinate-wise
      adagrad  v += Delta^2;                  step = Delta / (sqrt(v) + tau)
      rmsprop  v = b2 v + (1-b2) Delta^2;     step = Delta / (sqrt(v) + tau)
      adam     m = b1 m + (1-b1) Delta;
               v = b2 v + (1-b2) Delta^2;     step = m / (sqrt(v) + tau)
    No bias correction anywhere; tau is added after the square root;
    accumulators start at zero.  When projection_radius is set the iterate
    is projected onto that ball after every update.
    """

    kind: str
    x: np.ndarray
    eta_schedule: Schedule
    u_schedule: Schedule = Schedule.constant(math.inf)
    d_schedule: Schedule = Schedule.constant(0.0)
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-8
    projection_radius: float = None
    round: int = 0
    diverged: bool = False
    m_tilde: np.ndarray = None
    v_tilde: np.ndarray = None

    def __post_init__(self):
        if self.kind not in OUTER_KINDS:
            raise ValueError("unknown outer kind %r" % (self.kind,))
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta1/beta2 must lie in [0, 1)")
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")
        if self.projection_radius is not None and not self.projection_radius > 0:
            raise ValueError("projection_radius must be positive or None")
        self.x = np.asarray(self.x, dtype=np.float64).copy()
        if self.m_tilde is None:
            self.m_tilde = np.zeros_like(self.x)
        if self.v_tilde is None:
            self.v_tilde = np.zeros_like(self.x)


@dataclass(frozen=True)
class ParticipationSpec:
    """Which nodes compute each round.

    full: everyone.  uniform-subsample: ceil(rate*N) distinct nodes drawn
    uniformly; renormalize divides the weighted aggregate by the sampled
    weight mass so the pseudogradient stays unbiased.
    """

    mode: str = "full"
    rate: float = 1.0
    renormalize: bool = True

    def __post_init__(self):
        if self.mode not in ("full", "uniform-subsample"):
            raise ValueError("unknown participation mode %r" % (self.mode,))
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("participation rate must lie in (0, 1]")
        if self.mode == "full" and self.rate != 1.0:
            raise ValueError("full participation requires rate=1")


@dataclass(frozen=True)
class RoundReport:
    round: int
    delta_inf_norm: float
    participants: tuple
    diverged: bool


def local_epoch(problem, node, x_start, spec, t, rng):
    """Run one node's local epoch at round t and return its displacement.

    z clipped stochastic-gradient steps from x_start, fresh minibatch or
    noise draw per step, all schedules evaluated at t.  The returned delta
    is the accumulated update sum (the final local iterate is
    x_start + delta); under coordinate-wise clipping its inf-norm is at
    most z * lr(t) * u(t).
    """
    eta = schedule_eval(spec.lr_schedule, t)
    u = schedule_eval(spec.u_schedule, t)
    d = schedule_eval(spec.d_schedule, t)
    BiClipThresholds(upper=u, lower=d)  # validates the ordering at this round
    code = _CLIP_CODE[spec.clip_kind]
    if spec.clip_kind in ("none", "l2"):
        d = 0.0
    z = spec.local_steps
    x0 = np.ascontiguousarray(x_start, dtype=np.float64)
    if problem.noise_mode == ADDITIVE_GRADIENT:
        A, b = problem.shard_grams[node]
        gn = problem.grad_noise
        if gn is None or gn.family == NONE:
            noise = np.zeros((z, problem.dim))
        else:
            noise = np.ascontiguousarray(sample_noise_block(gn, z, problem.dim, rng))
        return kernels.epoch_additive(A, b, x0, noise, eta, u, d, code)
    X, y = problem.shard_views[node]
    n = X.shape[0]
    if spec.batch_size is None:
        idx = np.tile(np.arange(n, dtype=np.int64), (z, 1))
    else:
        idx = np.ascontiguousarray(rng.integers(0, n, size=(z, spec.batch_size), dtype=np.int64))
    return kernels.epoch_label(X, y, x0, idx, eta, u, d, code)


def sample_participants(N, spec, rng):
    """The round's participant set, sorted for a fixed aggregation order."""
    if spec.mode == "full":
        return tuple(range(N))
    k = int(math.ceil(spec.rate * N))
    chosen = rng.choice(N, size=k, replace=False)
    return tuple(int(i) for i in np.sort(chosen))


def aggregate(deltas, weights, participants, renormalize=True):
    """Weighted pseudogradient over the participants.

    Full participation yields sum_i p_i delta_i (the plain mean for uniform
    weights); a renormalized subsample divides by the sampled weight mass.
    """
    if len(participants) == 0:
        raise ValueError("empty participant set")
    total = None
    mass = 0.0
    for delta, i in zip(deltas, participants):
        p = float(weights[i])
        mass += p
        contrib = p * delta
        total = contrib if total is None else total + contrib
    if renormalize and len(participants) < len(weights):
        total = total / mass
    return total


def outer_step(state, delta):
    """Apply one outer update for pseudogradient delta; returns the state.

    Mutates state in place (x, accumulators, round, diverged).  A non-finite
    iterate after the update marks the state diverged; note an outer biclip
    with finite u clips infinite deltas back to finite steps.
    """
    t = state.round + 1
    eta = schedule_eval(state.eta_schedule, t)
    delta = np.asarray(delta, dtype=np.float64)
    kind = state.kind
    if kind == "avg":
        step = delta
    elif kind == "biclip":
        th = BiClipThresholds(upper=schedule_eval(state.u_schedule, t),
                              lower=schedule_eval(state.d_schedule, t))
        step = biclip_coordinatewise(th, delta)
    elif kind == "adagrad":
        state.v_tilde = state.v_tilde + delta * delta
        step = delta / (np.sqrt(state.v_tilde) + state.tau)
    elif kind == "rmsprop":
        state.v_tilde = state.beta2 * state.v_tilde + (1.0 - state.beta2) * delta * delta
        step = delta / (np.sqrt(state.v_tilde) + state.tau)
    else:  # adam
        state.m_tilde = state.beta1 * state.m_tilde + (1.0 - state.beta1) * delta
        state.v_tilde = state.beta2 * state.v_tilde + (1.0 - state.beta2) * delta * delta
        step = state.m_tilde / (np.sqrt(state.v_tilde) + state.tau)
    with np.errstate(over="ignore", invalid="ignore"):
        state.x = state.x + eta * step
    if state.projection_radius is not None:
        state.x = project_ball(state.x, state.projection_radius)
    state.round = t
    if not is_finite(state.x):
        state.diverged = True
    return state


def run_round(problem, inner, outer, participation, seed, t, executor=None):
    """Execute synchronization round t and return its RoundReport.

    Broadcasts outer.x, runs the participants' local epochs (on the executor
    when given), aggregates, and applies the outer step.  Epoch substreams
    are keyed by (seed, round, node), so the executor's scheduling cannot
    change any result.
    """
    N = problem.num_nodes
    participants = sample_participants(N, participation,
                                       substream(seed, PARTICIPATION, t))
    x_bcast = outer.x

    def _one(node):
        return local_epoch(problem, node, x_bcast, inner, t,
                           substream(seed, EPOCH, t, node))

    if executor is not None and len(participants) > 1:
        deltas = list(executor.map(_one, participants))
    else:
        deltas = [_one(i) for i in participants]
    delta = aggregate(deltas, problem.node_weights, participants,
                      renormalize=participation.renormalize)
    outer_step(outer, delta)
    with np.errstate(invalid="ignore"):
        dinf = float(np.max(np.abs(delta))) if delta.size else 0.0
    return RoundReport(round=t, delta_inf_norm=dinf,
                       participants=participants, diverged=outer.diverged)


def subsampled_objective(problem, x, participants):
    """Renormalized objective over a participant subset.

    (sum_{i in S} p_i)^-1 * sum_{i in S} p_i F_i(x); for uniform weights its
    expectation over uniform subsets equals the global objective.
    """
    mass = 0.0
    total = 0.0
    for i in participants:
        p = float(problem.node_weights[i])
        mass += p
        total += p * node_objective(problem, i, x)
    if mass == 0.0:
        raise ValueError("empty participant set")
    return total / mass
