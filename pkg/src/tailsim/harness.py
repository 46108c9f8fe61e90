"""Experiment harness: config parsing, the round loop, CSV metrics, sweeps.

The config document is a YAML key-value tree with four sections mirroring
the library layout (problem / algorithm / topology plus top-level run keys);
docs/config-schema.md in the repository root documents every key and
default.  Validation is total: parse_config reports every violation it can
find, not just the first, and unknown keys are errors naming the key.

Metrics go to CSV with 17-significant-digit floats so a written file replays
bit-exactly.  All floating-point metric columns are deterministic functions
of (config, seed, backend); wall_ms is the one wall-clock column.
"""

import copy
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from .clipping import Schedule
from .engine import (CLIP_KINDS, OUTER_KINDS, InnerSpec, OuterOptState,
                     ParticipationSpec, run_round)
from .noise import FAMILIES, NONE, NoiseSpec
from .problems import (ADDITIVE_GRADIENT, LABEL_CONTAMINATION,
                       contaminate_labels, exact_optimum, full_gradient,
                       gen_gaussian_regression, gen_syntoken, objective_value,
                       shard_iid, with_additive_noise)
from .streams import CONTAMINATE, PROBLEM, SHARD, SWEEP, derive_seed, substream

SCHEMA_VERSION = 1

CSV_COLUMNS = ("round", "objective_gap", "dist_to_truth", "grad_norm_sq",
               "running_min_grad_sq", "delta_inf_norm", "diverged", "wall_ms")


class ConfigError(Exception):
    """Carries the full list of validation violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    problem_kind: str
    rows: int
    cols: int
    common_fraction: float
    noise_mode: str
    noise: NoiseSpec
    inner: InnerSpec
    outer_kind: str
    outer_eta: Schedule
    outer_u: Schedule
    outer_d: Schedule
    beta1: float
    beta2: float
    tau: float
    projection_radius: float
    nodes: int
    rounds: int
    participation: ParticipationSpec
    seed: int
    metrics_every: int
    output: str


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    objective_gap: float
    dist_to_truth: float
    grad_norm_sq: float
    running_min_grad_sq: float
    delta_inf_norm: float
    diverged: bool
    wall_ms: float


# ---------------------------------------------------------------------------
# config parsing

def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _section(tree, key, errors, path):
    node = tree.get(key)
    if node is None:
        return {}
    if not isinstance(node, dict):
        errors.append("%s: expected a mapping" % path)
        return {}
    return node


def _reject_unknown(node, allowed, path, errors):
    for k in node:
        if k not in allowed:
            errors.append("unknown key: %s.%s" % (path, k) if path else
                          "unknown key: %s" % k)


def _num(node, key, default, path, errors, minimum=None, maximum=None,
         exclusive_min=False, allow_none=False, finite=True):
    v = node.get(key, default)
    if v is None and allow_none:
        return None
    if not _is_num(v):
        errors.append("%s.%s: expected a number, got %r" % (path, key, v))
        return default if _is_num(default) else None
    v = float(v)
    if finite and not math.isfinite(v):
        errors.append("%s.%s: must be finite, got %r" % (path, key, v))
        return v
    if minimum is not None:
        ok = v > minimum if exclusive_min else v >= minimum
        if not ok:
            errors.append("%s.%s: must be %s %s, got %r"
                          % (path, key, ">" if exclusive_min else ">=", minimum, v))
    if maximum is not None and v > maximum:
        errors.append("%s.%s: must be <= %s, got %r" % (path, key, maximum, v))
    return v


def _int(node, key, default, path, errors, minimum=None, required=False):
    v = node.get(key, default)
    if v is None and required:
        errors.append("%s.%s: required" % (path, key))
        return default
    if not isinstance(v, int) or isinstance(v, bool):
        errors.append("%s.%s: expected an integer, got %r" % (path, key, v))
        return default
    if minimum is not None and v < minimum:
        errors.append("%s.%s: must be >= %d, got %d" % (path, key, minimum, v))
    return v


def _choice(node, key, default, options, path, errors):
    v = node.get(key, default)
    if v not in options:
        errors.append("%s.%s: expected one of %s, got %r"
                      % (path, key, "/".join(options), v))
        return default
    return v


_SCHEDULE_KEYS = {
    "constant": ("kind", "coefficient"),
    "power-law": ("kind", "exponent"),
    "scaled-power": ("kind", "coefficient", "exponent"),
    "harmonic": ("kind", "r"),
}


def _schedule(node, key, default, path, errors):
    """A schedule leaf: a bare number (constant) or a kind mapping."""
    v = node.get(key)
    if v is None:
        return default
    where = "%s.%s" % (path, key)
    if _is_num(v):
        try:
            return Schedule.constant(float(v))
        except ValueError as e:
            errors.append("%s: %s" % (where, e))
            return default
    if not isinstance(v, dict):
        errors.append("%s: expected a number or a schedule mapping" % where)
        return default
    kind = v.get("kind")
    if kind not in _SCHEDULE_KEYS:
        errors.append("%s.kind: expected one of %s, got %r"
                      % (where, "/".join(_SCHEDULE_KEYS), kind))
        return default
    _reject_unknown(v, _SCHEDULE_KEYS[kind], where, errors)
    try:
        if kind == "constant":
            return Schedule.constant(float(v["coefficient"]))
        if kind == "power-law":
            return Schedule.power_law(float(v["exponent"]))
        if kind == "scaled-power":
            return Schedule.scaled_power(float(v["coefficient"]), float(v["exponent"]))
        return Schedule.harmonic(float(v["r"]))
    except KeyError as e:
        errors.append("%s: missing key %s for kind %s" % (where, e, kind))
    except (TypeError, ValueError) as e:
        errors.append("%s: %s" % (where, e))
    return default


def config_from_tree(tree):
    """Validate a raw mapping and build the ExperimentConfig.

    Raises ConfigError carrying every violation found.
    """
    if not isinstance(tree, dict):
        raise ConfigError(["top level: expected a mapping"])
    errors = []
    _reject_unknown(tree, ("version", "seed", "metrics_every", "output",
                           "problem", "algorithm", "topology"), "", errors)
    version = tree.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append("version: this build reads schema version %d, got %r"
                      % (SCHEMA_VERSION, version))

    seed = _int(tree, "seed", 0, "", errors, minimum=0)
    metrics_every = _int(tree, "metrics_every", 1, "", errors, minimum=1)
    output = tree.get("output")
    if output is not None and not isinstance(output, str):
        errors.append("output: expected a path string or null")
        output = None

    prob = _section(tree, "problem", errors, "problem")
    _reject_unknown(prob, ("kind", "rows", "cols", "common_fraction",
                           "noise_mode", "noise"), "problem", errors)
    pkind = _choice(prob, "kind", None, ("gaussian", "syntoken"), "problem", errors)
    rows = _int(prob, "rows", None, "problem", errors, minimum=1, required=True) or 1
    cols = _int(prob, "cols", None, "problem", errors, minimum=1, required=True) or 1
    if rows < cols:
        errors.append("problem.rows: must be >= problem.cols (rows=%r, cols=%r)"
                      % (rows, cols))
    cfrac = _num(prob, "common_fraction", 0.1, "problem", errors,
                 minimum=0.0, exclusive_min=True)
    if cfrac is not None and not cfrac < 1.0:
        errors.append("problem.common_fraction: must be < 1, got %r" % (cfrac,))
    nmode = _choice(prob, "noise_mode", LABEL_CONTAMINATION,
                    (LABEL_CONTAMINATION, ADDITIVE_GRADIENT), "problem", errors)
    nnode = _section(prob, "noise", errors, "problem.noise")
    _reject_unknown(nnode, ("family", "scale", "tail"), "problem.noise", errors)
    family = _choice(nnode, "family", NONE, FAMILIES, "problem.noise", errors)
    scale = _num(nnode, "scale", 1.0, "problem.noise", errors,
                 minimum=0.0, exclusive_min=True)
    tail = _num(nnode, "tail", 1.5, "problem.noise", errors)
    noise = NoiseSpec(NONE)
    try:
        noise = NoiseSpec(family=family, scale=scale if scale else 1.0, tail=tail)
    except (TypeError, ValueError) as e:
        errors.append("problem.noise: %s" % e)

    algo = _section(tree, "algorithm", errors, "algorithm")
    _reject_unknown(algo, ("inner", "outer"), "algorithm", errors)
    inner_node = _section(algo, "inner", errors, "algorithm.inner")
    _reject_unknown(inner_node, ("clip", "lr", "u", "d", "batch_size"),
                    "algorithm.inner", errors)
    clip = _choice(inner_node, "clip", "none", CLIP_KINDS, "algorithm.inner", errors)
    lr = _schedule(inner_node, "lr", None, "algorithm.inner", errors)
    if lr is None and "lr" not in inner_node:
        errors.append("algorithm.inner.lr: required")
    inner_u = _schedule(inner_node, "u", Schedule.constant(math.inf),
                        "algorithm.inner", errors)
    inner_d = _schedule(inner_node, "d", Schedule.constant(0.0),
                        "algorithm.inner", errors)
    batch = inner_node.get("batch_size")
    if batch is not None:
        if not isinstance(batch, int) or isinstance(batch, bool) or batch < 1:
            errors.append("algorithm.inner.batch_size: expected a positive "
                          "integer or null, got %r" % (batch,))
            batch = None

    outer_node = _section(algo, "outer", errors, "algorithm.outer")
    _reject_unknown(outer_node, ("kind", "eta", "u", "d", "beta1", "beta2",
                                 "tau", "projection_radius"),
                    "algorithm.outer", errors)
    okind = _choice(outer_node, "kind", "avg", OUTER_KINDS, "algorithm.outer", errors)
    eta = _schedule(outer_node, "eta", Schedule.constant(1.0),
                    "algorithm.outer", errors)
    outer_u = _schedule(outer_node, "u", Schedule.constant(math.inf),
                        "algorithm.outer", errors)
    outer_d = _schedule(outer_node, "d", Schedule.constant(0.0),
                        "algorithm.outer", errors)
    beta1 = _num(outer_node, "beta1", 0.9, "algorithm.outer", errors, minimum=0.0)
    beta2 = _num(outer_node, "beta2", 0.99, "algorithm.outer", errors, minimum=0.0)
    for nm, b in (("beta1", beta1), ("beta2", beta2)):
        if b is not None and not 0.0 <= b < 1.0:
            errors.append("algorithm.outer.%s: must lie in [0, 1), got %r" % (nm, b))
    tau = _num(outer_node, "tau", 1e-8, "algorithm.outer", errors,
               minimum=0.0, exclusive_min=True)
    radius = _num(outer_node, "projection_radius", None, "algorithm.outer",
                  errors, minimum=0.0, exclusive_min=True, allow_none=True)

    topo = _section(tree, "topology", errors, "topology")
    _reject_unknown(topo, ("nodes", "local_steps", "rounds", "participation"),
                    "topology", errors)
    nodes = _int(topo, "nodes", 1, "topology", errors, minimum=1)
    local_steps = _int(topo, "local_steps", 1, "topology", errors, minimum=1)
    rounds = _int(topo, "rounds", None, "topology", errors, minimum=1,
                  required=True) or 1
    part_node = _section(topo, "participation", errors, "topology.participation")
    _reject_unknown(part_node, ("mode", "rate", "renormalize"),
                    "topology.participation", errors)
    pmode = _choice(part_node, "mode", "full", ("full", "uniform-subsample"),
                    "topology.participation", errors)
    rate = _num(part_node, "rate", 1.0, "topology.participation", errors)
    if rate is not None and not 0.0 < rate <= 1.0:
        errors.append("topology.participation.rate: must lie in (0, 1], got %r"
                      % (rate,))
        rate = 1.0
    renorm = part_node.get("renormalize", True)
    if not isinstance(renorm, bool):
        errors.append("topology.participation.renormalize: expected a boolean")
        renorm = True

    inner = None
    if lr is not None:
        try:
            inner = InnerSpec(clip_kind=clip, lr_schedule=lr, u_schedule=inner_u,
                              d_schedule=inner_d, local_steps=max(local_steps, 1),
                              batch_size=batch)
        except ValueError as e:
            errors.append("algorithm.inner: %s" % e)
    participation = ParticipationSpec()
    try:
        participation = ParticipationSpec(mode=pmode, rate=rate, renormalize=renorm)
    except ValueError as e:
        errors.append("topology.participation: %s" % e)

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        problem_kind=pkind, rows=rows, cols=cols, common_fraction=cfrac,
        noise_mode=nmode, noise=noise, inner=inner, outer_kind=okind,
        outer_eta=eta, outer_u=outer_u, outer_d=outer_d, beta1=beta1,
        beta2=beta2, tau=tau, projection_radius=radius, nodes=nodes,
        rounds=rounds, participation=participation, seed=seed,
        metrics_every=metrics_every, output=output)


def parse_config(text):
    """Parse and validate a config document; ConfigError lists every problem."""
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(["not a well-formed document: %s" % e])
    if tree is None:
        tree = {}
    return config_from_tree(tree)


def load_tree(path):
    """The raw (unvalidated) mapping from a config file."""
    with open(path) as fh:
        text = fh.read()
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(["%s: not a well-formed document: %s" % (path, e)])
    return {} if tree is None else tree


def load_config(path):
    return config_from_tree(load_tree(path))


# ---------------------------------------------------------------------------
# running

def build_problem(cfg):
    """Generate, contaminate, and shard the problem from the config seed."""
    rng = substream(cfg.seed, PROBLEM)
    if cfg.problem_kind == "syntoken":
        p = gen_syntoken(cfg.rows, cfg.cols, rng, common_fraction=cfg.common_fraction)
    else:
        p = gen_gaussian_regression(cfg.rows, cfg.cols, rng)
    if cfg.noise_mode == ADDITIVE_GRADIENT:
        p = with_additive_noise(p, cfg.noise)
    elif cfg.noise.family != NONE:
        p = contaminate_labels(p, cfg.noise, substream(cfg.seed, CONTAMINATE))
    if cfg.nodes > 1:
        p = shard_iid(p, cfg.nodes, substream(cfg.seed, SHARD))
    return p


def make_outer(cfg, dim):
    return OuterOptState(kind=cfg.outer_kind, x=np.zeros(dim),
                         eta_schedule=cfg.outer_eta, u_schedule=cfg.outer_u,
                         d_schedule=cfg.outer_d, beta1=cfg.beta1,
                         beta2=cfg.beta2, tau=cfg.tau,
                         projection_radius=cfg.projection_radius)


def run_experiment(cfg, threads=1):
    """Execute the configured run and return its MetricsRecord list.

    The gradient norm is evaluated every round against the full deterministic
    objective so the running minimum is exact regardless of the metrics
    cadence; rows are emitted every metrics_every rounds, at the final round,
    and at a divergence (which truncates the run).  Worker threads only ever
    change wall_ms.
    """
    problem = build_problem(cfg)
    opt = exact_optimum(problem)
    f_star = objective_value(problem, opt.x)
    w_star = problem.w_star
    outer = make_outer(cfg, problem.dim)
    # touch shared caches before workers exist
    problem.global_gram
    if problem.noise_mode == ADDITIVE_GRADIENT:
        problem.shard_grams
    else:
        problem.shard_views
    records = []
    running = math.inf
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    start = time.perf_counter()
    try:
        for t in range(1, cfg.rounds + 1):
            rep = run_round(problem, cfg.inner, outer, cfg.participation,
                            cfg.seed, t, executor=executor)
            with np.errstate(over="ignore", invalid="ignore"):
                g = full_gradient(problem, outer.x)
                gsq = float(g @ g)
                if gsq < running:
                    running = gsq
                if t % cfg.metrics_every == 0 or t == cfg.rounds or rep.diverged:
                    gap = objective_value(problem, outer.x) - f_star
                    dist = float(np.linalg.norm(outer.x - w_star))
                    records.append(MetricsRecord(
                        round=t, objective_gap=float(gap), dist_to_truth=dist,
                        grad_norm_sq=gsq, running_min_grad_sq=running,
                        delta_inf_norm=rep.delta_inf_norm, diverged=rep.diverged,
                        wall_ms=(time.perf_counter() - start) * 1e3))
            if rep.diverged:
                break
    finally:
        if executor is not None:
            executor.shutdown()
    return records


# ---------------------------------------------------------------------------
# CSV

def _fmt(v):
    return "%.17g" % v


def format_csv(records):
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join((
            "%d" % r.round, _fmt(r.objective_gap), _fmt(r.dist_to_truth),
            _fmt(r.grad_norm_sq), _fmt(r.running_min_grad_sq),
            _fmt(r.delta_inf_norm), "true" if r.diverged else "false",
            _fmt(r.wall_ms))))
    return "\n".join(lines) + "\n"


def write_csv(records, path):
    """Emit the metrics table; 17 significant digits round-trip float64."""
    try:
        with open(path, "w") as fh:
            fh.write(format_csv(records))
    except OSError as e:
        raise OSError("writing %s: %s" % (path, e)) from e


def read_metrics_csv(path):
    """Parse a metrics CSV into {column: numpy array}, replaying exact values."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
    except OSError as e:
        raise OSError("reading %s: %s" % (path, e)) from e
    if not lines:
        raise ValueError("%s: empty metrics file" % path)
    header = lines[0].split(",")
    cols = {name: [] for name in header}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ValueError("%s: ragged row %r" % (path, ln))
        for name, raw in zip(header, parts):
            cols[name].append(raw)
    out = {}
    for name, raw in cols.items():
        if name == "round":
            out[name] = np.array([int(v) for v in raw], dtype=np.int64)
        elif name == "diverged":
            out[name] = np.array([v == "true" for v in raw])
        else:
            out[name] = np.array([float(v) for v in raw])
    return out


# ---------------------------------------------------------------------------
# rate estimation

def fit_loglog_slope(rounds, values, burn_in=0.2):
    """OLS slope of log(value) on log(round) after discarding the burn-in.

    burn_in is the fraction of leading points dropped (transients dominate
    early rounds; the rate statements are asymptotic).  Requires at least 10
    retained points, all positive; a diverged or zero-touching series has no
    defined rate and raises.
    """
    t = np.asarray(rounds, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("rounds and values must be matching 1-d sequences")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must lie in [0, 1), got %r" % (burn_in,))
    k = int(math.floor(burn_in * t.size))
    t, v = t[k:], v[k:]
    if t.size < 10:
        raise ValueError("need at least 10 points after burn-in, got %d" % t.size)
    if not (np.all(t > 0) and np.all(v > 0)):
        raise ValueError("rate undefined: nonpositive values after burn-in")
    slope = np.polyfit(np.log(t), np.log(v), 1)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepResult:
    index: int
    overrides: dict
    final: MetricsRecord


def _set_path(tree, dotted, value, errors):
    node = tree
    parts = dotted.split(".")
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = {}
            node[part] = nxt
        if not isinstance(nxt, dict):
            errors.append("grid key %s: %s is not a mapping" % (dotted, part))
            return
        node = nxt
    node[parts[-1]] = value


def load_grid(path):
    """A grid file: mapping of dotted config path -> list of values."""
    tree = load_tree(path)
    errors = []
    if not isinstance(tree, dict) or not tree:
        raise ConfigError(["%s: grid must be a non-empty mapping" % path])
    for key, vals in tree.items():
        if not isinstance(key, str):
            errors.append("grid key %r: expected a dotted path string" % (key,))
        if not isinstance(vals, list) or not vals:
            errors.append("grid key %s: expected a non-empty value list" % (key,))
    if errors:
        raise ConfigError(errors)
    return tree


def sweep(tree, grid, threads=1, max_runs=1024):
    """Run the Cartesian product of grid overrides on the base config tree.

    Every assignment is validated before any run starts, so an unknown grid
    key fails fast.  Assignment i runs with a seed derived from (base seed,
    i); results come back sorted by final objective_gap ascending with
    diverged or undefined gaps last and ties broken by assignment index.
    """
    keys = list(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))
    if len(combos) > max_runs:
        raise ConfigError(["grid size %d exceeds the run cap %d"
                           % (len(combos), max_runs)])
    base_seed = tree.get("seed", 0) if isinstance(tree, dict) else 0
    if not isinstance(base_seed, int) or isinstance(base_seed, bool):
        base_seed = 0
    jobs = []
    for idx, combo in enumerate(combos):
        t2 = copy.deepcopy(tree)
        errors = []
        overrides = dict(zip(keys, combo))
        for key, val in overrides.items():
            _set_path(t2, key, val, errors)
        if errors:
            raise ConfigError(errors)
        _set_path(t2, "seed", derive_seed(base_seed, SWEEP, idx), errors)
        try:
            cfg = config_from_tree(t2)
        except ConfigError as e:
            raise ConfigError(["assignment %d (%r): %s" % (idx, overrides, v)
                               for v in e.violations])
        jobs.append((idx, overrides, cfg))
    results = []
    for idx, overrides, cfg in jobs:
        records = run_experiment(cfg, threads=threads)
        results.append(SweepResult(index=idx, overrides=overrides,
                                   final=records[-1]))

    def order(res):
        gap = res.final.objective_gap
        bad = res.final.diverged or not math.isfinite(gap)
        return (1 if bad else 0, gap if not bad else 0.0, res.index)

    return sorted(results, key=order)


def format_sweep_csv(results, keys):
    header = ["index"] + list(keys) + ["round", "objective_gap", "dist_to_truth",
                                      "running_min_grad_sq", "diverged"]
    lines = [",".join(header)]
    for res in results:
        row = ["%d" % res.index]
        for k in keys:
            v = res.overrides[k]
            row.append(_fmt(v) if _is_num(v) and not isinstance(v, int)
                       else str(v))
        f = res.final
        row += ["%d" % f.round, _fmt(f.objective_gap), _fmt(f.dist_to_truth),
                _fmt(f.running_min_grad_sq), "true" if f.diverged else "false"]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
