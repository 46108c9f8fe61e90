"""Deterministic simulator for nested distributed optimization under
heavy-tailed gradient noise: bi-directional clipping operators, inner/outer
optimizer pairs, synthetic convex problems, and an experiment harness."""

from ._backend import BACKEND, backend_name
from .clipping import (BiClipThresholds, Schedule, SchedulePreset,
                       biclip_coordinatewise, biclip_l2, l2clip,
                       preset_bi2clip, preset_inner_schedules,
                       preset_outer_schedules, preset_rmsprop_tailclip,
                       schedule_eval)
from .engine import (InnerSpec, OuterOptState, ParticipationSpec, RoundReport,
                     aggregate, local_epoch, outer_step, run_round,
                     sample_participants, subsampled_objective)
from .harness import (ConfigError, ExperimentConfig, MetricsRecord,
                      SweepResult, build_problem, config_from_tree,
                      fit_loglog_slope, load_config, parse_config,
                      read_metrics_csv, run_experiment, sweep, write_csv)
from .noise import (NoiseSpec, empirical_moment, has_finite_moment,
                    sample_noise, sample_noise_block)
from .problems import (OptimumResult, RegressionProblem, contaminate_labels,
                       exact_optimum, export_problem, full_gradient,
                       gen_gaussian_regression, gen_syntoken, node_gradient,
                       node_objective, objective_value, shard_iid,
                       with_additive_noise)
from .streams import derive_seed, substream
from .vectorops import axpy, l2_norm, project_ball

__version__ = "0.1.0"
