"""Python bindings for the syncsim simulator."""

import json

from ._syncsim import (
    METRICS_HEADER,
    BudgetError,
    ConfigError,
    Environment as _Environment,
    EpisodeStateError,
    GenerationError,
    MissingPolicyError,
    Policy as _Policy,
    action_space_size,
    exploration_probability,
    known_policies,
    run_episode,
    shortest_path,
    task_utility,
)
from . import _syncsim

__all__ = [
    "METRICS_HEADER",
    "BudgetError",
    "ConfigError",
    "Environment",
    "EpisodeStateError",
    "GenerationError",
    "MissingPolicyError",
    "Policy",
    "action_space_size",
    "compare",
    "exploration_probability",
    "generate_network",
    "known_policies",
    "run_episode",
    "run_experiment",
    "shortest_path",
    "task_utility",
]


def _dump(cfg):
    return "" if cfg is None else json.dumps(cfg)


def generate_network(network_config=None):
    return json.loads(_syncsim.generate_network_json(_dump(network_config)))


def Environment(env_config=None):
    return _Environment(_dump(env_config))


def Policy(name, n_domains, sb, max_staleness=64, config=None, seed=0):
    return _Policy(name, n_domains, sb, max_staleness, _dump(config), seed)


def run_experiment(config, out_dir=""):
    """Runs a full experiment config; returns (metrics_csv_text, summary_dict)."""
    csv, summary = _syncsim.run_experiment_json(json.dumps(config), str(out_dir))
    return csv, json.loads(summary)


def compare(metrics_csv, reference="d2q"):
    return json.loads(_syncsim.compare_csv(metrics_csv, reference))
