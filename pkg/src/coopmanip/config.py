"""Experiment configuration: YAML in, validated objects out.

Unknown keys are a hard error (silent typos are how experiments rot), all
defaults live in one place (DEFAULTS, mirrored by configs/reference.yaml),
and serialize/parse round-trips exactly.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .agents import AgentConfig, AlphaSchedule, BackendConfig, EpsilonSchedule
from .env import ArmSpec, RewardStructure, TaskSpec, TwoArmEnv


class ConfigError(ValueError):
    """Bad configuration text: syntax, unknown key, or constraint violation."""


_HALF_PI = 1.5707963267948966

DEFAULTS: dict = {
    "environment": {
        "arm1": {
            "link_lengths": [0.4, 0.4],
            "base_position": [-0.5, 0.0],
            "joint_limits": [[-_HALF_PI, _HALF_PI], [-_HALF_PI, _HALF_PI]],
        },
        "arm2": {
            "link_lengths": [0.4, 0.4],
            "base_position": [0.5, 0.0],
            "joint_limits": [[-_HALF_PI, _HALF_PI], [-_HALF_PI, _HALF_PI]],
        },
        "delta": 0.05,
        "start_region1": [[-0.4, 0.4], [-0.4, 0.4]],
        "start_region2": [[-0.4, 0.4], [-0.4, 0.4]],
    },
    "task": {
        "p_target1": [-0.35, 0.55],
        "p_target2": [0.35, 0.55],
        "success_dist_tol": 0.1,
        "success_angle_tol": 0.15,
        "horizon": 100,
        "noise_sigma": 0.005,
    },
    "agent": {
        "algorithm": "darl",
        "gamma": 0.95,
        "alpha": {"kind": "constant", "value": 0.25},
        "epsilon": {"initial": 1.0, "final": 0.05, "decay_episodes": 4000},
        "backend": {
            "kind": "tabular",
            "bins_per_joint": 8,
            "hidden_layers": [64, 64],
            "learning_rate": 0.001,
            "batch_size": 32,
            "buffer_capacity": 20000,
            "target_refresh": 200,
            "grad_clip": 10.0,
        },
        "solver_support_cap": 2,
    },
    "reward": {
        "structure": "rs1",
        "kappa1": 0.5,
        "kappa2": 0.5,
        "kappa": 1.0,
    },
    "run": {
        "n_episodes": 10000,
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        "eval_every": 0,
        "success_window": 500,
    },
    "output": {
        "out_dir": "runs/latest",
        "checkpoint_every": 0,
    },
}


def _merge_over_defaults(user: dict, defaults: dict, path: str = "") -> dict:
    """Defaults overridden by user values; any key absent from the schema
    is rejected with its full dotted path."""
    merged = {}
    for key, default_value in defaults.items():
        if key in user:
            user_value = user[key]
            if isinstance(default_value, dict):
                if not isinstance(user_value, dict):
                    raise ConfigError(f"{path}{key} must be a mapping")
                merged[key] = _merge_over_defaults(user_value, default_value, f"{path}{key}.")
            else:
                merged[key] = copy.deepcopy(user_value)
        else:
            merged[key] = copy.deepcopy(default_value)
    unknown = set(user) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(path + k for k in unknown))}")
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description.

    raw holds the canonical merged mapping; every constructed object below
    is derived from it, and serialization goes back through it.
    """

    raw: dict
    arm1: ArmSpec
    arm2: ArmSpec
    task: TaskSpec
    delta: float
    start_region1: np.ndarray
    start_region2: np.ndarray
    agent: AgentConfig
    reward: RewardStructure
    n_episodes: int
    seeds: tuple[int, ...]
    eval_every: int
    success_window: int
    out_dir: str
    checkpoint_every: int

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def build_env(self) -> TwoArmEnv:
        return TwoArmEnv(
            self.arm1,
            self.arm2,
            self.task,
            delta=self.delta,
            start_region1=self.start_region1,
            start_region2=self.start_region2,
        )

    def replace(self, dotted_key: str, value) -> "ExperimentConfig":
        """New config with one dotted key overridden, e.g. ('reward.kappa1', 0.7)."""
        raw = self.to_dict()
        node = raw
        *parents, leaf = dotted_key.split(".")
        for part in parents:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"no config section {part!r} in path {dotted_key!r}")
            node = node[part]
        if leaf not in node:
            raise ConfigError(f"no config key {dotted_key!r}")
        node[leaf] = value
        return config_from_dict(raw)


def _build_arm(section: dict, name: str) -> ArmSpec:
    try:
        return ArmSpec(
            np.asarray(section["link_lengths"], dtype=float),
            np.asarray(section["base_position"], dtype=float),
            np.asarray(section["joint_limits"], dtype=float),
        )
    except ValueError as exc:
        raise ConfigError(f"environment.{name}: {exc}") from exc


def config_from_dict(user: dict) -> ExperimentConfig:
    merged = _merge_over_defaults(user or {}, DEFAULTS)
    env_sec = merged["environment"]
    task_sec = merged["task"]
    agent_sec = merged["agent"]
    reward_sec = merged["reward"]
    run_sec = merged["run"]
    out_sec = merged["output"]

    arm1 = _build_arm(env_sec["arm1"], "arm1")
    arm2 = _build_arm(env_sec["arm2"], "arm2")
    try:
        task = TaskSpec(
            np.asarray(task_sec["p_target1"], dtype=float),
            np.asarray(task_sec["p_target2"], dtype=float),
            success_dist_tol=float(task_sec["success_dist_tol"]),
            success_angle_tol=float(task_sec["success_angle_tol"]),
            horizon=int(task_sec["horizon"]),
            noise_sigma=float(task_sec["noise_sigma"]),
        )
    except ValueError as exc:
        raise ConfigError(f"task: {exc}") from exc

    try:
        backend_sec = agent_sec["backend"]
        cap = agent_sec["solver_support_cap"]
        agent = AgentConfig(
            algorithm=str(agent_sec["algorithm"]),
            gamma=float(agent_sec["gamma"]),
            alpha=AlphaSchedule(str(agent_sec["alpha"]["kind"]), float(agent_sec["alpha"]["value"])),
            epsilon=EpsilonSchedule(
                float(agent_sec["epsilon"]["initial"]),
                float(agent_sec["epsilon"]["final"]),
                int(agent_sec["epsilon"]["decay_episodes"]),
            ),
            backend=BackendConfig(
                kind=str(backend_sec["kind"]),
                bins_per_joint=int(backend_sec["bins_per_joint"]),
                hidden_layers=tuple(int(h) for h in backend_sec["hidden_layers"]),
                learning_rate=float(backend_sec["learning_rate"]),
                batch_size=int(backend_sec["batch_size"]),
                buffer_capacity=int(backend_sec["buffer_capacity"]),
                target_refresh=int(backend_sec["target_refresh"]),
                grad_clip=float(backend_sec["grad_clip"]),
            ),
            solver_support_cap=None if cap is None else int(cap),
        )
    except ValueError as exc:
        raise ConfigError(f"agent: {exc}") from exc

    try:
        reward = RewardStructure(
            kind=str(reward_sec["structure"]),
            kappa1=float(reward_sec["kappa1"]),
            kappa2=float(reward_sec["kappa2"]),
            kappa=float(reward_sec["kappa"]),
        )
    except ValueError as exc:
        raise ConfigError(f"reward: {exc}") from exc

    seeds = tuple(int(s) for s in run_sec["seeds"])
    if len(set(seeds)) != len(seeds):
        raise ConfigError("run.seeds must be distinct")
    n_episodes = int(run_sec["n_episodes"])
    if n_episodes < 1:
        raise ConfigError("run.n_episodes must be >= 1")
    success_window = int(run_sec["success_window"])
    if success_window < 1:
        raise ConfigError("run.success_window must be >= 1")

    cfg = ExperimentConfig(
        raw=merged,
        arm1=arm1,
        arm2=arm2,
        task=task,
        delta=float(env_sec["delta"]),
        start_region1=np.asarray(env_sec["start_region1"], dtype=float),
        start_region2=np.asarray(env_sec["start_region2"], dtype=float),
        agent=agent,
        reward=reward,
        n_episodes=n_episodes,
        seeds=seeds,
        eval_every=int(run_sec["eval_every"]),
        success_window=success_window,
        out_dir=str(out_sec["out_dir"]),
        checkpoint_every=int(out_sec["checkpoint_every"]),
    )
    try:
        cfg.build_env()  # surfaces reachability / start-region problems at parse time
    except ValueError as exc:
        raise ConfigError(f"environment: {exc}") from exc
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse YAML text into a validated ExperimentConfig."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"syntax error{where}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the resolved config (independent of formatting)."""
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]
