"""Experiment orchestration: episode loop, multi-seed campaigns, metrics.

A campaign runs one independent worker per seed (optionally in parallel
processes), each owning its environment, learner pair and rng stream.
Everything written to the output directory is reproducible from the config
alone; wall-clock timing is kept out of the metrics files so that repeated
runs are byte-identical.
"""

from __future__ import annotations

import multiprocessing
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import LearnerPair, act_darl, act_gtrl, NashSolverHook
from .config import ExperimentConfig, config_hash, serialize_config
from .env import TwoArmEnv, is_success, rewards, systemwide_reward
from .qfunc import (
    CHECKPOINT_VERSION,
    CheckpointError,
    DenseApproximator,
    QTable,
    TrainingDivergenceError,
)

METRICS_COLUMNS = ("episode", "avg_r1", "avg_r2", "fig2_metric", "return", "success", "steps")


class CampaignError(RuntimeError):
    """A campaign could not start or a seed worker failed."""


@dataclass
class EpisodeRecord:
    episode: int
    seed: int
    sum_r1: float
    sum_r2: float
    avg_r1: float
    avg_r2: float
    discounted_return: float
    success: bool
    steps: int
    duration: float

    @property
    def fig2_metric(self) -> float:
        """The learning-curve metric: average r1 plus average r2."""
        return self.avg_r1 + self.avg_r2


@dataclass
class CampaignSummary:
    seeds: tuple[int, ...]
    n_episodes: int
    success_window: int
    config_digest: str
    fig2_mean: np.ndarray
    fig2_std: np.ndarray
    success_rolling_mean: np.ndarray
    final_success_per_seed: tuple[float, ...]
    final_success_ratio: float
    solver_fallbacks: tuple[int, ...]
    wall_clock_seconds: float

    def derived_equal(self, other: "CampaignSummary") -> bool:
        """Equality of everything except timing."""
        return (
            self.seeds == other.seeds
            and self.n_episodes == other.n_episodes
            and self.success_window == other.success_window
            and self.config_digest == other.config_digest
            and np.array_equal(self.fig2_mean, other.fig2_mean)
            and np.array_equal(self.fig2_std, other.fig2_std)
            and np.array_equal(self.success_rolling_mean, other.success_rolling_mean)
            and self.final_success_per_seed == other.final_success_per_seed
            and self.solver_fallbacks == other.solver_fallbacks
        )


def run_episode(
    env: TwoArmEnv,
    learner: LearnerPair,
    cfg: ExperimentConfig,
    episode: int,
    seed: int,
    rng: np.random.Generator,
    learn: bool = True,
) -> EpisodeRecord:
    """One episode: act, step, reward, update; stops early on success.

    Success is checked on each post-step state (never the reset state), and
    a success step is the episode's terminal transition.  Horizon cutoffs
    are truncations, not terminals: the bootstrap term is kept.
    """
    started = time.perf_counter()
    state = env.reset(rng)
    coded = learner.encode(state)
    epsilon = learner.epsilon_at(episode) if learn else 0.0
    sum_r1 = sum_r2 = 0.0
    discounted = 0.0
    gamma_pow = 1.0
    success = False
    steps = 0
    for _ in range(cfg.task.horizon):
        step = learner.act(coded, epsilon, rng)
        nxt = env.step_indices(state, step.a1, step.a2, rng)
        r1, r2 = rewards(nxt, cfg.task, cfg.reward)
        success = is_success(nxt, cfg.task)
        coded_next = learner.encode(nxt)
        if learn:
            learner.observe(coded, step.a1, step.a2, r1, r2, coded_next, success, rng)
        sum_r1 += r1
        sum_r2 += r2
        discounted += gamma_pow * systemwide_reward(r1, r2)
        gamma_pow *= cfg.agent.gamma
        steps += 1
        state, coded = nxt, coded_next
        if success:
            break
    return EpisodeRecord(
        episode=episode,
        seed=seed,
        sum_r1=sum_r1,
        sum_r2=sum_r2,
        avg_r1=sum_r1 / steps,
        avg_r2=sum_r2 / steps,
        discounted_return=discounted,
        success=success,
        steps=steps,
        duration=time.perf_counter() - started,
    )


@dataclass
class SeedResult:
    seed: int
    records: list[EpisodeRecord]
    solver_fallbacks: int


def _run_seed(cfg: ExperimentConfig, seed: int, out_dir: str | None) -> SeedResult:
    rng = np.random.default_rng(seed)
    env = cfg.build_env()
    learner = LearnerPair(cfg.agent, env, rng)
    records = []
    checkpoint_path = None
    if out_dir is not None:
        ckpt_dir = Path(out_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = ckpt_dir / f"seed{seed:04d}.npz"
    for episode in range(cfg.n_episodes):
        try:
            records.append(run_episode(env, learner, cfg, episode, seed, rng))
        except TrainingDivergenceError as exc:
            raise CampaignError(f"seed {seed} diverged at episode {episode}: {exc}") from exc
        if (
            checkpoint_path is not None
            and cfg.checkpoint_every > 0
            and (episode + 1) % cfg.checkpoint_every == 0
        ):
            save_checkpoint_pair(checkpoint_path, learner.q1, learner.q2)
    if checkpoint_path is not None:
        save_checkpoint_pair(checkpoint_path, learner.q1, learner.q2)
    return SeedResult(seed, records, learner.hook.fallbacks)


def _seed_worker(args) -> SeedResult:
    cfg, seed, out_dir = args
    return _run_seed(cfg, seed, out_dir)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_metrics(path: Path, result: SeedResult):
    lines = [f"# seed={result.seed}", f"# solver_fallbacks={result.solver_fallbacks}"]
    lines.append(",".join(METRICS_COLUMNS))
    for rec in result.records:
        lines.append(
            ",".join(
                (
                    str(rec.episode),
                    _format_float(rec.avg_r1),
                    _format_float(rec.avg_r2),
                    _format_float(rec.fig2_metric),
                    _format_float(rec.discounted_return),
                    str(int(rec.success)),
                    str(rec.steps),
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")


def read_metrics(path: Path) -> SeedResult:
    seed = None
    fallbacks = 0
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key == "seed":
                    seed = int(value)
                elif key == "solver_fallbacks":
                    fallbacks = int(value)
                continue
            if line.startswith("episode,"):
                continue
            parts = line.split(",")
            episode = int(parts[0])
            avg_r1, avg_r2 = float(parts[1]), float(parts[2])
            ret = float(parts[4])
            success = bool(int(parts[5]))
            steps = int(parts[6])
            records.append(
                EpisodeRecord(
                    episode=episode,
                    seed=seed if seed is not None else -1,
                    sum_r1=avg_r1 * steps,
                    sum_r2=avg_r2 * steps,
                    avg_r1=avg_r1,
                    avg_r2=avg_r2,
                    discounted_return=ret,
                    success=success,
                    steps=steps,
                    duration=0.0,
                )
            )
    if seed is None:
        raise CampaignError(f"metrics file {path} lacks a seed header")
    return SeedResult(seed, records, fallbacks)


def rolling_ratio(flags: np.ndarray, window: int) -> np.ndarray:
    """Trailing-window mean of a boolean series (shorter prefix windows at
    the start)."""
    x = np.asarray(flags, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    n = len(x)
    out = np.empty(n)
    for e in range(n):
        lo = max(0, e - window + 1)
        out[e] = (csum[e + 1] - csum[lo]) / (e + 1 - lo)
    return out


def summarize(results: list[SeedResult], cfg: ExperimentConfig, wall_clock: float = 0.0) -> CampaignSummary:
    results = sorted(results, key=lambda r: r.seed)
    n_episodes = cfg.n_episodes
    fig2 = np.array([[rec.fig2_metric for rec in r.records] for r in results])
    success = np.array([[rec.success for rec in r.records] for r in results], dtype=float)
    rolling = np.stack([rolling_ratio(row, cfg.success_window) for row in success])
    final_per_seed = tuple(float(row[-1]) for row in rolling)
    return CampaignSummary(
        seeds=tuple(r.seed for r in results),
        n_episodes=n_episodes,
        success_window=cfg.success_window,
        config_digest=config_hash(cfg),
        fig2_mean=fig2.mean(axis=0),
        fig2_std=fig2.std(axis=0, ddof=1) if len(results) > 1 else np.zeros(n_episodes),
        success_rolling_mean=rolling.mean(axis=0),
        final_success_per_seed=final_per_seed,
        final_success_ratio=float(np.mean(final_per_seed)),
        solver_fallbacks=tuple(r.solver_fallbacks for r in results),
        wall_clock_seconds=wall_clock,
    )


def write_summary(out_dir: Path, summary: CampaignSummary):
    import yaml

    curves = ["episode," + "fig2_mean,fig2_std,success_rolling_mean"]
    for e in range(summary.n_episodes):
        curves.append(
            f"{e},{_format_float(summary.fig2_mean[e])},"
            f"{_format_float(summary.fig2_std[e])},{_format_float(summary.success_rolling_mean[e])}"
        )
    (out_dir / "curves.csv").write_text("\n".join(curves) + "\n")
    payload = {
        "seeds": list(summary.seeds),
        "n_episodes": summary.n_episodes,
        "success_window": summary.success_window,
        "config_digest": summary.config_digest,
        "final_success_per_seed": [float(v) for v in summary.final_success_per_seed],
        "final_success_ratio": summary.final_success_ratio,
        "solver_fallbacks": list(summary.solver_fallbacks),
        "timing": {"wall_clock_seconds": summary.wall_clock_seconds},
        "files": {
            "curves": "curves.csv",
            "metrics": [f"metrics_seed{seed:04d}.csv" for seed in summary.seeds],
        },
    }
    (out_dir / "summary.yaml").write_text(yaml.safe_dump(payload, sort_keys=True))


def summary_from_metrics(out_dir, cfg: ExperimentConfig) -> CampaignSummary:
    """Recompute the summary purely from the per-seed metrics files."""
    out = Path(out_dir)
    results = [read_metrics(out / f"metrics_seed{seed:04d}.csv") for seed in cfg.seeds]
    return summarize(results, cfg)


def run_campaign(cfg: ExperimentConfig, workers: int = 1, quiet: bool = True) -> CampaignSummary:
    """Train every seed, persist metrics/curves/summary/checkpoints, return
    the summary.  Per-seed workers are fully independent, so results do not
    depend on the level of parallelism."""
    started = time.perf_counter()
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise CampaignError(f"output directory {out} is not writable: {exc}") from exc
    (out / "config.yaml").write_text(serialize_config(cfg))

    jobs = [(cfg, seed, str(out)) for seed in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(workers, len(jobs))) as pool:
            results = pool.map(_seed_worker, jobs)
    else:
        results = [_seed_worker(job) for job in jobs]

    for result in results:
        write_metrics(out / f"metrics_seed{result.seed:04d}.csv", result)
        if not quiet:
            tail = result.records[-1]
            print(
                f"seed {result.seed}: final fig2={tail.fig2_metric:.3f} "
                f"success_rate={np.mean([r.success for r in result.records[-cfg.success_window:]]):.3f}"
            )
    summary = summarize(results, cfg, wall_clock=time.perf_counter() - started)
    write_summary(out, summary)
    return summary


def save_checkpoint_pair(path, q1, q2):
    """Both agents' backends in one self-describing npz file."""
    arrays = {"format_version": CHECKPOINT_VERSION, "kind": q1.kind}
    for tag, backend in (("q1", q1), ("q2", q2)):
        if isinstance(backend, QTable):
            arrays[f"{tag}_shape"] = np.array([backend.n_states, backend.n_a1, backend.n_a2])
            arrays[f"{tag}_default"] = backend.default_value
            arrays[f"{tag}_values"] = backend.values
        else:
            arrays[f"{tag}_layer_sizes"] = np.array(backend.layer_sizes)
            arrays[f"{tag}_actions"] = np.array([backend.n_a1, backend.n_a2])
            for layer, (w, b) in enumerate(zip(backend.weights, backend.biases)):
                arrays[f"{tag}_w{layer}"] = w
                arrays[f"{tag}_b{layer}"] = b
    np.savez(path, **arrays)


def load_checkpoint_pair(path):
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise CheckpointError(f"no checkpoint at {path}")
    version = int(data["format_version"])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    kind = str(data["kind"])
    backends = []
    for tag in ("q1", "q2"):
        if kind == "qtable":
            n_states, n_a1, n_a2 = (int(v) for v in data[f"{tag}_shape"])
            table = QTable(n_states, n_a1, n_a2, float(data[f"{tag}_default"]))
            table.values = data[f"{tag}_values"].astype(float)
            backends.append(table)
        elif kind == "dense":
            layer_sizes = [int(v) for v in data[f"{tag}_layer_sizes"]]
            n_a1, n_a2 = (int(v) for v in data[f"{tag}_actions"])
            net = DenseApproximator.__new__(DenseApproximator)
            net.layer_sizes = layer_sizes
            net.n_a1 = n_a1
            net.n_a2 = n_a2
            net.weights = [data[f"{tag}_w{layer}"].astype(float) for layer in range(len(layer_sizes) - 1)]
            net.biases = [data[f"{tag}_b{layer}"].astype(float) for layer in range(len(layer_sizes) - 1)]
            backends.append(net)
        else:
            raise CheckpointError(f"unknown backend kind {kind!r}")
    return backends[0], backends[1]


class FrozenPolicyPair:
    """Greedy/equilibrium acting from loaded backends, no learning."""

    def __init__(self, cfg, env: TwoArmEnv, q1, q2):
        self.cfg = cfg.agent
        self.env = env
        self.q1 = q1
        self.q2 = q2
        self.hook = NashSolverHook(cfg.agent.solver_support_cap)
        self.backend_kind = "tabular" if isinstance(q1, QTable) else "approximator"

    def encode(self, state):
        if self.backend_kind == "tabular":
            return self.env.discretize_state(state, self.cfg.backend.bins_per_joint)
        return self.env.features(state)

    def epsilon_at(self, episode: int) -> float:
        return 0.0

    def act(self, coded_state, epsilon, rng):
        if self.cfg.algorithm == "darl":
            return act_darl(self.q1, self.q2, coded_state, epsilon, rng)
        return act_gtrl(self.q1, self.q2, coded_state, epsilon, self.hook, rng)

    def observe(self, *args, **kwargs):
        raise RuntimeError("frozen policy does not learn")


def evaluate(checkpoint_path, cfg: ExperimentConfig, n_eval_episodes: int, rng: np.random.Generator):
    """Greedy rollouts of a checkpointed policy pair.

    Returns (success_ratio, mean_discounted_return).
    """
    if n_eval_episodes < 1:
        raise ValueError("n_eval_episodes must be >= 1")
    q1, q2 = load_checkpoint_pair(checkpoint_path)
    env = cfg.build_env()
    if isinstance(q1, QTable):
        expected = (env.n_states(cfg.agent.backend.bins_per_joint), env.n_actions1, env.n_actions2)
        got = (q1.n_states, q1.n_a1, q1.n_a2)
        if expected != got:
            raise CheckpointError(f"checkpoint shape {got} does not match config {expected}")
        if cfg.agent.backend.kind != "tabular":
            raise CheckpointError("tabular checkpoint but config wants an approximator backend")
    else:
        if cfg.agent.backend.kind != "approximator":
            raise CheckpointError("approximator checkpoint but config wants a tabular backend")
        if q1.layer_sizes[0] != env.feature_dim or q1.n_a1 != env.n_actions1 or q1.n_a2 != env.n_actions2:
            raise CheckpointError("checkpoint network shape does not match the configured environment")
    policy = FrozenPolicyPair(cfg, env, q1, q2)
    successes = 0
    returns = []
    for episode in range(n_eval_episodes):
        rec = run_episode(env, policy, cfg, episode, seed=-1, rng=rng, learn=False)
        successes += rec.success
        returns.append(rec.discounted_return)
    return successes / n_eval_episodes, float(np.mean(returns))


def random_policy_stats(cfg: ExperimentConfig, n_episodes: int, rng: np.random.Generator):
    """Success ratio and mean return of the uniform-random joint policy,
    the baseline that calibrated success thresholds must stay well below."""
    env = cfg.build_env()
    successes = 0
    returns = []
    for _ in range(n_episodes):
        state = env.reset(rng)
        discounted = 0.0
        gamma_pow = 1.0
        hit = False
        for _ in range(cfg.task.horizon):
            a1 = int(rng.integers(env.n_actions1))
            a2 = int(rng.integers(env.n_actions2))
            state = env.step_indices(state, a1, a2, rng)
            r1, r2 = rewards(state, cfg.task, cfg.reward)
            discounted += gamma_pow * (r1 + r2)
            gamma_pow *= cfg.agent.gamma
            if is_success(state, cfg.task):
                hit = True
                break
        successes += hit
        returns.append(discounted)
    return successes / n_episodes, float(np.mean(returns))
