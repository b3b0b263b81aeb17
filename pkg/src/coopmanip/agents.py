"""The two learning rules and their exploration machinery.

darl: each agent runs independent Q-learning on its own reward, reducing
the jointly-indexed table by an optimistic max over the opponent's action.

gtrl: Nash-Q.  Each update solves the bimatrix game formed by the two
agents' value matrices at the next state, selects one equilibrium, and
bootstraps both agents' targets through that equilibrium's strategies.
The same selected equilibrium drives action sampling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .games import BimatrixGame, EquilibriumProfile, MixedStrategy, solve_and_select, verify_equilibrium
from .qfunc import (
    DenseApproximator,
    QTable,
    ReplayBuffer,
    Transition,
    approximator_update,
    q_matrix,
    replay_sample,
    tabular_update,
    td_target_nash,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaSchedule:
    """Learning rate: a constant, or 1 / (1 + visits(s, a1, a2))."""

    kind: str = "constant"
    value: float = 0.25

    def __post_init__(self):
        if self.kind not in ("constant", "visit_count"):
            raise ValueError(f"unknown alpha schedule {self.kind!r}")
        if self.kind == "constant" and not 0.0 <= self.value <= 1.0:
            raise ValueError("constant alpha must lie in [0, 1]")


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from initial to final over decay_episodes episodes."""

    initial: float = 1.0
    final: float = 0.05
    decay_episodes: int = 4000

    def __post_init__(self):
        if not (0.0 <= self.final <= self.initial <= 1.0):
            raise ValueError("need 0 <= final <= initial <= 1")
        if self.decay_episodes < 1:
            raise ValueError("decay horizon must be >= 1")

    def at(self, episode: int) -> float:
        if episode >= self.decay_episodes:
            return self.final
        frac = max(episode, 0) / self.decay_episodes
        return self.initial + (self.final - self.initial) * frac


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "tabular"
    bins_per_joint: int = 8
    hidden_layers: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 20_000
    target_refresh: int = 200
    grad_clip: float = 10.0

    def __post_init__(self):
        if self.kind not in ("tabular", "approximator"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "tabular" and self.bins_per_joint < 2:
            raise ValueError("bins_per_joint must be >= 2")


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "darl"
    gamma: float = 0.95
    alpha: AlphaSchedule = field(default_factory=AlphaSchedule)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    backend: BackendConfig = field(default_factory=BackendConfig)
    solver_support_cap: int | None = 2

    def __post_init__(self):
        if self.algorithm not in ("darl", "gtrl"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass(frozen=True)
class JointPolicyStep:
    """Chosen joint action plus the strategies it was drawn from."""

    a1: int
    a2: int
    mu1: MixedStrategy
    mu2: MixedStrategy
    source: str  # "exploration" when any agent overrode, else "greedy"/"nash"


class NashSolverHook:
    """Solve-and-select wrapper shared by gtrl acting and updating.

    Caches the selected equilibrium per tabular state index (a state's game
    only changes when that state's cells are updated) and counts fallbacks,
    i.e. states where no equilibrium was found within the support cap.
    """

    def __init__(self, support_cap: int | None = 2, debug_verify: bool = False):
        self.support_cap = support_cap
        self.debug_verify = debug_verify
        self.solve_calls = 0
        self.fallbacks = 0
        self._cache: dict[int, EquilibriumProfile | None] = {}

    def solve_at(self, q1, q2, state) -> EquilibriumProfile | None:
        cacheable = isinstance(state, (int, np.integer))
        if cacheable and state in self._cache:
            return self._cache[state]
        m1 = q_matrix(q1, state)
        m2 = q_matrix(q2, state)
        game = BimatrixGame(m1.copy(), m2.copy())
        self.solve_calls += 1
        profile = solve_and_select(game, support_cap=self.support_cap)
        if profile is None:
            self.fallbacks += 1
            log.debug("no equilibrium within support cap at state %r; greedy fallback", state)
        elif self.debug_verify and not verify_equilibrium(game, profile, tol=1e-9):
            raise AssertionError(f"selected profile fails equilibrium verification at state {state!r}")
        if cacheable:
            self._cache[int(state)] = profile
        return profile

    def invalidate(self, state):
        if isinstance(state, (int, np.integer)):
            self._cache.pop(int(state), None)
        else:
            self._cache.clear()


def greedy_action_agent1(m: np.ndarray) -> int:
    """Own-row argmax under optimistic max over the opponent; lowest index wins ties."""
    return int(np.argmax(m.max(axis=1)))


def greedy_action_agent2(m: np.ndarray) -> int:
    return int(np.argmax(m.max(axis=0)))


def act_darl(q1, q2, state, epsilon: float, rng: np.random.Generator) -> JointPolicyStep:
    """Independent epsilon-greedy action for each agent.

    Draws are ordered agent 1 coin, agent 1 action (if exploring), agent 2
    coin, agent 2 action, which pins the rng stream for reproducibility.
    """
    m1 = q_matrix(q1, state)
    m2 = q_matrix(q2, state)
    explored = False
    if rng.random() < epsilon:
        a1 = int(rng.integers(m1.shape[0]))
        explored = True
    else:
        a1 = greedy_action_agent1(m1)
    if rng.random() < epsilon:
        a2 = int(rng.integers(m2.shape[1]))
        explored = True
    else:
        a2 = greedy_action_agent2(m2)
    return JointPolicyStep(
        a1,
        a2,
        MixedStrategy.pure(a1, m1.shape[0]),
        MixedStrategy.pure(a2, m2.shape[1]),
        "exploration" if explored else "greedy",
    )


def resolve_alpha(schedule: AlphaSchedule, visits: np.ndarray | None, state, a1: int, a2: int) -> float:
    if schedule.kind == "constant":
        return schedule.value
    if visits is None:
        raise ValueError("visit-count schedule requires a visit table")
    return 1.0 / (1.0 + float(visits[state, a1, a2]))


def update_darl(
    q_k,
    state,
    a1: int,
    a2: int,
    r_k: float,
    next_state,
    cfg: AgentConfig,
    visits: np.ndarray | None = None,
    terminal: bool = False,
):
    """Q-learning step toward r + gamma * max over the whole next matrix
    (own max after optimistic opponent aggregation), stored at the realized
    joint cell."""
    target = r_k if terminal else r_k + cfg.gamma * float(q_matrix(q_k, next_state).max())
    alpha = resolve_alpha(cfg.alpha, visits, state, a1, a2)
    if isinstance(q_k, QTable):
        return tabular_update(q_k, state, a1, a2, target, alpha)
    flat = a1 * q_k.n_a2 + a2
    net, _ = approximator_update(q_k, [(state, flat, target)], cfg.backend.learning_rate, cfg.backend.grad_clip)
    return net


def act_gtrl(
    q1,
    q2,
    state,
    epsilon: float,
    hook: NashSolverHook,
    rng: np.random.Generator,
) -> JointPolicyStep:
    """Sample each agent's action from the selected equilibrium strategy,
    with independent epsilon-probability uniform overrides.

    mu1/mu2 always record the equilibrium strategies, even when an override
    fired.  If the solver found nothing, both agents fall back to the
    optimistic greedy choice (counted on the hook).
    """
    profile = hook.solve_at(q1, q2, state)
    if profile is None:
        m1 = q_matrix(q1, state)
        m2 = q_matrix(q2, state)
        g1 = greedy_action_agent1(m1)
        g2 = greedy_action_agent2(m2)
        mu1 = MixedStrategy.pure(g1, m1.shape[0])
        mu2 = MixedStrategy.pure(g2, m2.shape[1])
    else:
        mu1, mu2 = profile.mu1, profile.mu2
    explored = False
    if rng.random() < epsilon:
        a1 = int(rng.integers(len(mu1.probs)))
        explored = True
    else:
        a1 = mu1.sample(rng)
    if rng.random() < epsilon:
        a2 = int(rng.integers(len(mu2.probs)))
        explored = True
    else:
        a2 = mu2.sample(rng)
    source = "exploration" if explored else ("nash" if profile is not None else "greedy")
    return JointPolicyStep(a1, a2, mu1, mu2, source)


def update_gtrl(
    q1,
    q2,
    state,
    a1: int,
    a2: int,
    r1: float,
    r2: float,
    next_state,
    cfg: AgentConfig,
    hook: NashSolverHook,
    visits: np.ndarray | None = None,
    terminal: bool = False,
):
    """Nash-Q update: one equilibrium solve at the next state shared by both
    agents' targets, then the same-alpha backend update at the realized cell.

    When the solver finds nothing, the bilinear bootstrap term degrades to
    each agent's optimistic max (counted on the hook).
    """
    if terminal:
        t1, t2 = float(r1), float(r2)
    else:
        profile = hook.solve_at(q1, q2, next_state)
        n1 = q_matrix(q1, next_state)
        n2 = q_matrix(q2, next_state)
        if profile is None:
            t1 = r1 + cfg.gamma * float(n1.max())
            t2 = r2 + cfg.gamma * float(n2.max())
        else:
            t1 = td_target_nash(r1, cfg.gamma, n1, profile.mu1, profile.mu2)
            t2 = td_target_nash(r2, cfg.gamma, n2, profile.mu1, profile.mu2)
    alpha = resolve_alpha(cfg.alpha, visits, state, a1, a2)
    if isinstance(q1, QTable):
        tabular_update(q1, state, a1, a2, t1, alpha)
        tabular_update(q2, state, a1, a2, t2, alpha)
    else:
        flat = a1 * q1.n_a2 + a2
        approximator_update(q1, [(state, flat, t1)], cfg.backend.learning_rate, cfg.backend.grad_clip)
        approximator_update(q2, [(state, flat, t2)], cfg.backend.learning_rate, cfg.backend.grad_clip)
    hook.invalidate(state)
    return q1, q2


class LearnerPair:
    """Owns the two backends plus schedules, visit counts, replay machinery
    and the solver hook; drives the spec operations from the episode loop.

    One instance per training worker.  Backends are single-writer: only
    this object mutates them.
    """

    def __init__(self, cfg: AgentConfig, env, rng: np.random.Generator):
        self.cfg = cfg
        self.env = env
        backend = cfg.backend
        n_a1, n_a2 = env.n_actions1, env.n_actions2
        if backend.kind == "tabular":
            n_states = env.n_states(backend.bins_per_joint)
            self.q1 = QTable(n_states, n_a1, n_a2)
            self.q2 = QTable(n_states, n_a1, n_a2)
            self.visits = (
                np.zeros((n_states, n_a1, n_a2), dtype=np.int64) if cfg.alpha.kind == "visit_count" else None
            )
            self.buffer = None
            self._targets = None
        else:
            sizes = [env.feature_dim, *backend.hidden_layers, n_a1 * n_a2]
            self.q1 = DenseApproximator(sizes, n_a1, n_a2, rng)
            self.q2 = DenseApproximator(sizes, n_a1, n_a2, rng)
            self.visits = None
            self.buffer = ReplayBuffer(backend.buffer_capacity)
            self._targets = (self.q1.clone(), self.q2.clone())
            self._updates_since_refresh = 0
        self.hook = NashSolverHook(cfg.solver_support_cap)

    def encode(self, state):
        if self.cfg.backend.kind == "tabular":
            return self.env.discretize_state(state, self.cfg.backend.bins_per_joint)
        return self.env.features(state)

    def epsilon_at(self, episode: int) -> float:
        return self.cfg.epsilon.at(episode)

    def act(self, coded_state, epsilon: float, rng: np.random.Generator) -> JointPolicyStep:
        if self.cfg.algorithm == "darl":
            return act_darl(self.q1, self.q2, coded_state, epsilon, rng)
        return act_gtrl(self.q1, self.q2, coded_state, epsilon, self.hook, rng)

    def observe(self, coded_state, a1, a2, r1, r2, coded_next, terminal, rng: np.random.Generator):
        if self.cfg.backend.kind == "tabular":
            if self.cfg.algorithm == "darl":
                update_darl(self.q1, coded_state, a1, a2, r1, coded_next, self.cfg, self.visits, terminal)
                update_darl(self.q2, coded_state, a1, a2, r2, coded_next, self.cfg, self.visits, terminal)
                self.hook.invalidate(coded_state)
            else:
                update_gtrl(
                    self.q1, self.q2, coded_state, a1, a2, r1, r2, coded_next, self.cfg, self.hook, self.visits, terminal
                )
            if self.visits is not None:
                self.visits[coded_state, a1, a2] += 1
        else:
            self.buffer.push(Transition(coded_state, a1, a2, r1, r2, coded_next, terminal))
            batch = replay_sample(self.buffer, self.cfg.backend.batch_size, rng)
            if batch is not None:
                self._replay_update(batch)

    def _replay_update(self, batch: list[Transition]):
        """Batched targets through the frozen target networks (and, for
        gtrl, through the equilibrium of the target nets' games)."""
        cfg = self.cfg
        tq1, tq2 = self._targets
        rows1, rows2 = [], []
        for tr in batch:
            flat = tr.a1 * self.q1.n_a2 + tr.a2
            if tr.terminal:
                t1, t2 = tr.r1, tr.r2
            else:
                n1 = q_matrix(tq1, tr.next_state)
                n2 = q_matrix(tq2, tr.next_state)
                if cfg.algorithm == "darl":
                    t1 = tr.r1 + cfg.gamma * float(n1.max())
                    t2 = tr.r2 + cfg.gamma * float(n2.max())
                else:
                    profile = solve_and_select(BimatrixGame(n1, n2), support_cap=cfg.solver_support_cap)
                    self.hook.solve_calls += 1
                    if profile is None:
                        self.hook.fallbacks += 1
                        t1 = tr.r1 + cfg.gamma * float(n1.max())
                        t2 = tr.r2 + cfg.gamma * float(n2.max())
                    else:
                        t1 = td_target_nash(tr.r1, cfg.gamma, n1, profile.mu1, profile.mu2)
                        t2 = td_target_nash(tr.r2, cfg.gamma, n2, profile.mu1, profile.mu2)
            rows1.append((tr.state, flat, t1))
            rows2.append((tr.state, flat, t2))
        approximator_update(self.q1, rows1, cfg.backend.learning_rate, cfg.backend.grad_clip)
        approximator_update(self.q2, rows2, cfg.backend.learning_rate, cfg.backend.grad_clip)
        self._updates_since_refresh += 1
        if self._updates_since_refresh >= cfg.backend.target_refresh:
            self._targets = (self.q1.clone(), self.q2.clone())
            self._updates_since_refresh = 0
