"""Exact Nash equilibrium machinery for two-player bimatrix games.

Equilibria are computed by support enumeration over equal-size support
pairs, which is exact for the small action sets used here (default cap 16
actions per player).  All returned profiles are re-verified against the
best-response inequalities before they leave this module.

Tolerances follow a strict hierarchy: internal solver decisions at 1e-10,
equilibrium verification at 1e-9, leaving callers room to assert at 1e-8.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SOLVER_TOL = 1e-10
VERIFY_TOL = 1e-9
DEFAULT_SIZE_CAP = 16


class UnsupportedSizeError(ValueError):
    """Game exceeds the configured action-count cap for exact solving."""


@dataclass(frozen=True)
class BimatrixGame:
    """Payoff matrices (m1, m2) of identical shape, one per agent."""

    m1: np.ndarray
    m2: np.ndarray

    def __post_init__(self):
        m1 = np.asarray(self.m1, dtype=float)
        m2 = np.asarray(self.m2, dtype=float)
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", m2)
        if m1.ndim != 2 or m1.shape != m2.shape:
            raise ValueError(f"payoff matrices must share a 2-D shape, got {m1.shape} and {m2.shape}")
        if not (np.isfinite(m1).all() and np.isfinite(m2).all()):
            raise ValueError("payoff matrices must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.m1.shape


@dataclass(frozen=True)
class MixedStrategy:
    """Probability distribution over one agent's action set."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1:
            raise ValueError("strategy must be a 1-D probability vector")
        if (p < -SOLVER_TOL).any() or (p > 1.0 + SOLVER_TOL).any():
            raise ValueError("strategy probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"strategy probabilities must sum to 1, got {p.sum()!r}")

    @staticmethod
    def pure(index: int, n_actions: int) -> "MixedStrategy":
        p = np.zeros(n_actions)
        p[index] = 1.0
        return MixedStrategy(p)

    @staticmethod
    def uniform(n_actions: int) -> "MixedStrategy":
        return MixedStrategy(np.full(n_actions, 1.0 / n_actions))

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.probs), p=self.probs))


@dataclass(frozen=True)
class EquilibriumProfile:
    """A strategy pair together with its expected payoffs."""

    mu1: MixedStrategy
    mu2: MixedStrategy
    payoff1: float
    payoff2: float

    @property
    def supports(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        s1 = tuple(np.nonzero(self.mu1.probs > SOLVER_TOL)[0].tolist())
        s2 = tuple(np.nonzero(self.mu2.probs > SOLVER_TOL)[0].tolist())
        return s1, s2


def expected_payoffs(game: BimatrixGame, mu1: MixedStrategy, mu2: MixedStrategy) -> tuple[float, float]:
    """Bilinear payoffs (mu1' m1 mu2, mu1' m2 mu2) of a strategy profile."""
    n1, n2 = game.shape
    if len(mu1.probs) != n1 or len(mu2.probs) != n2:
        raise ValueError(
            f"strategy lengths ({len(mu1.probs)}, {len(mu2.probs)}) do not match game shape {game.shape}"
        )
    u1 = float(mu1.probs @ game.m1 @ mu2.probs)
    u2 = float(mu1.probs @ game.m2 @ mu2.probs)
    return u1, u2


def verify_equilibrium(game: BimatrixGame, profile: EquilibriumProfile, tol: float = VERIFY_TOL) -> bool:
    """True iff no pure-strategy deviation gains more than tol for either agent.

    Checking pure deviations suffices: payoffs are linear in each agent's
    own strategy, so any profitable mixed deviation implies a profitable
    pure one.
    """
    x, y = profile.mu1.probs, profile.mu2.probs
    n1, n2 = game.shape
    if len(x) != n1 or len(y) != n2:
        raise ValueError("profile dimensions do not match game")
    v1 = float(x @ game.m1 @ y)
    v2 = float(x @ game.m2 @ y)
    return bool((game.m1 @ y).max() <= v1 + tol and (x @ game.m2).max() <= v2 + tol)


def pure_equilibrium_indices(game: BimatrixGame) -> list[tuple[int, int]]:
    """All pure-strategy equilibria as (row, column) action pairs."""
    br1 = game.m1 >= game.m1.max(axis=0, keepdims=True) - SOLVER_TOL
    br2 = game.m2 >= game.m2.max(axis=1, keepdims=True) - SOLVER_TOL
    rows, cols = np.nonzero(br1 & br2)
    return list(zip(rows.tolist(), cols.tolist()))


def _pure_profile(game: BimatrixGame, i: int, j: int) -> EquilibriumProfile:
    n1, n2 = game.shape
    return EquilibriumProfile(
        MixedStrategy.pure(i, n1),
        MixedStrategy.pure(j, n2),
        float(game.m1[i, j]),
        float(game.m2[i, j]),
    )


def _mixed_candidates(game: BimatrixGame, k: int) -> list[EquilibriumProfile]:
    """Candidates on all k-vs-k support pairs, solved as one batched system.

    For supports (I, J) the opponent strategy must make the supported
    actions indifferent:

        [ M[I,J]  -1 ] [ p ]   [ 0 ]
        [  1'      0 ] [ v ] = [ 1 ]

    Singular systems (|det| below 1e-10, the degeneracy threshold) are
    skipped; the equilibria they might carry are recovered elsewhere or
    deliberately dropped, per the degenerate-game policy.
    """
    n1, n2 = game.shape
    rows = np.array(list(itertools.combinations(range(n1), k)))
    cols = np.array(list(itertools.combinations(range(n2), k)))
    n_pairs = len(rows) * len(cols)

    # sub[a, b] = M[rows[a]][:, cols[b]], flattened over pairs
    sub1 = game.m1[rows[:, None, :, None], cols[None, :, None, :]].reshape(n_pairs, k, k)
    sub2 = game.m2[rows[:, None, :, None], cols[None, :, None, :]].reshape(n_pairs, k, k)

    def assemble(blocks: np.ndarray) -> np.ndarray:
        a = np.zeros((n_pairs, k + 1, k + 1))
        a[:, :k, :k] = blocks
        a[:, :k, k] = -1.0
        a[:, k, :k] = 1.0
        return a

    a_for_y = assemble(sub1)                      # unknowns: agent 2's probs on J, value v1
    a_for_x = assemble(sub2.transpose(0, 2, 1))   # unknowns: agent 1's probs on I, value v2
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0

    solvable = (np.abs(np.linalg.det(a_for_y)) > SOLVER_TOL) & (np.abs(np.linalg.det(a_for_x)) > SOLVER_TOL)
    if not solvable.any():
        return []
    idx = np.nonzero(solvable)[0]
    rhs_batch = np.broadcast_to(rhs[:, None], (len(idx), k + 1, 1))
    try:
        sol_y = np.linalg.solve(a_for_y[idx], rhs_batch)[..., 0]
        sol_x = np.linalg.solve(a_for_x[idx], rhs_batch)[..., 0]
    except np.linalg.LinAlgError:
        # det prefilter missed an exactly singular system; fall back one by one
        sol_y = np.full((len(idx), k + 1), np.nan)
        sol_x = np.full((len(idx), k + 1), np.nan)
        for row, sys_i in enumerate(idx):
            try:
                sol_y[row] = np.linalg.solve(a_for_y[sys_i], rhs)
                sol_x[row] = np.linalg.solve(a_for_x[sys_i], rhs)
            except np.linalg.LinAlgError:
                continue

    # supports must be exact: every supported action strictly positive
    interior = (sol_y[:, :k] > SOLVER_TOL).all(axis=1) & (sol_x[:, :k] > SOLVER_TOL).all(axis=1)
    interior &= np.isfinite(sol_y).all(axis=1) & np.isfinite(sol_x).all(axis=1)

    found = []
    n_cols_combos = len(cols)
    for row in np.nonzero(interior)[0]:
        pair = idx[row]
        support1 = rows[pair // n_cols_combos]
        support2 = cols[pair % n_cols_combos]
        x = np.zeros(n1)
        y = np.zeros(n2)
        x[support1] = sol_x[row, :k]
        y[support2] = sol_y[row, :k]
        v1 = sol_y[row, k]
        v2 = sol_x[row, k]
        # best-response condition outside the supports
        if (game.m1 @ y).max() > v1 + SOLVER_TOL or (x @ game.m2).max() > v2 + SOLVER_TOL:
            continue
        profile = EquilibriumProfile(MixedStrategy(x), MixedStrategy(y), float(x @ game.m1 @ y), float(x @ game.m2 @ y))
        if verify_equilibrium(game, profile):
            found.append(profile)
    return found


def solve_support_enumeration(
    game: BimatrixGame,
    max_support: int | None = None,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> list[EquilibriumProfile]:
    """All equilibria over equal-size support pairs, smallest supports first.

    Every finite game has at least one equilibrium; with the default
    (uncapped) search the result is non-empty except for degenerate games
    whose only equilibria sit on skipped singular supports.  `max_support`
    bounds the combinatorial search for callers that only need small
    supports.
    """
    n1, n2 = game.shape
    if n1 > size_cap or n2 > size_cap:
        raise UnsupportedSizeError(f"game shape {game.shape} exceeds the exact-solver cap of {size_cap}")
    k_max = min(n1, n2) if max_support is None else min(max_support, n1, n2)
    equilibria: list[EquilibriumProfile] = []
    for k in range(1, k_max + 1):
        if k == 1:
            equilibria.extend(_pure_profile(game, i, j) for i, j in pure_equilibrium_indices(game))
        else:
            equilibria.extend(_mixed_candidates(game, k))
    return equilibria


def select_equilibrium(candidates: list[EquilibriumProfile]) -> EquilibriumProfile:
    """Deterministic utilitarian selection: max payoff sum, then max
    (payoff1, concatenated strategy vector) lexicographically."""
    if not candidates:
        raise ValueError("cannot select from an empty candidate list")
    return max(
        candidates,
        key=lambda p: (p.payoff1 + p.payoff2, p.payoff1, tuple(p.mu1.probs), tuple(p.mu2.probs)),
    )


def solve_and_select(game: BimatrixGame, support_cap: int | None = None) -> EquilibriumProfile | None:
    """Equilibrium used inside learning loops, tuned for repeated calls.

    Pure equilibria come from a vectorized best-response scan.  If one of
    them attains the global maximum of m1 + m2, no profile of any kind can
    beat it under the utilitarian rule, so the expensive enumeration is
    skipped entirely.  Otherwise support enumeration runs (optionally
    capped) and the standard selection applies.  Returns None when nothing
    is found so the caller can fall back.
    """
    pures = pure_equilibrium_indices(game)
    if pures:
        welfare = game.m1 + game.m2
        best = welfare.max()
        at_top = [(i, j) for i, j in pures if welfare[i, j] >= best - SOLVER_TOL]
        if at_top:
            return select_equilibrium([_pure_profile(game, i, j) for i, j in at_top])
    candidates = solve_support_enumeration(game, max_support=support_cap)
    if candidates:
        return select_equilibrium(candidates)
    return None


def random_game(rng: np.random.Generator, n1: int, n2: int, low: float = -1.0, high: float = 1.0) -> BimatrixGame:
    """Game with i.i.d. uniform payoffs, the standard fuzzing distribution."""
    return BimatrixGame(rng.uniform(low, high, (n1, n2)), rng.uniform(low, high, (n1, n2)))
