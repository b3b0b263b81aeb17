"""Standalone property suites behind the `verify` CLI subcommand.

Each suite re-derives its expectations independently of the code under
test (closed forms, brute force, finite differences) and reports one
pass/fail line.  Kept deliberately free of pytest so it can run in any
deployment of the package.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .env import ArmSpec, forward_kinematics
from .games import (
    BimatrixGame,
    MixedStrategy,
    expected_payoffs,
    random_game,
    solve_support_enumeration,
    verify_equilibrium,
)
from .qfunc import DenseApproximator, QTable, mse_loss_and_gradients, tabular_update


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _oracle_2x2(m1: np.ndarray, m2: np.ndarray):
    """Closed-form 2x2 equilibria: brute-force pure pairs plus the interior
    indifference solution."""
    eqs = []
    for i in (0, 1):
        for j in (0, 1):
            if m1[i, j] >= m1[1 - i, j] - 1e-12 and m2[i, j] >= m2[i, 1 - j] - 1e-12:
                x, y = np.zeros(2), np.zeros(2)
                x[i], y[j] = 1.0, 1.0
                eqs.append((x, y))
    d1 = (m1[0, 0] - m1[1, 0]) + (m1[1, 1] - m1[0, 1])
    d2 = (m2[0, 0] - m2[0, 1]) + (m2[1, 1] - m2[1, 0])
    if abs(d1) > 1e-12 and abs(d2) > 1e-12:
        y0 = (m1[1, 1] - m1[0, 1]) / d1
        x0 = (m2[1, 1] - m2[1, 0]) / d2
        if 1e-10 < y0 < 1 - 1e-10 and 1e-10 < x0 < 1 - 1e-10:
            eqs.append((np.array([x0, 1 - x0]), np.array([y0, 1 - y0])))
    return eqs


def check_solver_soundness(n_games: int = 500, seed: int = 12345) -> CheckResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    total = 0
    for _ in range(n_games):
        n1, n2 = rng.integers(2, 5, size=2)
        game = random_game(rng, int(n1), int(n2))
        eqs = solve_support_enumeration(game)
        if not eqs:
            return CheckResult("solver-soundness", False, "no equilibrium found", time.perf_counter() - started)
        for eq in eqs:
            if not verify_equilibrium(game, eq, tol=1e-9):
                return CheckResult(
                    "solver-soundness", False, "profile failed verification", time.perf_counter() - started
                )
        total += len(eqs)
    return CheckResult(
        "solver-soundness", True, f"{n_games} games, {total} profiles verified", time.perf_counter() - started
    )


def check_2x2_oracle_agreement(n_games: int = 400, seed: int = 777) -> CheckResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    for _ in range(n_games):
        game = random_game(rng, 2, 2)
        got = {
            eq.supports: (eq.mu1.probs, eq.mu2.probs) for eq in solve_support_enumeration(game)
        }
        want = {}
        for x, y in _oracle_2x2(game.m1, game.m2):
            sup = (tuple(np.nonzero(x > 1e-9)[0]), tuple(np.nonzero(y > 1e-9)[0]))
            want[sup] = (x, y)
        if set(got) != set(want):
            return CheckResult(
                "solver-2x2-oracle", False, f"support sets differ: {set(got)} vs {set(want)}",
                time.perf_counter() - started,
            )
        for sup, (x, y) in want.items():
            gx, gy = got[sup]
            if np.abs(gx - x).max() > 1e-8 or np.abs(gy - y).max() > 1e-8:
                return CheckResult(
                    "solver-2x2-oracle", False, "strategies differ beyond 1e-8", time.perf_counter() - started
                )
    return CheckResult("solver-2x2-oracle", True, f"{n_games} games matched", time.perf_counter() - started)


def check_payoff_linearity(seed: int = 5) -> CheckResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    for _ in range(200):
        game = random_game(rng, 3, 4)
        mu, nu = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        y = MixedStrategy(rng.dirichlet(np.ones(4)))
        lam = float(rng.uniform())
        blend = expected_payoffs(game, MixedStrategy(lam * mu + (1 - lam) * nu), y)
        a = expected_payoffs(game, MixedStrategy(mu), y)
        b = expected_payoffs(game, MixedStrategy(nu), y)
        for k in range(2):
            if abs(blend[k] - (lam * a[k] + (1 - lam) * b[k])) > 1e-12:
                return CheckResult("payoff-linearity", False, "linearity violated", time.perf_counter() - started)
    return CheckResult("payoff-linearity", True, "200 random blends within 1e-12", time.perf_counter() - started)


def check_kinematics_reach(seed: int = 6) -> CheckResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    arm = ArmSpec(np.array([0.5, 0.3, 0.2]), np.array([0.4, -0.7]), np.tile([-math.pi, math.pi], (3, 1)))
    for _ in range(10_000):
        p = forward_kinematics(arm, rng.uniform(-math.pi, math.pi, 3))
        if np.linalg.norm(p - arm.base_position) > arm.reach + 1e-12:
            return CheckResult("kinematics-reach", False, "reach bound violated", time.perf_counter() - started)
    return CheckResult("kinematics-reach", True, "10000 configurations inside reach", time.perf_counter() - started)


def check_update_rule(seed: int = 7) -> CheckResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    table = QTable(1, 1, 1)
    for _ in range(300):
        old, target, alpha = float(rng.normal()), float(rng.normal()), float(rng.uniform())
        table.values[0, 0, 0] = old
        tabular_update(table, 0, 0, 0, target, alpha)
        new = table.values[0, 0, 0]
        if not (min(old, target) - 1e-12 <= new <= max(old, target) + 1e-12):
            return CheckResult("update-rule", False, "convexity violated", time.perf_counter() - started)
    table.values[0, 0, 0] = 1.0
    for n in range(1, 51):
        tabular_update(table, 0, 0, 0, 0.0, 0.5)
        if table.values[0, 0, 0] != 0.5**n:
            return CheckResult("update-rule", False, "geometric decay not exact", time.perf_counter() - started)
    return CheckResult("update-rule", True, "convexity and exact geometric decay", time.perf_counter() - started)


def check_gradients(seed: int = 8, n_coords: int = 50) -> CheckResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    net = DenseApproximator([4, 16, 16, 6], 2, 3, rng)
    batch = [
        (rng.normal(size=4), int(rng.integers(6)), float(rng.normal()))
        for _ in range(12)
    ]
    _, gw, gb = mse_loss_and_gradients(net, batch)
    analytic = np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(gw, gb)])
    base = net.get_flat_params()
    coords = rng.choice(len(base), size=n_coords, replace=False)
    h = 1e-5
    for c in coords:
        bumped = base.copy()
        bumped[c] += h
        net.set_flat_params(bumped)
        up, _, _ = mse_loss_and_gradients(net, batch)
        bumped[c] -= 2 * h
        net.set_flat_params(bumped)
        down, _, _ = mse_loss_and_gradients(net, batch)
        net.set_flat_params(base)
        fd = (up - down) / (2 * h)
        denom = max(abs(fd), abs(analytic[c]), 1e-8)
        if abs(fd - analytic[c]) / denom > 1e-4:
            return CheckResult("gradient-check", False, f"coord {c} off by >1e-4", time.perf_counter() - started)
    return CheckResult("gradient-check", True, f"{n_coords} coordinates within 1e-4", time.perf_counter() - started)


ALL_CHECKS = (
    check_solver_soundness,
    check_2x2_oracle_agreement,
    check_payoff_linearity,
    check_kinematics_reach,
    check_update_rule,
    check_gradients,
)


def run_all(quick: bool = False) -> list[CheckResult]:
    results = []
    for fn in ALL_CHECKS:
        if quick and fn is check_solver_soundness:
            results.append(fn(n_games=100))
        else:
            results.append(fn())
    return results
