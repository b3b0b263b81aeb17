"""Planar two-arm kinematic environment.

Two independently articulated planar arms move their end effectors toward
per-arm target points while keeping the line between the effectors aligned
with the line between the targets (the "object posture").  Dynamics are
joint-angle increments plus Gaussian noise, clamped to joint limits; there
is no contact physics, the carried object being fully described by the two
effector positions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class InvalidTaskError(ValueError):
    """Task geometry is ill-posed (coincident or unreachable targets)."""


@dataclass(frozen=True)
class ArmSpec:
    """Geometry of one planar arm."""

    link_lengths: np.ndarray
    base_position: np.ndarray
    joint_limits: np.ndarray  # shape (n_joints, 2) of [min, max] radians

    def __post_init__(self):
        links = np.asarray(self.link_lengths, dtype=float)
        base = np.asarray(self.base_position, dtype=float)
        limits = np.asarray(self.joint_limits, dtype=float)
        object.__setattr__(self, "link_lengths", links)
        object.__setattr__(self, "base_position", base)
        object.__setattr__(self, "joint_limits", limits)
        if links.ndim != 1 or (links <= 0).any():
            raise ValueError("link lengths must be positive")
        if base.shape != (2,):
            raise ValueError("base position must be a 2-D point")
        if limits.shape != (len(links), 2) or (limits[:, 0] >= limits[:, 1]).any():
            raise ValueError("joint limits must be (n_joints, 2) with min < max")

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())


@dataclass(frozen=True)
class EnvState:
    """Joint angles and cached end-effector positions for both arms.

    p1/p2 are always derived from q1/q2 through forward kinematics; build
    states with make_state or TwoArmEnv methods, never by hand.
    """

    q1: np.ndarray
    q2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    t: int


@dataclass(frozen=True)
class JointAction:
    """Per-joint angle increments, each one of {-delta, 0, +delta}."""

    increments: np.ndarray
    delta: float

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        object.__setattr__(self, "increments", inc)
        allowed = np.array([-self.delta, 0.0, self.delta])
        if not np.isin(inc, allowed).all():
            raise ValueError(f"increments must come from {{-{self.delta}, 0, {self.delta}}}")


def action_table(n_joints: int, delta: float) -> np.ndarray:
    """Increment vectors for all 3**n_joints actions.

    Index order is the lexicographic product of (-delta, 0, +delta) with the
    first joint most significant, a fixed convention so that action indices
    are stable across runs and platforms.
    """
    return np.array(list(itertools.product((-delta, 0.0, delta), repeat=n_joints)))


@dataclass(frozen=True)
class RewardStructure:
    """Which agent pays for which penalty constituent.

    rs1: both agents pay their own displacement plus a kappa share of the
    posture penalty.  rs2: agent 1 pays both displacements, agent 2 pays
    kappa times the posture penalty.  kappa_total records the matched total
    posture weight so that rs1/rs2 comparisons use kappa1 + kappa2 = kappa.
    """

    kind: str
    kappa1: float = 0.5
    kappa2: float = 0.5
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rs1", "rs2"):
            raise ValueError(f"unknown reward structure {self.kind!r}")
        if self.kind == "rs1" and (self.kappa1 <= 0 or self.kappa2 <= 0):
            raise ValueError("kappa1 and kappa2 must be > 0")
        if self.kind == "rs2" and self.kappa <= 0:
            raise ValueError("kappa must be > 0")

    @property
    def kappa_total(self) -> float:
        return self.kappa1 + self.kappa2 if self.kind == "rs1" else self.kappa


@dataclass(frozen=True)
class TaskSpec:
    """Targets, success thresholds, horizon and transition noise."""

    p_target1: np.ndarray
    p_target2: np.ndarray
    success_dist_tol: float = 0.1
    success_angle_tol: float = 0.15
    horizon: int = 100
    noise_sigma: float = 0.005

    def __post_init__(self):
        t1 = np.asarray(self.p_target1, dtype=float)
        t2 = np.asarray(self.p_target2, dtype=float)
        object.__setattr__(self, "p_target1", t1)
        object.__setattr__(self, "p_target2", t2)
        if t1.shape != (2,) or t2.shape != (2,):
            raise InvalidTaskError("targets must be 2-D points")
        if np.array_equal(t1, t2):
            raise InvalidTaskError("targets must be distinct (posture direction undefined)")
        if self.success_dist_tol <= 0 or self.success_angle_tol <= 0:
            raise InvalidTaskError("success tolerances must be positive")
        if self.horizon < 1:
            raise InvalidTaskError("horizon must be at least 1")
        if self.noise_sigma < 0:
            raise InvalidTaskError("noise sigma must be non-negative")

    @property
    def target_direction(self) -> np.ndarray:
        return self.p_target1 - self.p_target2


def forward_kinematics(spec: ArmSpec, q: np.ndarray) -> np.ndarray:
    """End-effector position: base + sum of link vectors at cumulative angles."""
    if len(q) != spec.n_joints:
        raise ValueError(f"expected {spec.n_joints} joint angles, got {len(q)}")
    x, y = spec.base_position
    total = 0.0
    for length, angle in zip(spec.link_lengths, q):
        total += angle
        x += length * math.cos(total)
        y += length * math.sin(total)
    return np.array((x, y))


def make_state(arm1: ArmSpec, arm2: ArmSpec, q1: np.ndarray, q2: np.ndarray, t: int = 0) -> EnvState:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    return EnvState(q1, q2, forward_kinematics(arm1, q1), forward_kinematics(arm2, q2), t)


def posture_angle(p1: np.ndarray, p2: np.ndarray, task: TaskSpec) -> float:
    """Absolute angle between (p1 - p2) and the target direction, in [0, pi].

    Coincident effectors leave the angle undefined; that collapse is scored
    with the worst value pi.
    """
    vx = p1[0] - p2[0]
    vy = p1[1] - p2[1]
    if vx == 0.0 and vy == 0.0:
        return math.pi
    tx, ty = task.target_direction
    return abs(math.atan2(vx * ty - vy * tx, vx * tx + vy * ty))


def reward_constituents(next_state: EnvState, task: TaskSpec) -> tuple[float, float, float]:
    """(r_g1, r_g2, r_g3): negated L1 displacements and negated posture angle."""
    d1 = next_state.p1 - task.p_target1
    d2 = next_state.p2 - task.p_target2
    r_g1 = -(abs(d1[0]) + abs(d1[1]))
    r_g2 = -(abs(d2[0]) + abs(d2[1]))
    r_g3 = -posture_angle(next_state.p1, next_state.p2, task)
    return float(r_g1), float(r_g2), float(r_g3)


def rewards(next_state: EnvState, task: TaskSpec, rs: RewardStructure) -> tuple[float, float]:
    """Per-agent rewards under the configured structure (penalties are
    already negative, so the posture term is added, not subtracted)."""
    r_g1, r_g2, r_g3 = reward_constituents(next_state, task)
    if rs.kind == "rs1":
        return r_g1 + rs.kappa1 * r_g3, r_g2 + rs.kappa2 * r_g3
    return r_g1 + r_g2, rs.kappa * r_g3


def systemwide_reward(r1: float, r2: float) -> float:
    return r1 + r2


def is_success(state: EnvState, task: TaskSpec) -> bool:
    """Both effectors within the L1 distance tolerance and posture within
    the angle tolerance (closed thresholds: boundary counts as success)."""
    d1 = state.p1 - task.p_target1
    if abs(d1[0]) + abs(d1[1]) > task.success_dist_tol:
        return False
    d2 = state.p2 - task.p_target2
    if abs(d2[0]) + abs(d2[1]) > task.success_dist_tol:
        return False
    return posture_angle(state.p1, state.p2, task) <= task.success_angle_tol


class TwoArmEnv:
    """Bundles arm geometry, task, action discretization and start region.

    States are immutable; step returns a fresh state.  One instance per
    training worker: the environment itself holds no mutable state beyond
    precomputed tables.
    """

    def __init__(
        self,
        arm1: ArmSpec,
        arm2: ArmSpec,
        task: TaskSpec,
        delta: float = 0.05,
        start_region1: np.ndarray | None = None,
        start_region2: np.ndarray | None = None,
    ):
        if delta <= 0:
            raise ValueError("delta must be positive")
        for arm, target in ((arm1, task.p_target1), (arm2, task.p_target2)):
            if np.linalg.norm(target - arm.base_position) > arm.reach:
                raise InvalidTaskError(f"target {target.tolist()} is beyond the arm's reach {arm.reach}")
        self.arm1 = arm1
        self.arm2 = arm2
        self.task = task
        self.delta = delta
        self.start_region1 = self._check_region(start_region1, arm1)
        self.start_region2 = self._check_region(start_region2, arm2)
        self.increments1 = action_table(arm1.n_joints, delta)
        self.increments2 = action_table(arm2.n_joints, delta)
        self.actions1 = [JointAction(row, delta) for row in self.increments1]
        self.actions2 = [JointAction(row, delta) for row in self.increments2]
        self._limits = np.vstack([arm1.joint_limits, arm2.joint_limits])
        self._feature_scale = max(
            float(np.linalg.norm(arm.base_position) + arm.reach) for arm in (arm1, arm2)
        )

    @staticmethod
    def _check_region(region: np.ndarray | None, arm: ArmSpec) -> np.ndarray:
        if region is None:
            return arm.joint_limits.copy()
        region = np.asarray(region, dtype=float)
        if region.shape != arm.joint_limits.shape:
            raise ValueError("start region must be one [lo, hi] interval per joint")
        if (region[:, 0] < arm.joint_limits[:, 0]).any() or (region[:, 1] > arm.joint_limits[:, 1]).any():
            raise ValueError("start region must lie within joint limits")
        return region

    @property
    def n_actions1(self) -> int:
        return len(self.increments1)

    @property
    def n_actions2(self) -> int:
        return len(self.increments2)

    @property
    def n_joints_total(self) -> int:
        return self.arm1.n_joints + self.arm2.n_joints

    def reset(self, rng: np.random.Generator) -> EnvState:
        """Fresh episode start: joint angles uniform over the start region."""
        q1 = rng.uniform(self.start_region1[:, 0], self.start_region1[:, 1])
        q2 = rng.uniform(self.start_region2[:, 0], self.start_region2[:, 1])
        return make_state(self.arm1, self.arm2, q1, q2, t=0)

    def step(self, state: EnvState, a1: JointAction, a2: JointAction, rng: np.random.Generator) -> EnvState:
        """Apply increments plus per-joint Gaussian noise, clamped to limits.

        The noise vector is drawn in one call covering arm 1's joints then
        arm 2's, which fixes the rng consumption order for reproducibility.
        """
        noise = rng.normal(0.0, self.task.noise_sigma, self.n_joints_total)
        n1 = self.arm1.n_joints
        lim = self._limits
        q1 = np.clip(state.q1 + a1.increments + noise[:n1], lim[:n1, 0], lim[:n1, 1])
        q2 = np.clip(state.q2 + a2.increments + noise[n1:], lim[n1:, 0], lim[n1:, 1])
        return EnvState(
            q1,
            q2,
            forward_kinematics(self.arm1, q1),
            forward_kinematics(self.arm2, q2),
            state.t + 1,
        )

    def step_indices(self, state: EnvState, i1: int, i2: int, rng: np.random.Generator) -> EnvState:
        return self.step(state, self.actions1[i1], self.actions2[i2], rng)

    def discretize_state(self, state: EnvState, bins_per_joint: int) -> int:
        """Row-major composition of uniform per-joint bins over the limit
        intervals; angles on the upper boundary fall in the top bin."""
        if bins_per_joint < 2:
            raise ValueError("bins_per_joint must be at least 2")
        lim = self._limits
        index = 0
        joints = itertools.chain(
            zip(state.q1, lim[: self.arm1.n_joints]), zip(state.q2, lim[self.arm1.n_joints :])
        )
        for angle, (lo, hi) in joints:
            b = int((angle - lo) / (hi - lo) * bins_per_joint)
            if b >= bins_per_joint:
                b = bins_per_joint - 1
            elif b < 0:
                b = 0
            index = index * bins_per_joint + b
        return index

    def n_states(self, bins_per_joint: int) -> int:
        return bins_per_joint ** self.n_joints_total

    def features(self, state: EnvState) -> np.ndarray:
        """Concatenated (q1, q2, p1, p2) scaled into [-1, 1] by joint limits
        and the workspace radius, for the parametric backend."""
        lim = self._limits
        q = np.concatenate([state.q1, state.q2])
        q_scaled = 2.0 * (q - lim[:, 0]) / (lim[:, 1] - lim[:, 0]) - 1.0
        p_scaled = np.concatenate([state.p1, state.p2]) / self._feature_scale
        return np.concatenate([q_scaled, p_scaled])

    @property
    def feature_dim(self) -> int:
        return self.n_joints_total + 4
