import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from coopmanip.env import (
    ArmSpec,
    EnvState,
    InvalidTaskError,
    JointAction,
    RewardStructure,
    TaskSpec,
    TwoArmEnv,
    action_table,
    forward_kinematics,
    is_success,
    make_state,
    posture_angle,
    reward_constituents,
    rewards,
    systemwide_reward,
)

PI = math.pi


def two_link_arm(base=(0.0, 0.0), lo=-PI, hi=PI):
    return ArmSpec(np.array([1.0, 1.0]), np.array(base), np.array([[lo, hi], [lo, hi]]))


@pytest.fixture
def env():
    arm1 = two_link_arm((0.0, 0.0))
    arm2 = two_link_arm((3.0, 0.0))
    task = TaskSpec(np.array([1.0, 1.0]), np.array([2.0, 1.0]), noise_sigma=0.0)
    return TwoArmEnv(arm1, arm2, task, delta=0.05)


def state_with_positions(p1, p2, t=0):
    # reward/success functions only read p; q is irrelevant for them
    return EnvState(np.zeros(2), np.zeros(2), np.asarray(p1, float), np.asarray(p2, float), t)


class TestForwardKinematics:
    def test_fully_extended(self):
        assert_allclose(forward_kinematics(two_link_arm(), np.zeros(2)), [2.0, 0.0], atol=1e-15)

    def test_quarter_turn(self):
        assert_allclose(forward_kinematics(two_link_arm(), np.array([PI / 2, 0.0])), [0.0, 2.0], atol=1e-15)

    def test_elbow_bend(self):
        # link vectors (0, 1) then (1, 0)
        assert_allclose(forward_kinematics(two_link_arm(), np.array([PI / 2, -PI / 2])), [1.0, 1.0], atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            forward_kinematics(two_link_arm(), np.zeros(3))

    def test_reach_bound(self):
        arm = ArmSpec(np.array([0.7, 0.4, 0.2]), np.array([1.0, -2.0]), np.tile([-PI, PI], (3, 1)))
        rng = np.random.default_rng(5)
        for _ in range(10_000):
            q = rng.uniform(-PI, PI, 3)
            p = forward_kinematics(arm, q)
            assert np.linalg.norm(p - arm.base_position) <= arm.reach + 1e-12


class TestStep:
    def test_zero_action_zero_noise_identity(self, env):
        state = make_state(env.arm1, env.arm2, np.array([0.3, -0.2]), np.array([0.1, 0.4]))
        still = env.actions1[4]  # (0, 0) increments
        assert_array_equal(still.increments, [0.0, 0.0])
        after = env.step(state, still, still, np.random.default_rng(0))
        assert_array_equal(after.q1, state.q1)
        assert_array_equal(after.q2, state.q2)
        assert_array_equal(after.p1, state.p1)
        assert after.t == state.t + 1

    def test_single_joint_increment(self, env):
        state = make_state(env.arm1, env.arm2, np.zeros(2), np.zeros(2))
        plus_first = JointAction(np.array([env.delta, 0.0]), env.delta)
        still = JointAction(np.zeros(2), env.delta)
        after = env.step(state, plus_first, still, np.random.default_rng(0))
        assert_allclose(after.q1, [env.delta, 0.0], atol=0)
        assert_allclose(after.p1, forward_kinematics(env.arm1, after.q1), atol=0)

    def test_fixed_seed_reproducible(self):
        arm1 = two_link_arm((0.0, 0.0))
        arm2 = two_link_arm((3.0, 0.0))
        task = TaskSpec(np.array([1.0, 1.0]), np.array([2.0, 1.0]), noise_sigma=0.01)
        env = TwoArmEnv(arm1, arm2, task)
        runs = []
        for _ in range(2):
            rng = np.random.default_rng(42)
            state = env.reset(rng)
            trajectory = [state]
            for k in range(20):
                state = env.step(state, env.actions1[k % 9], env.actions2[(k * 2) % 9], rng)
                trajectory.append(state)
            runs.append(trajectory)
        for s_a, s_b in zip(*runs):
            assert_array_equal(s_a.q1, s_b.q1)
            assert_array_equal(s_a.q2, s_b.q2)
            assert_array_equal(s_a.p1, s_b.p1)
            assert_array_equal(s_a.p2, s_b.p2)

    def test_clamped_at_limits(self, env):
        hi = env.arm1.joint_limits[:, 1]
        state = make_state(env.arm1, env.arm2, hi.copy(), np.zeros(2))
        push = JointAction(np.full(2, env.delta), env.delta)
        still = JointAction(np.zeros(2), env.delta)
        after = env.step(state, push, still, np.random.default_rng(0))
        assert_array_equal(after.q1, hi)

    def test_state_consistency_invariant(self, env):
        rng = np.random.default_rng(9)
        state = env.reset(rng)
        for k in range(50):
            state = env.step(state, env.actions1[int(rng.integers(9))], env.actions2[int(rng.integers(9))], rng)
            assert_allclose(state.p1, forward_kinematics(env.arm1, state.q1), atol=1e-12)
            assert_allclose(state.p2, forward_kinematics(env.arm2, state.q2), atol=1e-12)
            assert (state.q1 >= env.arm1.joint_limits[:, 0]).all()
            assert (state.q1 <= env.arm1.joint_limits[:, 1]).all()


class TestRewards:
    task = TaskSpec(np.array([0.2, 0.0]), np.array([0.0, 0.0]), noise_sigma=0.0)

    def test_exact_goal_all_zero(self):
        state = state_with_positions(self.task.p_target1, self.task.p_target2)
        assert reward_constituents(state, self.task) == (0.0, 0.0, 0.0)

    def test_l1_displacement(self):
        state = state_with_positions(self.task.p_target1 + np.array([0.3, -0.4]), self.task.p_target2)
        r_g1, _, _ = reward_constituents(state, self.task)
        assert_allclose(r_g1, -0.7, atol=1e-15)

    def test_perpendicular_posture(self):
        # (p1 - p2) = (0, 0.7) is perpendicular to the target direction (0.2, 0)
        state = state_with_positions([0.1, 0.6], [0.1, -0.1])
        r_g1, r_g2, r_g3 = reward_constituents(state, self.task)
        assert_allclose([r_g1, r_g2, r_g3], [-0.7, -0.2, -PI / 2], atol=1e-12)

    def test_coincident_effectors_worst_angle(self):
        state = state_with_positions([0.5, 0.5], [0.5, 0.5])
        assert reward_constituents(state, self.task)[2] == -PI

    def test_constituent_ranges(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            state = state_with_positions(rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2))
            r_g1, r_g2, r_g3 = reward_constituents(state, self.task)
            assert r_g1 <= 0 and r_g2 <= 0
            assert -PI <= r_g3 <= 0

    def test_rs1_formula(self):
        state = state_with_positions([0.1, 0.6], [0.1, -0.1])
        rs = RewardStructure("rs1", kappa1=0.5, kappa2=0.5)
        r1, r2 = rewards(state, self.task, rs)
        assert_allclose([r1, r2], [-0.7 - PI / 4, -0.2 - PI / 4], atol=1e-12)

    def test_rs2_formula(self):
        state = state_with_positions([0.1, 0.6], [0.1, -0.1])
        rs = RewardStructure("rs2", kappa=1.0)
        r1, r2 = rewards(state, self.task, rs)
        assert_allclose([r1, r2], [-0.9, -PI / 2], atol=1e-12)

    def test_goal_state_both_structures(self):
        state = state_with_positions(self.task.p_target1, self.task.p_target2)
        for rs in (RewardStructure("rs1"), RewardStructure("rs2", kappa=2.0)):
            assert rewards(state, self.task, rs) == (0.0, 0.0)

    def test_systemwide_sum(self):
        assert systemwide_reward(0.0, 0.0) == 0.0
        assert systemwide_reward(-0.9, -PI / 2) == -0.9 - PI / 2

    def test_systemwide_componentwise_identities(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            state = state_with_positions(rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2))
            r_g1, r_g2, r_g3 = reward_constituents(state, self.task)
            rs1 = RewardStructure("rs1", kappa1=0.3, kappa2=0.7)
            rs2 = RewardStructure("rs2", kappa=1.0)
            sum1 = systemwide_reward(*rewards(state, self.task, rs1))
            sum2 = systemwide_reward(*rewards(state, self.task, rs2))
            assert_allclose(sum1, r_g1 + r_g2 + rs1.kappa_total * r_g3, atol=1e-12)
            assert_allclose(sum2, r_g1 + r_g2 + rs2.kappa * r_g3, atol=1e-12)

    def test_kappa_validation(self):
        with pytest.raises(ValueError):
            RewardStructure("rs1", kappa1=-0.1)
        with pytest.raises(ValueError):
            RewardStructure("rs2", kappa=0.0)


class TestSuccess:
    task = TaskSpec(np.array([1.0, 0.0]), np.array([0.0, 0.0]), success_dist_tol=0.1, success_angle_tol=0.15)

    def test_exact_goal(self):
        assert is_success(state_with_positions([1.0, 0.0], [0.0, 0.0]), self.task)

    def test_far_off_target(self):
        assert not is_success(state_with_positions([2.0, 0.0], [0.0, 0.0]), self.task)

    def test_closed_boundary(self):
        # exactly-representable tolerance so the boundary state is exact;
        # the offset lies along the target direction, keeping the angle at zero
        task = TaskSpec(np.array([1.0, 0.0]), np.array([0.0, 0.0]), success_dist_tol=0.125)
        boundary = state_with_positions([1.125, 0.0], [0.0, 0.0])
        assert is_success(boundary, task)

    def test_angle_gate(self):
        # distances fine, posture rotated well past the tolerance
        tilted = state_with_positions([1.0, 0.05], [0.05, -0.1])
        angle = posture_angle(tilted.p1, tilted.p2, self.task)
        assert angle > self.task.success_angle_tol
        assert not is_success(tilted, self.task)

    def test_success_bounds_systemwide_reward(self):
        rs = RewardStructure("rs1", kappa1=0.4, kappa2=0.6)
        bound = -(2 * self.task.success_dist_tol + rs.kappa_total * self.task.success_angle_tol)
        rng = np.random.default_rng(17)
        hits = 0
        for _ in range(2000):
            p1 = self.task.p_target1 + rng.uniform(-0.08, 0.08, 2)
            p2 = self.task.p_target2 + rng.uniform(-0.08, 0.08, 2)
            state = state_with_positions(p1, p2)
            if is_success(state, self.task):
                hits += 1
                assert systemwide_reward(*rewards(state, self.task, rs)) >= bound - 1e-12
        assert hits > 100


class TestDiscretize:
    def make_env(self, lo=-PI / 2, hi=PI / 2):
        arm1 = two_link_arm((0.0, 0.0), lo, hi)
        arm2 = two_link_arm((3.0, 0.0), lo, hi)
        task = TaskSpec(np.array([1.0, 1.0]), np.array([2.0, 1.0]))
        return TwoArmEnv(arm1, arm2, task)

    def test_lower_limits_map_to_zero(self):
        env = self.make_env()
        lo = env.arm1.joint_limits[:, 0]
        state = make_state(env.arm1, env.arm2, lo.copy(), lo.copy())
        assert env.discretize_state(state, 8) == 0

    def test_upper_limits_map_to_top(self):
        env = self.make_env()
        hi = env.arm1.joint_limits[:, 1]
        state = make_state(env.arm1, env.arm2, hi.copy(), hi.copy())
        assert env.discretize_state(state, 8) == 8**4 - 1 == 4095

    def test_midpoint_row_major(self):
        env = self.make_env()
        mid = env.arm1.joint_limits.mean(axis=1)
        state = make_state(env.arm1, env.arm2, mid.copy(), mid.copy())
        assert env.discretize_state(state, 8) == 4 * (8**3 + 8**2 + 8 + 1) == 2340

    def test_bijection_on_cell_centers(self):
        env = self.make_env()
        bins = 3
        lo, hi = -PI / 2, PI / 2
        width = (hi - lo) / bins
        centers = [lo + (b + 0.5) * width for b in range(bins)]
        seen = set()
        for b0 in range(bins):
            for b1 in range(bins):
                for b2 in range(bins):
                    for b3 in range(bins):
                        state = make_state(
                            env.arm1,
                            env.arm2,
                            np.array([centers[b0], centers[b1]]),
                            np.array([centers[b2], centers[b3]]),
                        )
                        idx = env.discretize_state(state, bins)
                        assert idx == ((b0 * bins + b1) * bins + b2) * bins + b3
                        seen.add(idx)
        assert seen == set(range(bins**4))

    def test_constant_within_cell(self):
        env = self.make_env()
        rng = np.random.default_rng(23)
        for _ in range(200):
            q = rng.uniform(-PI / 2, PI / 2, 4)
            state = make_state(env.arm1, env.arm2, q[:2], q[2:])
            idx = env.discretize_state(state, 5)
            jitter = q + rng.uniform(-1e-9, 1e-9, 4)
            jitter_state = make_state(env.arm1, env.arm2, jitter[:2], jitter[2:])
            # tiny jitter can only matter exactly on a bin edge, which has measure zero
            assert env.discretize_state(jitter_state, 5) == idx

    def test_bins_validation(self):
        env = self.make_env()
        state = env.reset(np.random.default_rng(0))
        with pytest.raises(ValueError):
            env.discretize_state(state, 1)


class TestConstruction:
    def test_coincident_targets_rejected(self):
        with pytest.raises(InvalidTaskError):
            TaskSpec(np.array([1.0, 1.0]), np.array([1.0, 1.0]))

    def test_unreachable_target_rejected(self):
        arm1 = two_link_arm((0.0, 0.0))
        arm2 = two_link_arm((3.0, 0.0))
        task = TaskSpec(np.array([5.0, 5.0]), np.array([2.0, 1.0]))
        with pytest.raises(InvalidTaskError):
            TwoArmEnv(arm1, arm2, task)

    def test_action_table_shape_and_values(self):
        table = action_table(2, 0.05)
        assert table.shape == (9, 2)
        assert_array_equal(table[0], [-0.05, -0.05])
        assert_array_equal(table[4], [0.0, 0.0])
        assert_array_equal(table[8], [0.05, 0.05])
        assert len({tuple(row) for row in table}) == 9

    def test_bad_joint_action(self):
        with pytest.raises(ValueError):
            JointAction(np.array([0.03, 0.0]), 0.05)

    def test_start_region_validation(self):
        arm1 = two_link_arm((0.0, 0.0))
        arm2 = two_link_arm((3.0, 0.0))
        task = TaskSpec(np.array([1.0, 1.0]), np.array([2.0, 1.0]))
        with pytest.raises(ValueError):
            TwoArmEnv(arm1, arm2, task, start_region1=np.array([[-10.0, 0.0], [0.0, 0.1]]))

    def test_features_scaled(self):
        arm1 = two_link_arm((0.0, 0.0))
        arm2 = two_link_arm((3.0, 0.0))
        task = TaskSpec(np.array([1.0, 1.0]), np.array([2.0, 1.0]))
        env = TwoArmEnv(arm1, arm2, task)
        rng = np.random.default_rng(3)
        for _ in range(100):
            feats = env.features(env.reset(rng))
            assert feats.shape == (8,)
            assert (np.abs(feats) <= 1.0 + 1e-9).all()
