import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcmppi.constraints import (
    PENALTY,
    ConstraintVerdict,
    Obstacle,
    batch_margins,
    evaluate_trajectory,
    l1_margin,
    obstacle_position,
    obstacle_positions_over,
    penalty_term,
)
from bcmppi.errors import ConfigError

finite_coord = st.floats(min_value=-100.0, max_value=100.0,
                         allow_nan=False, allow_infinity=False)


def brute_force_verdict(positions, obstacles, t0, dt):
    """Independent double-loop re-implementation of evaluate_trajectory."""
    min_margin = np.inf
    penalties = []
    for i, pos in enumerate(positions):
        t = t0 + i * dt
        worst = np.inf
        for obs in obstacles:
            center = obstacle_position(obs, t)
            margin = abs(pos[0] - center[0]) + abs(pos[1] - center[1]) \
                + abs(pos[2] - center[2]) - obs.radius
            worst = min(worst, margin)
        min_margin = min(min_margin, worst)
        penalties.append(1e3 if worst < 0 else 0.0)
    return ConstraintVerdict(min_margin=min_margin,
                             mean_penalty=float(np.mean(penalties)),
                             violated=min_margin < 0)


class TestObstaclePosition:
    def test_stationary_any_time(self):
        obs = Obstacle(motion="stationary", anchor=[1.0, 2.0, 3.0], radius=0.5)
        for t in (0.0, 1.7, 100.0):
            assert np.array_equal(obstacle_position(obs, t), [1.0, 2.0, 3.0])

    def test_phase_zero_at_t0(self):
        anchor = np.array([1.0, -1.0, 2.0])
        circ = Obstacle(motion="circular", anchor=anchor, radius=0.5,
                        amplitude=0.7, phase=0.0)
        assert np.allclose(obstacle_position(circ, 0.0), anchor + [0.7, 0.0, 0.0])
        diag = Obstacle(motion="diagonal", anchor=anchor, radius=0.5,
                        amplitude=0.7, direction=[1.0, 1.0, 0.0])
        assert np.allclose(obstacle_position(diag, 0.0), anchor)
        sinu = Obstacle(motion="sinusoidal", anchor=anchor, radius=0.5,
                        amplitude=0.7, phase=0.0, direction=[0.0, 1.0, 0.0])
        assert np.allclose(obstacle_position(sinu, 0.0), anchor)

    def test_circular_quarter_period(self):
        omega = 0.8
        obs = Obstacle(motion="circular", anchor=[0.0, 0.0, 1.0], radius=0.3,
                       amplitude=0.5, angular_frequency=omega, phase=0.0)
        quarter = 0.5 * np.pi / omega
        assert np.allclose(obstacle_position(obs, quarter), [0.0, 0.5, 1.0],
                           atol=1e-12)

    def test_sinusoidal_drift_clipped_to_arena(self):
        obs = Obstacle(motion="sinusoidal", anchor=[4.0, 0.0, 0.0], radius=0.3,
                       amplitude=0.5, angular_frequency=1.0,
                       direction=[1.0, 0.0, 0.0])
        far = obstacle_position(obs, 1e4)
        assert far[0] == 5.0  # lateral drift saturates at the arena face
        assert np.isfinite(far).all()

    def test_vectorized_times(self):
        obs = Obstacle(motion="circular", anchor=[0.0, 0.0, 0.0], radius=0.3)
        ts = np.linspace(0.0, 10.0, 7)
        stacked = obstacle_position(obs, ts)
        assert stacked.shape == (7, 3)
        for i, t in enumerate(ts):
            assert np.array_equal(stacked[i], obstacle_position(obs, t))

    def test_direction_normalized_and_validation(self):
        obs = Obstacle(motion="diagonal", direction=[3.0, 0.0, 4.0], radius=1.0)
        assert np.allclose(np.linalg.norm(obs.direction), 1.0)
        with pytest.raises(ConfigError):
            Obstacle(motion="bogus", radius=1.0)
        with pytest.raises(ConfigError):
            Obstacle(radius=0.0)


class TestMarginAndPenalty:
    def test_l1_margin_examples(self):
        assert l1_margin([0, 0, 0], [1, 1, 1], 1.0) == 2.0
        assert l1_margin([2, 2, 2], [2, 2, 2], 0.5) == -0.5
        assert l1_margin([1, 2, 3], [4, 6, 8], 2.0) == 10.0

    def test_penalty_step_function(self):
        assert penalty_term(-0.1) == 1000.0
        assert penalty_term(0.0) == 0.0
        assert penalty_term(5.0) == 0.0

    @given(st.lists(finite_coord, min_size=6, max_size=6),
           st.floats(min_value=1e-6, max_value=10.0))
    @settings(max_examples=200, deadline=None)
    def test_penalty_binary_range(self, coords, radius):
        margin = l1_margin(coords[:3], coords[3:], radius)
        assert penalty_term(margin) in (0.0, 1000.0)

    @given(st.lists(finite_coord, min_size=9, max_size=9),
           st.floats(min_value=1e-6, max_value=10.0))
    @settings(max_examples=200, deadline=None)
    def test_translation_invariance(self, coords, radius):
        robot, obs, shift = coords[:3], coords[3:6], coords[6:9]
        before = l1_margin(robot, obs, radius)
        after = l1_margin(np.add(robot, shift), np.add(obs, shift), radius)
        assert after == pytest.approx(before, abs=1e-9)

    @given(st.lists(finite_coord, min_size=6, max_size=6),
           st.floats(min_value=1e-6, max_value=5.0),
           st.floats(min_value=1e-6, max_value=5.0))
    @settings(max_examples=200, deadline=None)
    def test_radius_monotonicity_exact_shift(self, coords, radius, delta):
        base = l1_margin(coords[:3], coords[3:], radius)
        grown = l1_margin(coords[:3], coords[3:], radius + delta)
        assert grown == pytest.approx(base - delta, abs=1e-12)


class TestEvaluateTrajectory:
    def test_clear_trajectory(self):
        obs = [Obstacle(anchor=[0.0, 0.0, 0.0], radius=1.0)]
        positions = np.tile([5.0, 5.0, 5.0], (10, 1))
        verdict = evaluate_trajectory(positions, obs, 0.0, 0.02)
        assert verdict.mean_penalty == 0.0
        assert not verdict.violated
        assert verdict.min_margin == pytest.approx(14.0)

    def test_single_step_inside(self):
        obs = [Obstacle(anchor=[0.0, 0.0, 0.0], radius=1.0)]
        verdict = evaluate_trajectory(np.array([[0.1, 0.1, 0.1]]), obs, 0.0, 0.02)
        assert verdict.mean_penalty == 1000.0
        assert verdict.violated

    def test_no_obstacles(self):
        verdict = evaluate_trajectory(np.zeros((4, 3)), [], 0.0, 0.02)
        assert verdict.min_margin == np.inf and not verdict.violated

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(19)
        obstacles = [
            Obstacle(motion="circular", anchor=rng.uniform(-2, 2, 3), radius=0.8,
                     amplitude=0.6, angular_frequency=0.9, phase=1.0),
            Obstacle(motion="diagonal", anchor=rng.uniform(-2, 2, 3), radius=0.5,
                     amplitude=0.5, angular_frequency=0.4, direction=[1, 1, 0]),
            Obstacle(motion="sinusoidal", anchor=rng.uniform(-2, 2, 3), radius=0.7,
                     amplitude=0.4, angular_frequency=0.7, direction=[0, 1, 0]),
            Obstacle(motion="stationary", anchor=rng.uniform(-2, 2, 3), radius=1.2),
            Obstacle(motion="circular", anchor=rng.uniform(-2, 2, 3), radius=0.4,
                     amplitude=0.3, angular_frequency=1.3, phase=-0.5),
        ]
        positions = rng.uniform(-3, 3, (25, 3))
        got = evaluate_trajectory(positions, obstacles, t0=0.7, dt=0.02)
        want = brute_force_verdict(positions, obstacles, t0=0.7, dt=0.02)
        assert got.min_margin == want.min_margin
        assert got.mean_penalty == want.mean_penalty
        assert got.violated == want.violated

    def test_accepts_state_sequence(self, hover_state):
        obs = [Obstacle(anchor=[0.0, 0.0, 1.0], radius=0.5)]
        verdict = evaluate_trajectory([hover_state], obs, 0.0, 0.02)
        assert verdict.violated  # hover state sits at the obstacle center

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ValueError):
            evaluate_trajectory(np.zeros((0, 3)), [], 0.0, 0.02)


class TestBatchMargins:
    def test_matches_scalar_evaluation(self):
        rng = np.random.default_rng(3)
        obstacles = [
            Obstacle(motion="circular", anchor=[0.5, 0.0, 1.0], radius=0.6),
            Obstacle(motion="stationary", anchor=[-1.0, 0.5, 1.0], radius=0.9),
        ]
        t0, dt = 0.3, 0.02
        positions = rng.uniform(-2, 2, (8, 25, 3))
        times = t0 + dt * np.arange(25)
        centers = obstacle_positions_over(obstacles, times)
        radii = np.array([o.radius for o in obstacles])
        min_margin, penalty_sum = batch_margins(positions, centers, radii)
        for k in range(8):
            verdict = evaluate_trajectory(positions[k], obstacles, t0, dt)
            assert min_margin[k] == verdict.min_margin
            assert penalty_sum[k] == verdict.mean_penalty * 25

    def test_no_obstacles(self):
        min_margin, penalty_sum = batch_margins(np.zeros((4, 3, 3)),
                                                np.zeros((3, 0, 3)), np.zeros(0))
        assert np.all(np.isinf(min_margin))
        assert np.all(penalty_sum == 0.0)
