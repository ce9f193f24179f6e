"""Ground-truth obstacle constraints: margins, penalties, verdicts.

Obstacles are spheres with inflated radii.  Feasibility is measured by the
L1 margin between the vehicle position and the obstacle center,

    margin = |dx| + |dy| + |dz| - radius

(negative means inside the inflated region), and violating steps incur a
flat penalty of 1e3.  Moving obstacles follow scripted center trajectories;
all motion laws are smooth functions of absolute time, so constraint
evaluation is pure and safe to call from concurrent rollout workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

MOTION_TYPES = ("stationary", "circular", "diagonal", "sinusoidal")
PENALTY = 1.0e3

_DEFAULT_ARENA_MIN = (-5.0, -5.0, -5.0)
_DEFAULT_ARENA_MAX = (5.0, 5.0, 5.0)


@dataclass(frozen=True)
class Obstacle:
    """A sphere with an inflated radius following a scripted center path.

    Motion laws (A = amplitude, w = angular_frequency, phi = phase):
        stationary   center(t) = anchor
        circular     center(t) = anchor + A*(cos(wt+phi), sin(wt+phi), 0)
        diagonal     center(t) = anchor + A*sin(wt)*direction
        sinusoidal   center(t) = clip(anchor + A*w*t*direction, arena)
                                 + A*sin(wt+phi)*z_hat
    """

    motion: str = "stationary"
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 0.5
    amplitude: float = 0.5
    angular_frequency: float = 0.5
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    phase: float = 0.0
    arena_min: np.ndarray = field(default_factory=lambda: np.array(_DEFAULT_ARENA_MIN))
    arena_max: np.ndarray = field(default_factory=lambda: np.array(_DEFAULT_ARENA_MAX))

    def __post_init__(self):
        if self.motion not in MOTION_TYPES:
            raise ConfigError(f"unknown obstacle motion {self.motion!r}; expected one of {MOTION_TYPES}")
        if not self.radius > 0.0:
            raise ConfigError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        object.__setattr__(self, "arena_min", np.asarray(self.arena_min, dtype=float))
        object.__setattr__(self, "arena_max", np.asarray(self.arena_max, dtype=float))
        direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(direction)
        if not norm > 0.0:
            raise ConfigError("obstacle direction must be a nonzero vector")
        object.__setattr__(self, "direction", direction / norm)


@dataclass(frozen=True)
class ConstraintVerdict:
    min_margin: float
    mean_penalty: float
    violated: bool


def obstacle_position(obstacle: Obstacle, t) -> np.ndarray:
    """Center of the obstacle at time t (scalar or array of times).

    Returns shape (3,) for scalar t, (len(t), 3) for an array.
    """
    t = np.asarray(t, dtype=float)
    base = np.broadcast_to(obstacle.anchor, t.shape + (3,)).copy()
    a, w, phi = obstacle.amplitude, obstacle.angular_frequency, obstacle.phase
    if obstacle.motion == "stationary":
        pass
    elif obstacle.motion == "circular":
        base[..., 0] += a * np.cos(w * t + phi)
        base[..., 1] += a * np.sin(w * t + phi)
    elif obstacle.motion == "diagonal":
        base += (a * np.sin(w * t))[..., None] * obstacle.direction
    elif obstacle.motion == "sinusoidal":
        drift = base + (a * w * t)[..., None] * obstacle.direction
        base = np.clip(drift, obstacle.arena_min, obstacle.arena_max)
        base[..., 2] += a * np.sin(w * t + phi)
    return base


def obstacle_positions_over(obstacles: Sequence[Obstacle], times: np.ndarray) -> np.ndarray:
    """Centers of all obstacles at the given times, shape (T, n_obs, 3)."""
    times = np.asarray(times, dtype=float)
    if not obstacles:
        return np.zeros(times.shape + (0, 3))
    return np.stack([obstacle_position(o, times) for o in obstacles], axis=-2)


def l1_margin(robot_pos, obstacle_pos, radius: float) -> float:
    """L1 center distance minus the inflated radius."""
    diff = np.asarray(robot_pos, dtype=float) - np.asarray(obstacle_pos, dtype=float)
    return float(np.sum(np.abs(diff))) - radius


def penalty_term(margin: float) -> float:
    """Flat step penalty: PENALTY inside the inflated region, else 0."""
    return PENALTY if margin < 0.0 else 0.0


def _positions_of(trajectory) -> np.ndarray:
    """(T, 3) positions from a State sequence or a (T, 13)/(T, 3) array."""
    if isinstance(trajectory, np.ndarray):
        if trajectory.ndim == 2 and trajectory.shape[1] == 13:
            return trajectory[:, 0:3]
        if trajectory.ndim == 2 and trajectory.shape[1] == 3:
            return trajectory
        raise ValueError(f"expected (T, 13) or (T, 3) array, got {trajectory.shape}")
    return np.array([s.position for s in trajectory], dtype=float)


def evaluate_trajectory(trajectory, obstacles: Sequence[Obstacle],
                        t0: float, dt: float) -> ConstraintVerdict:
    """Worst-case margins and average penalty along one trajectory.

    Step i is evaluated at time t0 + i*dt against every obstacle; the
    per-step penalty uses the worst (minimum) margin over obstacles, and
    mean_penalty averages those penalties over the trajectory's steps.
    """
    positions = _positions_of(trajectory)
    if positions.shape[0] == 0:
        raise ValueError("trajectory must be non-empty")
    if not obstacles:
        return ConstraintVerdict(min_margin=np.inf, mean_penalty=0.0, violated=False)
    times = t0 + dt * np.arange(positions.shape[0])
    centers = obstacle_positions_over(obstacles, times)          # (T, n, 3)
    radii = np.array([o.radius for o in obstacles])
    margins = np.sum(np.abs(positions[:, None, :] - centers), axis=-1) - radii
    worst_per_step = margins.min(axis=1)                          # (T,)
    min_margin = float(worst_per_step.min())
    mean_penalty = float(PENALTY * np.mean(worst_per_step < 0.0))
    return ConstraintVerdict(min_margin=min_margin,
                             mean_penalty=mean_penalty,
                             violated=min_margin < 0.0)


def batch_margins(positions: np.ndarray, centers: np.ndarray, radii: np.ndarray):
    """Batched margins for K rollouts sharing an obstacle timeline.

    Args:
        positions: (K, T, 3) rollout positions.
        centers: (T, n_obs, 3) obstacle centers at the matching times.
        radii: (n_obs,) inflated radii.

    Returns:
        min_margin: (K,) minimum margin over steps and obstacles.
        penalty_sum: (K,) total of per-step penalties (worst obstacle per step).
    """
    num_samples, steps, _ = positions.shape
    if centers.shape[-2] == 0:
        return np.full(num_samples, np.inf), np.zeros(num_samples)
    diffs = np.abs(positions[:, :, None, :] - centers[None, :, :, :])
    margins = diffs.sum(axis=-1) - radii                          # (K, T, n)
    worst_per_step = margins.min(axis=2)                          # (K, T)
    min_margin = worst_per_step.min(axis=1)
    penalty_sum = PENALTY * np.sum(worst_per_step < 0.0, axis=1).astype(float)
    return min_margin, penalty_sum
