"""Sampling-based path-integral controller.

One replanning step draws K Gaussian perturbations of the nominal thrust
plan, rolls each candidate out through the quadrotor model, scores it with
a quadratic tracking cost, and recombines the perturbations with
exponentiated-cost importance weights:

    mu_k    = exp(-(J_k - rho) / temperature),   rho = min finite cost
    mu~_k   = mu_k * w_k          (w_k = feasibility factor in [0, 1])
    omega_k = mu~_k / sum_j mu~_j

The first input of the updated plan is applied; the plan is then shifted
one step (last row repeated) to warm-start the next replanning instant.

Randomness: every sample k of every replanning step owns a disjoint
counter block of one shared Philox stream, so the drawn perturbations are
independent of evaluation order, batch size, and worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from . import _kernels
from .constraints import Obstacle, batch_margins, obstacle_positions_over
from .dynamics import ControlInput, QuadrotorParams, State
from .errors import ConfigError, NoViableSampleError


@dataclass(frozen=True)
class ControlPlan:
    """Zero-order-hold rotor thrust schedule: one 4-vector per step."""

    thrusts: np.ndarray          # (N, 4) Newtons
    dt: float = 0.02

    def __post_init__(self):
        thrusts = np.asarray(self.thrusts, dtype=float)
        if thrusts.ndim != 2 or thrusts.shape[1] != 4:
            raise ValueError(f"plan must have shape (N, 4), got {thrusts.shape}")
        object.__setattr__(self, "thrusts", thrusts)

    @property
    def horizon(self) -> int:
        return self.thrusts.shape[0]

    def flattened(self) -> np.ndarray:
        """Row-major (step-major) flattening, length 4*N."""
        return self.thrusts.reshape(-1)

    @classmethod
    def hover(cls, params: QuadrotorParams, horizon: int, dt: float = 0.02) -> "ControlPlan":
        return cls(np.full((horizon, 4), params.hover_thrust), dt)


@dataclass(frozen=True)
class CostSpec:
    """Quadratic tracking cost weights plus the target position."""

    position_weight: float = 2.0
    velocity_weight: float = 0.3
    control_weight: float = 1.0e-4
    terminal_position_weight: float = 10.0
    target: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        weights = (self.position_weight, self.velocity_weight,
                   self.control_weight, self.terminal_position_weight)
        if any(w < 0.0 for w in weights):
            raise ConfigError(f"cost weights must be nonnegative, got {weights}")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))


@dataclass(frozen=True)
class MppiConfig:
    num_samples: int = 300
    temperature: float = 2.0
    sigma: float | Sequence[float] = 0.4    # per-channel std, Newtons
    horizon: int = 25
    seed: int = 0
    rejection_epsilon: float | None = None  # default 1e-6 / num_samples
    baseline_rule: str = "min_cost"

    def __post_init__(self):
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be >= 1, got {self.num_samples}")
        if not self.temperature > 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.baseline_rule != "min_cost":
            raise ConfigError(f"unsupported baseline rule {self.baseline_rule!r}")
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim not in (0, 1) or (sigma.ndim == 1 and sigma.shape != (4,)):
            raise ConfigError("sigma must be a scalar or a length-4 vector")
        if np.any(sigma < 0.0):
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")
        eps = self.resolved_rejection_epsilon
        if not 0.0 <= eps < 1.0 / self.num_samples:
            raise ConfigError(
                f"rejection_epsilon must lie in [0, 1/K), got {eps} with K={self.num_samples}")

    @property
    def resolved_rejection_epsilon(self) -> float:
        if self.rejection_epsilon is None:
            return 1.0e-6 / self.num_samples
        return self.rejection_epsilon


@dataclass(frozen=True)
class RolloutEvaluation:
    """Per-sample record of one replanning step."""

    cost: float
    mu: float
    feasibility: float
    mu_tilde: float
    omega: float
    violated: bool
    rejected: bool


class StepDiagnostics(Sequence):
    """All K RolloutEvaluations of one step, stored as arrays.

    Behaves as a sequence of RolloutEvaluation; the array attributes are the
    fast path for metric aggregation.
    """

    __slots__ = ("costs", "mu", "feasibility", "mu_tilde", "omega",
                 "violated", "rejected", "all_infeasible_fallback", "no_viable_sample")

    def __init__(self, costs, mu, feasibility, mu_tilde, omega, violated, rejected,
                 all_infeasible_fallback=False, no_viable_sample=False):
        self.costs = costs
        self.mu = mu
        self.feasibility = feasibility
        self.mu_tilde = mu_tilde
        self.omega = omega
        self.violated = violated
        self.rejected = rejected
        self.all_infeasible_fallback = all_infeasible_fallback
        self.no_viable_sample = no_viable_sample

    def __len__(self) -> int:
        return len(self.costs)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        return RolloutEvaluation(
            cost=float(self.costs[index]),
            mu=float(self.mu[index]),
            feasibility=float(self.feasibility[index]),
            mu_tilde=float(self.mu_tilde[index]),
            omega=float(self.omega[index]),
            violated=bool(self.violated[index]),
            rejected=bool(self.rejected[index]),
        )

    @classmethod
    def empty(cls, num_samples: int, no_viable_sample: bool = False) -> "StepDiagnostics":
        z = np.zeros(num_samples)
        return cls(np.full(num_samples, np.inf), z.copy(), np.ones(num_samples),
                   z.copy(), z.copy(), np.zeros(num_samples, bool),
                   np.ones(num_samples, bool), no_viable_sample=no_viable_sample)


class PerturbationStreams:
    """Counter-based per-sample noise substreams.

    Sample k of replanning step s owns Philox counter blocks
    [horizon*k, horizon*(k+1)) of the stream keyed by (seed, step=s): each
    standard normal consumes exactly one uint64 (inverse-CDF transform), so
    a sample's draw never depends on how many samples are drawn around it.
    """

    def __init__(self, seed: int):
        self._key = np.random.SeedSequence(seed).generate_state(2, np.uint64)

    def _generator(self, step: int, block: int) -> np.random.Generator:
        counter = np.array([block, 0, step, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    @staticmethod
    def _to_normals(raw: np.ndarray) -> np.ndarray:
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
        return ndtri(u)

    def normals(self, step: int, num_samples: int, horizon: int) -> np.ndarray:
        """(num_samples, horizon, 4) standard normals for one step."""
        gen = self._generator(step, 0)
        raw = gen.integers(0, 2 ** 64, size=num_samples * horizon * 4, dtype=np.uint64)
        return self._to_normals(raw).reshape(num_samples, horizon, 4)

    def sample_normals(self, step: int, sample: int, horizon: int) -> np.ndarray:
        """Reference single-sample draw; equals normals(...)[sample] exactly."""
        gen = self._generator(step, horizon * sample)
        raw = gen.integers(0, 2 ** 64, size=horizon * 4, dtype=np.uint64)
        return self._to_normals(raw).reshape(horizon, 4)


def sample_perturbations(config: MppiConfig, streams: PerturbationStreams,
                         step_index: int) -> np.ndarray:
    """K zero-mean Gaussian plan perturbations, shape (K, N, 4)."""
    z = streams.normals(step_index, config.num_samples, config.horizon)
    return z * np.asarray(config.sigma, dtype=float)


def tracking_costs(traj: np.ndarray, plans: np.ndarray, cost: CostSpec) -> np.ndarray:
    """Quadratic tracking cost of each rollout.

    Running terms use states x_0..x_{N-1} with inputs u_0..u_{N-1}; the
    terminal position term uses x_N.
    """
    pos_err = traj[:, :-1, 0:3] - cost.target
    vel = traj[:, :-1, 7:10]
    term_err = traj[:, -1, 0:3] - cost.target
    j = cost.position_weight * np.sum(pos_err * pos_err, axis=(1, 2))
    j += cost.velocity_weight * np.sum(vel * vel, axis=(1, 2))
    j += cost.control_weight * np.sum(plans * plans, axis=(1, 2))
    j += cost.terminal_position_weight * np.sum(term_err * term_err, axis=1)
    return j


def rollout_cost(initial: State, plan: ControlPlan, cost: CostSpec,
                 params: QuadrotorParams, scenario_clock: float = 0.0,
                 obstacles: Sequence[Obstacle] = (),
                 include_penalty: bool = False):
    """Cost and state trajectory of a single plan.

    Returns (J, trajectory); J is +inf and the trajectory is truncated at
    the last sane state if the rollout diverges.  With include_penalty,
    per-step obstacle penalties (evaluated at scenario_clock + i*dt along
    the horizon) are added to J.
    """
    plans = np.clip(plan.thrusts, 0.0, params.u_max)[None, :, :]
    traj, diverged_at = _kernels.rollout_batch(initial.as_array(), plans, plan.dt, params)
    horizon = plan.horizon
    if diverged_at[0] <= horizon:
        states = [State.from_array(traj[0, i]) for i in range(diverged_at[0])]
        return math.inf, states
    j = float(tracking_costs(traj, plans, cost)[0])
    if include_penalty and obstacles:
        times = scenario_clock + plan.dt * np.arange(1, horizon + 1)
        centers = obstacle_positions_over(obstacles, times)
        radii = np.array([o.radius for o in obstacles])
        _, penalty_sum = batch_margins(traj[:, 1:, 0:3], centers, radii)
        j += float(penalty_sum[0])
    states = [State.from_array(traj[0, i]) for i in range(horizon + 1)]
    return j, states


def compute_weights(costs, temperature: float, feasibility,
                    rejection_epsilon: float = 0.0, violated=None) -> StepDiagnostics:
    """Exponentiated-cost importance weights, modulated by feasibility.

    Infinite-cost samples get mu = 0.  If every modulated weight vanishes
    but some cost is finite, weights fall back to the unmodulated mu and
    the all_infeasible_fallback flag is set.  Raises NoViableSampleError
    when every cost is infinite.
    """
    costs = np.asarray(costs, dtype=float)
    feasibility = np.asarray(feasibility, dtype=float)
    if feasibility.shape != costs.shape:
        raise ValueError(f"feasibility shape {feasibility.shape} != costs shape {costs.shape}")
    if np.any((feasibility < 0.0) | (feasibility > 1.0)):
        raise ValueError("feasibility factors must lie in [0, 1]")
    finite = np.isfinite(costs)
    if not finite.any():
        raise NoViableSampleError("all sampled rollouts have infinite cost")
    rho = costs[finite].min()
    mu = np.exp(-(costs - rho) / temperature)   # exp(-inf) = 0 for diverged samples
    mu_tilde = mu * feasibility
    total = mu_tilde.sum()
    if total > 0.0:
        omega = mu_tilde / total
        fallback = False
    else:
        omega = mu / mu.sum()
        fallback = True
    rejected = omega < rejection_epsilon
    if violated is None:
        violated = np.zeros(costs.shape, dtype=bool)
    return StepDiagnostics(costs, mu, feasibility, mu_tilde, omega,
                           np.asarray(violated, dtype=bool), rejected,
                           all_infeasible_fallback=fallback)


def update_plan(nominal: ControlPlan, perturbations: np.ndarray,
                evaluations, u_max: float) -> ControlPlan:
    """Weighted recombination of the perturbations, clamped to [0, u_max]."""
    if isinstance(evaluations, StepDiagnostics):
        omega = evaluations.omega
    else:
        omega = np.array([e.omega for e in evaluations])
    delta = np.tensordot(omega, perturbations, axes=1)
    return ControlPlan(np.clip(nominal.thrusts + delta, 0.0, u_max), nominal.dt)


def shift_plan(plan: ControlPlan) -> ControlPlan:
    """Receding-horizon warm start: drop the first row, repeat the last."""
    return ControlPlan(np.vstack([plan.thrusts[1:], plan.thrusts[-1:]]), plan.dt)


class MppiController:
    """Receding-horizon MPPI with optional penalty costs and feasibility
    weighting.

    feasibility_fn, when given, maps (measured state, clamped candidate
    plans (K, N, 4), clock) to K factors in [0, 1] multiplied into the
    importance weights.  Without it all factors are 1 (classic MPPI).
    """

    def __init__(self, params: QuadrotorParams, config: MppiConfig, cost: CostSpec,
                 obstacles: Sequence[Obstacle] = (), dt: float = 0.02,
                 penalty_in_cost: bool = False,
                 feasibility_fn: Callable[[State, np.ndarray, float], np.ndarray] | None = None,
                 workers: int = 1):
        self.params = params
        self.config = config
        self.cost = cost
        self.obstacles = tuple(obstacles)
        self.dt = dt
        self.penalty_in_cost = penalty_in_cost
        self.feasibility_fn = feasibility_fn
        self.workers = max(1, int(workers))
        self.nominal = ControlPlan.hover(params, config.horizon, dt)
        self._streams = PerturbationStreams(config.seed)
        self._step_index = 0
        self._previous_input = ControlInput(self.nominal.thrusts[0].copy())
        self._radii = np.array([o.radius for o in self.obstacles])

    def reset(self, nominal: ControlPlan | None = None):
        self.nominal = nominal or ControlPlan.hover(self.params, self.config.horizon, self.dt)
        self._step_index = 0
        self._previous_input = ControlInput(self.nominal.thrusts[0].copy())

    def _rollout(self, x0: np.ndarray, plans: np.ndarray):
        """Kernel rollout, chunked over workers; sample order is preserved
        and per-sample results are chunk-independent, so any worker count
        yields identical output."""
        if self.workers == 1 or plans.shape[0] < 2 * self.workers:
            return _kernels.rollout_batch(x0, plans, self.dt, self.params)
        chunks = np.array_split(np.arange(plans.shape[0]), self.workers)
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            parts = list(pool.map(
                lambda idx: _kernels.rollout_batch(x0, plans[idx], self.dt, self.params),
                chunks))
        traj = np.concatenate([p[0] for p in parts], axis=0)
        diverged = np.concatenate([p[1] for p in parts], axis=0)
        return traj, diverged

    def receding_horizon_step(self, measured: State, clock: float):
        """One replanning step: returns (applied input, StepDiagnostics)."""
        cfg = self.config
        step_index = self._step_index
        self._step_index += 1

        perturbations = sample_perturbations(cfg, self._streams, step_index)
        plans = np.clip(self.nominal.thrusts[None, :, :] + perturbations,
                        0.0, self.params.u_max)
        traj, diverged_at = self._rollout(measured.as_array(), plans)
        costs = tracking_costs(traj, plans, self.cost)
        costs[diverged_at <= cfg.horizon] = np.inf

        if self.obstacles:
            times = clock + self.dt * np.arange(1, cfg.horizon + 1)
            centers = obstacle_positions_over(self.obstacles, times)
            min_margin, penalty_sum = batch_margins(traj[:, 1:, 0:3], centers, self._radii)
            violated = min_margin < 0.0
            if self.penalty_in_cost:
                costs = costs + penalty_sum
        else:
            violated = np.zeros(cfg.num_samples, dtype=bool)

        if self.feasibility_fn is not None:
            feasibility = np.asarray(self.feasibility_fn(measured, plans, clock), dtype=float)
        else:
            feasibility = np.ones(cfg.num_samples)

        try:
            diagnostics = compute_weights(costs, cfg.temperature, feasibility,
                                          rejection_epsilon=cfg.resolved_rejection_epsilon,
                                          violated=violated)
        except NoViableSampleError:
            return self._previous_input, StepDiagnostics.empty(
                cfg.num_samples, no_viable_sample=True)

        updated = update_plan(self.nominal, perturbations, diagnostics, self.params.u_max)
        applied = ControlInput(updated.thrusts[0].copy())
        self.nominal = shift_plan(updated)
        self._previous_input = applied
        return applied, diagnostics
