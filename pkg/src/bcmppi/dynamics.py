"""Rigid-body quadrotor model with fixed-step RK4 integration.

State layout (13 components, used everywhere a flat vector is needed):

    [0:3]   position, m, world frame (z up)
    [3:7]   attitude quaternion (w, x, y, z), scalar-first Hamilton
            convention, rotating body vectors into the world frame
    [7:10]  linear velocity, m/s, world frame
    [10:13] angular velocity, rad/s, body frame

Control input is the 4-vector of rotor thrusts in Newtons.  Rotors sit in
an X configuration; with d = arm_length / sqrt(2), the rotor arms project
to (+d,+d), (-d,+d), (-d,-d), (+d,-d) in the body x-y plane and spin
CCW, CW, CCW, CW respectively, so the thrust-to-torque mixing is

    tau_x = d * ((u0 + u1) - (u2 + u3))
    tau_y = d * ((u1 + u2) - (u0 + u3))
    tau_z = kappa * ((u1 + u3) - (u0 + u2))

All functions are pure and deterministic; they may be called concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergedStateError

# Any state component beyond this magnitude counts as numerically diverged.
DIVERGENCE_LIMIT = 1.0e6


@dataclass(frozen=True)
class QuadrotorParams:
    """Physical constants of the plant.  All strictly positive."""

    mass: float = 0.8
    inertia_diagonal: tuple[float, float, float] = (5.0e-3, 5.0e-3, 9.0e-3)
    arm_length: float = 0.17
    rotor_torque_coefficient: float = 0.016
    gravity: float = 9.81
    u_max: float = 6.0

    def __post_init__(self):
        values = (self.mass, *self.inertia_diagonal, self.arm_length,
                  self.rotor_torque_coefficient, self.gravity, self.u_max)
        if any(not (v > 0.0) for v in values):
            raise ConfigError(f"quadrotor parameters must be strictly positive, got {self}")

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust that balances gravity."""
        return self.mass * self.gravity / 4.0

    def as_tuple(self):
        """(mass, ixx, iyy, izz, arm_d, kappa, gravity) for the kernels."""
        ixx, iyy, izz = self.inertia_diagonal
        return (self.mass, ixx, iyy, izz,
                self.arm_length / math.sqrt(2.0),
                self.rotor_torque_coefficient, self.gravity)


@dataclass(frozen=True)
class State:
    position: np.ndarray
    attitude: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray

    @classmethod
    def hover(cls, position=(0.0, 0.0, 0.0)) -> "State":
        """At rest with identity attitude."""
        return cls(
            position=np.asarray(position, dtype=float),
            attitude=np.array([1.0, 0.0, 0.0, 0.0]),
            linear_velocity=np.zeros(3),
            angular_velocity=np.zeros(3),
        )

    @classmethod
    def from_array(cls, x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float)
        if x.shape != (13,):
            raise ValueError(f"state vector must have shape (13,), got {x.shape}")
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.attitude,
                               self.linear_velocity, self.angular_velocity])

    def check_sane(self) -> "State":
        """Raise DivergedStateError if any component is non-finite or huge."""
        x = self.as_array()
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_LIMIT):
            raise DivergedStateError(f"state diverged: {x}")
        return self


@dataclass(frozen=True)
class StateDerivative:
    position_rate: np.ndarray
    attitude_rate: np.ndarray
    velocity_rate: np.ndarray
    angular_rate: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position_rate, self.attitude_rate,
                               self.velocity_rate, self.angular_rate])


@dataclass(frozen=True)
class ControlInput:
    rotor_thrusts: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def clamped(self, u_max: float) -> "ControlInput":
        return ControlInput(np.clip(np.asarray(self.rotor_thrusts, dtype=float), 0.0, u_max))


def mixing_matrix(params: QuadrotorParams) -> np.ndarray:
    """3x4 matrix mapping rotor thrusts to body torques."""
    d = params.arm_length / math.sqrt(2.0)
    k = params.rotor_torque_coefficient
    return np.array([
        [d, d, -d, -d],
        [-d, d, d, -d],
        [-k, k, -k, k],
    ])


def _derivative_arrays(x: np.ndarray, u: np.ndarray, params: QuadrotorParams) -> np.ndarray:
    """Newton-Euler right-hand side, elementwise over leading batch dims.

    The expression structure here is mirrored verbatim by the compiled
    kernel; keep the two in sync (same operations, same grouping).
    """
    m, ixx, iyy, izz, d, kappa, g = params.as_tuple()
    qw, qx, qy, qz = x[..., 3], x[..., 4], x[..., 5], x[..., 6]
    vx, vy, vz = x[..., 7], x[..., 8], x[..., 9]
    wx, wy, wz = x[..., 10], x[..., 11], x[..., 12]
    u0, u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2], u[..., 3]

    # world-frame thrust acceleration: (T/m) * R(q) e_z, gravity along -z
    a = ((u0 + u1) + (u2 + u3)) / m
    ax = a * (2.0 * (qx * qz + qw * qy))
    ay = a * (2.0 * (qy * qz - qw * qx))
    az = a * (1.0 - 2.0 * (qx * qx + qy * qy)) - g

    # quaternion kinematics: q_dot = 0.5 * q (x) [0, omega]
    dqw = -0.5 * (qx * wx + qy * wy + qz * wz)
    dqx = 0.5 * (qw * wx + qy * wz - qz * wy)
    dqy = 0.5 * (qw * wy + qz * wx - qx * wz)
    dqz = 0.5 * (qw * wz + qx * wy - qy * wx)

    # diagonal-inertia Euler equations with X-configuration mixing
    tx = d * ((u0 + u1) - (u2 + u3))
    ty = d * ((u1 + u2) - (u0 + u3))
    tz = kappa * ((u1 + u3) - (u0 + u2))
    dwx = (tx - (izz - iyy) * wy * wz) / ixx
    dwy = (ty - (ixx - izz) * wz * wx) / iyy
    dwz = (tz - (iyy - ixx) * wx * wy) / izz

    out = np.empty_like(x)
    out[..., 0] = vx
    out[..., 1] = vy
    out[..., 2] = vz
    out[..., 3] = dqw
    out[..., 4] = dqx
    out[..., 5] = dqy
    out[..., 6] = dqz
    out[..., 7] = ax
    out[..., 8] = ay
    out[..., 9] = az
    out[..., 10] = dwx
    out[..., 11] = dwy
    out[..., 12] = dwz
    return out


def _rk4_step_arrays(x: np.ndarray, u: np.ndarray, dt: float,
                     params: QuadrotorParams) -> np.ndarray:
    """One classical RK4 step plus quaternion renormalization."""
    k1 = _derivative_arrays(x, u, params)
    k2 = _derivative_arrays(x + (0.5 * dt) * k1, u, params)
    k3 = _derivative_arrays(x + (0.5 * dt) * k2, u, params)
    k4 = _derivative_arrays(x + dt * k3, u, params)
    xn = x + (dt / 6.0) * ((k1 + k4) + 2.0 * (k2 + k3))
    qw, qx, qy, qz = xn[..., 3], xn[..., 4], xn[..., 5], xn[..., 6]
    norm = np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    xn[..., 3] = qw / norm
    xn[..., 4] = qx / norm
    xn[..., 5] = qy / norm
    xn[..., 6] = qz / norm
    return xn


def derivative(state: State, control: ControlInput, params: QuadrotorParams) -> StateDerivative:
    """Continuous-time derivative of the 13-dim state.

    Thrusts are assumed already clamped to [0, u_max].
    """
    dx = _derivative_arrays(state.as_array(), np.asarray(control.rotor_thrusts, dtype=float), params)
    if not np.all(np.isfinite(dx)):
        raise DivergedStateError(f"non-finite derivative: {dx}")
    return StateDerivative(dx[0:3], dx[3:7], dx[7:10], dx[10:13])


def step(state: State, control: ControlInput, dt: float, params: QuadrotorParams) -> State:
    """Advance the state by one RK4 step of length dt."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    xn = _rk4_step_arrays(state.as_array(),
                          np.asarray(control.rotor_thrusts, dtype=float), dt, params)
    if not np.all(np.isfinite(xn)) or np.any(np.abs(xn) > DIVERGENCE_LIMIT):
        raise DivergedStateError(f"state diverged during integration: {xn}")
    return State.from_array(xn)
