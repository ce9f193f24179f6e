"""Vectorized numpy rollout kernel (fallback backend).

Integrates K control plans forward from a shared (or per-sample) initial
state.  Samples are fully independent: every operation is elementwise over
the batch axis or a per-sample reduction, so results do not depend on how
the batch is chunked across workers.
"""

from __future__ import annotations

import numpy as np

from ..dynamics import DIVERGENCE_LIMIT, QuadrotorParams, _rk4_step_arrays


def rollout_batch(x0: np.ndarray, plans: np.ndarray, dt: float,
                  params: QuadrotorParams):
    """Roll out K plans of N steps each.

    Args:
        x0: initial state, shape (13,) shared or (K, 13) per sample.
        plans: rotor thrusts, shape (K, N, 4), already clamped.
        dt: integration step, s.
        params: plant constants.

    Returns:
        traj: (K, N+1, 13) states including the initial one.  A sample that
            diverges is frozen at its last sane state for the remaining steps.
        diverged_at: (K,) int64, index of the first diverged state, or N+1
            if the sample stayed sane throughout.
    """
    plans = np.asarray(plans, dtype=np.float64)
    num_samples, horizon, _ = plans.shape
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 1:
        x = np.broadcast_to(x0, (num_samples, 13)).copy()
    else:
        x = x0.copy()

    traj = np.empty((num_samples, horizon + 1, 13))
    traj[:, 0, :] = x
    diverged_at = np.full(num_samples, horizon + 1, dtype=np.int64)
    alive = np.ones(num_samples, dtype=bool)

    for i in range(horizon):
        xn = _rk4_step_arrays(x, plans[:, i, :], dt, params)
        with np.errstate(invalid="ignore"):
            sane = np.all(np.abs(xn) <= DIVERGENCE_LIMIT, axis=1)
        sane &= np.all(np.isfinite(xn), axis=1)
        newly_dead = alive & ~sane
        diverged_at[newly_dead] = i + 1
        alive &= sane
        x = np.where(alive[:, None], xn, x)
        traj[:, i + 1, :] = x
    return traj, diverged_at
