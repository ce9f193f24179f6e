"""Backend cross-checks: the compiled and numpy kernels must agree bitwise."""

import numpy as np
import pytest

from bcmppi._kernels import available_backends, rollout_batch
from bcmppi.dynamics import State, step, ControlInput

from conftest import random_state


@pytest.fixture
def batch(params):
    rng = np.random.default_rng(42)
    x0 = random_state(rng, params).as_array()
    plans = np.clip(params.hover_thrust + 0.5 * rng.standard_normal((64, 25, 4)),
                    0.0, params.u_max)
    return x0, plans


def test_backends_bit_identical(params, batch):
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("compiled kernel not available")
    x0, plans = batch
    results = {name: fn(x0, plans, 0.02, params) for name, fn in backends.items()}
    ref_traj, ref_div = results.pop("numpy")
    for name, (traj, div) in results.items():
        assert np.array_equal(traj, ref_traj), f"{name} trajectories differ"
        assert np.array_equal(div, ref_div), f"{name} divergence flags differ"


def test_batch_matches_scalar_step(params, batch):
    x0, plans = batch
    traj, _ = rollout_batch(x0, plans, 0.02, params)
    for k in (0, 17, 63):
        state = State.from_array(x0)
        for i in range(plans.shape[1]):
            state = step(state, ControlInput(plans[k, i]), 0.02, params)
            assert np.allclose(traj[k, i + 1], state.as_array(), rtol=0, atol=0), \
                f"sample {k} step {i} differs from scalar integration"


def test_chunking_is_transparent(params, batch):
    x0, plans = batch
    full, full_div = rollout_batch(x0, plans, 0.02, params)
    pieces = [rollout_batch(x0, chunk, 0.02, params)
              for chunk in np.array_split(plans, 7)]
    traj = np.concatenate([p[0] for p in pieces])
    div = np.concatenate([p[1] for p in pieces])
    assert np.array_equal(full, traj)
    assert np.array_equal(full_div, div)


def test_per_sample_initial_states(params):
    rng = np.random.default_rng(1)
    x0s = np.stack([random_state(rng, params).as_array() for _ in range(5)])
    plans = np.clip(params.hover_thrust + 0.3 * rng.standard_normal((5, 10, 4)),
                    0.0, params.u_max)
    traj, _ = rollout_batch(x0s, plans, 0.02, params)
    for k in range(5):
        single, _ = rollout_batch(x0s[k], plans[k:k + 1], 0.02, params)
        assert np.array_equal(traj[k], single[0])


@pytest.mark.parametrize("backend", sorted(available_backends()))
def test_divergence_freezes_sample(params, backend):
    fn = available_backends()[backend]
    x0 = State.hover().as_array()
    x0[0] = 9.99e5
    x0[7] = 9.0e5  # position crosses the 1e6 bound within a step
    plans = np.full((3, 8, 4), params.hover_thrust)
    traj, diverged_at = fn(x0, plans, 0.02, params)
    assert np.all(diverged_at <= 8)
    for k in range(3):
        d = diverged_at[k]
        last_sane = traj[k, d - 1]
        for i in range(d, 9):
            assert np.array_equal(traj[k, i], last_sane)
        assert np.all(np.abs(traj[k, :d]) <= 1.0e6)


def test_sane_batch_never_flags(params, batch):
    x0, plans = batch
    _, diverged_at = rollout_batch(x0, plans, 0.02, params)
    assert np.all(diverged_at == plans.shape[1] + 1)
