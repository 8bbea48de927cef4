"""Plant simulation tests: determinism, linearity, noise statistics."""

from __future__ import annotations

import numpy as np
import pytest

from blindwatch.errors import DimensionMismatch, NotPositiveDefinite
from blindwatch.plant import (
    AnomalyProfile,
    SystemModel,
    model_from_json,
    model_to_json,
    plant_init,
    plant_step,
)
from blindwatch.reactor import reactor_fault, reactor_input, reactor_model


def _run(model, seed, horizon, noise=True, profile=None):
    state = plant_init(model, seed, noise=noise)
    ys = []
    profile = profile or AnomalyProfile()
    for k in range(1, horizon + 1):
        ys.append(plant_step(model, state, reactor_input(k), profile.delta_at(k)))
    return np.array(ys)


def test_deterministic_mode_starts_at_mean():
    model = reactor_model()
    state = plant_init(model, 0, noise=False)
    assert np.array_equal(state.x, model.x0_mean)
    y = plant_step(model, state, np.zeros(3))
    assert np.array_equal(y, model.C @ model.x0_mean)
    assert np.array_equal(state.x, model.A @ model.x0_mean)
    assert state.k == 2


def test_seed_determinism_bit_identical():
    model = reactor_model()
    t1 = _run(model, 1234, 50, profile=reactor_fault())
    t2 = _run(model, 1234, 50, profile=reactor_fault())
    assert np.array_equal(t1, t2)
    t3 = _run(model, 1235, 50, profile=reactor_fault())
    assert not np.array_equal(t1, t3)


def test_fault_shifts_output_and_state_linearly():
    model = reactor_model()
    base = _run(model, 0, 10, noise=False)
    faulted = _run(model, 0, 10, noise=False, profile=AnomalyProfile("step", onset=1, value=[0.5]))
    # y shift at onset is the output fault map; afterwards the state map
    # propagates through the dynamics as well
    assert np.allclose(faulted[0] - base[0], 0.5 * model.fault_output_map[:, 0])
    expected_second = 0.5 * (model.C @ model.fault_state_map[:, 0] + model.fault_output_map[:, 0])
    assert np.allclose(faulted[1] - base[1], expected_second)


def test_superposition_of_inputs():
    model = reactor_model()
    horizon = 40
    rng = np.random.default_rng(8)
    u1 = rng.uniform(-1, 1, size=(horizon, 3))
    u2 = rng.uniform(-1, 1, size=(horizon, 3))

    def traj(useq):
        state = plant_init(model, 0, noise=False)
        return np.array([plant_step(model, state, useq[k]) for k in range(horizon)])

    lhs = traj(u1 + u2)
    rhs = traj(u1) + traj(u2) - traj(np.zeros((horizon, 3)))
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_initial_state_monte_carlo_mean():
    model = reactor_model()
    draws = np.array([plant_init(model, seed).x for seed in range(10_000)])
    band = 3.0 * np.sqrt(np.diag(model.x0_cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - model.x0_mean) < band + 1e-12)


def test_output_noise_covariance_monte_carlo():
    model = reactor_model()
    state = plant_init(model, 77)
    horizon = 100_000
    u = np.zeros(3)
    w = np.empty((horizon, model.n_y))
    for i in range(horizon):
        x_before = state.x
        y = plant_step(model, state, u)
        w[i] = y - model.C @ x_before
    emp = np.cov(w.T, bias=True)
    assert np.linalg.norm(emp - model.R, "fro") < 0.05 * np.linalg.norm(model.R, "fro")


def test_dimension_checks():
    model = reactor_model()
    state = plant_init(model, 0)
    with pytest.raises(DimensionMismatch):
        plant_step(model, state, np.zeros(2))
    with pytest.raises(DimensionMismatch):
        plant_step(model, state, np.zeros(3), np.zeros(2))


def test_bad_covariance_rejected():
    model = reactor_model()
    bad = SystemModel(
        A=model.A,
        B=model.B,
        C=model.C,
        fault_state_map=model.fault_state_map,
        fault_output_map=model.fault_output_map,
        Q=-np.eye(4),
        R=model.R,
        x0_mean=model.x0_mean,
        x0_cov=model.x0_cov,
    )
    with pytest.raises(NotPositiveDefinite):
        bad.validate()
    with pytest.raises(NotPositiveDefinite):
        plant_init(bad, 0)


def test_model_json_roundtrip_exact():
    model = reactor_model()
    doc = model_to_json(model)
    back = model_from_json(doc)
    for name in ("A", "B", "C", "fault_state_map", "fault_output_map", "Q", "R", "x0_mean", "x0_cov"):
        assert np.array_equal(getattr(back, name), getattr(model, name)), name


def test_model_json_rejects_inconsistent_dims():
    doc = model_to_json(reactor_model())
    doc["R"] = [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(DimensionMismatch):
        model_from_json(doc)


def test_anomaly_profile_schedule():
    prof = AnomalyProfile("step", onset=20, value=[0.9])
    assert np.all(prof.delta_at(19) == 0.0)
    assert prof.delta_at(20)[0] == 0.9
    assert prof.active_at(20) and not prof.active_at(19)
    none = AnomalyProfile()
    assert not none.active_at(5) and np.all(none.delta_at(5) == 0.0)
