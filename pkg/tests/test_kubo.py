"""Oscillator with multiplicative frequency noise: closed forms."""

import numpy as np
import pytest

from sderom.integrators import energy_trace, integrate, poisson_bracket
from sderom.kubo import (
    KuboConfig,
    initial_state,
    kubo_exact,
    kubo_exact_ensemble,
    kubo_exact_mean,
    kubo_system,
)
from sderom.paths import RngSpec, TimeGrid, WienerPath, generate_wiener


def test_exact_solution_is_a_rotation_by_shifted_time():
    cfg = KuboConfig(beta=0.5, q0=0.3, p0=-0.7)
    grid = TimeGrid(t0=0.0, dt=0.1, n_steps=30)
    path = generate_wiener(RngSpec(seed=12), grid, 1)
    traj = kubo_exact(cfg, path)
    w = path.cumulative()[:, 0]
    t = grid.nodes() - grid.t0
    angle = t + cfg.beta * w
    q = cfg.p0 * np.sin(angle) + cfg.q0 * np.cos(angle)
    p = cfg.p0 * np.cos(angle) - cfg.q0 * np.sin(angle)
    assert np.allclose(traj.states[:, 0], q, atol=1e-14)
    assert np.allclose(traj.states[:, 1], p, atol=1e-14)
    # the rotation preserves the energy exactly
    trace = energy_trace(kubo_system(cfg), traj.states)
    assert np.allclose(trace, trace[0], atol=1e-14)


def test_exact_mean_decays_exponentially():
    cfg = KuboConfig(beta=0.5, q0=0.0, p0=1.0)
    t = np.array([0.0, 1.0])
    mean = kubo_exact_mean(cfg, t)
    assert mean[0] == pytest.approx([0.0, 1.0], abs=1e-15)
    assert mean[1, 0] == pytest.approx(0.7425955377077779, abs=1e-15)
    assert mean[1, 1] == pytest.approx(0.476815111387948, abs=1e-15)


def test_sampled_mean_converges_to_closed_form():
    cfg = KuboConfig(beta=0.5)
    grid = TimeGrid(t0=0.0, dt=0.05, n_steps=100)
    n_paths = 4000
    ens = kubo_exact_ensemble(cfg, RngSpec(seed=42), grid, n_paths, record_stride=100)
    closed = kubo_exact_mean(cfg, ens.times)
    # Monte Carlo error is ~1/sqrt(M) with unit-size samples
    assert np.max(np.abs(ens.mean - closed)) < 4.0 / np.sqrt(n_paths)


def test_noise_hamiltonian_commutes_with_energy():
    system = kubo_system(KuboConfig(beta=0.7))
    assert abs(poisson_bracket(system, np.array([0.5]), np.array([1.2]))) < 1e-15


def test_integrators_track_the_exact_path():
    cfg = KuboConfig(beta=0.4, q0=0.1, p0=0.9)
    system = kubo_system(cfg)
    grid = TimeGrid(t0=0.0, dt=0.002, n_steps=500)
    path = generate_wiener(RngSpec(seed=7), grid, 1)
    exact = kubo_exact(cfg, path)
    for method in ("heun", "r2", "midpoint", "stormer_verlet"):
        traj = integrate(system, method, initial_state(cfg), path)
        err = np.max(np.linalg.norm(traj.states - exact.states, axis=1))
        assert err < 5e-4, method


def test_exact_ensemble_streams_the_same_noise_as_the_stacked_run():
    cfg = KuboConfig(beta=0.3)
    grid = TimeGrid(t0=0.0, dt=0.02, n_steps=64)
    ens = kubo_exact_ensemble(cfg, RngSpec(seed=5), grid, 3, record_stride=16)
    whole = generate_wiener(RngSpec(seed=5), grid, 3)
    single = kubo_exact(
        cfg, WienerPath(grid=grid, increments=whole.increments[:, 1:2])
    )
    assert np.allclose(ens.states[1], single.states[::16], atol=1e-13)


def test_vectorized_evaluation_matches_per_state_calls():
    system = kubo_system(KuboConfig(beta=0.6))
    rng = np.random.default_rng(3)
    batch = rng.standard_normal((5, 2))
    h_batch = system.hamiltonian(batch[:, :1], batch[:, 1:])
    h_each = [system.hamiltonian(s[:1], s[1:]) for s in batch]
    assert np.allclose(h_batch, h_each, atol=1e-15)
