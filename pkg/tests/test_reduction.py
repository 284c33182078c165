"""Snapshot handling, projection bases, and greedy interpolation."""

import numpy as np
import pytest

from sderom.kubo import KuboConfig, kubo_system
from sderom.nls import NLSConfig, build_nls_system, soliton_initial_state
from sderom.paths import RngSpec, TimeGrid, generate_wiener
from sderom.integrators import integrate
from sderom.reduction import (
    DEIMOperator,
    SnapshotMatrix,
    assemble_snapshots,
    build_deim,
    build_pod,
    build_psd_cotangent_lift,
    deim_select_indices,
    energy_drift_terms,
    pod_deim_system,
    pool_snapshots,
    rank_for_energy,
    reduce_hamiltonian_psd,
    reduce_sde_pod,
    sample_states,
    sdeim_system,
    symplectic_inverse,
    symplecticity_defect,
    to_phase_split,
    truncated_svd,
)
from sderom.systems import j_apply


def _random_snapshots(seed, rows=12, cols=20, layout="generic"):
    rng = np.random.default_rng(seed)
    return SnapshotMatrix(data=rng.standard_normal((rows, cols)), layout=layout)


def test_sample_states_keeps_node_zero_and_stride_multiples():
    grid = TimeGrid(t0=0.0, dt=0.1, n_steps=25)
    system = kubo_system(KuboConfig(beta=0.2))
    path = generate_wiener(RngSpec(seed=1), grid, 1)
    traj = integrate(system, "heun", np.array([0.0, 1.0]), path)
    states = sample_states([traj], stride=10)
    assert states.shape == (2, 3)
    assert np.array_equal(states[:, 0], traj.states[0])
    assert np.array_equal(states[:, 2], traj.states[20])


def test_phase_split_halves_state_columns():
    # two sampled states of dimension 4 become four columns of height 2:
    # the q halves side by side, then the p halves
    states = np.arange(8.0).reshape(4, 2)
    split = to_phase_split(states)
    assert split.shape == (2, 4)
    assert np.array_equal(split[:, :2], states[:2])
    assert np.array_equal(split[:, 2:], states[2:])


def test_pooling_phase_split_reassembles_blocks():
    a = SnapshotMatrix(data=np.ones((4, 2)), layout="phase_split")
    b = SnapshotMatrix(data=2 * np.ones((4, 4)), layout="phase_split")
    pooled = pool_snapshots([a, b])
    assert pooled.layout == "phase_split"
    assert pooled.data.shape == (4, 6)
    # q columns of both runs first, then the p columns, so a global
    # q-block/p-block split survives pooling
    assert np.array_equal(pooled.data[:, 0], np.ones(4))
    assert np.array_equal(pooled.data[:, 1:3], 2 * np.ones((4, 2)))
    assert np.array_equal(pooled.data[:, 3], np.ones(4))
    assert np.array_equal(pooled.data[:, 4:], 2 * np.ones((4, 2)))


def test_truncated_svd_sign_rule_is_deterministic():
    snaps = _random_snapshots(3)
    svd = truncated_svd(snaps, 4)
    # the entry of largest magnitude in each retained column is positive
    for j in range(4):
        pivot = np.argmax(np.abs(svd.u[:, j]))
        assert svd.u[pivot, j] > 0
    again = truncated_svd(SnapshotMatrix(data=-snaps.data, layout="generic"), 4)
    assert np.allclose(svd.u, again.u, atol=1e-12)


def test_truncated_svd_validates_rank():
    snaps = _random_snapshots(3, rows=5, cols=4)
    with pytest.raises(ValueError):
        truncated_svd(snaps, 0)
    with pytest.raises(ValueError):
        truncated_svd(snaps, 5)


def test_rank_for_energy_thresholds_cumulative_power():
    sigma = np.array([10.0, 1.0, 0.1, 0.01])
    # total power 101.0101; one mode holds 98.99%, two hold 99.99%
    assert rank_for_energy(sigma, 0.98) == 1
    assert rank_for_energy(sigma, 0.9999) == 2
    assert rank_for_energy(sigma, 1.0) == 4


def test_pod_basis_is_orthonormal_and_reproduces_span():
    snaps = _random_snapshots(5, rows=10, cols=30)
    basis = build_pod(snaps, 10)
    assert np.allclose(basis.u.T @ basis.u, np.eye(10), atol=1e-12)
    # full rank: every snapshot column is reproduced exactly
    col = snaps.data[:, 7]
    assert np.allclose(basis.lift(basis.restrict(col)), col, atol=1e-12)


def test_psd_cotangent_lift_is_symplectic_and_left_invertible():
    snaps = _random_snapshots(6, rows=10, cols=24, layout="phase_split")
    basis = build_psd_cotangent_lift(snaps, 3)
    a = basis.a_matrix()
    assert symplecticity_defect(a) < 1e-12
    plus = symplectic_inverse(a)
    assert np.allclose(plus @ a, np.eye(6), atol=1e-12)
    # the symplectic inverse of the cotangent lift is its transpose
    assert np.allclose(plus, a.T, atol=1e-14)


def test_symplectic_inverse_rejects_non_symplectic_input():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        symplectic_inverse(rng.standard_normal((8, 4)))


def test_pod_reduction_is_exact_on_invariant_subspaces():
    # if the basis contains the whole trajectory, the reduced model
    # reproduces the full one step for step
    system = kubo_system(KuboConfig(beta=0.3)).as_sde()
    grid = TimeGrid(t0=0.0, dt=0.02, n_steps=200)
    path = generate_wiener(RngSpec(seed=11), grid, 1)
    traj = integrate(system, "heun", np.array([0.4, 0.9]), path)
    snaps = SnapshotMatrix(data=traj.states.T, layout="generic")
    basis = build_pod(snaps, 2)
    reduced = reduce_sde_pod(system, basis)
    xi = integrate(reduced.system, "heun", reduced.restrict(traj.states[0]), path)
    lifted = np.array([reduced.lift(x) for x in xi.states])
    assert np.allclose(lifted, traj.states, atol=1e-10)


def test_psd_reduction_preserves_hamiltonian_structure():
    cfg = NLSConfig(n_mesh=16, eps=1.0, beta=0.2)
    system = build_nls_system(cfg)
    grid = TimeGrid(t0=0.0, dt=0.01, n_steps=100)
    path = generate_wiener(RngSpec(seed=4), grid, 1)
    traj = integrate(system, "midpoint", soliton_initial_state(cfg), path)
    snaps = assemble_snapshots([traj], stride=5, layout="phase_split")
    basis = build_psd_cotangent_lift(snaps, 6)
    reduced = reduce_hamiltonian_psd(system, basis)
    # reduced Hamiltonian is the full one composed with the lift
    xi = reduced.restrict(traj.states[0])
    k = basis.k
    hq, hp = reduced.system.grad_hamiltonian(xi[:k], xi[k:])
    full = basis.a_matrix().T @ np.concatenate(
        system.grad_hamiltonian(*system.split(reduced.lift(xi)))
    )
    assert np.allclose(np.concatenate([hq, hp]), full, atol=1e-12)
    assert reduced.system.m == system.m


def test_deim_greedy_selection_matches_hand_computation():
    # step one picks the largest entry of the first mode; step two
    # maximizes the residual against the first interpolation:
    # c = -0.2/0.8, r = psi2 + 0.25 psi1 = [0.925, 0, 0.325, 0.0125]
    psi = np.array(
        [
            [0.1, 0.9],
            [0.8, -0.2],
            [-0.3, 0.4],
            [0.05, 0.0],
        ]
    )
    indices = deim_select_indices(psi)
    assert indices.tolist() == [1, 0]


def test_deim_interpolation_is_exact_at_selected_rows():
    rng = np.random.default_rng(9)
    snaps = SnapshotMatrix(data=rng.standard_normal((20, 40)), layout="generic")
    projector = build_pod(snaps, 6).u
    op = build_deim(
        snaps,
        5,
        projector,
        np.zeros((20, 20)),
        component_evaluator=lambda u, idx: u[idx] ** 2,
    )
    state = rng.standard_normal(20)
    interp = op.interpolate_nonlinear(state)
    assert np.allclose(interp[op.indices], state[op.indices] ** 2, atol=1e-13)


def test_deim_reproduces_snapshots_in_mode_span():
    # a nonlinearity that lies in the span of the modes is interpolated
    # exactly, not just at the selected rows
    rng = np.random.default_rng(10)
    low = rng.standard_normal((15, 3)) @ rng.standard_normal((3, 25))
    snaps = SnapshotMatrix(data=low, layout="generic")
    svd = truncated_svd(snaps, 3)
    indices = deim_select_indices(svd.u)
    sample = low[:, 4]
    coeff = np.linalg.solve(svd.u[indices], sample[indices])
    assert np.allclose(svd.u @ coeff, sample, atol=1e-12)


def test_deim_counts_component_evaluations():
    cfg = NLSConfig(n_mesh=16, eps=1.0, beta=0.2)
    system = build_nls_system(cfg)
    sde = system.as_sde()
    grid = TimeGrid(t0=0.0, dt=0.01, n_steps=60)
    path = generate_wiener(RngSpec(seed=4), grid, 1)
    traj = integrate(system, "midpoint", soliton_initial_state(cfg), path)
    states = sample_states([traj], stride=5)
    nonlin = np.stack([sde.nonlinear(c) for c in states.T], axis=1)
    projector = build_pod(
        SnapshotMatrix(data=states, layout="generic"), 8
    ).u

    counter = {"rows": 0}

    def counting_evaluator(u, idx):
        counter["rows"] += len(idx)
        return sde.nonlinear_component(u, idx)

    op = build_deim(
        SnapshotMatrix(data=nonlin, layout="generic"),
        5,
        projector,
        sde.linear,
        counting_evaluator,
    )
    op.reduced_map(np.zeros(8))
    assert counter["rows"] == 5


def test_pod_deim_drift_matches_exact_reduction_when_full_rank():
    cfg = NLSConfig(n_mesh=8, eps=1.0, beta=0.2)
    system = build_nls_system(cfg)
    sde = system.as_sde()
    rng = np.random.default_rng(3)
    states = rng.standard_normal((16, 30))
    nonlin = np.stack([sde.nonlinear(c) for c in states.T], axis=1)
    projector = build_pod(SnapshotMatrix(data=states, layout="generic"), 6).u
    op = build_deim(
        SnapshotMatrix(data=nonlin, layout="generic"),
        16,
        projector,
        sde.linear,
        sde.nonlinear_component,
    )
    reduced = reduce_sde_pod(sde, build_pod(SnapshotMatrix(data=states, layout="generic"), 6))
    deim = pod_deim_system(reduced, op)
    xi = rng.standard_normal(6)
    assert np.allclose(deim.system.drift(xi), reduced.system.drift(xi), atol=1e-11)
    # diffusion stays the exact reduced one
    assert np.allclose(
        deim.system.diffusion(xi, 0), reduced.system.diffusion(xi, 0), atol=1e-14
    )


def test_sdeim_drift_is_j_of_interpolated_gradient():
    cfg = NLSConfig(n_mesh=8, eps=1.0, beta=0.2)
    system = build_nls_system(cfg)
    grid = TimeGrid(t0=0.0, dt=0.01, n_steps=50)
    path = generate_wiener(RngSpec(seed=6), grid, 1)
    traj = integrate(system, "midpoint", soliton_initial_state(cfg), path)
    snaps = assemble_snapshots([traj], stride=5, layout="phase_split")
    basis = build_psd_cotangent_lift(snaps, 4)
    reduced = reduce_hamiltonian_psd(system, basis)
    states = sample_states([traj], stride=5)
    nonlin = np.stack([system.grad_nonlinear(c) for c in states.T], axis=1)
    op = build_deim(
        SnapshotMatrix(data=nonlin, layout="generic"),
        8,
        basis.a_matrix(),
        system.grad_linear,
        system.grad_nonlinear_component,
    )
    sdeim = sdeim_system(reduced, op)
    xi = reduced.restrict(traj.states[30])
    assert np.allclose(sdeim.system.drift(xi), j_apply(op.reduced_map(xi)), atol=1e-14)
    # untouched noise columns keep the exact reduced diffusion
    full_noise = reduced.system.grad_noise[0](
        xi[: basis.k], xi[basis.k :]
    )
    expected = j_apply(np.concatenate(full_noise))
    assert np.allclose(sdeim.system.diffusion(xi, 0), expected, atol=1e-14)


def test_energy_drift_terms_bound_gamma_pointwise():
    cfg = NLSConfig(n_mesh=8, eps=1.0, beta=0.2)
    system = build_nls_system(cfg)
    grid = TimeGrid(t0=0.0, dt=0.01, n_steps=50)
    path = generate_wiener(RngSpec(seed=6), grid, 1)
    traj = integrate(system, "midpoint", soliton_initial_state(cfg), path)
    snaps = assemble_snapshots([traj], stride=5, layout="phase_split")
    basis = build_psd_cotangent_lift(snaps, 4)
    reduced = reduce_hamiltonian_psd(system, basis)
    states = sample_states([traj], stride=5)
    nonlin = np.stack([system.grad_nonlinear(c) for c in states.T], axis=1)
    op = build_deim(
        SnapshotMatrix(data=nonlin, layout="generic"),
        6,
        basis.a_matrix(),
        system.grad_linear,
        system.grad_nonlinear_component,
    )
    for row in traj.states[::10]:
        xi = reduced.restrict(row)
        terms = energy_drift_terms(system, reduced, op, None, xi)
        assert abs(terms.gamma) <= terms.gamma_bound
        # linear noise gradients are reduced exactly, so the noise
        # drift terms vanish identically
        assert terms.lam == (0.0,)
        assert terms.lam_bounds == (0.0,)
