"""One-step oracles, convergence sanity, and structural diagnostics.

The linear oscillator collapses every scheme to an explicit matrix map,
which gives closed-form one-step values to pin each tableau down; a
scalar quadratic drift separates schemes that coincide on linear fields.
"""

import math

import numpy as np
import pytest

from sderom.integrators import (
    METHODS,
    energy_trace,
    heun_step,
    integrate,
    jacobian_symplecticity_defect,
    make_stepper,
    midpoint_step,
    poisson_bracket,
    r2_step,
    stormer_verlet_step,
)
from sderom.kubo import KuboConfig, kubo_exact, kubo_system
from sderom.paths import RngSpec, TimeGrid, WienerPath, generate_wiener
from sderom.systems import (
    DEFAULT_SETTINGS,
    NonConvergence,
    SDESystem,
    SolverSettings,
)


OSC = kubo_system(KuboConfig(beta=0.5))
U = np.array([0.2, 1.0])
# dt + beta*dW = 0.05 + 0.5*0.1, the single angle all maps rotate by
DT, DW = 0.05, np.array([0.1])


def test_heun_step_matches_linear_closed_form():
    # (I + th R + th^2/2 R^2) u for th = 0.1, R the quarter rotation
    out = heun_step(OSC.as_sde(), U, DT, DW)
    assert out == pytest.approx([0.29900000000000004, 0.975], abs=1e-15)


def test_r2_step_matches_linear_closed_form():
    out = r2_step(OSC.as_sde(), U, DT, DW)
    assert out == pytest.approx([0.29900000000000004, 0.975], abs=1e-15)


def test_midpoint_step_matches_cayley_form():
    # (I - th/2 R)^{-1} (I + th/2 R) u
    out = midpoint_step(OSC.as_sde(), U, DT, DW, DEFAULT_SETTINGS)
    assert out == pytest.approx(
        [0.29875311720698255, 0.975062344139651], abs=1e-12
    )


def test_stormer_verlet_step_matches_stage_recursion():
    # Lam = p - th q/2 ; q1 = q + th Lam ; p1 = Lam - th q1/2
    out = stormer_verlet_step(OSC, U, DT, DW, DEFAULT_SETTINGS)
    assert out == pytest.approx([0.29900000000000004, 0.97505], abs=1e-15)


def test_stormer_verlet_deterministic_half_kick():
    out = stormer_verlet_step(
        OSC, np.array([0.0, 1.0]), 0.05, np.array([0.0]), DEFAULT_SETTINGS
    )
    assert out == pytest.approx([0.05, 0.99875], abs=1e-16)


QUAD = SDESystem(
    dim=1,
    m=1,
    drift=lambda u: u * u,
    diffusion=lambda u, nu: np.zeros_like(u),
)


def test_quadratic_drift_separates_the_tableaus():
    # du = u^2 dt from u = 1 with dt = 0.1:
    # trapezoidal corrector: 1 + (0.1 + 0.1*1.21)/2
    assert heun_step(QUAD, np.array([1.0]), 0.1, np.array([0.0]))[0] == 1.1105
    # stage at 2/3: 1 + 0.1/4 + (3/40)*(16/15)^2
    assert r2_step(QUAD, np.array([1.0]), 0.1, np.array([0.0]))[
        0
    ] == pytest.approx(1.1103333333333332, abs=1e-15)
    # fixed point solves 0.1 w^2 - 2w + 2 = 0, u' = 2w - 1 = 19 - 8 sqrt(5)
    mid = midpoint_step(QUAD, np.array([1.0]), 0.1, np.array([0.0]), DEFAULT_SETTINGS)
    assert mid[0] == pytest.approx(19.0 - 8.0 * math.sqrt(5.0), abs=1e-12)


def test_midpoint_reports_nonconvergence():
    stiff = SDESystem(
        dim=1,
        m=1,
        drift=lambda u: 1e6 * u,
        diffusion=lambda u, nu: np.zeros_like(u),
    )
    with pytest.raises(NonConvergence) as err:
        midpoint_step(
            stiff,
            np.array([1.0]),
            0.1,
            np.array([0.0]),
            SolverSettings(fp_tol=1e-13, fp_max_iter=30),
        )
    assert err.value.iterations == 30
    assert err.value.residual > 0


def test_unknown_method_is_rejected():
    with pytest.raises(ValueError):
        make_stepper(OSC, "rk4")


def test_stormer_verlet_requires_hamiltonian_structure():
    with pytest.raises(TypeError):
        make_stepper(QUAD, "stormer_verlet")


@pytest.mark.parametrize("method", METHODS)
def test_strong_error_shrinks_linearly(method):
    # halving dt should roughly halve the root-mean-square pathwise
    # error at the final time (strong order one)
    cfg = KuboConfig(beta=0.5)
    system = kubo_system(cfg)
    rms = []
    for n_steps in (100, 200):
        sq = []
        for seed in range(40):
            grid = TimeGrid(t0=0.0, dt=1.0 / n_steps, n_steps=n_steps)
            fine = generate_wiener(
                RngSpec(seed=seed), TimeGrid(t0=0.0, dt=1.0 / 200, n_steps=200), 1
            )
            inc = fine.increments.reshape(n_steps, 200 // n_steps, 1).sum(axis=1)
            path = WienerPath(grid=grid, increments=inc)
            traj = integrate(system, method, np.array([0.0, 1.0]), path)
            exact = kubo_exact(cfg, path)
            sq.append(np.sum((traj.states[-1] - exact.states[-1]) ** 2))
        rms.append(np.sqrt(np.mean(sq)))
    ratio = rms[0] / rms[1]
    assert 1.6 < ratio < 2.4


def test_integrate_records_every_node_and_times():
    grid = TimeGrid(t0=0.5, dt=0.01, n_steps=42)
    path = generate_wiener(RngSpec(seed=2), grid, 1)
    traj = integrate(OSC, "heun", U, path)
    assert traj.states.shape == (43, 2)
    assert np.array_equal(traj.states[0], U)
    assert traj.times()[-1] == pytest.approx(0.5 + 0.42)
    assert traj.method == "heun"


def test_divergence_truncates_with_index():
    explosive = SDESystem(
        dim=1,
        m=1,
        drift=lambda u: u**3,
        diffusion=lambda u, nu: np.zeros_like(u),
    )
    grid = TimeGrid(t0=0.0, dt=0.5, n_steps=100)
    path = WienerPath(grid=grid, increments=np.zeros((100, 1)))
    traj = integrate(explosive, "heun", np.array([2.0]), path)
    assert traj.diverged_at is not None
    assert traj.states.shape[0] == traj.diverged_at + 1
    assert np.isfinite(traj.states[:-1]).all()


def test_nonconvergence_from_integrate_carries_step_index():
    stiff = SDESystem(
        dim=1,
        m=1,
        drift=lambda u: 1e6 * u,
        diffusion=lambda u, nu: np.zeros_like(u),
    )
    grid = TimeGrid(t0=0.0, dt=0.1, n_steps=3)
    path = WienerPath(grid=grid, increments=np.zeros((3, 1)))
    with pytest.raises(NonConvergence) as err:
        integrate(stiff, "midpoint", np.array([1.0]), path)
    assert err.value.step_index == 0


def test_energy_trace_matches_pointwise_evaluation():
    grid = TimeGrid(t0=0.0, dt=0.02, n_steps=50)
    path = generate_wiener(RngSpec(seed=8), grid, 1)
    traj = integrate(OSC, "midpoint", U, path)
    trace = energy_trace(OSC, traj.states)
    direct = np.array([OSC.hamiltonian(s[:1], s[1:]) for s in traj.states])
    assert np.allclose(trace, direct, atol=1e-15)
    # the exact flow conserves H; midpoint conserves quadratic H exactly
    assert np.max(np.abs(trace - trace[0])) < 1e-10


def test_poisson_bracket_of_commuting_hamiltonians_vanishes():
    # h = beta H always commutes with H
    val = poisson_bracket(OSC, np.array([0.3]), np.array([-0.8]), 0)
    assert abs(val) < 1e-15


def test_symplecticity_defect_separates_scheme_classes():
    u = np.array([0.3, 0.7])
    dw = np.array([0.0])
    heun_defect = jacobian_symplecticity_defect(OSC, "heun", u, 0.1, dw)
    r2_defect = jacobian_symplecticity_defect(OSC, "r2", u, 0.1, dw)
    mid_defect = jacobian_symplecticity_defect(OSC, "midpoint", u, 0.1, dw)
    sv_defect = jacobian_symplecticity_defect(OSC, "stormer_verlet", u, 0.1, dw)
    # the one-step Jacobian of the trapezoidal map scales J by
    # 1 + dt^4/4, giving a Frobenius defect of sqrt(2) dt^4 / 4
    analytic = math.sqrt(2.0) * 0.1**4 / 4.0
    assert heun_defect == pytest.approx(analytic, rel=1e-4)
    assert r2_defect == pytest.approx(analytic, rel=1e-4)
    # symplectic schemes sit at the finite-difference noise floor
    assert mid_defect < 1e-9
    assert sv_defect < 1e-9
    assert heun_defect > 100 * mid_defect
