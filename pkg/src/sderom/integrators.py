"""Stochastic one-step methods and the integration driver.

Four methods are provided, all consuming the same Gaussian increments:

``heun``
    Two-stage explicit trapezoidal rule.  The predictor advances with
    the left-point fields, the corrector averages left and predictor
    fields.  Strong order 1 for commutative Stratonovich noise.

``r2``
    Two-stage explicit Runge-Kutta with frozen weights: the internal
    stage sits at 2/3 of the increment and the update combines the two
    stage fields with weights 1/4 and 3/4.  Same order as Heun with a
    smaller principal error constant on drift-dominated problems.

``midpoint``
    Implicit midpoint rule.  Both drift and diffusion are evaluated at
    the state average ``(u_i + u_{i+1}) / 2``; the implicit relation is
    solved by fixed-point iteration.  Symplectic on canonical
    Hamiltonian SDEs and exactly conserves their quadratic invariants.

``stormer_verlet``
    Three-stage splitting for Hamiltonian systems: a half kick of the
    momentum to the intermediate ``lam``, a full drift of the position
    averaging the p-gradients at both endpoints, and the closing half
    kick.  The two inner stages are implicit in general and collapse to
    explicit updates when the system is separable.

Steppers are pure functions of ``(system, state, dt, dw)``; the driver
:func:`integrate` folds them over a Wiener path and records every node.
"""

from __future__ import annotations

import numpy as np

from .paths import WienerPath
from .systems import (
    DEFAULT_SETTINGS,
    HamiltonianSDESystem,
    NonConvergence,
    SDESystem,
    SolverSettings,
    Trajectory,
    j_apply,
)


__all__ = [
    "METHODS",
    "heun_step",
    "r2_step",
    "midpoint_step",
    "stormer_verlet_step",
    "make_stepper",
    "integrate",
    "energy_trace",
    "poisson_bracket",
    "jacobian_symplecticity_defect",
]


METHODS = ("heun", "r2", "midpoint", "stormer_verlet")


def _as_sde(system: SDESystem | HamiltonianSDESystem) -> SDESystem:
    return system.as_sde() if isinstance(system, HamiltonianSDESystem) else system


def heun_step(
    system: SDESystem | HamiltonianSDESystem,
    u: np.ndarray,
    dt: float,
    dw: np.ndarray,
) -> np.ndarray:
    system = _as_sde(system)
    incr = system.drift(u) * dt + system.diffusion_sum(u, dw)
    u2 = u + incr
    incr2 = system.drift(u2) * dt + system.diffusion_sum(u2, dw)
    return u + 0.5 * (incr + incr2)


def r2_step(
    system: SDESystem | HamiltonianSDESystem,
    u: np.ndarray,
    dt: float,
    dw: np.ndarray,
) -> np.ndarray:
    system = _as_sde(system)
    incr = system.drift(u) * dt + system.diffusion_sum(u, dw)
    u2 = u + (2.0 / 3.0) * incr
    incr2 = system.drift(u2) * dt + system.diffusion_sum(u2, dw)
    return u + 0.25 * incr + 0.75 * incr2


def midpoint_step(
    system: SDESystem | HamiltonianSDESystem,
    u: np.ndarray,
    dt: float,
    dw: np.ndarray,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    system = _as_sde(system)
    v = u
    for it in range(1, settings.fp_max_iter + 1):
        mid = 0.5 * (u + v)
        v_new = u + system.drift(mid) * dt + system.diffusion_sum(mid, dw)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= settings.fp_tol:
            return v
        if not np.isfinite(residual):
            break
    raise NonConvergence(
        f"midpoint fixed point stalled at residual {residual:.3e}",
        iterations=it,
        residual=residual,
    )


def stormer_verlet_step(
    system: HamiltonianSDESystem,
    u: np.ndarray,
    dt: float,
    dw: np.ndarray,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """One step of the stochastic three-stage momentum-position splitting.

    Requires a :class:`HamiltonianSDESystem` without forcing terms;
    forced systems lose the plain kick/drift structure and should use
    ``midpoint`` instead.
    """
    if not isinstance(system, HamiltonianSDESystem):
        raise TypeError("stormer_verlet requires a Hamiltonian system")
    if system.forcing is not None or system.noise_forcing is not None:
        raise ValueError("stormer_verlet does not support forced systems")
    q, p = system.split(u)

    def half_q_grad(q_at: np.ndarray, p_at: np.ndarray) -> np.ndarray:
        gq, _ = system.grad_hamiltonian(q_at, p_at)
        nq, _ = system.grad_noise_sum(q_at, p_at, dw)
        return 0.5 * (gq * dt + nq)

    def half_p_grad(q_at: np.ndarray, p_at: np.ndarray) -> np.ndarray:
        _, gp = system.grad_hamiltonian(q_at, p_at)
        _, np_ = system.grad_noise_sum(q_at, p_at, dw)
        return 0.5 * (gp * dt + np_)

    # stage 1: half kick to the intermediate momentum lam
    if system.separable:
        lam = p - half_q_grad(q, p)
    else:
        lam = _fixed_point(lambda x: p - half_q_grad(q, x), p, settings)

    # stage 2: position drift averaging the endpoint p-gradients
    if system.separable:
        # the p-gradient cannot depend on q, so both endpoint terms agree
        hp = half_p_grad(q, lam)
        q1 = (q + hp) + hp
    else:
        base = q + half_p_grad(q, lam)
        q1 = _fixed_point(lambda x: base + half_p_grad(x, lam), q, settings)

    # stage 3: closing half kick, explicit in every case
    p1 = lam - half_q_grad(q1, lam)
    return np.concatenate([q1, p1])


def _fixed_point(f, x0: np.ndarray, settings: SolverSettings) -> np.ndarray:
    x = x0
    for it in range(1, settings.fp_max_iter + 1):
        x_new = f(x)
        residual = float(np.max(np.abs(x_new - x)))
        x = x_new
        if residual <= settings.fp_tol:
            return x
        if not np.isfinite(residual):
            break
    raise NonConvergence(
        f"fixed point stalled at residual {residual:.3e}",
        iterations=it,
        residual=residual,
    )


def make_stepper(
    system: SDESystem | HamiltonianSDESystem,
    method: str,
    settings: SolverSettings = DEFAULT_SETTINGS,
):
    """Bind a method name to a prepared ``step(u, dt, dw)`` closure.

    Hamiltonian systems are converted to their SDE view once, up front,
    for the three general-purpose methods.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    if method == "stormer_verlet":
        if not isinstance(system, HamiltonianSDESystem):
            raise TypeError("stormer_verlet requires a Hamiltonian system")
        return lambda u, dt, dw: stormer_verlet_step(system, u, dt, dw, settings)
    sde = _as_sde(system)
    if method == "heun":
        return lambda u, dt, dw: heun_step(sde, u, dt, dw)
    if method == "r2":
        return lambda u, dt, dw: r2_step(sde, u, dt, dw)
    return lambda u, dt, dw: midpoint_step(sde, u, dt, dw, settings)


def integrate(
    system: SDESystem | HamiltonianSDESystem,
    method: str,
    u0: np.ndarray,
    path: WienerPath,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> Trajectory:
    """Fold a one-step method over a Wiener path, recording every node.

    The number of noise columns of ``path`` must match the system.  A
    non-finite state ends the run early: the returned trajectory is
    truncated at the first bad node and flags it via ``diverged_at``,
    so blow-ups stay observable instead of raising.  Fixed-point
    failures of the implicit methods propagate as
    :class:`NonConvergence` with the step index attached.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.ndim != 1 or u0.shape[0] != system.dim:
        raise ValueError(f"u0 must be a vector of length {system.dim}")
    if not np.all(np.isfinite(u0)):
        raise ValueError("u0 must be finite")
    if path.m != system.m:
        raise ValueError(
            f"path has {path.m} noise columns, system expects {system.m}"
        )
    step = make_stepper(system, method, settings)
    dt = path.grid.dt
    states = np.empty((path.grid.n_steps + 1, system.dim))
    states[0] = u0
    u = u0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(path.grid.n_steps):
            try:
                u = step(u, dt, path.increments[i])
            except NonConvergence as err:
                err.step_index = i
                raise
            states[i + 1] = u
            if not np.all(np.isfinite(u)):
                return Trajectory(
                    grid=path.grid,
                    states=states[: i + 2],
                    method=method,
                    diverged_at=i + 1,
                )
    return Trajectory(grid=path.grid, states=states, method=method)


def energy_trace(
    system: HamiltonianSDESystem, states: np.ndarray | Trajectory
) -> np.ndarray:
    """Hamiltonian evaluated at every row of a (nodes, dim) state array."""
    if isinstance(states, Trajectory):
        states = states.states
    n = system.n_dof
    if system.vectorized:
        return np.asarray(system.hamiltonian(states[:, :n], states[:, n:]))
    return np.array([system.hamiltonian(u[:n], u[n:]) for u in states])


def poisson_bracket(
    system: HamiltonianSDESystem, q: np.ndarray, p: np.ndarray, nu: int = 0
) -> float:
    """Canonical bracket ``{H, h_nu}`` at one phase-space point.

    Vanishing brackets are what make the noise Hamiltonians first
    integrals of the drift flow; reduction diagnostics check this on
    the reduced side before trusting energy-drift bounds.
    """
    gq, gp = system.grad_hamiltonian(q, p)
    hq, hp = system.grad_noise[nu](q, p)
    return float(np.dot(gq, hp) - np.dot(gp, hq))


def jacobian_symplecticity_defect(
    system: SDESystem | HamiltonianSDESystem,
    method: str,
    u: np.ndarray,
    dt: float,
    dw: np.ndarray,
    settings: SolverSettings = DEFAULT_SETTINGS,
    fd_step: float = 1e-6,
) -> float:
    """Frobenius norm of ``D^T J D - J`` for the one-step map Jacobian.

    ``D`` is a central finite-difference Jacobian of ``u -> step(u)``.
    Symplectic methods drive the defect down to FD noise; explicit
    two-stage methods leave an O(dt^2) residue.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] % 2 != 0:
        raise ValueError("state dimension must be even for the symplectic form")
    step = make_stepper(system, method, settings)
    h = fd_step * (1.0 + float(np.max(np.abs(u))))
    d = np.empty((u.shape[0], u.shape[0]))
    for j in range(u.shape[0]):
        e = np.zeros_like(u)
        e[j] = h
        d[:, j] = (step(u + e, dt, dw) - step(u - e, dt, dw)) / (2.0 * h)
    defect = d.T @ j_apply(d) - j_apply(np.eye(u.shape[0]))
    return float(np.linalg.norm(defect))
