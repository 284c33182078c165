"""System descriptions for Stratonovich SDEs and stochastic Hamiltonian systems.

Two kinds of systems are modeled.  A general :class:`SDESystem` carries
a drift ``a(u)`` and diffusion fields ``b_nu(u)``, one per noise
column, all interpreted in the Stratonovich sense.  A
:class:`HamiltonianSDESystem` carries a Hamiltonian ``H(q, p)``, noise
Hamiltonians ``h_nu(q, p)``, and their gradients; its drift and
diffusions are canonical fields ``J * grad H`` and ``J * grad h_nu``
where ``J`` is the canonical symplectic matrix.  States are flat
vectors ``u = (q, p)`` of length ``2 * n_dof``.

Systems are immutable value objects holding callables.  Optional
linear/nonlinear splits (``a(u) = L u + a_N(u)`` for drifts,
``grad H(u) = L u + a_N(u)`` for gradients) support interpolation-based
reduction of the nonlinear part; a split with ``nonlinear=None`` means
the map is exactly linear.

Evaluators marked ``vectorized`` accept leading batch axes in addition
to single states; ensemble stacking exploits this for speed but never
requires it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .paths import TimeGrid


__all__ = [
    "NonConvergence",
    "SolverSettings",
    "SDESystem",
    "HamiltonianSDESystem",
    "Trajectory",
    "canonical_j",
    "j_apply",
    "jt_apply",
    "gradient_check",
    "noise_gradient_check",
    "separability_check",
    "split_check",
]


class NonConvergence(Exception):
    """A fixed-point iteration failed to reach tolerance.

    Carries the iteration count, the last residual, and, when raised
    from a time-stepping loop, the index of the offending step.
    """

    def __init__(
        self,
        message: str,
        iterations: int,
        residual: float,
        step_index: int | None = None,
    ):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.step_index = step_index


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances for the implicit solvers.

    ``fp_tol`` bounds the max-norm difference of successive fixed-point
    iterates; ``fp_max_iter`` caps the iteration count before
    :class:`NonConvergence` is raised.
    """

    fp_tol: float = 1e-13
    fp_max_iter: int = 500

    def __post_init__(self) -> None:
        if not (self.fp_tol > 0.0):
            raise ValueError("fp_tol must be positive")
        if self.fp_max_iter < 1:
            raise ValueError("fp_max_iter must be at least 1")


DEFAULT_SETTINGS = SolverSettings()


def canonical_j(n_dof: int) -> np.ndarray:
    """Dense canonical symplectic matrix ``J`` of size 2n x 2n."""
    n = n_dof
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = np.eye(n)
    j[n:, :n] = -np.eye(n)
    return j


def j_apply(x: np.ndarray) -> np.ndarray:
    """Multiply ``J`` against ``x`` along its first axis: (q, p) -> (p, -q).

    Works for vectors and for matrices whose rows span phase space, so
    ``j_apply(L)`` equals ``J @ L`` without materializing ``J``.
    """
    n = x.shape[0] // 2
    return np.concatenate([x[n:], -x[:n]], axis=0)


def jt_apply(x: np.ndarray) -> np.ndarray:
    """Multiply ``J`` transposed against ``x``: (q, p) -> (-p, q)."""
    n = x.shape[0] // 2
    return np.concatenate([-x[n:], x[:n]], axis=0)


@dataclass(frozen=True, kw_only=True)
class SDESystem:
    """Stratonovich SDE ``du = a(u) dt + sum_nu b_nu(u) o dW_nu``.

    Parameters
    ----------
    dim : int
        State dimension.
    m : int
        Number of independent noise columns.
    drift : callable
        ``a(u) -> vector[dim]``.
    diffusion : callable
        ``b(u, nu) -> vector[dim]`` for noise column ``nu``.
    diffusion_weighted : callable, optional
        ``(u, dw) -> sum_nu b_nu(u) * dw[nu]``.  Steppers only ever
        need this contraction; provide it when a fused evaluation is
        cheaper than ``m`` separate diffusion calls.
    linear, nonlinear, nonlinear_component : optional
        Split ``a(u) = linear @ u + nonlinear(u)`` with
        ``nonlinear_component(u, idx)`` returning the entries of the
        nonlinear part at the index array ``idx``.  ``nonlinear=None``
        alongside a ``linear`` matrix means the drift is exactly linear.
    vectorized : bool
        Evaluators accept leading batch axes.
    """

    dim: int
    m: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray, int], np.ndarray]
    diffusion_weighted: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    linear: np.ndarray | None = None
    nonlinear: Callable[[np.ndarray], np.ndarray] | None = None
    nonlinear_component: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    vectorized: bool = False

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    def diffusion_sum(self, u: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """``sum_nu b_nu(u) dw[nu]``, via the fused evaluator if present."""
        if self.diffusion_weighted is not None:
            return self.diffusion_weighted(u, dw)
        acc = self.diffusion(u, 0) * dw[0]
        for nu in range(1, self.m):
            acc = acc + self.diffusion(u, nu) * dw[nu]
        return acc


@dataclass(frozen=True, kw_only=True)
class HamiltonianSDESystem:
    """Stochastic Hamiltonian system with canonical structure.

    The drift is ``J grad H`` and diffusion ``nu`` is ``J grad h_nu``;
    an optional forcing ``F`` and per-noise forcings ``f_nu`` add to the
    momentum equation only, which is how reduction of a conservative
    system can produce a forced one.

    Gradients map ``(q, p) -> (dq, dp)`` pairs.  ``grad_noise_weighted``
    is the fused contraction ``sum_nu grad h_nu(q, p) * dw[nu]``.
    Optional gradient splits mirror the drift split of
    :class:`SDESystem` but apply to ``grad H`` (and ``grad h_nu``), the
    form consumed by structure-preserving interpolation.
    """

    n_dof: int
    m: int
    hamiltonian: Callable[[np.ndarray, np.ndarray], float]
    grad_hamiltonian: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    noise_hamiltonians: tuple[Callable[[np.ndarray, np.ndarray], float], ...]
    grad_noise: tuple[
        Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]], ...
    ]
    grad_noise_weighted: (
        Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
        | None
    ) = None
    separable: bool = False
    forcing: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    noise_forcing: (
        tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], ...] | None
    ) = None
    grad_linear: np.ndarray | None = None
    grad_nonlinear: Callable[[np.ndarray], np.ndarray] | None = None
    grad_nonlinear_component: (
        Callable[[np.ndarray, np.ndarray], np.ndarray] | None
    ) = None
    noise_grad_linear: tuple[np.ndarray, ...] | None = None
    noise_grad_nonlinear: (
        tuple[Callable[[np.ndarray], np.ndarray] | None, ...] | None
    ) = None
    vectorized: bool = False

    def __post_init__(self) -> None:
        if self.n_dof < 1:
            raise ValueError("n_dof must be at least 1")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if len(self.noise_hamiltonians) != self.m:
            raise ValueError("need one noise Hamiltonian per noise column")
        if len(self.grad_noise) != self.m:
            raise ValueError("need one noise gradient per noise column")
        if self.noise_forcing is not None and len(self.noise_forcing) != self.m:
            raise ValueError("need one noise forcing per noise column")

    @property
    def dim(self) -> int:
        return 2 * self.n_dof

    def split(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_dof
        return u[..., :n], u[..., n:]

    def grad_noise_sum(
        self, q: np.ndarray, p: np.ndarray, dw: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """``sum_nu grad h_nu(q, p) dw[nu]`` as a (dq, dp) pair."""
        if self.grad_noise_weighted is not None:
            return self.grad_noise_weighted(q, p, dw)
        gq, gp = self.grad_noise[0](q, p)
        gq, gp = gq * dw[0], gp * dw[0]
        for nu in range(1, self.m):
            aq, ap = self.grad_noise[nu](q, p)
            gq = gq + aq * dw[nu]
            gp = gp + ap * dw[nu]
        return gq, gp

    def drift(self, u: np.ndarray) -> np.ndarray:
        """Canonical drift ``J grad H`` plus any forcing, on flat states."""
        q, p = self.split(u)
        gq, gp = self.grad_hamiltonian(q, p)
        dp = -gq
        if self.forcing is not None:
            dp = dp + self.forcing(q, p)
        return np.concatenate([gp, dp], axis=-1)

    def as_sde(self) -> SDESystem:
        """View this system as a plain SDE on flat states ``u = (q, p)``.

        The drift split is derived from the gradient split by rotating
        with ``J``; it is propagated only for unforced systems, where
        the drift really is ``J grad H``.
        """
        n = self.n_dof

        def drift(u: np.ndarray) -> np.ndarray:
            return self.drift(u)

        def diffusion(u: np.ndarray, nu: int) -> np.ndarray:
            q, p = self.split(u)
            gq, gp = self.grad_noise[nu](q, p)
            dp = -gq
            if self.noise_forcing is not None:
                dp = dp + self.noise_forcing[nu](q, p)
            return np.concatenate([gp, dp], axis=-1)

        def diffusion_weighted(u: np.ndarray, dw: np.ndarray) -> np.ndarray:
            q, p = self.split(u)
            gq, gp = self.grad_noise_sum(q, p, dw)
            dp = -gq
            if self.noise_forcing is not None:
                for nu in range(self.m):
                    dp = dp + self.noise_forcing[nu](q, p) * dw[nu]
            return np.concatenate([gp, dp], axis=-1)

        linear = None
        nonlinear = None
        component = None
        if self.grad_linear is not None and self.forcing is None:
            linear = j_apply(self.grad_linear)
            if self.grad_nonlinear is not None:
                grad_nl = self.grad_nonlinear
                grad_nl_comp = self.grad_nonlinear_component

                def nonlinear(u: np.ndarray) -> np.ndarray:
                    return j_apply(grad_nl(u))

                if grad_nl_comp is not None:

                    def component(u: np.ndarray, idx: np.ndarray) -> np.ndarray:
                        idx = np.asarray(idx)
                        partner = np.where(idx < n, idx + n, idx - n)
                        sign = np.where(idx < n, 1.0, -1.0)
                        return sign * grad_nl_comp(u, partner)

        return SDESystem(
            dim=self.dim,
            m=self.m,
            drift=drift,
            diffusion=diffusion,
            diffusion_weighted=diffusion_weighted,
            linear=linear,
            nonlinear=nonlinear,
            nonlinear_component=component,
            vectorized=self.vectorized,
        )


@dataclass(frozen=True)
class Trajectory:
    """Recorded states of one integration run.

    ``states[i]`` is the state at grid node ``i``.  When the producing
    run diverged, ``diverged_at`` is the index of the first non-finite
    node and ``states`` is truncated just after it, so the blow-up is
    observable in the data.
    """

    grid: TimeGrid
    states: np.ndarray
    method: str
    diverged_at: int | None = None

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError("states must be a 2-d array")
        expected = self.grid.n_steps + 1
        if self.diverged_at is None:
            if states.shape[0] != expected:
                raise ValueError(
                    f"expected {expected} recorded states, got {states.shape[0]}"
                )
            if not np.all(np.isfinite(states)):
                raise ValueError("non-finite states require diverged_at to be set")
        else:
            if not 1 <= self.diverged_at <= self.grid.n_steps:
                raise ValueError("diverged_at out of range")
            if states.shape[0] != self.diverged_at + 1:
                raise ValueError("truncated states must end at the diverged node")
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def times(self) -> np.ndarray:
        return self.grid.t0 + self.grid.dt * np.arange(self.states.shape[0])


# ---------------------------------------------------------------------------
# consistency checks
#
# These back the construction-time contracts of concrete systems: the
# supplied gradients must match finite differences of the scalars, the
# separability flag must be honest, and linear/nonlinear splits must
# reassemble the full map.  Tests and pipeline validation call them on
# sampled states.
# ---------------------------------------------------------------------------


def _fd_gradient(f, q: np.ndarray, p: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    gq = np.zeros_like(q)
    gp = np.zeros_like(p)
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = step
        gq[i] = (f(q + e, p) - f(q - e, p)) / (2.0 * step)
        gp[i] = (f(q, p + e) - f(q, p - e)) / (2.0 * step)
    return gq, gp


def gradient_check(
    system: HamiltonianSDESystem, states: Sequence[np.ndarray], step: float = 1e-5
) -> float:
    """Worst relative deviation of ``grad_hamiltonian`` from central FD."""
    worst = 0.0
    for u in states:
        q, p = system.split(np.asarray(u, dtype=np.float64))
        gq, gp = system.grad_hamiltonian(q, p)
        fq, fp = _fd_gradient(system.hamiltonian, q, p, step)
        num = np.linalg.norm(np.concatenate([gq - fq, gp - fp]))
        den = max(np.linalg.norm(np.concatenate([fq, fp])), 1e-30)
        worst = max(worst, num / den)
    return worst


def noise_gradient_check(
    system: HamiltonianSDESystem, states: Sequence[np.ndarray], step: float = 1e-5
) -> float:
    """Worst relative FD deviation over all noise Hamiltonians."""
    worst = 0.0
    for nu in range(system.m):
        h = system.noise_hamiltonians[nu]
        grad = system.grad_noise[nu]
        for u in states:
            q, p = system.split(np.asarray(u, dtype=np.float64))
            gq, gp = grad(q, p)
            fq, fp = _fd_gradient(h, q, p, step)
            num = np.linalg.norm(np.concatenate([gq - fq, gp - fp]))
            den = max(np.linalg.norm(np.concatenate([fq, fp])), 1e-30)
            worst = max(worst, num / den)
    return worst


def separability_check(
    system: HamiltonianSDESystem,
    states: Sequence[np.ndarray],
    rng: np.random.Generator,
) -> float:
    """Largest cross dependence observed for a system flagged separable.

    For separable ``H = T(p) + V(q)`` the q-gradient cannot respond to
    p-perturbations and vice versa; returns the max absolute response.
    """
    worst = 0.0
    for u in states:
        q, p = system.split(np.asarray(u, dtype=np.float64))
        gq, gp = system.grad_hamiltonian(q, p)
        q2 = q + rng.standard_normal(q.shape)
        p2 = p + rng.standard_normal(p.shape)
        gq_p, _ = system.grad_hamiltonian(q, p2)
        _, gp_q = system.grad_hamiltonian(q2, p)
        worst = max(
            worst,
            float(np.max(np.abs(gq_p - gq), initial=0.0)),
            float(np.max(np.abs(gp_q - gp), initial=0.0)),
        )
    return worst


def split_check(system: HamiltonianSDESystem, states: Sequence[np.ndarray]) -> float:
    """Worst relative defect of ``grad H(u) = L u + a_N(u)`` on samples."""
    if system.grad_linear is None:
        raise ValueError("system carries no gradient split")
    worst = 0.0
    for u in states:
        u = np.asarray(u, dtype=np.float64)
        q, p = system.split(u)
        gq, gp = system.grad_hamiltonian(q, p)
        full = np.concatenate([gq, gp])
        rebuilt = system.grad_linear @ u
        if system.grad_nonlinear is not None:
            rebuilt = rebuilt + system.grad_nonlinear(u)
        den = max(float(np.linalg.norm(full)), 1e-30)
        worst = max(worst, float(np.linalg.norm(rebuilt - full)) / den)
    return worst
