"""Snapshot-based model reduction: POD, symplectic lifts, and DEIM.

The offline half of the toolkit.  Snapshots of full-model trajectories
are collected into matrices, compressed with a truncated SVD, and
turned into reduced systems three ways:

* plain Galerkin projection of a general SDE onto the leading left
  singular vectors (POD),
* a symplectic projection of a Hamiltonian system built from the
  cotangent lift ``A = blockdiag(Phi, Phi)`` of the phase-split
  snapshot basis, which keeps the reduced system canonically
  Hamiltonian and preserves separability,
* discrete empirical interpolation (DEIM) of the nonlinear part of
  either the drift (POD route) or the Hamiltonian gradient (symplectic
  route), so online nonlinear costs scale with the interpolation rank
  instead of the full dimension.

All SVD factors follow one sign convention so offline artifacts are
reproducible bit for bit: each left singular vector is flipped, along
with its right partner, until its largest-magnitude entry is positive,
ties resolved at the lowest row index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .integrators import poisson_bracket
from .systems import HamiltonianSDESystem, SDESystem, Trajectory, j_apply


__all__ = [
    "SnapshotMatrix",
    "sample_states",
    "to_phase_split",
    "assemble_snapshots",
    "pool_snapshots",
    "TruncatedSVD",
    "truncated_svd",
    "rank_for_energy",
    "DEFAULT_ENERGY_TAU",
    "PODBasis",
    "build_pod",
    "PSDBasis",
    "build_psd_cotangent_lift",
    "symplectic_inverse",
    "symplecticity_defect",
    "ReducedSDE",
    "ReducedHamiltonian",
    "reduce_sde_pod",
    "reduce_hamiltonian_psd",
    "deim_select_indices",
    "DEIMOperator",
    "build_deim",
    "pod_deim_system",
    "sdeim_system",
    "EnergyDriftTerms",
    "energy_drift_terms",
]


DEFAULT_ENERGY_TAU = 0.9999


@dataclass(frozen=True)
class SnapshotMatrix:
    """Columns of sampled states, with their layout.

    ``generic`` columns are full states.  ``phase_split`` columns halve
    each sampled state: all q-samples come first, then all p-samples,
    so a run sampled r times contributes 2r columns of height n_dof.
    """

    data: np.ndarray
    layout: str

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("snapshot data must be a 2-d array")
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshot data must be finite")
        if self.layout not in ("generic", "phase_split"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "phase_split" and data.shape[1] % 2 != 0:
            raise ValueError("phase_split snapshots need an even column count")
        object.__setattr__(self, "data", data)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]


def sample_states(
    trajectories: Sequence[Trajectory], stride: int = 10
) -> np.ndarray:
    """Strided state samples as columns, pooled across runs in order.

    Node 0 of every run is always included; later nodes are kept when
    their index is a multiple of ``stride``.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    cols = []
    for traj in trajectories:
        cols.append(traj.states[::stride].T)
    return np.concatenate(cols, axis=1)


def to_phase_split(states: np.ndarray) -> np.ndarray:
    """Rearrange full-state columns into the phase-split layout."""
    if states.shape[0] % 2 != 0:
        raise ValueError("states must have even row count to split phases")
    n = states.shape[0] // 2
    return np.concatenate([states[:n], states[n:]], axis=1)


def assemble_snapshots(
    trajectories: Sequence[Trajectory], stride: int = 10, layout: str = "generic"
) -> SnapshotMatrix:
    """Snapshot matrix for a basis build, in the requested layout."""
    states = sample_states(trajectories, stride)
    if layout == "phase_split":
        return SnapshotMatrix(data=to_phase_split(states), layout=layout)
    return SnapshotMatrix(data=states, layout=layout)


def pool_snapshots(parts: Sequence[SnapshotMatrix]) -> SnapshotMatrix:
    """Concatenate snapshot matrices columnwise before one global SVD.

    Phase-split inputs are interleaved back into the global q-first,
    p-second ordering rather than naively appended.
    """
    if not parts:
        raise ValueError("nothing to pool")
    layout = parts[0].layout
    if any(s.layout != layout for s in parts):
        raise ValueError("cannot pool snapshots with mixed layouts")
    if layout == "generic":
        return SnapshotMatrix(
            data=np.concatenate([s.data for s in parts], axis=1), layout=layout
        )
    q_cols = [s.data[:, : s.n_cols // 2] for s in parts]
    p_cols = [s.data[:, s.n_cols // 2 :] for s in parts]
    return SnapshotMatrix(
        data=np.concatenate(q_cols + p_cols, axis=1), layout=layout
    )


@dataclass(frozen=True)
class TruncatedSVD:
    """Leading SVD factors plus the full singular spectrum."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    all_sigma: np.ndarray


def truncated_svd(snapshots: SnapshotMatrix, k: int) -> TruncatedSVD:
    """Rank-k factors of the snapshot matrix under the frozen sign rule.

    Requires ``1 <= k <= min(shape)`` and a spectrum that is still
    positive at index k; asking for ranks beyond the matrix rank is an
    error rather than a silent zero-padded basis.
    """
    data = snapshots.data
    if not 1 <= k <= min(data.shape):
        raise ValueError(
            f"k must lie in [1, {min(data.shape)}] for a {data.shape} matrix"
        )
    u, sigma, vt = np.linalg.svd(data, full_matrices=False)
    if sigma[k - 1] <= 0.0:
        raise ValueError(f"requested rank {k} exceeds matrix rank")
    u = u[:, :k].copy()
    v = vt[:k].T.copy()
    for j in range(k):
        pivot = int(np.argmax(np.abs(u[:, j])))
        if u[pivot, j] < 0.0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return TruncatedSVD(u=u, sigma=sigma[:k].copy(), v=v, all_sigma=sigma)


def rank_for_energy(sigma: np.ndarray, tau: float = DEFAULT_ENERGY_TAU) -> int:
    """Smallest k whose squared singular values capture a tau fraction."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    power = np.cumsum(np.square(sigma))
    total = power[-1]
    if total <= 0.0:
        raise ValueError("spectrum carries no energy")
    return int(np.searchsorted(power, tau * total - 1e-15 * total) + 1)


@dataclass(frozen=True)
class PODBasis:
    """Orthonormal projection basis with the spectrum it was cut from."""

    u: np.ndarray
    spectrum: np.ndarray

    @property
    def k(self) -> int:
        return self.u.shape[1]

    def lift(self, xi: np.ndarray) -> np.ndarray:
        return self.u @ xi

    def restrict(self, state: np.ndarray) -> np.ndarray:
        return self.u.T @ state


def build_pod(
    snapshots: SnapshotMatrix,
    k: int | None = None,
    energy_tau: float = DEFAULT_ENERGY_TAU,
) -> PODBasis:
    """POD basis of generic snapshots; rank from the energy rule if unset."""
    if snapshots.layout != "generic":
        raise ValueError("POD expects generic snapshots")
    if k is None:
        sigma = np.linalg.svd(snapshots.data, compute_uv=False)
        k = rank_for_energy(sigma, energy_tau)
    svd = truncated_svd(snapshots, k)
    return PODBasis(u=svd.u, spectrum=svd.all_sigma)


@dataclass(frozen=True)
class PSDBasis:
    """Cotangent-lift basis: one orthonormal phi shared by q and p.

    The full lift is ``A = blockdiag(phi, phi)``, which satisfies
    ``A^T J_{2n} A = J_{2k}``; its symplectic inverse is
    ``A^+ = blockdiag(phi^T, phi^T)``.
    """

    phi: np.ndarray
    spectrum: np.ndarray

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def n_dof(self) -> int:
        return self.phi.shape[0]

    def a_matrix(self) -> np.ndarray:
        n, k = self.phi.shape
        a = np.zeros((2 * n, 2 * k))
        a[:n, :k] = self.phi
        a[n:, k:] = self.phi
        return a

    def lift(self, xi: np.ndarray) -> np.ndarray:
        k = self.k
        return np.concatenate(
            [xi[..., :k] @ self.phi.T, xi[..., k:] @ self.phi.T], axis=-1
        )

    def restrict(self, state: np.ndarray) -> np.ndarray:
        n = self.n_dof
        return np.concatenate(
            [state[..., :n] @ self.phi, state[..., n:] @ self.phi], axis=-1
        )


def build_psd_cotangent_lift(
    snapshots: SnapshotMatrix,
    k: int | None = None,
    energy_tau: float = DEFAULT_ENERGY_TAU,
) -> PSDBasis:
    """Symplectic basis from phase-split snapshots via the cotangent lift."""
    if snapshots.layout != "phase_split":
        raise ValueError("the cotangent lift expects phase_split snapshots")
    if k is None:
        sigma = np.linalg.svd(snapshots.data, compute_uv=False)
        k = rank_for_energy(sigma, energy_tau)
    svd = truncated_svd(snapshots, k)
    return PSDBasis(phi=svd.u, spectrum=svd.all_sigma)


def symplecticity_defect(a: np.ndarray) -> float:
    """Max-norm of ``A^T J A - J`` without materializing either J."""
    if a.shape[0] % 2 != 0 or a.shape[1] % 2 != 0:
        raise ValueError("a symplectic lift needs even dimensions")
    k = a.shape[1] // 2
    gram = a.T @ j_apply(a)
    gram[:k, k:] -= np.eye(k)
    gram[k:, :k] += np.eye(k)
    return float(np.max(np.abs(gram)))


def symplectic_inverse(a: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """``A^+ = J_{2k}^T A^T J_{2n}`` for a symplectic lift ``A``.

    Rejects matrices whose symplecticity defect exceeds ``tol``; for a
    genuine lift ``A^+ A = I`` holds to rounding.
    """
    defect = symplecticity_defect(a)
    if defect > tol:
        raise ValueError(f"matrix is not symplectic: defect {defect:.3e}")
    n = a.shape[0] // 2
    k = a.shape[1] // 2
    m = np.concatenate([-a[n:].T, a[:n].T], axis=1)
    return np.concatenate([-m[k:], m[:k]], axis=0)


@dataclass(frozen=True)
class ReducedSDE:
    """A reduced SDE bundled with its lift/restrict maps."""

    system: SDESystem
    lift: Callable[[np.ndarray], np.ndarray]
    restrict: Callable[[np.ndarray], np.ndarray]
    basis: PODBasis


@dataclass(frozen=True)
class ReducedHamiltonian:
    """A reduced Hamiltonian system bundled with its symplectic maps."""

    system: HamiltonianSDESystem
    lift: Callable[[np.ndarray], np.ndarray]
    restrict: Callable[[np.ndarray], np.ndarray]
    basis: PSDBasis


def reduce_sde_pod(system: SDESystem, basis: PODBasis) -> ReducedSDE:
    """Galerkin projection ``xi' = U^T a(U xi)`` of a general SDE.

    Exact in the sense that no interpolation enters; every reduced
    field evaluation still lifts to the full space.
    """
    u_mat = basis.u
    if u_mat.shape[0] != system.dim:
        raise ValueError("basis rows do not match the system dimension")

    def drift(xi: np.ndarray) -> np.ndarray:
        return u_mat.T @ system.drift(u_mat @ xi)

    def diffusion(xi: np.ndarray, nu: int) -> np.ndarray:
        return u_mat.T @ system.diffusion(u_mat @ xi, nu)

    def diffusion_weighted(xi: np.ndarray, dw: np.ndarray) -> np.ndarray:
        return u_mat.T @ system.diffusion_sum(u_mat @ xi, dw)

    reduced = SDESystem(
        dim=basis.k,
        m=system.m,
        drift=drift,
        diffusion=diffusion,
        diffusion_weighted=diffusion_weighted,
    )
    return ReducedSDE(
        system=reduced, lift=basis.lift, restrict=basis.restrict, basis=basis
    )


def reduce_hamiltonian_psd(
    system: HamiltonianSDESystem, basis: PSDBasis
) -> ReducedHamiltonian:
    """Symplectic Galerkin reduction through the cotangent lift.

    The reduced Hamiltonians are the full ones composed with the lift,
    so the reduced system is again canonically Hamiltonian; blockwise
    lifting keeps q and p uncoupled, which preserves separability.
    Forcing terms project with the same phi.
    """
    phi = basis.phi
    if phi.shape[0] != system.n_dof:
        raise ValueError("basis rows do not match the system dimension")

    def lift_pair(eta: np.ndarray, chi: np.ndarray):
        return eta @ phi.T, chi @ phi.T

    def hamiltonian(eta: np.ndarray, chi: np.ndarray):
        return system.hamiltonian(*lift_pair(eta, chi))

    def grad_hamiltonian(eta: np.ndarray, chi: np.ndarray):
        gq, gp = system.grad_hamiltonian(*lift_pair(eta, chi))
        return gq @ phi, gp @ phi

    def make_noise(nu: int):
        base_h = system.noise_hamiltonians[nu]
        base_g = system.grad_noise[nu]

        def noise_h(eta: np.ndarray, chi: np.ndarray):
            return base_h(*lift_pair(eta, chi))

        def noise_grad(eta: np.ndarray, chi: np.ndarray):
            gq, gp = base_g(*lift_pair(eta, chi))
            return gq @ phi, gp @ phi

        return noise_h, noise_grad

    pairs = [make_noise(nu) for nu in range(system.m)]

    def grad_noise_weighted(eta: np.ndarray, chi: np.ndarray, dw: np.ndarray):
        gq, gp = system.grad_noise_sum(*lift_pair(eta, chi), dw)
        return gq @ phi, gp @ phi

    forcing = None
    if system.forcing is not None:

        def forcing(eta: np.ndarray, chi: np.ndarray) -> np.ndarray:
            return system.forcing(*lift_pair(eta, chi)) @ phi

    noise_forcing = None
    if system.noise_forcing is not None:

        def make_noise_forcing(nu: int):
            base_f = system.noise_forcing[nu]
            return lambda eta, chi: base_f(*lift_pair(eta, chi)) @ phi

        noise_forcing = tuple(make_noise_forcing(nu) for nu in range(system.m))

    reduced = HamiltonianSDESystem(
        n_dof=basis.k,
        m=system.m,
        hamiltonian=hamiltonian,
        grad_hamiltonian=grad_hamiltonian,
        noise_hamiltonians=tuple(h for h, _ in pairs),
        grad_noise=tuple(g for _, g in pairs),
        grad_noise_weighted=grad_noise_weighted,
        separable=system.separable,
        forcing=forcing,
        noise_forcing=noise_forcing,
        vectorized=system.vectorized,
    )
    return ReducedHamiltonian(
        system=reduced, lift=basis.lift, restrict=basis.restrict, basis=basis
    )


# ---------------------------------------------------------------------------
# discrete empirical interpolation
# ---------------------------------------------------------------------------


def deim_select_indices(psi: np.ndarray) -> np.ndarray:
    """Greedy interpolation indices for the mode matrix ``psi``.

    The first index maximizes the magnitude of the first mode; each
    later index maximizes the residual of the next mode against its
    interpolation on the indices so far.  Ties go to the lowest index.
    A singular interpolation system along the way is a construction
    error naming the offending column.
    """
    n, k = psi.shape
    if k < 1 or k > n:
        raise ValueError("mode count must lie in [1, n]")
    indices = np.empty(k, dtype=np.intp)
    indices[0] = np.argmax(np.abs(psi[:, 0]))
    for col in range(1, k):
        sub = psi[indices[:col], :col]
        try:
            coeff = np.linalg.solve(sub, psi[indices[:col], col])
        except np.linalg.LinAlgError as err:
            raise ValueError(
                f"interpolation system singular at column {col}"
            ) from err
        residual = psi[:, col] - psi[:, :col] @ coeff
        indices[col] = np.argmax(np.abs(residual))
    return indices


@dataclass(frozen=True, kw_only=True)
class DEIMOperator:
    """Interpolated reduced map ``xi -> l_bar xi + w g(xi)``.

    ``g(xi)`` evaluates exactly ``k_bar`` components of the nonlinear
    part at the lifted state, at the greedily selected rows.  For the
    POD route the map approximates the reduced drift; for the
    symplectic route it approximates the reduced Hamiltonian gradient
    and the caller composes with ``J``.
    """

    psi: np.ndarray
    indices: np.ndarray
    w: np.ndarray
    l_bar: np.ndarray
    projector: np.ndarray
    component_evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    spectrum: np.ndarray | None = None

    @property
    def k_bar(self) -> int:
        return self.psi.shape[1]

    def _evaluator(self) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        if self.component_evaluator is None:
            raise ValueError("operator carries no component evaluator")
        return self.component_evaluator

    def reduced_map(self, xi: np.ndarray) -> np.ndarray:
        g = self._evaluator()(self.projector @ xi, self.indices)
        return self.l_bar @ xi + self.w @ g

    def interpolate_nonlinear(self, state: np.ndarray) -> np.ndarray:
        """Full-space interpolant of the nonlinear part at ``state``."""
        vals = self._evaluator()(state, self.indices)
        return self.psi @ np.linalg.solve(self.psi[self.indices], vals)

    def interpolation_constant(self) -> float:
        """Spectral norm of ``(P^T psi)^{-1}``, the bound amplification."""
        return 1.0 / float(np.linalg.svd(self.psi[self.indices], compute_uv=False)[-1])


def build_deim(
    nonlinear_snapshots: SnapshotMatrix,
    k_bar: int,
    projector: np.ndarray,
    linear: np.ndarray,
    component_evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> DEIMOperator:
    """Assemble the interpolated reduced map from nonlinearity snapshots.

    ``projector`` is the reduction basis in full coordinates (``U_k``
    for POD, the cotangent lift ``A`` for the symplectic route);
    ``linear`` is the matching full linear part.  The interpolation
    modes are the leading left singular vectors of the snapshots of the
    nonlinear term alone.
    """
    if nonlinear_snapshots.layout != "generic":
        raise ValueError("nonlinearity snapshots use the generic layout")
    svd = truncated_svd(nonlinear_snapshots, k_bar)
    psi = svd.u
    indices = deim_select_indices(psi)
    p_psi = psi[indices]
    smallest = float(np.linalg.svd(p_psi, compute_uv=False)[-1])
    if smallest <= 0.0 or not np.isfinite(smallest):
        raise ValueError("selected interpolation system is singular")
    w = np.linalg.solve(p_psi.T, (projector.T @ psi).T).T
    l_bar = projector.T @ (linear @ projector)
    return DEIMOperator(
        psi=psi,
        indices=indices,
        w=w,
        l_bar=l_bar,
        projector=projector,
        component_evaluator=component_evaluator,
        spectrum=svd.all_sigma,
    )


def pod_deim_system(reduced: ReducedSDE, op: DEIMOperator) -> ReducedSDE:
    """Swap the exact reduced drift for its interpolated form.

    Diffusions stay exactly reduced; interpolate them separately only
    when they carry their own nonlinearities.
    """
    base = reduced.system
    sys = SDESystem(
        dim=base.dim,
        m=base.m,
        drift=op.reduced_map,
        diffusion=base.diffusion,
        diffusion_weighted=base.diffusion_weighted,
    )
    return ReducedSDE(
        system=sys, lift=reduced.lift, restrict=reduced.restrict, basis=reduced.basis
    )


def sdeim_system(
    reduced: ReducedHamiltonian,
    drift_op: DEIMOperator,
    noise_ops: Sequence[DEIMOperator | None] | None = None,
) -> ReducedSDE:
    """Reduced SDE ``xi' = J(l_bar xi + w g(xi))`` from gradient interpolation.

    Noise columns with an operator use the same interpolated form;
    columns without one keep the exact reduced noise gradient, the
    right choice when the noise Hamiltonian is quadratic and its
    gradient has no nonlinear part.  The result is integrated with the
    general-purpose methods; interpolation gives up exact
    Hamiltonianness, which is precisely what the energy-drift terms
    quantify.
    """
    ham = reduced.system
    k = ham.n_dof
    ops = list(noise_ops) if noise_ops is not None else [None] * ham.m
    if len(ops) != ham.m:
        raise ValueError("need one noise operator slot per noise column")

    def drift(xi: np.ndarray) -> np.ndarray:
        return j_apply(drift_op.reduced_map(xi))

    def diffusion(xi: np.ndarray, nu: int) -> np.ndarray:
        if ops[nu] is not None:
            return j_apply(ops[nu].reduced_map(xi))
        gq, gp = ham.grad_noise[nu](xi[:k], xi[k:])
        return np.concatenate([gp, -gq])

    def diffusion_weighted(xi: np.ndarray, dw: np.ndarray) -> np.ndarray:
        if any(op is not None for op in ops):
            acc = diffusion(xi, 0) * dw[0]
            for nu in range(1, ham.m):
                acc = acc + diffusion(xi, nu) * dw[nu]
            return acc
        gq, gp = ham.grad_noise_sum(xi[:k], xi[k:], dw)
        return np.concatenate([gp, -gq])

    sys = SDESystem(
        dim=2 * k,
        m=ham.m,
        drift=drift,
        diffusion=diffusion,
        diffusion_weighted=diffusion_weighted,
    )
    return ReducedSDE(
        system=sys,
        lift=reduced.lift,
        restrict=reduced.restrict,
        basis=reduced.basis,
    )


@dataclass(frozen=True)
class EnergyDriftTerms:
    """Pointwise energy-drift rates of an interpolated reduced system.

    ``gamma`` is the drift-induced rate of change of the reduced
    Hamiltonian, ``lam[nu]`` the rate multiplying noise column ``nu``;
    both vanish when interpolation is exact.  Each carries the a priori
    bound ``C * |grad H~| * |(I - psi psi^T) a_N|`` with ``C`` the
    interpolation constant.  ``bracket_residuals`` are the reduced
    Poisson brackets whose vanishing the derivation assumes.
    """

    gamma: float
    gamma_bound: float
    lam: np.ndarray
    lam_bounds: np.ndarray
    bracket_residuals: np.ndarray


def energy_drift_terms(
    full: HamiltonianSDESystem,
    reduced: ReducedHamiltonian,
    drift_op: DEIMOperator,
    noise_ops: Sequence[DEIMOperator | None] | None,
    xi: np.ndarray,
) -> EnergyDriftTerms:
    """Evaluate the energy-drift rates and their bounds at one state."""
    ham = reduced.system
    k = ham.n_dof
    xi = np.asarray(xi, dtype=np.float64)
    state = reduced.lift(xi)
    gq, gp = ham.grad_hamiltonian(xi[:k], xi[k:])
    grad_tilde = np.concatenate([gq, gp])
    grad_norm = float(np.linalg.norm(grad_tilde))

    def one_term(op: DEIMOperator, nonlinear_full: np.ndarray):
        approx = op.psi @ np.linalg.solve(
            op.psi[op.indices], nonlinear_full[op.indices]
        )
        v = op.projector.T @ (approx - nonlinear_full)
        value = float(np.dot(grad_tilde, j_apply(v)))
        orth = nonlinear_full - op.psi @ (op.psi.T @ nonlinear_full)
        bound = op.interpolation_constant() * grad_norm * float(
            np.linalg.norm(orth)
        )
        return value, bound

    if full.grad_nonlinear is None:
        raise ValueError("the full system carries no gradient nonlinearity")
    gamma, gamma_bound = one_term(drift_op, full.grad_nonlinear(state))

    ops = list(noise_ops) if noise_ops is not None else [None] * ham.m
    lam = np.zeros(ham.m)
    lam_bounds = np.zeros(ham.m)
    brackets = np.zeros(ham.m)
    for nu in range(ham.m):
        brackets[nu] = poisson_bracket(ham, xi[:k], xi[k:], nu)
        hq, hp = ham.grad_noise[nu](xi[:k], xi[k:])
        scale = grad_norm * float(np.linalg.norm(np.concatenate([hq, hp])))
        if abs(brackets[nu]) > 1e-8 * max(scale, 1.0):
            warnings.warn(
                f"reduced bracket with noise Hamiltonian {nu} is "
                f"{brackets[nu]:.3e}; drift rates assume it vanishes",
                stacklevel=2,
            )
        if ops[nu] is None:
            continue
        if full.noise_grad_nonlinear is None or full.noise_grad_nonlinear[nu] is None:
            raise ValueError(
                f"noise column {nu} has an operator but no nonlinearity"
            )
        lam[nu], lam_bounds[nu] = one_term(
            ops[nu], full.noise_grad_nonlinear[nu](state)
        )
    return EnergyDriftTerms(
        gamma=gamma,
        gamma_bound=gamma_bound,
        lam=lam,
        lam_bounds=lam_bounds,
        bracket_residuals=brackets,
    )
