"""Monte Carlo ensembles as one block-structured system.

An ensemble of M independent copies of a base system, each driven by
its own noise column, is itself one SDE of dimension ``N * M`` with
``m = M``: the drift acts copy by copy and diffusion column ``nu``
touches only copy ``nu``.  Running the stacked system through any
one-step method advances every path simultaneously and keeps the whole
toolchain (integration, snapshots, reduction) unchanged; it merely sees
a bigger state.

Two layouts are used.  The general stacking keeps each copy's state
contiguous, ``u = (X_1, ..., X_M)``.  The Hamiltonian stacking keeps
phase structure global, ``q = (Q_1, ..., Q_M)`` and ``p`` alike, so
that symplectic reduction of the ensemble stays a cotangent lift.

Reduced ensembles never materialize stacked matrices: a basis over the
stacked space is sliced into per-copy blocks and every reduced field
evaluation is M small base evaluations plus dense projections.

Ensemble statistics use numpy reductions, whose pairwise summation
keeps accumulation error logarithmic in M.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .integrators import make_stepper
from .paths import RngSpec, TimeGrid, increment_stream
from .reduction import (
    PODBasis,
    PSDBasis,
    ReducedHamiltonian,
    ReducedSDE,
    SnapshotMatrix,
)
from .systems import (
    DEFAULT_SETTINGS,
    HamiltonianSDESystem,
    NonConvergence,
    SDESystem,
    SolverSettings,
)


__all__ = [
    "StackedSDE",
    "StackedHamiltonian",
    "stack_sde",
    "stack_hamiltonian",
    "BlockBasis",
    "block_reduced_drift",
    "block_reduced_diffusion",
    "block_reduced_diffusion_weighted",
    "pod_reduced_stacked",
    "psd_reduced_stacked",
    "EnsembleResult",
    "run_ensemble",
    "snapshots_from_ensemble",
    "ensemble_mean",
    "MetricTraces",
    "error_metrics",
]


@dataclass(frozen=True, kw_only=True)
class StackedSDE(SDESystem):
    """M copies of a scalar-noise SDE as one block system."""

    base: SDESystem
    n_copies: int

    def decode(self, u: np.ndarray) -> np.ndarray:
        """Split a stacked state into per-copy rows, shape (M, N)."""
        return u.reshape(self.n_copies, self.base.dim)

    def encode(self, states: np.ndarray) -> np.ndarray:
        return np.asarray(states).reshape(-1)


@dataclass(frozen=True, kw_only=True)
class StackedHamiltonian(HamiltonianSDESystem):
    """M copies of a scalar-noise Hamiltonian system, phase-major layout."""

    base: HamiltonianSDESystem
    n_copies: int

    def decode(self, u: np.ndarray) -> np.ndarray:
        nb = self.base.n_dof
        m = self.n_copies
        q, p = u[: nb * m], u[nb * m :]
        return np.concatenate(
            [q.reshape(m, nb), p.reshape(m, nb)], axis=1
        )

    def encode(self, states: np.ndarray) -> np.ndarray:
        nb = self.base.n_dof
        states = np.asarray(states)
        return np.concatenate(
            [states[:, :nb].reshape(-1), states[:, nb:].reshape(-1)]
        )


def _batch_rows(fn, x: np.ndarray) -> np.ndarray:
    return np.stack([fn(row) for row in x])


def stack_sde(base: SDESystem, n_copies: int) -> StackedSDE:
    """Stack ``n_copies`` of a one-noise SDE into one system.

    Copy ``nu`` is driven by noise column ``nu`` alone, so the stacked
    diffusion matrix is block diagonal by construction.
    """
    if base.m != 1:
        raise ValueError("stacking expects a base system with one noise column")
    if n_copies < 1:
        raise ValueError("n_copies must be at least 1")
    n = base.dim

    def drift(u: np.ndarray) -> np.ndarray:
        x = u.reshape(n_copies, n)
        g = base.drift(x) if base.vectorized else _batch_rows(base.drift, x)
        return g.reshape(-1)

    def diffusion(u: np.ndarray, nu: int) -> np.ndarray:
        out = np.zeros(n_copies * n)
        block = slice(nu * n, (nu + 1) * n)
        out[block] = base.diffusion(u[block], 0)
        return out

    def diffusion_weighted(u: np.ndarray, dw: np.ndarray) -> np.ndarray:
        x = u.reshape(n_copies, n)
        if base.vectorized:
            b = base.diffusion(x, 0)
        else:
            b = _batch_rows(lambda row: base.diffusion(row, 0), x)
        return (b * dw[:, None]).reshape(-1)

    return StackedSDE(
        dim=n_copies * n,
        m=n_copies,
        drift=drift,
        diffusion=diffusion,
        diffusion_weighted=diffusion_weighted,
        base=base,
        n_copies=n_copies,
    )


def stack_hamiltonian(
    base: HamiltonianSDESystem, n_copies: int
) -> StackedHamiltonian:
    """Stack a one-noise Hamiltonian system, summing the Hamiltonians.

    The stacked Hamiltonian is ``sum_nu H(Q_nu, P_nu)`` and noise
    Hamiltonian ``nu`` is the base one on copy ``nu``, which reproduces
    the block-diagonal stacked SDE through the canonical equations.
    """
    if base.m != 1:
        raise ValueError("stacking expects a base system with one noise column")
    if base.forcing is not None or base.noise_forcing is not None:
        raise ValueError("stacking supports conservative bases only")
    if n_copies < 1:
        raise ValueError("n_copies must be at least 1")
    nb = base.n_dof
    base_h = base.noise_hamiltonians[0]
    base_g = base.grad_noise[0]

    def blocks(x: np.ndarray) -> np.ndarray:
        return x.reshape(x.shape[:-1] + (n_copies, nb))

    def hamiltonian(q: np.ndarray, p: np.ndarray):
        qb, pb = blocks(q), blocks(p)
        if base.vectorized:
            vals = base.hamiltonian(qb, pb)
        else:
            vals = np.array([base.hamiltonian(qq, pp) for qq, pp in zip(qb, pb)])
        return np.sum(vals, axis=-1)

    def grad_hamiltonian(q: np.ndarray, p: np.ndarray):
        qb, pb = blocks(q), blocks(p)
        if base.vectorized:
            gq, gp = base.grad_hamiltonian(qb, pb)
        else:
            parts = [base.grad_hamiltonian(qq, pp) for qq, pp in zip(qb, pb)]
            gq = np.stack([a for a, _ in parts])
            gp = np.stack([b for _, b in parts])
        return gq.reshape(q.shape), gp.reshape(p.shape)

    def make_noise(nu: int):
        block = slice(nu * nb, (nu + 1) * nb)

        def noise_h(q: np.ndarray, p: np.ndarray):
            return base_h(q[..., block], p[..., block])

        def noise_grad(q: np.ndarray, p: np.ndarray):
            gq = np.zeros_like(q)
            gp = np.zeros_like(p)
            bq, bp = base_g(q[..., block], p[..., block])
            gq[..., block] = bq
            gp[..., block] = bp
            return gq, gp

        return noise_h, noise_grad

    pairs = [make_noise(nu) for nu in range(n_copies)]

    def grad_noise_weighted(q: np.ndarray, p: np.ndarray, dw: np.ndarray):
        qb, pb = blocks(q), blocks(p)
        if base.vectorized:
            gq, gp = base_g(qb, pb)
        else:
            parts = [base_g(qq, pp) for qq, pp in zip(qb, pb)]
            gq = np.stack([a for a, _ in parts])
            gp = np.stack([b for _, b in parts])
        gq = gq * dw[:, None]
        gp = gp * dw[:, None]
        return gq.reshape(q.shape), gp.reshape(p.shape)

    return StackedHamiltonian(
        n_dof=n_copies * nb,
        m=n_copies,
        hamiltonian=hamiltonian,
        grad_hamiltonian=grad_hamiltonian,
        noise_hamiltonians=tuple(h for h, _ in pairs),
        grad_noise=tuple(g for _, g in pairs),
        grad_noise_weighted=grad_noise_weighted,
        separable=base.separable,
        vectorized=base.vectorized,
        base=base,
        n_copies=n_copies,
    )


@dataclass(frozen=True)
class BlockBasis:
    """A stacked-space basis viewed as per-copy row blocks."""

    full: np.ndarray
    block_rows: int

    def __post_init__(self) -> None:
        full = np.asarray(self.full, dtype=np.float64)
        if full.ndim != 2:
            raise ValueError("basis must be a 2-d array")
        if full.shape[0] % self.block_rows != 0:
            raise ValueError("block_rows must divide the basis row count")
        object.__setattr__(self, "full", full)

    @property
    def n_blocks(self) -> int:
        return self.full.shape[0] // self.block_rows

    @property
    def k(self) -> int:
        return self.full.shape[1]

    @property
    def blocks(self) -> np.ndarray:
        """View of shape (M, block_rows, k); concatenation restores full."""
        return self.full.reshape(self.n_blocks, self.block_rows, self.k)


def _base_diffusion_rows(base: SDESystem, x: np.ndarray) -> np.ndarray:
    if base.vectorized:
        return base.diffusion(x, 0)
    return _batch_rows(lambda row: base.diffusion(row, 0), x)


def block_reduced_drift(
    basis: BlockBasis, base: SDESystem, xi: np.ndarray
) -> np.ndarray:
    """``sum_nu U_nu^T a(U_nu xi)`` using per-copy base evaluations."""
    lifted = (basis.full @ xi).reshape(basis.n_blocks, basis.block_rows)
    if base.vectorized:
        g = base.drift(lifted)
    else:
        g = _batch_rows(base.drift, lifted)
    return basis.full.T @ g.reshape(-1)


def block_reduced_diffusion(
    basis: BlockBasis, base: SDESystem, xi: np.ndarray, nu: int
) -> np.ndarray:
    """``U_nu^T b(U_nu xi)``: only copy ``nu`` is ever lifted."""
    block = basis.blocks[nu]
    return block.T @ base.diffusion(block @ xi, 0)


def block_reduced_diffusion_weighted(
    basis: BlockBasis, base: SDESystem, xi: np.ndarray, dw: np.ndarray
) -> np.ndarray:
    lifted = (basis.full @ xi).reshape(basis.n_blocks, basis.block_rows)
    b = _base_diffusion_rows(base, lifted)
    return basis.full.T @ (b * dw[:, None]).reshape(-1)


def pod_reduced_stacked(basis: PODBasis, stacked: StackedSDE) -> ReducedSDE:
    """Project a stacked SDE on a POD basis, evaluated blockwise."""
    bb = BlockBasis(full=basis.u, block_rows=stacked.base.dim)
    if bb.n_blocks != stacked.n_copies:
        raise ValueError("basis rows do not match the stacked dimension")
    base = stacked.base

    reduced = SDESystem(
        dim=basis.k,
        m=stacked.n_copies,
        drift=lambda xi: block_reduced_drift(bb, base, xi),
        diffusion=lambda xi, nu: block_reduced_diffusion(bb, base, xi, nu),
        diffusion_weighted=lambda xi, dw: block_reduced_diffusion_weighted(
            bb, base, xi, dw
        ),
    )
    return ReducedSDE(
        system=reduced, lift=basis.lift, restrict=basis.restrict, basis=basis
    )


def psd_reduced_stacked(
    basis: PSDBasis, stacked: StackedHamiltonian
) -> ReducedHamiltonian:
    """Symplectic blockwise reduction of a stacked Hamiltonian system.

    The reduced Hamiltonian sums the base one over lifted copies; noise
    Hamiltonian ``nu`` lifts copy ``nu`` only.  Separability survives
    because each copy lifts q and p independently.
    """
    base = stacked.base
    nb = base.n_dof
    m = stacked.n_copies
    if basis.phi.shape[0] != nb * m:
        raise ValueError("basis rows do not match the stacked dimension")
    phi = basis.phi
    blocks = phi.reshape(m, nb, basis.k)
    base_h = base.noise_hamiltonians[0]
    base_g = base.grad_noise[0]

    def lift_all(eta: np.ndarray, chi: np.ndarray):
        q = (eta @ phi.T).reshape(eta.shape[:-1] + (m, nb))
        p = (chi @ phi.T).reshape(chi.shape[:-1] + (m, nb))
        return q, p

    def hamiltonian(eta: np.ndarray, chi: np.ndarray):
        q, p = lift_all(eta, chi)
        if base.vectorized:
            vals = base.hamiltonian(q, p)
        else:
            vals = np.array([base.hamiltonian(qq, pp) for qq, pp in zip(q, p)])
        return np.sum(vals, axis=-1)

    def grad_hamiltonian(eta: np.ndarray, chi: np.ndarray):
        q, p = lift_all(eta, chi)
        if base.vectorized:
            gq, gp = base.grad_hamiltonian(q, p)
        else:
            parts = [base.grad_hamiltonian(qq, pp) for qq, pp in zip(q, p)]
            gq = np.stack([a for a, _ in parts])
            gp = np.stack([b for _, b in parts])
        flat = eta.shape[:-1] + (m * nb,)
        return gq.reshape(flat) @ phi, gp.reshape(flat) @ phi

    def make_noise(nu: int):
        block = blocks[nu]

        def noise_h(eta: np.ndarray, chi: np.ndarray):
            return base_h(eta @ block.T, chi @ block.T)

        def noise_grad(eta: np.ndarray, chi: np.ndarray):
            bq, bp = base_g(eta @ block.T, chi @ block.T)
            return bq @ block, bp @ block

        return noise_h, noise_grad

    pairs = [make_noise(nu) for nu in range(m)]

    def grad_noise_weighted(eta: np.ndarray, chi: np.ndarray, dw: np.ndarray):
        q, p = lift_all(eta, chi)
        if base.vectorized:
            gq, gp = base_g(q, p)
        else:
            parts = [base_g(qq, pp) for qq, pp in zip(q, p)]
            gq = np.stack([a for a, _ in parts])
            gp = np.stack([b for _, b in parts])
        gq = gq * dw[:, None]
        gp = gp * dw[:, None]
        flat = eta.shape[:-1] + (m * nb,)
        return gq.reshape(flat) @ phi, gp.reshape(flat) @ phi

    reduced = HamiltonianSDESystem(
        n_dof=basis.k,
        m=m,
        hamiltonian=hamiltonian,
        grad_hamiltonian=grad_hamiltonian,
        noise_hamiltonians=tuple(h for h, _ in pairs),
        grad_noise=tuple(g for _, g in pairs),
        grad_noise_weighted=grad_noise_weighted,
        separable=base.separable,
        vectorized=base.vectorized,
    )
    return ReducedHamiltonian(
        system=reduced, lift=basis.lift, restrict=basis.restrict, basis=basis
    )


@dataclass(frozen=True)
class EnsembleResult:
    """Per-path states and their mean at recorded grid nodes.

    ``states[nu, i]`` is path ``nu`` at recorded node ``i`` in per-path
    coordinates; ``mean`` averages over paths.  A diverged run is
    truncated before the first non-finite node, which ``diverged_at``
    names.
    """

    times: np.ndarray
    node_indices: np.ndarray
    mean: np.ndarray
    states: np.ndarray | None
    diverged_at: int | None = None


def run_ensemble(
    system: SDESystem | HamiltonianSDESystem,
    method: str,
    u0: np.ndarray,
    rng: RngSpec,
    grid: TimeGrid,
    *,
    record_stride: int = 1,
    chunk_steps: int = 1024,
    settings: SolverSettings = DEFAULT_SETTINGS,
    decode: Callable[[np.ndarray], np.ndarray] | None = None,
    keep_paths: bool = True,
) -> EnsembleResult:
    """Advance a many-noise system over streamed increments.

    Equivalent to ``integrate`` on the path from ``(rng, grid)`` but
    never materializes the full increment matrix or the full state
    history: increments stream in chunks and only nodes at
    ``record_stride`` spacing (plus the endpoints) are decoded and
    kept.  ``decode`` maps a flat state to per-path rows; stacked
    systems supply theirs automatically and reduced ensembles pass a
    lift composed with the stacked decoding.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.ndim != 1 or u0.shape[0] != system.dim:
        raise ValueError(f"u0 must be a vector of length {system.dim}")
    if record_stride < 1:
        raise ValueError("record_stride must be at least 1")
    if decode is None:
        if isinstance(system, (StackedSDE, StackedHamiltonian)):
            decode = system.decode
        else:
            decode = lambda u: u[None, :]

    step = make_stepper(system, method, settings)
    dt = grid.dt
    times: list[float] = []
    nodes: list[int] = []
    mean_rows: list[np.ndarray] = []
    state_rows: list[np.ndarray] = []

    def record(node: int, u: np.ndarray) -> None:
        rows = decode(u)
        times.append(grid.node(node))
        nodes.append(node)
        mean_rows.append(rows.mean(axis=0))
        if keep_paths:
            state_rows.append(rows.copy())

    def pack(diverged_at: int | None) -> EnsembleResult:
        return EnsembleResult(
            times=np.array(times),
            node_indices=np.array(nodes, dtype=np.intp),
            mean=np.stack(mean_rows),
            states=np.stack(state_rows, axis=1) if keep_paths else None,
            diverged_at=diverged_at,
        )

    u = u0
    record(0, u)
    node = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for chunk in increment_stream(rng, grid, system.m, chunk_steps):
            for dw in chunk:
                try:
                    u = step(u, dt, dw)
                except NonConvergence as err:
                    err.step_index = node
                    raise
                node += 1
                if not np.all(np.isfinite(u)):
                    return pack(diverged_at=node)
                if node % record_stride == 0 or node == grid.n_steps:
                    record(node, u)
    return pack(diverged_at=None)


def snapshots_from_ensemble(
    result: EnsembleResult, layout: str, n_dof: int | None = None
) -> SnapshotMatrix:
    """Stacked-state snapshot columns from recorded ensemble nodes.

    ``generic`` columns stack per-path states contiguously, matching
    :class:`StackedSDE`; ``phase_split`` columns collect the stacked
    q-halves then the stacked p-halves, matching
    :class:`StackedHamiltonian`, and need the per-path ``n_dof``.
    """
    if result.states is None:
        raise ValueError("ensemble was run without keep_paths")
    m, t, d = result.states.shape
    if layout == "generic":
        return SnapshotMatrix(
            data=result.states.transpose(1, 0, 2).reshape(t, m * d).T,
            layout="generic",
        )
    if layout != "phase_split":
        raise ValueError(f"unknown layout {layout!r}")
    if n_dof is None or 2 * n_dof != d:
        raise ValueError("phase_split needs the per-path n_dof, half the state")
    q = result.states[..., :n_dof].transpose(1, 0, 2).reshape(t, m * n_dof).T
    p = result.states[..., n_dof:].transpose(1, 0, 2).reshape(t, m * n_dof).T
    return SnapshotMatrix(data=np.concatenate([q, p], axis=1), layout="phase_split")


def ensemble_mean(states: np.ndarray) -> np.ndarray:
    """Mean over the leading path axis (pairwise summation)."""
    return np.mean(states, axis=0)


@dataclass(frozen=True)
class MetricTraces:
    """Relative error traces over recorded times.

    ``e1`` follows one designated path, ``e2`` is the root mean square
    over the ensemble, ``e3`` compares ensemble means.  Times where a
    reference norm underflows are marked NaN rather than divided out.
    """

    times: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den < 1e-30, np.nan, num / np.where(den == 0.0, 1.0, den))


def error_metrics(
    states: np.ndarray,
    reference: np.ndarray,
    times: np.ndarray,
    path_index: int = 0,
) -> MetricTraces:
    """Pathwise, mean-square, and mean relative errors per recorded time.

    Both arrays have shape (paths, times, dim) and must share a noise
    realization for the pathwise and mean-square metrics to be
    meaningful.
    """
    if states.shape != reference.shape:
        raise ValueError("ensemble shapes disagree")
    diff = states - reference
    e1 = _safe_ratio(
        np.linalg.norm(diff[path_index], axis=-1),
        np.linalg.norm(reference[path_index], axis=-1),
    )
    e2 = _safe_ratio(
        np.sqrt(np.mean(np.sum(diff**2, axis=-1), axis=0)),
        np.sqrt(np.mean(np.sum(reference**2, axis=-1), axis=0)),
    )
    mean_diff = np.mean(states, axis=0) - np.mean(reference, axis=0)
    e3 = _safe_ratio(
        np.linalg.norm(mean_diff, axis=-1),
        np.linalg.norm(np.mean(reference, axis=0), axis=-1),
    )
    return MetricTraces(times=np.asarray(times), e1=e1, e2=e2, e3=e3)
