"""Command-line pipeline: offline, online, report, mc.

``offline`` integrates the full model for every training parameter set
on one frozen Wiener sample, assembles snapshots, and writes the
reduction artifacts (basis, spectrum, interpolation operators,
training trajectories) plus a manifest of checksums.  ``online`` loads
those artifacts, builds the reduced system at the configured
parameters, integrates it on the configured Wiener sample, and writes
the lifted trajectory with energy and error tables.  ``report`` turns
artifacts into delimited tables and figures.  ``mc`` runs a full
stacked ensemble with streamed increments and writes mean, error, and
energy tables against the closed-form reference.

Exit codes: 0 on success, 2 for configuration or artifact validation
errors, 3 for runtime failures (divergent training runs, failed
implicit solves).  All artifacts are written atomically and contain no
timestamps, so rerunning a command with an equal config reproduces
every output byte for byte.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import figures, matrixio
from .config import (
    K_BAR_AUTO,
    ConfigError,
    RunConfig,
    build_config,
    canonical_text,
    config_hash,
    load_config,
    parse_config_text,
)
from .ensemble import (
    StackedHamiltonian,
    StackedSDE,
    error_metrics,
    pod_reduced_stacked,
    psd_reduced_stacked,
    run_ensemble,
    snapshots_from_ensemble,
    stack_hamiltonian,
    stack_sde,
)
from .integrators import energy_trace, integrate
from .kubo import (
    KuboConfig,
    initial_state,
    kubo_exact,
    kubo_exact_ensemble,
    kubo_exact_mean,
    kubo_system,
)
from .nls import NLSConfig, build_nls_system, psi_from_states, soliton_initial_state
from .paths import generate_wiener
from .reduction import (
    DEIMOperator,
    PODBasis,
    PSDBasis,
    assemble_snapshots,
    build_deim,
    build_pod,
    build_psd_cotangent_lift,
    pod_deim_system,
    pool_snapshots,
    reduce_hamiltonian_psd,
    reduce_sde_pod,
    sample_states,
    sdeim_system,
)
from .systems import NonConvergence


__all__ = ["main"]


class ArtifactError(Exception):
    """A required pipeline artifact is missing or inconsistent."""


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------


def _kubo_config(cfg: RunConfig, beta: float | None = None) -> KuboConfig:
    return KuboConfig(
        beta=cfg.beta if beta is None else beta, q0=cfg.q0, p0=cfg.p0
    )


def _nls_config(
    cfg: RunConfig, beta: float | None = None, eps: float | None = None
) -> NLSConfig:
    return NLSConfig(
        n_mesh=cfg.n_mesh,
        eps=cfg.eps if eps is None else eps,
        beta=cfg.beta if beta is None else beta,
        x_max=cfg.x_max,
        c=cfg.c,
        x_c=cfg.x_c,
    )


def _single_system(cfg: RunConfig, params: tuple[float, ...] | None = None):
    """Full system and initial state for nls or kubo at given parameters."""
    if cfg.problem == "nls":
        beta, eps = params if params is not None else (cfg.beta, cfg.eps)
        ncfg = _nls_config(cfg, beta=beta, eps=eps)
        return build_nls_system(ncfg), soliton_initial_state(ncfg)
    beta = params[0] if params is not None else cfg.beta
    kcfg = _kubo_config(cfg, beta=beta)
    return kubo_system(kcfg), initial_state(kcfg)


def _stacked_system(
    cfg: RunConfig, layout: str, params: tuple[float, ...] | None = None
):
    """Stacked ensemble system for stacked-kubo in the requested layout."""
    beta = params[0] if params is not None else cfg.beta
    base = kubo_system(_kubo_config(cfg, beta=beta))
    if layout == "generic":
        stacked = stack_sde(base.as_sde(), cfg.n_paths)
        u0 = np.tile([cfg.q0, cfg.p0], cfg.n_paths)
    else:
        stacked = stack_hamiltonian(base, cfg.n_paths)
        u0 = np.concatenate(
            [np.full(cfg.n_paths, cfg.q0), np.full(cfg.n_paths, cfg.p0)]
        )
    return stacked, u0


def _stacked_layout(cfg: RunConfig) -> str:
    return "generic" if cfg.reduction == "pod" else "phase_split"


def _resolve_k_bar(cfg: RunConfig, k: int, max_rank: int) -> int:
    if cfg.k_bar is None:
        raise ValueError("no interpolation rank configured")
    if cfg.k_bar == K_BAR_AUTO:
        # default policy: match the basis rank on the drift route,
        # double it on the gradient route (two phase blocks feed it),
        # clamped to the rank the nonlinearity snapshots can support
        want = k if cfg.reduction == "pod" else 2 * k
        return min(want, max_rank)
    return cfg.k_bar


# ---------------------------------------------------------------------------
# artifact io
# ---------------------------------------------------------------------------


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _read_matrix_checked(path: str, kind: int) -> np.ndarray:
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact {path}")
    matrix, actual = matrixio.read_matrix(path)
    if actual != kind:
        raise ArtifactError(f"{path}: expected kind {kind}, found {actual}")
    return matrix


def _load_basis(cfg: RunConfig):
    basis_mat = _read_matrix_checked(_out(cfg, "basis.spmr"), matrixio.KIND_BASIS)
    spectrum = _read_matrix_checked(
        _out(cfg, "spectrum.spmr"), matrixio.KIND_SPECTRUM
    )[:, 0]
    if cfg.k is not None and basis_mat.shape[1] != cfg.k:
        raise ArtifactError(
            f"basis.spmr holds k={basis_mat.shape[1]} but the config asks k={cfg.k}"
        )
    if cfg.reduction == "pod":
        return PODBasis(u=basis_mat, spectrum=spectrum)
    return PSDBasis(phi=basis_mat, spectrum=spectrum)


def _load_deim(cfg: RunConfig, projector: np.ndarray, component_evaluator):
    psi = _read_matrix_checked(_out(cfg, "deim_modes.spmr"), matrixio.KIND_BASIS)
    idx = _read_matrix_checked(_out(cfg, "deim_indices.spmr"), matrixio.KIND_GENERIC)
    w = _read_matrix_checked(_out(cfg, "deim_w.spmr"), matrixio.KIND_GENERIC)
    l_bar = _read_matrix_checked(_out(cfg, "deim_lbar.spmr"), matrixio.KIND_GENERIC)
    if component_evaluator is None:
        raise ArtifactError("the configured system has no nonlinear component map")
    return DEIMOperator(
        psi=psi,
        indices=idx[:, 0].astype(np.intp),
        w=w,
        l_bar=l_bar,
        projector=projector,
        component_evaluator=component_evaluator,
    )


def _write_manifest(cfg: RunConfig, name: str, extra: dict, artifacts: list[str]):
    entries: dict[str, object] = {
        "config_hash": config_hash(cfg),
        "problem": cfg.problem,
        "method": cfg.method,
        "reduction": cfg.reduction,
        "seed": cfg.seed,
        "stream_id": cfg.stream_id,
        "dt": cfg.dt,
        "n_steps": cfg.n_steps,
    }
    entries.update(extra)
    for artifact in sorted(artifacts):
        entries[f"sha256.{artifact}"] = matrixio.sha256_file(_out(cfg, artifact))
    matrixio.write_manifest(_out(cfg, name), entries)


def _energy_csv(cfg: RunConfig, times: np.ndarray, energy: np.ndarray) -> None:
    h0 = energy[0]
    scale = abs(h0) if abs(h0) > 1e-30 else 1.0
    rel = np.abs(energy - h0) / scale
    matrixio.write_csv(
        _out(cfg, "energy.csv"),
        ["t", "energy", "rel_err"],
        [times, energy, rel],
    )


# ---------------------------------------------------------------------------
# offline
# ---------------------------------------------------------------------------


def _nonlinear_map(cfg: RunConfig, system):
    """Gradient or drift nonlinearity of a full system, per reduction route."""
    if cfg.reduction == "psd":
        return system.grad_nonlinear, system.grad_linear
    sde = system.as_sde()
    return sde.nonlinear, sde.linear


def _nonlinear_columns(nonlinear, states: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return nonlinear(states.T).T
    return np.stack([nonlinear(col) for col in states.T], axis=1)


def cmd_offline(cfg: RunConfig) -> int:
    if cfg.reduction == "none":
        raise ConfigError("offline builds bases; set reduction to pod or psd")
    if not cfg.training:
        raise ConfigError("offline needs a non-empty training list")
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid, rng = cfg.grid(), cfg.rng()
    layout = "generic" if cfg.reduction == "pod" else "phase_split"

    artifacts: list[str] = []
    snapshot_parts = []
    state_parts = []
    nonlinear_parts = []
    want_deim = cfg.k_bar is not None
    linear = None

    if cfg.problem == "stacked-kubo":
        stacked_layout = _stacked_layout(cfg)
        for i, params in enumerate(cfg.training):
            system, u0 = _stacked_system(cfg, stacked_layout, params)
            result = run_ensemble(
                system, cfg.method, u0, rng, grid, record_stride=cfg.stride
            )
            if result.diverged_at is not None:
                raise RuntimeError(
                    f"training run {i} (parameters {params}) diverged "
                    f"at node {result.diverged_at}"
                )
            name = f"trajectory_train_{i}.spmr"
            recorded = np.stack([system.encode(s) for s in result.states.transpose(1, 0, 2)])
            matrixio.write_matrix(_out(cfg, name), recorded, matrixio.KIND_TRAJECTORY)
            artifacts.append(name)
            snapshot_parts.append(
                snapshots_from_ensemble(
                    result,
                    layout,
                    n_dof=None if layout == "generic" else system.base.n_dof,
                )
            )
            if want_deim:
                raise ConfigError(
                    "the stacked oscillator has a linear gradient; "
                    "there is no nonlinearity to interpolate"
                )
        snapshots = pool_snapshots(snapshot_parts)
    else:
        wiener = generate_wiener(rng, grid, 1)
        for i, params in enumerate(cfg.training):
            system, u0 = _single_system(cfg, params)
            trajectory = integrate(system, cfg.method, u0, wiener)
            if trajectory.diverged_at is not None:
                raise RuntimeError(
                    f"training run {i} (parameters {params}) diverged "
                    f"at node {trajectory.diverged_at}"
                )
            name = f"trajectory_train_{i}.spmr"
            matrixio.write_matrix(
                _out(cfg, name), trajectory.states, matrixio.KIND_TRAJECTORY
            )
            artifacts.append(name)
            states = sample_states([trajectory], cfg.stride)
            state_parts.append(states)
            if want_deim:
                nonlinear, linear = _nonlinear_map(cfg, system)
                if nonlinear is None:
                    raise ConfigError(
                        "the configured system has no nonlinear part to interpolate"
                    )
                nonlinear_parts.append(
                    _nonlinear_columns(nonlinear, states, system.vectorized)
                )
        snapshots = assemble_snapshots_from_states(state_parts, layout)

    if cfg.reduction == "pod":
        basis = build_pod(snapshots, cfg.k)
        basis_mat, k = basis.u, basis.k
        reduced_dim = k
    else:
        basis = build_psd_cotangent_lift(snapshots, cfg.k)
        basis_mat, k = basis.phi, basis.k
        reduced_dim = 2 * k

    matrixio.write_matrix(_out(cfg, "basis.spmr"), basis_mat, matrixio.KIND_BASIS)
    matrixio.write_matrix(
        _out(cfg, "spectrum.spmr"),
        basis.spectrum[:, None],
        matrixio.KIND_SPECTRUM,
    )
    artifacts += ["basis.spmr", "spectrum.spmr"]

    extra: dict[str, object] = {"k": k, "reduced_dimension": reduced_dim}
    if want_deim:
        from .reduction import SnapshotMatrix

        projector = basis.u if cfg.reduction == "pod" else basis.a_matrix()
        nonlinear_snaps = SnapshotMatrix(
            data=np.concatenate(nonlinear_parts, axis=1), layout="generic"
        )
        k_bar = _resolve_k_bar(cfg, k, min(nonlinear_snaps.data.shape))
        op = build_deim(nonlinear_snaps, k_bar, projector, linear, None)
        matrixio.write_matrix(_out(cfg, "deim_modes.spmr"), op.psi, matrixio.KIND_BASIS)
        matrixio.write_matrix(
            _out(cfg, "deim_indices.spmr"),
            op.indices[:, None].astype(np.float64),
            matrixio.KIND_GENERIC,
        )
        matrixio.write_matrix(_out(cfg, "deim_w.spmr"), op.w, matrixio.KIND_GENERIC)
        matrixio.write_matrix(
            _out(cfg, "deim_lbar.spmr"), op.l_bar, matrixio.KIND_GENERIC
        )
        matrixio.write_matrix(
            _out(cfg, "deim_spectrum.spmr"),
            op.spectrum[:, None],
            matrixio.KIND_SPECTRUM,
        )
        artifacts += [
            "deim_modes.spmr",
            "deim_indices.spmr",
            "deim_w.spmr",
            "deim_lbar.spmr",
            "deim_spectrum.spmr",
        ]
        extra["k_bar"] = k_bar

    matrixio.atomic_write_text(_out(cfg, "config.txt"), canonical_text(cfg))
    artifacts.append("config.txt")
    _write_manifest(cfg, "manifest_offline.txt", extra, artifacts)
    print(
        f"offline: wrote basis.spmr (k={k}, rows={basis_mat.shape[0]}) "
        f"and {len(artifacts)} artifacts to {cfg.output_dir}"
    )
    return 0


def assemble_snapshots_from_states(state_parts, layout: str):
    """Pool pre-sampled state columns into one snapshot matrix."""
    from .reduction import SnapshotMatrix, to_phase_split

    if layout == "phase_split":
        return pool_snapshots(
            [
                SnapshotMatrix(data=to_phase_split(s), layout="phase_split")
                for s in state_parts
            ]
        )
    return SnapshotMatrix(
        data=np.concatenate(state_parts, axis=1), layout="generic"
    )


# ---------------------------------------------------------------------------
# online
# ---------------------------------------------------------------------------


def _running_e2(psi: np.ndarray, psi_ref: np.ndarray) -> np.ndarray:
    """Cumulative relative space-time error with left-endpoint weights."""
    diff = np.cumsum(np.sum(np.abs(psi - psi_ref) ** 2, axis=1))
    ref = np.cumsum(np.sum(np.abs(psi_ref) ** 2, axis=1))
    out = np.zeros(len(diff))
    np.divide(np.sqrt(diff[:-1]), np.sqrt(ref[:-1]), out=out[1:])
    return out


def cmd_online(cfg: RunConfig) -> int:
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cfg.problem == "stacked-kubo":
        return _online_stacked(cfg)
    return _online_single(cfg)


def _online_single(cfg: RunConfig) -> int:
    grid, rng = cfg.grid(), cfg.rng()
    system, u0 = _single_system(cfg)
    wiener = generate_wiener(rng, grid, 1)
    artifacts: list[str] = []
    extra: dict[str, object] = {}

    if cfg.reduction == "none":
        trajectory = integrate(system, cfg.method, u0, wiener)
        lifted = trajectory.states
        diverged_at = trajectory.diverged_at
    else:
        basis = _load_basis(cfg)
        if cfg.reduction == "pod":
            reduced = reduce_sde_pod(system.as_sde(), basis)
            if cfg.method == "stormer_verlet":
                raise ConfigError(
                    "the projected drift is no longer Hamiltonian; "
                    "stormer_verlet needs reduction psd without interpolation"
                )
            if cfg.k_bar is not None:
                op = _load_deim(cfg, basis.u, system.as_sde().nonlinear_component)
                reduced = pod_deim_system(reduced, op)
        else:
            reduced_h = reduce_hamiltonian_psd(system, basis)
            if cfg.k_bar is not None:
                if cfg.method == "stormer_verlet":
                    raise ConfigError(
                        "gradient interpolation breaks the Hamiltonian split; "
                        "use a general-purpose method"
                    )
                op = _load_deim(
                    cfg, basis.a_matrix(), system.grad_nonlinear_component
                )
                reduced = sdeim_system(reduced_h, op)
            else:
                reduced = reduced_h
        xi0 = reduced.restrict(u0)
        rtraj = integrate(reduced.system, cfg.method, xi0, wiener)
        diverged_at = rtraj.diverged_at
        lifted = np.stack([reduced.lift(xi) for xi in rtraj.states])
        extra["reduced_dimension"] = rtraj.states.shape[1]

    matrixio.write_matrix(_out(cfg, "trajectory.spmr"), lifted, matrixio.KIND_TRAJECTORY)
    artifacts.append("trajectory.spmr")

    times = grid.t0 + grid.dt * np.arange(lifted.shape[0])
    n = system.n_dof
    if system.vectorized:
        energy = np.asarray(system.hamiltonian(lifted[:, :n], lifted[:, n:]))
    else:
        energy = np.array([system.hamiltonian(u[:n], u[n:]) for u in lifted])
    _energy_csv(cfg, times, energy)
    artifacts.append("energy.csv")

    if diverged_at is not None:
        extra["diverged_at"] = diverged_at
        print(
            f"online: run diverged at node {diverged_at}; "
            "wrote partial trajectory and energy"
        )
    else:
        if cfg.problem == "kubo":
            reference = kubo_exact(_kubo_config(cfg), wiener).states
            diff = np.linalg.norm(lifted - reference, axis=1)
            ref = np.linalg.norm(reference, axis=1)
            matrixio.write_csv(
                _out(cfg, "errors.csv"), ["t", "e1"], [times, diff / ref]
            )
            artifacts.append("errors.csv")
        elif cfg.reduction != "none":
            reference = integrate(system, cfg.method, u0, wiener)
            if reference.diverged_at is not None:
                raise RuntimeError("the full reference run diverged")
            psi = psi_from_states(lifted)
            psi_ref = psi_from_states(reference.states)
            e1 = np.array(
                [
                    np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30)
                    for a, b in zip(psi, psi_ref)
                ]
            )
            matrixio.write_csv(
                _out(cfg, "errors.csv"),
                ["t", "e1", "e2_running"],
                [times, e1, _running_e2(psi, psi_ref)],
            )
            artifacts.append("errors.csv")

    matrixio.atomic_write_text(_out(cfg, "config.txt"), canonical_text(cfg))
    artifacts.append("config.txt")
    _write_manifest(cfg, "manifest_online.txt", extra, artifacts)
    print(f"online: wrote {len(artifacts)} artifacts to {cfg.output_dir}")
    return 0


def _online_stacked(cfg: RunConfig) -> int:
    grid, rng = cfg.grid(), cfg.rng()
    layout = _stacked_layout(cfg)
    stacked, u0 = _stacked_system(cfg, layout)
    artifacts: list[str] = []
    extra: dict[str, object] = {}

    if cfg.reduction == "none":
        result = run_ensemble(
            stacked, cfg.method, u0, rng, grid, record_stride=cfg.record_stride
        )
        recorded = np.stack(
            [stacked.encode(s) for s in result.states.transpose(1, 0, 2)]
        )
    else:
        basis = _load_basis(cfg)
        if cfg.k_bar is not None:
            raise ConfigError(
                "the stacked oscillator has nothing to interpolate"
            )
        if cfg.reduction == "pod":
            if cfg.method == "stormer_verlet":
                raise ConfigError(
                    "the projected drift is no longer Hamiltonian; "
                    "stormer_verlet needs reduction psd"
                )
            reduced = pod_reduced_stacked(basis, stacked)
        else:
            reduced = psd_reduced_stacked(basis, stacked)
        xi0 = reduced.restrict(u0)
        decode = lambda xi: stacked.decode(reduced.lift(xi))
        result = run_ensemble(
            reduced.system,
            cfg.method,
            xi0,
            rng,
            grid,
            record_stride=cfg.record_stride,
            decode=decode,
        )
        recorded = None
        extra["reduced_dimension"] = reduced.system.dim

    if result.diverged_at is not None:
        extra["diverged_at"] = result.diverged_at
        print(f"online: ensemble diverged at node {result.diverged_at}")

    # reduced runs store the recorded ensemble mean; per-path states are
    # reconstructed through the stored basis when needed
    matrixio.write_matrix(
        _out(cfg, "trajectory.spmr"),
        recorded if recorded is not None else result.mean,
        matrixio.KIND_TRAJECTORY,
    )
    artifacts.append("trajectory.spmr")

    exact = kubo_exact_ensemble(
        _kubo_config(cfg), rng, grid, cfg.n_paths, record_stride=cfg.record_stride
    )
    common = min(result.states.shape[1], exact.states.shape[1])
    metrics = error_metrics(
        result.states[:, :common], exact.states[:, :common], result.times[:common]
    )
    matrixio.write_csv(
        _out(cfg, "errors.csv"),
        ["t", "e1", "e2", "e3"],
        [metrics.times, metrics.e1, metrics.e2, metrics.e3],
    )
    artifacts.append("errors.csv")

    closed = kubo_exact_mean(_kubo_config(cfg), result.times - grid.t0)
    matrixio.write_csv(
        _out(cfg, "mean.csv"),
        ["t", "q_mean", "p_mean", "q_exact_mean", "p_exact_mean", "q_closed", "p_closed"],
        [
            result.times,
            result.mean[:, 0],
            result.mean[:, 1],
            exact.mean[: len(result.times), 0],
            exact.mean[: len(result.times), 1],
            closed[:, 0],
            closed[:, 1],
        ],
    )
    artifacts.append("mean.csv")

    energy = 0.5 * np.mean(np.sum(result.states**2, axis=-1), axis=0)
    _energy_csv(cfg, result.times, energy)
    artifacts.append("energy.csv")

    matrixio.atomic_write_text(_out(cfg, "config.txt"), canonical_text(cfg))
    artifacts.append("config.txt")
    _write_manifest(cfg, "manifest_online.txt", extra, artifacts)
    print(f"online: wrote {len(artifacts)} artifacts to {cfg.output_dir}")
    return 0


# ---------------------------------------------------------------------------
# mc
# ---------------------------------------------------------------------------


def cmd_mc(cfg: RunConfig) -> int:
    if cfg.problem != "stacked-kubo":
        raise ConfigError("mc runs stacked ensembles; set problem = stacked-kubo")
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid, rng = cfg.grid(), cfg.rng()
    stacked, u0 = _stacked_system(cfg, "phase_split")
    result = run_ensemble(
        stacked, cfg.method, u0, rng, grid, record_stride=cfg.record_stride
    )
    extra: dict[str, object] = {"n_paths": cfg.n_paths}
    if result.diverged_at is not None:
        extra["diverged_at"] = result.diverged_at
        print(f"mc: ensemble diverged at node {result.diverged_at}")

    exact = kubo_exact_ensemble(
        _kubo_config(cfg), rng, grid, cfg.n_paths, record_stride=cfg.record_stride
    )
    common = min(result.states.shape[1], exact.states.shape[1])
    metrics = error_metrics(
        result.states[:, :common], exact.states[:, :common], result.times[:common]
    )
    matrixio.write_csv(
        _out(cfg, "errors.csv"),
        ["t", "e1", "e2", "e3"],
        [metrics.times, metrics.e1, metrics.e2, metrics.e3],
    )
    closed = kubo_exact_mean(_kubo_config(cfg), result.times - grid.t0)
    matrixio.write_csv(
        _out(cfg, "mean.csv"),
        ["t", "q_mean", "p_mean", "q_exact_mean", "p_exact_mean", "q_closed", "p_closed"],
        [
            result.times,
            result.mean[:, 0],
            result.mean[:, 1],
            exact.mean[:common, 0],
            exact.mean[:common, 1],
            closed[:, 0],
            closed[:, 1],
        ],
    )
    energy = 0.5 * np.mean(np.sum(result.states**2, axis=-1), axis=0)
    _energy_csv(cfg, result.times, energy)
    matrixio.atomic_write_text(_out(cfg, "config.txt"), canonical_text(cfg))
    _write_manifest(
        cfg,
        "manifest_mc.txt",
        extra,
        ["errors.csv", "mean.csv", "energy.csv", "config.txt"],
    )
    print(f"mc: wrote ensemble tables for {cfg.n_paths} paths to {cfg.output_dir}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact {path}")
    return path


def cmd_report(output_dir: str, sections: list[str], slice_times: list[float]) -> int:
    def path(name: str) -> str:
        return os.path.join(output_dir, name)

    explicit = bool(sections)
    wanted = sections or ["spectrum", "energy", "errors"]
    if slice_times and "slices" not in wanted:
        wanted.append("slices")
    written: list[str] = []

    for section in wanted:
        if section == "spectrum":
            src = path("spectrum.spmr")
            if not os.path.exists(src):
                if explicit:
                    raise ArtifactError(f"missing artifact {src}")
                continue
            sigma = matrixio.read_matrix(src)[0][:, 0]
            matrixio.write_csv(
                path("spectrum.csv"),
                ["index", "sigma"],
                [np.arange(1, len(sigma) + 1), sigma],
            )
            figures.save_spectrum_figure(path("spectrum.png"), sigma)
            written += ["spectrum.csv", "spectrum.png"]
        elif section == "energy":
            src = path("energy.csv")
            if not os.path.exists(src):
                if explicit:
                    raise ArtifactError(f"missing artifact {src}")
                continue
            _, data = matrixio.read_csv(src)
            figures.save_trace_figure(
                path("energy.png"),
                data["t"],
                {"relative energy drift": data["rel_err"]},
                ylabel="|H - H0| / |H0|",
                yscale="log",
            )
            written.append("energy.png")
        elif section == "errors":
            src = path("errors.csv")
            if not os.path.exists(src):
                if explicit:
                    raise ArtifactError(f"missing artifact {src}")
                continue
            header, data = matrixio.read_csv(src)
            figures.save_trace_figure(
                path("errors.png"),
                data["t"],
                {name: data[name] for name in header if name != "t"},
                ylabel="relative error",
                yscale="log",
            )
            written.append("errors.png")
        elif section == "slices":
            cfg = load_config(_require(path("config.txt")))
            if cfg.problem != "nls":
                raise ArtifactError("solution slices need an nls trajectory")
            states, kind = matrixio.read_matrix(_require(path("trajectory.spmr")))
            if kind != matrixio.KIND_TRAJECTORY:
                raise ArtifactError("trajectory.spmr does not hold a trajectory")
            ncfg = _nls_config(cfg)
            x = ncfg.mesh()
            header = ["x"]
            columns = [x]
            curves = {}
            for t in slice_times:
                row = int(round((t - cfg.t0) / cfg.dt))
                if not 0 <= row < states.shape[0]:
                    raise ArtifactError(
                        f"slice time {t} lies outside the stored trajectory"
                    )
                modulus = np.abs(psi_from_states(states[row]))
                label = f"abs_psi_t{t:g}"
                header.append(label)
                columns.append(modulus)
                curves[f"t = {t:g}"] = modulus
            matrixio.write_csv(path("solution_slice.csv"), header, columns)
            figures.save_profile_figure(
                path("solution.png"), x, curves, ylabel="|psi|"
            )
            written += ["solution_slice.csv", "solution.png"]
        else:
            raise ConfigError(f"unknown report section {section!r}")

    print(f"report: wrote {', '.join(written) if written else 'nothing'}")
    return 0


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


_FLAG_KEYS = [
    "problem",
    "method",
    "reduction",
    "seed",
    "stream_id",
    "t0",
    "dt",
    "n_steps",
    "stride",
    "record_stride",
    "k",
    "k_bar",
    "training",
    "output_dir",
    "beta",
    "eps",
    "n_mesh",
    "x_max",
    "c",
    "x_c",
    "q0",
    "p0",
    "n_paths",
]


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "config",
        nargs="?",
        help="key=value config file; flags below override its entries",
    )
    for key in _FLAG_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="V")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    fields: dict[str, str] = {}
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as handle:
            fields = parse_config_text(handle.read(), origin=args.config)
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            fields[key] = value
    return build_config(fields)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sderom",
        description="reduced-order modeling pipeline for stochastic "
        "Hamiltonian systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("offline", "integrate training runs and build reduction artifacts"),
        ("online", "integrate the (reduced) model and write result tables"),
        ("mc", "run a full stacked ensemble against the closed-form mean"),
    ):
        p = sub.add_parser(name, help=text)
        _add_config_arguments(p)

    p = sub.add_parser("report", help="render tables and figures from artifacts")
    p.add_argument("output_dir", help="directory holding pipeline artifacts")
    p.add_argument(
        "--sections",
        default="",
        help="comma list from spectrum,energy,errors,slices (default: all present)",
    )
    p.add_argument(
        "--slice-times",
        default="",
        help="comma list of times for solution slices (nls trajectories)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            sections = [s for s in args.sections.split(",") if s]
            times = [float(s) for s in args.slice_times.split(",") if s]
            return cmd_report(args.output_dir, sections, times)
        cfg = _resolve_config(args)
        if args.command == "offline":
            return cmd_offline(cfg)
        if args.command == "online":
            return cmd_online(cfg)
        return cmd_mc(cfg)
    except (ConfigError, ArtifactError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (NonConvergence, RuntimeError, ValueError, np.linalg.LinAlgError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
