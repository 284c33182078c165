"""Time grids and Brownian increment sampling.

Every stochastic computation in this package is driven by a
:class:`WienerPath`: a matrix of independent Gaussian increments on a
uniform :class:`TimeGrid`.  Increments are drawn per noise column from
its own PCG64 stream so that the same :class:`RngSpec` always
reproduces the same path, column by column, regardless of how many
columns are requested or in how many chunks the draws happen.

Stream derivation rule (frozen): column ``nu`` of the path described by
``RngSpec(seed, stream_id)`` is generated by a
``numpy.random.Generator`` built on ``PCG64`` seeded with
``SeedSequence(entropy=seed, spawn_key=(stream_id, nu))``.  Normal
variates come from ``Generator.standard_normal``, which uses the
ziggurat algorithm.  Chunked draws from one stream concatenate to the
same values as a single draw because ``standard_normal`` consumes the
stream sequentially.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np


__all__ = [
    "TimeGrid",
    "RngSpec",
    "WienerPath",
    "generate_wiener",
    "coarsen_wiener",
    "increment_stream",
    "save_wiener",
    "load_wiener",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_i = t0 + i*dt`` for ``i = 0..n_steps``.

    Nodes are computed directly from the formula, never by running
    accumulation, so ``node(i)`` is independent of how the grid is
    traversed.
    """

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.t0):
            raise ValueError("t0 must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError("dt must be finite and positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")

    @property
    def t_end(self) -> float:
        return self.node(self.n_steps)

    def node(self, i: int) -> float:
        return self.t0 + i * self.dt

    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class RngSpec:
    """Seed and stream identifier for reproducible increment sampling.

    Two specs with equal fields generate bitwise identical paths; specs
    differing in ``seed`` or ``stream_id`` use disjoint PCG64 streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    def column_generator(self, column: int) -> np.random.Generator:
        """Generator for noise column ``column`` (frozen derivation rule)."""
        seq = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, column)
        )
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class WienerPath:
    """Increments ``dW`` of an m-dimensional Wiener process on a grid.

    ``increments[i, nu]`` is ``W_nu(t_{i+1}) - W_nu(t_i)``.  The array
    is frozen after construction; downstream code may safely share it.
    """

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.ndim != 2:
            raise ValueError("increments must be a 2-d array")
        if inc.shape[0] != self.grid.n_steps:
            raise ValueError(
                f"increments have {inc.shape[0]} rows, grid has "
                f"{self.grid.n_steps} steps"
            )
        if not np.all(np.isfinite(inc)):
            raise ValueError("increments must be finite")
        inc = inc.copy()
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def m(self) -> int:
        return self.increments.shape[1]

    def cumulative(self) -> np.ndarray:
        """Path values ``W(t_i)``, shape (n_steps + 1, m), with W(t0) = 0."""
        w = np.zeros((self.grid.n_steps + 1, self.m))
        np.cumsum(self.increments, axis=0, out=w[1:])
        return w


def generate_wiener(rng: RngSpec, grid: TimeGrid, m: int) -> WienerPath:
    """Sample an m-column Wiener path on ``grid``.

    Each column is ``sqrt(dt)`` times standard normals from its own
    stream, so adding columns never perturbs existing ones.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    scale = np.sqrt(grid.dt)
    inc = np.empty((grid.n_steps, m))
    for nu in range(m):
        inc[:, nu] = rng.column_generator(nu).standard_normal(grid.n_steps)
    inc *= scale
    return WienerPath(grid=grid, increments=inc)


def increment_stream(
    rng: RngSpec, grid: TimeGrid, m: int, chunk_steps: int
) -> Iterator[np.ndarray]:
    """Yield the increments of ``generate_wiener(rng, grid, m)`` in chunks.

    Chunks have ``chunk_steps`` rows (the last may be shorter) and
    concatenate to the one-shot array bitwise.  Use this instead of
    materializing paths whose full increment matrix would not fit in
    memory; per-column generators persist across chunks.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if chunk_steps < 1:
        raise ValueError("chunk_steps must be at least 1")
    scale = np.sqrt(grid.dt)
    gens = [rng.column_generator(nu) for nu in range(m)]
    done = 0
    while done < grid.n_steps:
        take = min(chunk_steps, grid.n_steps - done)
        chunk = np.empty((take, m))
        for nu, gen in enumerate(gens):
            chunk[:, nu] = gen.standard_normal(take)
        chunk *= scale
        done += take
        yield chunk


def coarsen_wiener(path: WienerPath, factor: int) -> WienerPath:
    """Aggregate ``factor`` consecutive increments into one.

    The result lives on the grid with ``dt' = factor*dt`` and
    ``n_steps' = n_steps // factor``; each coarse increment is the sum
    of its ``factor`` fine increments, per column.  Cumulative sums of
    fine and coarse paths therefore agree at shared nodes up to
    reassociation of floating point additions.  ``factor`` must divide
    ``n_steps`` exactly.
    """
    if factor < 1:
        raise ValueError("factor must be at least 1")
    n = path.grid.n_steps
    if n % factor != 0:
        raise ValueError(f"factor {factor} does not divide n_steps {n}")
    coarse = TimeGrid(
        t0=path.grid.t0, dt=factor * path.grid.dt, n_steps=n // factor
    )
    inc = path.increments.reshape(n // factor, factor, path.m).sum(axis=1)
    return WienerPath(grid=coarse, increments=inc)


def save_wiener(path: WienerPath, file: str | os.PathLike) -> None:
    """Write a path as an increments matrix plus a grid/seed-free header.

    The increments go to ``file`` in the binary matrix format (kind
    ``increments``); grid fields go to ``file + '.meta'`` as key=value
    text.  Loading reverses both.
    """
    from . import matrixio

    matrixio.write_matrix(file, path.increments, kind=matrixio.KIND_INCREMENTS)
    meta = (
        f"t0 = {path.grid.t0!r}\n"
        f"dt = {path.grid.dt!r}\n"
        f"n_steps = {path.grid.n_steps}\n"
        f"m = {path.m}\n"
    )
    matrixio.atomic_write_text(str(file) + ".meta", meta)


def load_wiener(file: str | os.PathLike) -> WienerPath:
    from . import matrixio

    inc, kind = matrixio.read_matrix(file)
    if kind != matrixio.KIND_INCREMENTS:
        raise ValueError(f"{file} holds kind {kind}, not an increments matrix")
    fields = matrixio.parse_keyvalue_text(str(file) + ".meta")
    grid = TimeGrid(
        t0=float(fields["t0"]),
        dt=float(fields["dt"]),
        n_steps=int(fields["n_steps"]),
    )
    if int(fields["m"]) != inc.shape[1]:
        raise ValueError("meta column count disagrees with increments matrix")
    return WienerPath(grid=grid, increments=inc)
