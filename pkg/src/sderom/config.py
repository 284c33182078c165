"""Run configuration: flat key=value files with strict validation.

A run is described by one flat dictionary; files use ``key = value``
lines with ``#`` comments.  Validation is strict in both directions:
unknown keys are rejected (catching typos like ``n_step``) and keys
that do not apply to the selected problem are rejected too, so a
config cannot silently carry dead settings.

The canonical text form serializes every field of a validated config
with shortest round-trip floats in sorted key order; its SHA-256 is the
config hash recorded in manifests, making "same config" a byte-level
statement.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .integrators import METHODS
from .paths import RngSpec, TimeGrid


__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config_text",
    "build_config",
    "load_config",
    "canonical_text",
    "config_hash",
]


PROBLEMS = ("nls", "kubo", "stacked-kubo")
REDUCTIONS = ("none", "pod", "psd")

K_BAR_AUTO = -1  # sentinel for "use the default interpolation rank policy"


class ConfigError(Exception):
    """A configuration failed validation."""


@dataclass(frozen=True, kw_only=True)
class RunConfig:
    problem: str
    method: str
    reduction: str
    seed: int
    dt: float
    n_steps: int
    output_dir: str
    t0: float = 0.0
    stream_id: int = 0
    stride: int = 10
    record_stride: int = 1
    k: int | None = None
    k_bar: int | None = None
    training: tuple[tuple[float, ...], ...] = ()
    beta: float = 0.0
    eps: float = 0.0
    n_mesh: int = 0
    x_max: float = 60.0
    c: float = 1.0
    x_c: float = 30.0
    q0: float = 0.0
    p0: float = 1.0
    n_paths: int = 0

    def grid(self) -> TimeGrid:
        return TimeGrid(t0=self.t0, dt=self.dt, n_steps=self.n_steps)

    def rng(self) -> RngSpec:
        return RngSpec(seed=self.seed, stream_id=self.stream_id)


_COMMON_KEYS = {
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
}

_PROBLEM_KEYS = {
    "nls": {"eps", "n_mesh", "x_max", "c", "x_c"},
    "kubo": {"q0", "p0"},
    "stacked-kubo": {"q0", "p0", "n_paths"},
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Flat key=value lines with '#' comments into a raw dictionary."""
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        if key in fields:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        fields[key] = value.strip()
    return fields


def _take(fields: dict[str, str], key: str):
    return fields.pop(key, None)


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _parse_training(raw: str, problem: str) -> tuple[tuple[float, ...], ...]:
    entries = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if problem == "nls":
            if len(pieces) != 2:
                raise ConfigError(
                    f"training: nls entries are 'beta:eps', got {part!r}"
                )
            entries.append(
                (_parse_float(pieces[0], "training"), _parse_float(pieces[1], "training"))
            )
        else:
            if len(pieces) != 1:
                raise ConfigError(
                    f"training: {problem} entries are bare beta values, got {part!r}"
                )
            entries.append((_parse_float(pieces[0], "training"),))
    return tuple(entries)


def build_config(fields: dict[str, str]) -> RunConfig:
    """Validate a raw key->string dictionary into a :class:`RunConfig`."""
    fields = dict(fields)

    problem = _take(fields, "problem")
    if problem is None:
        raise ConfigError("missing required key 'problem'")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")

    allowed = _COMMON_KEYS | _PROBLEM_KEYS[problem]
    unknown = sorted(set(fields) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys for problem {problem!r}: {unknown}")

    values: dict[str, object] = {"problem": problem}

    method = _take(fields, "method") or "midpoint"
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    values["method"] = method

    reduction = _take(fields, "reduction") or "none"
    if reduction not in REDUCTIONS:
        raise ConfigError(
            f"reduction must be one of {REDUCTIONS}, got {reduction!r}"
        )
    values["reduction"] = reduction

    seed = _take(fields, "seed")
    if seed is None:
        raise ConfigError("missing required key 'seed'")
    values["seed"] = _parse_int(seed, "seed")
    if values["seed"] < 0:
        raise ConfigError("seed must be non-negative")

    for key, parser, default in (
        ("stream_id", _parse_int, 0),
        ("t0", _parse_float, 0.0),
        ("stride", _parse_int, 10),
        ("record_stride", _parse_int, 1),
    ):
        raw = _take(fields, key)
        values[key] = default if raw is None else parser(raw, key)

    dt = _take(fields, "dt")
    if dt is None:
        raise ConfigError("missing required key 'dt'")
    values["dt"] = _parse_float(dt, "dt")
    if not values["dt"] > 0.0:
        raise ConfigError("dt must be positive")

    n_steps = _take(fields, "n_steps")
    if n_steps is None:
        raise ConfigError("missing required key 'n_steps'")
    values["n_steps"] = _parse_int(n_steps, "n_steps")
    if values["n_steps"] < 1:
        raise ConfigError("n_steps must be at least 1")

    for key in ("stride", "record_stride"):
        if values[key] < 1:
            raise ConfigError(f"{key} must be at least 1")

    output_dir = _take(fields, "output_dir")
    if output_dir is None:
        raise ConfigError("missing required key 'output_dir'")
    values["output_dir"] = output_dir

    k_raw = _take(fields, "k")
    if k_raw is not None:
        values["k"] = _parse_int(k_raw, "k")
        if values["k"] < 1:
            raise ConfigError("k must be at least 1")

    k_bar_raw = _take(fields, "k_bar")
    if k_bar_raw is not None:
        if reduction == "none":
            raise ConfigError("k_bar requires a reduction")
        if k_bar_raw == "auto":
            values["k_bar"] = K_BAR_AUTO
        else:
            values["k_bar"] = _parse_int(k_bar_raw, "k_bar")
            if values["k_bar"] < 1:
                raise ConfigError("k_bar must be at least 1 or 'auto'")

    training_raw = _take(fields, "training")
    if training_raw is not None:
        values["training"] = _parse_training(training_raw, problem)

    beta = _take(fields, "beta")
    if beta is None:
        raise ConfigError("missing required key 'beta'")
    values["beta"] = _parse_float(beta, "beta")

    if problem == "nls":
        n_mesh = _take(fields, "n_mesh")
        if n_mesh is None:
            raise ConfigError("missing required key 'n_mesh'")
        values["n_mesh"] = _parse_int(n_mesh, "n_mesh")
        eps = _take(fields, "eps")
        if eps is None:
            raise ConfigError("missing required key 'eps'")
        values["eps"] = _parse_float(eps, "eps")
        for key, default in (("x_max", 60.0), ("c", 1.0), ("x_c", 30.0)):
            raw = _take(fields, key)
            values[key] = default if raw is None else _parse_float(raw, key)
    else:
        for key, default in (("q0", 0.0), ("p0", 1.0)):
            raw = _take(fields, key)
            values[key] = default if raw is None else _parse_float(raw, key)
        if problem == "stacked-kubo":
            n_paths = _take(fields, "n_paths")
            if n_paths is None:
                raise ConfigError("missing required key 'n_paths'")
            values["n_paths"] = _parse_int(n_paths, "n_paths")
            if values["n_paths"] < 1:
                raise ConfigError("n_paths must be at least 1")

    if problem == "kubo" and reduction != "none":
        raise ConfigError(
            "a two-dimensional oscillator leaves nothing to reduce; "
            "use problem stacked-kubo for reduced ensembles"
        )

    try:
        return RunConfig(**values)  # type: ignore[arg-type]
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return build_config(parse_config_text(text, origin=path))


def _format(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(config: RunConfig) -> str:
    """Serialize a validated config deterministically.

    Exactly the keys applicable to the problem are written, in sorted
    order, with shortest round-trip floats; unset optionals are
    omitted.  The text re-validates through :func:`build_config`, and
    its SHA-256 is the config hash.
    """
    keys = sorted(_COMMON_KEYS | _PROBLEM_KEYS[config.problem] | {"problem"})
    rows = []
    for key in keys:
        value = getattr(config, key)
        if key in ("k", "k_bar") and value is None:
            continue
        if key == "training":
            if not value:
                continue
            value = ",".join(":".join(repr(x) for x in entry) for entry in value)
        elif key == "k_bar" and value == K_BAR_AUTO:
            value = "auto"
        rows.append(f"{key} = {_format(value)}")
    return "\n".join(rows) + "\n"


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(canonical_text(config).encode("utf-8")).hexdigest()
