"""Config parsing, validation, and the canonical hashed text form."""

import hashlib

import pytest

from sderom.config import (
    K_BAR_AUTO,
    ConfigError,
    RunConfig,
    build_config,
    canonical_text,
    config_hash,
    load_config,
    parse_config_text,
)


def kubo_fields(**extra):
    fields = {
        "problem": "kubo",
        "seed": "7",
        "dt": "0.05",
        "n_steps": "20",
        "output_dir": "out",
        "beta": "0.5",
    }
    fields.update(extra)
    return fields


def nls_fields(**extra):
    fields = {
        "problem": "nls",
        "seed": "3",
        "dt": "0.01",
        "n_steps": "50",
        "output_dir": "out",
        "beta": "0.15",
        "eps": "1.0",
        "n_mesh": "16",
    }
    fields.update(extra)
    return fields


def test_parse_skips_comments_and_blank_lines():
    text = "# a comment\n\nseed = 4  # trailing\n  dt=0.1\n"
    assert parse_config_text(text) == {"seed": "4", "dt": "0.1"}


def test_parse_rejects_malformed_lines():
    with pytest.raises(ConfigError, match="<config>:1"):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError, match="empty key"):
        parse_config_text("= 3\n")
    with pytest.raises(ConfigError, match="duplicate key 'seed'"):
        parse_config_text("seed = 1\nseed = 2\n")


def test_build_fills_defaults():
    cfg = build_config(kubo_fields())
    assert cfg.method == "midpoint"
    assert cfg.reduction == "none"
    assert (cfg.t0, cfg.stream_id, cfg.stride, cfg.record_stride) == (0.0, 0, 10, 1)
    assert (cfg.q0, cfg.p0) == (0.0, 1.0)
    assert cfg.k is None and cfg.k_bar is None and cfg.training == ()
    grid = cfg.grid()
    assert (grid.t0, grid.dt, grid.n_steps) == (0.0, 0.05, 20)
    spec = cfg.rng()
    assert (spec.seed, spec.stream_id) == (7, 0)


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError, match=r"unknown keys.*'n_step'.*'sede'"):
        build_config(kubo_fields(n_step="5", sede="1"))


def test_keys_from_other_problems_are_rejected():
    with pytest.raises(ConfigError, match="unknown keys for problem 'kubo'"):
        build_config(kubo_fields(eps="1.0"))
    with pytest.raises(ConfigError, match="unknown keys for problem 'nls'"):
        build_config(nls_fields(q0="0.2"))


@pytest.mark.parametrize(
    "missing", ["problem", "seed", "dt", "n_steps", "output_dir", "beta"]
)
def test_required_common_keys(missing):
    fields = kubo_fields()
    del fields[missing]
    with pytest.raises(ConfigError, match=f"missing required key '{missing}'"):
        build_config(fields)


def test_required_problem_keys():
    fields = nls_fields()
    del fields["n_mesh"]
    with pytest.raises(ConfigError, match="n_mesh"):
        build_config(fields)
    fields = nls_fields()
    del fields["eps"]
    with pytest.raises(ConfigError, match="eps"):
        build_config(fields)
    stacked = kubo_fields(problem="stacked-kubo")
    with pytest.raises(ConfigError, match="n_paths"):
        build_config(stacked)


@pytest.mark.parametrize(
    "key,value,message",
    [
        ("problem", "heat", "problem must be one of"),
        ("method", "euler", "method must be one of"),
        ("reduction", "rom", "reduction must be one of"),
        ("seed", "-1", "seed must be non-negative"),
        ("seed", "x", "expected an integer"),
        ("dt", "0.0", "dt must be positive"),
        ("dt", "soon", "expected a number"),
        ("n_steps", "0", "n_steps must be at least 1"),
        ("stride", "0", "stride must be at least 1"),
        ("record_stride", "0", "record_stride must be at least 1"),
        ("k", "0", "k must be at least 1"),
    ],
)
def test_value_validation(key, value, message):
    with pytest.raises(ConfigError, match=message):
        build_config(kubo_fields(**{key: value}))


def test_k_bar_needs_a_reduction_and_knows_auto():
    with pytest.raises(ConfigError, match="k_bar requires a reduction"):
        build_config(kubo_fields(k_bar="4"))
    cfg = build_config(
        nls_fields(reduction="pod", k="4", k_bar="auto", method="r2")
    )
    assert cfg.k_bar == K_BAR_AUTO
    cfg = build_config(nls_fields(reduction="psd", k="4", k_bar="8"))
    assert cfg.k_bar == 8


def test_plain_oscillator_rejects_reduction():
    with pytest.raises(ConfigError, match="stacked-kubo"):
        build_config(kubo_fields(reduction="pod", k="2"))


def test_training_formats_per_problem():
    cfg = build_config(nls_fields(training="0.12:0.95, 0.18:1.05"))
    assert cfg.training == ((0.12, 0.95), (0.18, 1.05))
    cfg = build_config(kubo_fields(training="0.095,0.105"))
    assert cfg.training == ((0.095,), (0.105,))
    with pytest.raises(ConfigError, match="bare beta values"):
        build_config(kubo_fields(training="0.1:1.0"))
    with pytest.raises(ConfigError, match="'beta:eps'"):
        build_config(nls_fields(training="0.1"))


def test_canonical_text_is_exactly_the_sorted_key_value_form():
    cfg = build_config(kubo_fields())
    expected = (
        "beta = 0.5\n"
        "dt = 0.05\n"
        "method = midpoint\n"
        "n_steps = 20\n"
        "output_dir = out\n"
        "p0 = 1.0\n"
        "problem = kubo\n"
        "q0 = 0.0\n"
        "record_stride = 1\n"
        "reduction = none\n"
        "seed = 7\n"
        "stream_id = 0\n"
        "stride = 10\n"
        "t0 = 0.0\n"
    )
    assert canonical_text(cfg) == expected
    assert config_hash(cfg) == hashlib.sha256(expected.encode()).hexdigest()


def test_canonical_text_round_trips_every_problem():
    configs = [
        build_config(kubo_fields()),
        build_config(nls_fields(reduction="psd", k="4", k_bar="auto",
                                training="0.12:0.95,0.18:1.05")),
        build_config(
            kubo_fields(problem="stacked-kubo", n_paths="8", reduction="pod",
                        k="6", method="r2", training="0.095,0.105")
        ),
    ]
    for cfg in configs:
        rebuilt = build_config(parse_config_text(canonical_text(cfg)))
        assert rebuilt == cfg
        assert config_hash(rebuilt) == config_hash(cfg)


def test_hash_changes_with_any_field():
    base = build_config(kubo_fields())
    bumped = build_config(kubo_fields(seed="8"))
    assert config_hash(base) != config_hash(bumped)


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(f"{k} = {v}" for k, v in kubo_fields().items()) + "\n")
    assert load_config(str(path)) == build_config(kubo_fields())
    with pytest.raises(ConfigError, match=str(path)):
        path.write_text("broken line\n")
        load_config(str(path))
