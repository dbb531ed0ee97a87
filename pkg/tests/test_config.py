"""Config parsing, canonical rendering, presets and hashing."""

import dataclasses
import math

import pytest

from lrc.config import (
    ExperimentConfig,
    RunSettings,
    config_flat_dict,
    config_hash,
    config_to_text,
    load_preset,
    parse_config,
    preset_names,
    theta_ns,
)
from lrc.errors import ConfigError


def test_defaults_match_contract():
    cfg = ExperimentConfig()
    assert cfg.run.n_symbols == 2**17
    assert cfg.run.n_test_sets == 5
    assert cfg.mask.n_nodes == 32
    cfg.validate()


def test_parse_overrides_on_defaults():
    cfg = parse_config("link.attenuation_db_km = 0.25\nreservoir.tau = 0.8\n")
    assert cfg.link.attenuation_db_km == 0.25
    assert cfg.reservoir.tau == 0.8
    # untouched sections keep their defaults
    assert cfg.run.n_symbols == 2**17


def test_parse_comments_blank_lines_and_inline_comments():
    text = "\n# full line comment\nlink.fiber_length_km = 5.5  # inline\n\n"
    assert parse_config(text).link.fiber_length_km == 5.5


def test_parse_bool_and_inf():
    cfg = parse_config(
        "link.noiseless = true\nlink.extinction_ratio_db = inf\n"
    )
    assert cfg.link.noiseless is True
    assert math.isinf(cfg.link.extinction_ratio_db)


def test_parse_tuple_range_syntax():
    cfg = parse_config("sweep.delta_f_ghz = -50:50:11\nsweep.k_f = 0,0.1,0.2\n")
    assert len(cfg.sweep.delta_f_ghz) == 11
    assert cfg.sweep.delta_f_ghz[0] == -50.0
    assert cfg.sweep.delta_f_ghz[-1] == 50.0
    assert cfg.sweep.k_f == (0.0, 0.1, 0.2)


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("just words", "line 1"),
        ("link.no_such_field = 1", "unknown key"),
        ("nosection.x = 1", "unknown section"),
        ("link.attenuation_db_km = abc", "bad value"),
        ("link = 3", "not section.field"),
        ("sweep.k_f = 0:1", "start:stop:count"),
    ],
)
def test_parse_errors_carry_line_and_reason(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_error_reports_correct_line_number():
    text = "link.fiber_length_km = 1.0\n\nlink.bogus = 2\n"
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(text)


def test_canonical_text_round_trips_byte_identically():
    cfg = parse_config("reservoir.k_f = 0.05\nlink.launch_peak_power_dbm = 12\n")
    text = config_to_text(cfg)
    again = config_to_text(parse_config(text))
    assert text == again
    assert config_hash(cfg) == config_hash(parse_config(text))


def test_output_dir_excluded_from_identity():
    a = ExperimentConfig()
    b = dataclasses.replace(a, run=dataclasses.replace(a.run, output_dir="elsewhere"))
    assert config_hash(a) == config_hash(b)
    assert "output_dir" not in config_to_text(a)
    assert "run.output_dir" not in config_flat_dict(a)
    # the key still parses so stored configs may carry it
    cfg = parse_config("run.output_dir = results\n")
    assert cfg.run.output_dir == "results"


def test_hash_changes_with_physics():
    a = ExperimentConfig()
    b = parse_config("link.fiber_length_km = 5.5\n")
    assert config_hash(a) != config_hash(b)


def test_all_presets_load_and_validate():
    names = preset_names()
    for expected in ("r1", "r2", "b2b", "fig4a", "fig4b", "fig6", "fig7a",
                     "fig7b", "fig8", "fig8b"):
        assert expected in names
        assert f"{expected}_desk" in names
    for name in names:
        cfg = load_preset(name)
        cfg.validate()
        if name.endswith("_desk"):
            assert cfg.run.n_symbols == 32768
            assert cfg.run.n_test_sets == 1


def test_preset_operating_points():
    r1 = load_preset("r1")
    assert r1.link.bit_rate_gbps == 56.0
    assert r1.link.fiber_length_km == 27.0
    assert theta_ns(r1) * 1e3 == pytest.approx(50.0)
    r2 = load_preset("r2")
    assert r2.link.bit_rate_gbps == 112.0
    assert r2.link.fiber_length_km == 5.5
    assert theta_ns(r2) * 1e3 == pytest.approx(25.0)
    b2b = load_preset("b2b")
    assert b2b.link.fiber_length_km == 0.0
    assert b2b.link.noiseless is True
    fig8 = load_preset("fig8")
    assert fig8.link.launch_peak_power_dbm == 12.0


def test_unknown_preset_lists_options():
    with pytest.raises(ConfigError, match="r1"):
        load_preset("nope")


def test_run_settings_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(run=RunSettings(n_symbols=0)).validate()
