"""Config parsing, layering, and validation."""

import pytest

from coagsens import config as cfgmod
from coagsens.config import ExperimentConfig, build_config, parse_config_text


def test_defaults_resolve_family_reference_values():
    cfg = ExperimentConfig()
    assert cfg.kernel == "additive"
    assert cfg.resolved_lam == 1.0
    assert cfg.resolved_eps == 0.06
    soot = ExperimentConfig(kernel="soot")
    assert soot.resolved_lam == 2.1
    assert soot.resolved_eps == 0.03


def test_explicit_lam_eps_override_family_defaults():
    cfg = ExperimentConfig(lam=1.5, eps=0.1)
    assert cfg.resolved_lam == 1.5
    assert cfg.resolved_eps == 0.1


def test_parse_config_text_ignores_comments_and_blanks():
    raw = parse_config_text(
        "# comment\n"
        "\n"
        "kernel = soot\n"
        "N=2048\n"
        "output_times = 0.5, 1.0\n")
    assert raw == {"kernel": "soot", "N": "2048",
                   "output_times": "0.5, 1.0"}


def test_build_config_coerces_types():
    cfg = build_config({"kernel": "soot", "N": "2048", "L": "7",
                        "eps": "0.02", "output_times": "0.5,1.0",
                        "t_end": "1.0", "seed": "0x10"})
    assert cfg.kernel == "soot"
    assert cfg.n_particles == 2048
    assert cfg.replicates == 7
    assert cfg.eps == 0.02
    assert cfg.output_times == (0.5, 1.0)
    assert cfg.base_seed == 16


def test_build_config_later_layers_win():
    cfg = build_config({"N": "100", "L": "5"}, {"N": "200"}, None)
    assert cfg.n_particles == 200
    assert cfg.replicates == 5


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown"):
        build_config({"n_part": "100"})


@pytest.mark.parametrize("raw", [
    {"N": "1"},
    {"L": "0"},
    {"t_end": "0"},
    {"t_end": "-1"},
    {"eps": "-0.01"},
    {"lambda": "0.02", "eps": "0.06"},   # lam - eps/2 <= 0
    {"kernel": "ballistic"},
    {"algorithm": "triple"},
    {"x_report": "0"},
    {"workers": "0"},
    {"seed": str(1 << 64)},
    {"output_times": "2.0,1.0"},
    {"output_times": "1.0,4.0"},         # beyond t_end=3 default
    {"ladder": "25,1"},
    {"budget": "0"},
])
def test_invalid_values_rejected(raw):
    with pytest.raises(ValueError):
        build_config(raw)


def test_bad_numeric_text_rejected():
    with pytest.raises(ValueError):
        build_config({"N": "ten"})
    with pytest.raises(ValueError):
        build_config({"eps": "a.b"})


def test_frozen_dataclass():
    cfg = ExperimentConfig()
    with pytest.raises(Exception):
        cfg.n_particles = 5


def test_key_map_covers_cli_surface():
    for key in ("kernel", "lambda", "eps", "N", "L", "algorithm", "t_end",
                "output_times", "x_report", "seed", "workers", "ladder",
                "budget"):
        assert key in cfgmod._KEY_MAP
