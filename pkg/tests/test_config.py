import pytest

from repdyn.config import build_config, parse_config_text
from repdyn.cumulants import Family
from repdyn.errors import ConfigError
from repdyn.learning import Rule


def test_sections_and_lists(tmp_path):
    values, lines = parse_config_text("[mdp]\nn_states = 20\n\n[train]\nrules = mc, td\nt_grid = 5,10\n")
    assert values == {"n_states": 20, "rules": (Rule.MC, Rule.TD), "t_grid": (5, 10)}
    assert lines["rules"] == 5


def test_headerless_file_reports_true_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("n_states = 20\nd = three\n")
    assert info.value.line == 2 and info.value.field == "d"


def test_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[a]\nbogus = 1\n")
    assert info.value.field == "bogus" and info.value.line == 2
    with pytest.raises(ConfigError):
        parse_config_text("[a]\nd = 2\n[b]\nd = 3\n")


def test_validation_names_field_and_line(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nstep_size = 0.1\ngamma = 1.5\n")
    with pytest.raises(ConfigError) as info:
        build_config("convergence", str(path), environ={})
    assert info.value.field == "gamma" and info.value.line == 3
    assert "gamma" in str(info.value)


def test_seed_precedence(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("seed = 3\n")
    assert build_config("convergence", str(path), environ={}).seed == 3
    assert build_config("convergence", str(path), environ={"REPDYN_SEED": "7"}).seed == 7
    assert build_config("convergence", str(path), {"seed": 9}, environ={"REPDYN_SEED": "7"}).seed == 9
    with pytest.raises(ConfigError):
        build_config("convergence", str(path), environ={"REPDYN_SEED": "x"})


def test_presets_and_string_overrides():
    cfg = build_config("random-cumulants", environ={})
    assert cfg.generator == "four_room" and cfg.d == 5 and cfg.n_seeds == 3
    assert cfg.t_grid == (5, 10, 20, 40, 80)
    cfg = build_config("convergence", overrides={"rules": "td", "families": "haar"}, environ={})
    assert cfg.rules == (Rule.TD,) and cfg.families == (Family.HAAR,)
    assert build_config("rotating", environ={}).generator == "three_state_cycle"
