"""INI parsing and run-configuration coercion/validation."""

import pytest

from fresco.config import RunConfig, config_from_sections, load_config
from fresco.errors import ContractError, FrescoIOError
from fresco.inifmt import load_sections, parse_sections


def test_parse_sections_basic():
    text = """
    # leading comment
    top = 1

    [scene]
    width = 16  # inline comment
    height = 12

    [sprite]
    x = 1
    [sprite]
    x = 2 ; another comment style
    """
    sections = parse_sections(text)
    assert sections[0] == ("", {"top": "1"})
    assert sections[1] == ("scene", {"width": "16", "height": "12"})
    # repeated section names are preserved in order
    assert sections[2] == ("sprite", {"x": "1"})
    assert sections[3] == ("sprite", {"x": "2"})


def test_parse_sections_rejects_garbage():
    with pytest.raises(ContractError, match="line 1"):
        parse_sections("[unclosed")
    with pytest.raises(ContractError, match="key=value"):
        parse_sections("just some words")


def test_load_sections_missing_file(tmp_path):
    with pytest.raises(FrescoIOError, match="cannot read"):
        load_sections(tmp_path / "nope.ini")


def test_default_config_matches_published_recipe():
    cfg = RunConfig()
    assert cfg.strength == 0.75
    assert cfg.steps == 20
    assert cfg.batch_size == 8
    assert (cfg.lam_spat, cfg.lam_s, cfg.lam_t) == (50.0, 5.0, 5.0)
    assert (cfg.opt_iterations, cfg.opt_lr) == (20, 0.4)
    assert cfg.enable_opt and cfg.enable_spatial_attn
    assert cfg.enable_cross_frame and cfg.enable_temporal_attn
    assert (cfg.beta_first, cfg.beta_last) == (1e-4, 0.02)


def test_config_from_sections_coerces_types():
    cfg = config_from_sections(
        [("run", {"steps": "10", "strength": "0.5", "enable_opt": "no", "prompt": "night  city", "mode": "edit"})]
    )
    assert cfg.steps == 10
    assert cfg.strength == 0.5
    assert cfg.enable_opt is False
    assert cfg.prompt == "night  city"
    assert cfg.mode == "edit"


def test_config_boolean_spellings():
    for raw, expect in [("1", True), ("true", True), ("YES", True), ("0", False), ("False", False), ("no", False)]:
        cfg = config_from_sections([("run", {"enable_temporal_attn": raw})])
        assert cfg.enable_temporal_attn is expect
    with pytest.raises(ContractError, match="boolean"):
        config_from_sections([("run", {"enable_opt": "maybe"})])


def test_config_rejects_unknown_keys():
    with pytest.raises(ContractError, match="unknown config key"):
        config_from_sections([("run", {"stepz": "10"})])
    with pytest.raises(ContractError, match="unknown config key"):
        config_from_sections([], {"stepz": 10})


def test_config_overrides_win_over_file_values():
    cfg = config_from_sections([("run", {"steps": "10", "seed": "1"})], {"steps": 4})
    assert cfg.steps == 4
    assert cfg.seed == 1


def test_config_validation():
    with pytest.raises(ContractError, match="mode"):
        RunConfig(mode="paint")
    with pytest.raises(ContractError, match="propagation"):
        RunConfig(propagation="teleport")
    with pytest.raises(ContractError, match="long_base"):
        RunConfig(long_base="remix")
    with pytest.raises(ContractError, match="strength"):
        RunConfig(strength=1.5)
    with pytest.raises(ContractError, match="batch size"):
        RunConfig(batch_size=2)
    with pytest.raises(ContractError, match="s_min"):
        RunConfig(s_min=4, s_max=2)


def test_load_config_file_round_trip(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[run]\nmode = long\nsteps = 6\npropagation = tokens\ncyclic_keys = 2\n")
    cfg = load_config(p, {"seed": 9})
    assert cfg.mode == "long"
    assert cfg.steps == 6
    assert cfg.propagation == "tokens"
    assert cfg.cyclic_keys == 2
    assert cfg.seed == 9
