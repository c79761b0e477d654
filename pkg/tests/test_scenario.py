import pytest

from hybrid_scltl.scenario import (ParseError, ValidationError, config_hash, load_scenario,
                                   scenario_from_dict, shipped_scenarios)


def _base():
    return {"alphabet": ["a", "b"], "formula": "F a & F b",
            "roi": [{"name": "a", "center": [1, 0], "radius": 0.3},
                    {"name": "b", "center": [-1, 0], "radius": 0.3}],
            "x0": [0, 0]}


def test_shipped_benchmark_values():
    sc = load_scenario("benchmark2d")
    assert list(sc.x0) == [-2.0, 2.0]
    assert sc.dt == 0.001 and sc.t_max == 5.0
    assert sc.config["sysid"]["k_theta"] == 15.0
    assert sc.config["sysid"]["gamma0"] == 20.0
    assert sc.config["adp"]["gamma0"] == 15.0
    assert sc.config["adp"]["wc0"] == [4.0, 4.0, 4.0]
    assert all(r.radius == 0.5 for r in sc.rois)


def test_all_shipped_scenarios_validate():
    assert {"benchmark2d", "linear1d"} <= set(shipped_scenarios())
    for name in shipped_scenarios():
        load_scenario(name)


def test_defaults_filled():
    sc = scenario_from_dict(_base())
    assert sc.config["adp"]["kc1"] == 0.001
    assert sc.config["sysid"]["M"] == 20


def test_overlapping_rois_named():
    cfg = _base()
    cfg["roi"][1]["center"] = [0.5, 0]
    with pytest.raises(ValidationError, match="a and b overlap") as info:
        scenario_from_dict(cfg)
    assert info.value.field == "roi"


def test_missing_formula():
    cfg = _base()
    del cfg["formula"]
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(cfg)
    assert info.value.field == "formula"


@pytest.mark.parametrize("key,value,field", [
    ("formula", "a & b", "formula"),
    ("formula", "F (a", "formula"),
    ("dt", -0.1, "dt"),
    ("x0", [0, 0, 0], "x0"),
    ("plant", "mystery", "plant"),
])
def test_invalid_top_level(key, value, field):
    cfg = _base()
    cfg[key] = value
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(cfg)
    assert info.value.field == field


@pytest.mark.parametrize("section,key,value", [
    ("sysid", "gamma0", [[1, 2, 0], [2, 1, 0], [0, 0, 1]]),
    ("adp", "gamma0", -1.0),
    ("cost", "R", [[1, 0], [0, -1]]),
    ("tiebreak", "mode", "random"),
])
def test_invalid_sections(section, key, value):
    cfg = _base()
    cfg[section] = {key: value}
    with pytest.raises(ValidationError):
        scenario_from_dict(cfg)


def test_missing_roi_for_observation():
    cfg = _base()
    cfg["roi"] = cfg["roi"][:1]
    with pytest.raises(ValidationError, match="no region"):
        scenario_from_dict(cfg)


def test_parse_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("formula = [unterminated")
    with pytest.raises(ParseError):
        load_scenario(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("does/not/exist.toml")


def test_overrides_and_hash():
    a = load_scenario("benchmark2d")
    b = load_scenario("benchmark2d", {"adp.kc1": 0.002})
    assert b.config["adp"]["kc1"] == 0.002
    assert a.hash() != b.hash()
    assert a.hash() == load_scenario("benchmark2d").hash()
    assert config_hash({"x": 1}) == config_hash({"x": 1})
    c = a.with_overrides({"tiebreak.word": ["o2", "o1", "o3"]})
    assert c.config["tiebreak"]["word"] == ["o2", "o1", "o3"]
