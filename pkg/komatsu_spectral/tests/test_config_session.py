import json

import numpy as np
import pytest

from komatsu_spectral import session
from komatsu_spectral.config import (ConfigError, RunConfig,
                                     config_from_dict, load_config)
from komatsu_spectral.util import (config_hash, read_json, to_jsonable,
                                   write_csv, write_json)


@pytest.fixture
def run_session():
    session.init_session(seed=3, config_hash="abc")
    yield session.get_session()
    session.shutdown_session()


def test_defaults_are_valid():
    config = load_config()
    assert config.manifold == "circle"
    assert config.J == 60
    assert config.classes == ["gevrey_roumieu", "smooth"]
    w = config.build_weight()
    assert w.kind == "gevrey" and w.s == 1.0


def test_nested_sections(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps({
            "manifold": "sphere2",
            "J": 12,
            "quadrature_size": [14, 28],
            "weight": {
                "kind": "tabulated",
                "values": [1, 1, 2, 6, 24]
            },
            "variant": "beurling",
            "L_grid": {
                "min": 0.1,
                "max": 5.0,
                "points": 10
            },
            "truncation": {
                "K": 4,
                "J": 3
            }
        }))
    config = load_config(str(path))
    assert config.quadrature_size == (14, 28)
    assert config.truncation.K == 4
    assert config.L_grid.build().size == 10
    w = config.build_weight()
    assert w.k_max == 4 and w.variant == "beurling"


@pytest.mark.parametrize("data,match", [
    ({"manifold": "torus3"}, "manifold"),
    ({"J": 0}, "J must be"),
    ({"variant": "both"}, "variant"),
    ({"classes": ["quasianalytic"]}, "unknown class"),
    ({"input": {"builtin": "nope"}}, "unknown builtin"),
    ({"operator": {"name": "curl"}}, "unknown operator"),
    ({"manifold": "sphere2", "operator": {"name": "derivative"}},
     "circle and torus2 only"),
    ({"L_grid": {"min": 2.0, "max": 1.0}}, "L_grid"),
    ({"weight": {"kind": "tabulated"}}, "tabulated"),
    ({"colour": "red"}, "unknown keys"),
    ({"weight": {"order": 2}}, "unknown keys"),
])
def test_invalid_configs(data, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(bad))


def test_config_hash_is_stable():
    a, b = RunConfig(), RunConfig()
    assert a.hash() == b.hash()
    b.seed = 1
    assert a.hash() != b.hash()
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


def test_session_lifecycle(run_session):
    assert session.is_session_enabled()
    assert session.get_config_hash() == "abc"
    assert run_session.get_seed() == 3
    with pytest.raises(ValueError, match="FIX THIS"):
        session.init_session(seed=0, config_hash="x")


def test_session_rng_is_seeded(run_session):
    expected = np.random.default_rng(3).standard_normal(3)
    np.testing.assert_array_equal(session.get_rng().standard_normal(3),
                                  expected)


def test_no_session():
    assert not session.is_session_enabled()
    with pytest.raises(ValueError, match="FIX THIS"):
        session.get_session()
    first = session.get_rng(5).random()
    assert session.get_rng(5).random() == first


def test_json_helpers(tmp_path):
    obj = {"z": 1 + 2j, "inf": float("inf"), "arr": np.arange(3)}
    assert to_jsonable(obj) == {"z": [1.0, 2.0], "inf": "inf",
                                "arr": [0, 1, 2]}
    path = str(tmp_path / "out.json")
    write_json(path, obj)
    assert read_json(path)["z"] == [1.0, 2.0]
    with open(path) as f:
        first = f.read()
    write_json(path, obj)
    with open(path) as f:
        assert f.read() == first


def test_csv_uses_full_precision(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv(str(path), ("a", "b"), np.array([[1.0 / 3.0, 2.0]]))
    header, row = path.read_text().splitlines()
    assert header == "a,b"
    assert float(row.split(",")[0]) == 1.0 / 3.0
