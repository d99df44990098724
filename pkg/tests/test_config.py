import json

import pytest

from gridcast.config import ExperimentConfig, default_config_dict, load_config
from gridcast.errors import ConfigError

BASE = {"grid_id": "G", "data_path": "g.csv", "train_test_cutoff": "2021-01-01T00:00:00Z"}


def make(**kw):
    return ExperimentConfig.from_dict({**BASE, **kw})


def test_defaults():
    c = make()
    assert c.seeds == (0, 1, 2, 3, 4)
    assert [s.kind for s in c.specs()] == ["gbdt_a", "gbdt_b", "mlp"]
    assert str(c.cutoff) == "2021-01-01 00:00:00+00:00"


@pytest.mark.parametrize("bad", [
    {"seeds": []},
    {"seeds": [1, 1]},
    {"ensemble": {"validation_fraction": 0.5}},
    {"ensemble": {"validation_fraction": 0.0}},
    {"ensemble": {"k_folds": 1}},
    {"ensemble": {"folds": 5}},
    {"pool": ["forest"]},
    {"sublearners": {"gbdt_a": {"depth": 3}}},
    {"max_gap_hours": 0},
    {"train_test_cutoff": "not a date"},
    {"colour": "blue"},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        make(**bad)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="data_path"):
        ExperimentConfig.from_dict({"grid_id": "G", "train_test_cutoff": "2021-01-01"})


def test_load_resolves_paths_and_reports_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(BASE))
    c = load_config(path)
    assert c.data_path == str(tmp_path / "g.csv")
    path.write_text('{\n  "grid_id": "G",\n  "seeds": [1,,2]\n}')
    with pytest.raises(ConfigError, match=r"c\.json:3:"):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_digest_ignores_output_dir():
    a, b = make(output_dir="x"), make(output_dir="y")
    assert a.digest() == b.digest()
    assert a.digest() != make(seeds=[3]).digest()


def test_default_config_is_valid(tmp_path):
    d = default_config_dict()
    c = ExperimentConfig.from_dict(d)
    assert ExperimentConfig.from_dict(c.to_dict()) == c
