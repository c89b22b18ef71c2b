import pytest

from phaserand.config import ProtocolConfig, config_from_mapping, load_config
from phaserand.errors import ConfigNotFoundError, ConfigRangeError, ConfigSchemaError


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == ProtocolConfig()
    assert cfg.M == 9 and cfg.p_d == 1e-8 and cfg.f == 1.16 and cfg.solver_tol == 1e-8
    assert cfg.mu_w_ratio == 0.2
    assert cfg.mu_s_grid[0] == 0.05 and cfg.mu_s_grid[-1] == 1.0 and len(cfg.mu_s_grid) == 20
    assert cfg.loss_grid_db == tuple(float(x) for x in range(0, 61, 5))


def test_visibility_sets_q(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("schema_version: 1\nvisibility: 0.0019\n")
    assert load_config(path).q == pytest.approx(0.992407, abs=5e-6)


def test_explicit_q_wins():
    cfg = config_from_mapping({"visibility": 0.0019, "q": [1.0, 0.95]})
    assert cfg.q_values == (1.0, 0.95)


@pytest.mark.parametrize("data", [
    {"q": 1.5}, {"M": 0}, {"p_d": -1e-3}, {"f": 0.9}, {"mu_s_grid": []},
    {"loss_grid_db": [-5]}, {"visibility": 0.0}, {"l_c": -1}, {"mu_w_ratio": 1.2},
    {"solver_tol": 1e-2},
])
def test_range_errors(data):
    with pytest.raises(ConfigRangeError):
        config_from_mapping(data)


@pytest.mark.parametrize("data", [
    {"schema_version": 2}, {"unknown": 1}, {"M": 9.5}, {"q": "high"}, {"mu_s_grid": 0.5}, [1, 2],
])
def test_schema_errors(data):
    with pytest.raises(ConfigSchemaError):
        config_from_mapping(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigNotFoundError):
        load_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("q: [1, 2\n")
    with pytest.raises(ConfigSchemaError):
        load_config(bad)
