import pytest

from ckrca.config import ConfigError, Settings, load_settings, settings_from_dict


def test_defaults():
    s = Settings()
    assert (s.window_minutes, s.k, s.L, s.top_n, s.max_depth, s.n_trees) == (15, 9, 3, 5, 25, 50)
    assert (s.alpha, s.max_cond, s.embedding.dim, s.min_fires, s.pre_window_minutes) == (0.05, 3, 256, 10, 60)


def test_nested_field_path_in_error():
    with pytest.raises(ConfigError, match=r"embedding\.dim"):
        settings_from_dict({"embedding": {"dim": 0}})


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="windw_minutes"):
        settings_from_dict({"windw_minutes": 5})


def test_external_needs_url():
    with pytest.raises(ConfigError, match="base_url"):
        settings_from_dict({"summary": {"provider": "external"}})


def test_yaml_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("alpha: 0.01\nL: 2\nembedding:\n  dim: 64\n")
    s = load_settings(p)
    assert s.alpha == 0.01 and s.L == 2 and s.embedding.as_provider_config() == {"kind": "hashing", "dim": 64}


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "missing.yaml")
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_settings(p)
    assert load_settings(None) == Settings()
