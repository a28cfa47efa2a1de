"""Unit tests for settings provider behavior and isolation."""

import pytest

from app.config import build_settings, clear_settings_cache, get_settings, load_settings, settings
from app.errors import ConfigInvalid


@pytest.fixture
def isolated_env(tmp_path, monkeypatch):
    """No TOML file and a throwaway database unless a test provides one."""
    monkeypatch.setenv("MEMORY_CONFIG_FILE", str(tmp_path / "absent.toml"))
    monkeypatch.setenv("DATABASE_PATH", str(tmp_path / "memory.sqlite3"))
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "logs" / "maintenance.log"))
    monkeypatch.setenv("APP_ENV", "testing")
    clear_settings_cache()
    yield tmp_path
    clear_settings_cache()


class TestSettingsProvider:
    """Validate cached settings provider semantics."""

    def test_get_settings_returns_cached_instance(self, isolated_env):
        assert get_settings() is get_settings()

    def test_clear_settings_cache_reloads_env_values(self, isolated_env, monkeypatch):
        first_path = str(isolated_env / "first.sqlite3")
        second_path = str(isolated_env / "second.sqlite3")
        monkeypatch.setenv("DATABASE_PATH", first_path)
        clear_settings_cache()
        assert get_settings().database_path == first_path

        monkeypatch.setenv("DATABASE_PATH", second_path)
        assert get_settings().database_path == first_path

        clear_settings_cache()
        assert get_settings().database_path == second_path

    def test_settings_proxy_is_immutable(self, isolated_env):
        with pytest.raises(AttributeError):
            settings.database_path = "./data/forbidden.sqlite3"

    def test_proxy_reads_through_cache(self, isolated_env):
        assert settings.app_env == "testing"


class TestSources:
    """TOML file, environment overrides and validation."""

    def test_defaults(self, isolated_env):
        current = build_settings()

        assert current.activation.d == 0.5
        assert current.activation.forget_threshold == 0.35
        assert current.memory.dup_threshold == 0.92
        assert current.weights.w_sim == pytest.approx(0.55)

    def test_toml_file(self, isolated_env, monkeypatch):
        config = isolated_env / "memory.toml"
        config.write_text(
            "[activation]\nd = 0.4\nforget_threshold = 0.3\n\n[memory]\ndup_threshold = 0.95\n"
        )
        monkeypatch.setenv("MEMORY_CONFIG_FILE", str(config))

        current = build_settings()

        assert current.activation.d == 0.4
        assert current.activation.forget_threshold == 0.3
        assert current.memory.dup_threshold == 0.95

    def test_environment_overrides_toml(self, isolated_env, monkeypatch):
        config = isolated_env / "memory.toml"
        config.write_text("[activation]\nd = 0.4\n")
        monkeypatch.setenv("MEMORY_CONFIG_FILE", str(config))
        monkeypatch.setenv("ACTIVATION__D", "0.6")

        assert build_settings().activation.d == 0.6

    def test_functional_relations_from_env(self, isolated_env, monkeypatch):
        monkeypatch.setenv("MEMORY__FUNCTIONAL_RELATIONS", '["lives_in", "employer"]')

        assert build_settings().memory.functional_relations == ("lives_in", "employer")

    def test_functional_relations_accept_comma_list(self, isolated_env):
        current = build_settings(memory={"functional_relations": "lives_in, employer"})

        assert current.memory.functional_relations == ("lives_in", "employer")

    def test_outdated_threshold_falls_back_to_forget_threshold(self, isolated_env):
        assert build_settings().outdated_threshold == 0.35
        assert build_settings(memory={"outdated_threshold": 0.5}).outdated_threshold == 0.5

    def test_threshold_below_offset_is_invalid(self, isolated_env):
        with pytest.raises(ConfigInvalid, match="activation"):
            build_settings(activation={"offset": 0.5, "forget_threshold": 0.4})

    def test_unknown_log_level(self, isolated_env):
        with pytest.raises(ConfigInvalid):
            build_settings(log_level="chatty")

    def test_load_settings_exits_on_invalid_config(self, isolated_env, monkeypatch):
        monkeypatch.setenv("ACTIVATION__LAMBDA", "-1")

        with pytest.raises(SystemExit):
            load_settings()
