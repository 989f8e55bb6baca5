import logging

import pytest

from config.errors import ConfigError
from config.settings import Settings, load_settings, log_level_from_env, setup_logging


def test_defaults_file_matches_dataclasses():
    assert load_settings() == Settings()


def test_dump_and_reload(tmp_path):
    settings = Settings().override(explore__threshold=0.8, bank__sigmas=(1.0, 2.0))
    path = str(tmp_path / 'config.yaml')
    settings.dump(path)
    assert load_settings(path) == settings


def test_partial_file_keeps_other_defaults(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text("scene:\n  table-extent: 0.3\n")
    settings = load_settings(str(path))
    assert settings.scene.table_extent == 0.3
    assert settings.camera == Settings().camera


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text("scene:\n  table-size: 0.3\n")
    with pytest.raises(ConfigError):
        load_settings(str(path))
    path.write_text("stage:\n  width: 3\n")
    with pytest.raises(ConfigError):
        load_settings(str(path))
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_settings(str(path))


def test_override():
    settings = Settings().override(explore__max_retries=3, train__lr=None, **{'pyramid.levels': 2})
    assert settings.explore.max_retries == 3
    assert settings.train.lr == Settings().train.lr
    assert settings.pyramid.levels == 2
    with pytest.raises(ConfigError):
        Settings().override(explore__retries=3)
    with pytest.raises(ConfigError):
        Settings().override(threshold=0.5)


@pytest.mark.parametrize("value, level", [
    ('0', logging.WARNING), ('1', logging.INFO), ('2', logging.DEBUG), ('debug', logging.DEBUG),
    ('ERROR', logging.ERROR),
])
def test_log_levels(value, level):
    assert log_level_from_env(value) == level


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv('TE_LOG', '2')
    assert setup_logging() == logging.DEBUG
    monkeypatch.setenv('TE_LOG', 'loud')
    with pytest.raises(ConfigError):
        setup_logging()
