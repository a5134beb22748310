import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from config import DatabaseConfig, ExperimentConfig
from hybridlinks.errors import ConfigError
from hybridlinks.params import SystemParams

EXAMPLE = Path(__file__).resolve().parent.parent / "config.example.json"


class TestExperimentConfig:
    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("HYBRIDLINKS_THREADS", raising=False)
        config = ExperimentConfig()
        assert config.system_params() == SystemParams()
        assert config.seed == 0 and not config.strict

    def test_example_file_matches_defaults(self, monkeypatch):
        monkeypatch.delenv("HYBRIDLINKS_THREADS", raising=False)
        assert ExperimentConfig.from_file(str(EXAMPLE)) == ExperimentConfig()

    @pytest.mark.parametrize("field,value", [
        ("beta", 0.7),
        ("n", 12),
        ("p", 1.5),
        ("samples", 100),
        ("method", "guess"),
        ("n_list", [256, 300]),
        ("seed", 2**64),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ValidationError):
            ExperimentConfig(**{field: value})

    def test_cross_field_checks(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(ell=8, w=8)
        with pytest.raises(ValidationError):
            ExperimentConfig(ell=8, c=9)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(colour="blue")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig.from_file(str(tmp_path / "missing.json"))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(str(path))
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(str(path))

    def test_partial_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"n": 8, "p": 0.3}))
        config = ExperimentConfig.from_file(str(path))
        assert (config.n, config.p, config.ell) == (8, 0.3, 16)

    def test_overrides(self):
        config = ExperimentConfig().with_overrides(seed=7, threads=None, strict=True)
        assert config.seed == 7 and config.strict
        assert config.threads == ExperimentConfig().threads
        with pytest.raises(ValidationError):
            ExperimentConfig().with_overrides(trials=0)

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("HYBRIDLINKS_THREADS", "3")
        assert ExperimentConfig().threads == 3


class TestDatabaseConfig:
    def test_default_path(self, monkeypatch):
        monkeypatch.delenv("HYBRIDLINKS_DB", raising=False)
        assert DatabaseConfig().db_path == "hybridlinks_reports.db"

    def test_path_from_environment(self, monkeypatch):
        monkeypatch.setenv("HYBRIDLINKS_DB", "/tmp/reports.db")
        assert DatabaseConfig().db_path == "/tmp/reports.db"
