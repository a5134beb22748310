import csv
import json

import pytest

from database import ReportStore
from hybridlinks.polar import PolarParams, entropy_profile
from main import EXIT_CONFIG, EXIT_DESK_SCALE, EXIT_VERIFICATION, main

SMALL = {"n": 8, "p": 0.5, "ell": 8, "w": 2, "k_s": 2, "c": 2, "trials": 5}


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("HYBRIDLINKS_DB", raising=False)
    monkeypatch.delenv("HYBRIDLINKS_THREADS", raising=False)
    return tmp_path


def write_config(path, **values):
    path.write_text(json.dumps(values))
    return str(path)


def run(*argv):
    main(list(argv))


def exit_code(*argv):
    with pytest.raises(SystemExit) as excinfo:
        main(list(argv))
    return excinfo.value.code


class TestProfileCommand:
    def test_uniform_source_needs_no_seed(self, workspace):
        config = write_config(workspace / "config.json", **SMALL)
        run("profile", "--config", config, "--out", "profile.json")
        data = json.loads((workspace / "profile.json").read_text())
        assert data["d_j"] == 0
        assert data["n_tilde"] == 8
        assert data["config"]["p"] == 0.5

    def test_matches_library(self, workspace):
        config = write_config(workspace / "config.json", n=8, p=0.11)
        run("profile", "--config", config)
        data = json.loads((workspace / "profile.json").read_text())
        expected = entropy_profile(PolarParams(8, 0.11, 0.25))
        assert data["entropies"] == list(expected.entropies)
        assert data["h_set"] == list(expected.high_set)
        assert data["profile_id"] == expected.profile_id

    def test_invalid_beta(self, workspace):
        config = write_config(workspace / "config.json", beta=0.7)
        assert exit_code("profile", "--config", config) == EXIT_CONFIG

    def test_missing_config(self):
        assert exit_code("profile", "--config", "missing.json") == EXIT_CONFIG


class TestPipelineCommand:
    def test_identity_scheme_round_trip(self, workspace):
        config = write_config(workspace / "config.json", scheme="identity", r=0, **{**SMALL, "c": 1})
        run("pipeline", "--config", config, "--frame", "run.nuh2")
        report = json.loads((workspace / "pipeline_report.json").read_text())
        assert report["command"] == "pipeline"
        assert report["result"]["success"] is True
        assert report["result"]["reliability"]["failures"] == 0
        assert (workspace / "run.nuh2").exists()

    def test_replay(self, workspace):
        config = write_config(workspace / "config.json", **SMALL)
        run("pipeline", "--config", config, "--seed", "3")
        run("pipeline", "--config", config, "--seed", "3", "--replay", "--out", "replay.json")
        report = json.loads((workspace / "replay.json").read_text())
        assert report["result"]["success"] is True
        assert report["config"]["replay"] is True

    def test_replay_with_other_key_is_reported(self, workspace):
        config = write_config(workspace / "config.json", **SMALL)
        run("pipeline", "--config", config, "--seed", "1")
        run("pipeline", "--config", config, "--seed", "2", "--replay", "--out", "replay.json")
        result = json.loads((workspace / "replay.json").read_text())["result"]
        assert result["success"] is False
        assert result["failure"] == "decryption"

    def test_replay_with_other_key_strict(self, workspace):
        config = write_config(workspace / "config.json", **SMALL)
        run("pipeline", "--config", config, "--seed", "1")
        assert exit_code("pipeline", "--config", config, "--seed", "2", "--replay", "--strict") == EXIT_VERIFICATION

    def test_replay_of_tampered_ciphertext(self, workspace):
        config = write_config(workspace / "config.json", **SMALL)
        run("pipeline", "--config", config)
        frame = workspace / "frame.nuh2"
        data = bytearray(frame.read_bytes())
        # First byte after the magic and the seven header fields: link 0 ciphertext
        data[32] ^= 0xFF
        frame.write_bytes(bytes(data))
        run("pipeline", "--config", config, "--replay", "--out", "replay.json")
        result = json.loads((workspace / "replay.json").read_text())["result"]
        assert result["failure"] == "decryption"
        assert exit_code("pipeline", "--config", config, "--replay", "--strict") == EXIT_VERIFICATION

    def test_truncated_frame(self, workspace):
        config = write_config(workspace / "config.json", **SMALL)
        run("pipeline", "--config", config)
        frame = workspace / "frame.nuh2"
        frame.write_bytes(frame.read_bytes()[:-3])
        assert exit_code("pipeline", "--config", config, "--replay") == EXIT_CONFIG

    def test_strict_failure(self, workspace):
        config = write_config(workspace / "config.json", **{**SMALL, "n": 16, "codebook_sampling": "iid"})
        assert exit_code("pipeline", "--config", config, "--strict") == EXIT_VERIFICATION


class TestLeakCommand:
    def test_no_observed_links(self, workspace):
        config = write_config(workspace / "config.json", n=2, ell=4, w=0, k_s=1, c=1)
        run("leak", "--config", config)
        report = json.loads((workspace / "leak_report.json").read_text())
        assert report["result"]["max_distance"] == 0.0

    def test_small_instance(self, workspace):
        config = write_config(workspace / "config.json", n=2, ell=4, w=1, k_s=1, c=1)
        run("leak", "--config", config, "--strict")
        result = json.loads((workspace / "leak_report.json").read_text())["result"]
        assert result["max_distance"] <= result["bound"]
        assert result["enumerated_bits"] == 4 * (2 + result["seed_len"])

    def test_refuses_default_scale(self):
        assert exit_code("leak") == EXIT_DESK_SCALE


class TestGameCommand:
    def test_all_links_encrypted(self, workspace):
        config = write_config(workspace / "config.json", n=16, ell=8, w=2, k_s=2, c=8, trials=2000)
        run("game", "--config", config)
        result = json.loads((workspace / "game_report.json").read_text())["result"]
        assert result["plaintext_links"] == 0
        assert abs(result["empirical_advantage"]) <= 3.5 * 0.5 / 2000 ** 0.5

    def test_reports_are_reproducible(self, workspace):
        config = write_config(workspace / "config.json", n=16, ell=8, w=2, k_s=2, c=2, trials=3000)
        run("game", "--config", config, "--seed", "5", "--out", "first.json")
        run("game", "--config", config, "--seed", "5", "--out", "second.json")
        assert (workspace / "first.json").read_bytes() == (workspace / "second.json").read_bytes()


class TestRateCommand:
    def test_grid_without_expansion(self, workspace):
        config = write_config(workspace / "config.json", rate_r=[0])
        run("rate", "--config", config, "--out", "rates.csv")
        with (workspace / "rates.csv").open() as f:
            rows = list(csv.DictReader(f))
        report = json.loads((workspace / "rates.json").read_text())
        assert report["result"]["identity_holds"] is True
        assert len(rows) == report["result"]["grid_points"] > 0
        assert all(row["r"] == "0" for row in rows)

    def test_report_store(self, workspace):
        db = str(workspace / "reports.db")
        run("rate", "--db", db)
        run("rate", "--db", db)
        records = ReportStore(db).get_all_records()
        assert len(records) == 1
        assert records[0].status == "reproduced" and records[0].runs == 2


class TestSeedCommand:
    def test_small_study(self, workspace):
        config = write_config(workspace / "config.json", n_list=[8, 16], p=0.11)
        run("seed", "--config", config)
        with (workspace / "seed_study.csv").open() as f:
            rows = list(csv.DictReader(f))
        assert [int(row["n"]) for row in rows] == [8, 16]
        assert all(row["method"] == "exact" for row in rows)
