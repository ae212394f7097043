import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from fmea_panel.cli import main
from conftest import FIXTURES_DIR, make_config_dict, write_session_inputs


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **overrides) -> Path:
    inputs = tmp_path / "inputs"
    write_session_inputs(inputs)
    data = make_config_dict(inputs, **overrides)
    data["data_dir"] = str(tmp_path / "data")
    path = inputs / "session.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestRun:
    def test_full_run_writes_export(self, runner, tmp_path):
        config = write_config(tmp_path)
        export = tmp_path / "out" / "fmea.csv"
        result = runner.invoke(main, ["run", "--config", str(config), "--export", str(export)])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert payload["finalized"] is True
        assert [r["round"] for r in payload["rounds"]] == [1, 2, 3, 4]
        assert export.is_file()
        assert export.read_bytes().startswith(b"asset_class,component,")

    def test_missing_config_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["run", "--config", str(tmp_path / "absent.yaml")])
        assert result.exit_code == 2

    def test_invalid_config_exits_2(self, runner, tmp_path):
        config = write_config(tmp_path, thresholds={"theta_q": 2.0})
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 2
        assert "thresholds.theta_q" in result.output

    def test_until_round_stops_early(self, runner, tmp_path):
        config = write_config(tmp_path)
        result = runner.invoke(main, ["run", "--config", str(config), "--until-round", "2"])
        assert result.exit_code == 0
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert payload["finalized"] is False
        assert [r["round"] for r in payload["rounds"]] == [1, 2]

    def test_backend_unavailable_exits_3(self, runner, tmp_path, monkeypatch):
        monkeypatch.setattr("fmea_panel.gateway.time.sleep", lambda s: None)
        config = write_config(
            tmp_path,
            provider={"kind": "http", "base_url": "http://127.0.0.1:9", "model_name": "m"},
        )
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 3

    def test_replay_determinism_across_data_dirs(self, runner, tmp_path):
        config = write_config(tmp_path)

        def run_into(name):
            data_dir = tmp_path / name
            result = runner.invoke(main, ["run", "--config", str(config), "--data-dir", str(data_dir)])
            assert result.exit_code == 0, result.output
            payload = json.loads(result.output.strip().splitlines()[-1])
            session_dir = Path(payload["session_dir"])
            return (
                (session_dir / "events.jsonl").read_bytes(),
                (session_dir / "fmea.csv").read_bytes(),
            )

        events_a, csv_a = run_into("data-a")
        events_b, csv_b = run_into("data-b")
        assert events_a == events_b
        assert csv_a == csv_b


class TestExport:
    def test_export_existing_session(self, runner, tmp_path):
        config = write_config(tmp_path)
        run_result = runner.invoke(main, ["run", "--config", str(config), "--until-round", "1"])
        assert run_result.exit_code == 0
        payload = json.loads(run_result.output.strip().splitlines()[-1])
        sid = payload["session_id"]
        out = tmp_path / "draft.csv"
        result = runner.invoke(
            main,
            [
                "export",
                "--session",
                sid,
                "--data-dir",
                str(tmp_path / "data"),
                "--format",
                "csv",
                "--out",
                str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        # Unfinalized sessions export their current draft rows.
        assert len(out.read_bytes().splitlines()) > 1

    def test_export_unknown_session_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["export", "--session", "s-ghost", "--data-dir", str(tmp_path)]
        )
        assert result.exit_code == 2


class TestServe:
    def test_invalid_config_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["serve", "--config", str(tmp_path / "missing.yaml")])
        assert result.exit_code == 2


def test_fixture_config_runs_end_to_end(runner, tmp_path):
    result = runner.invoke(
        main,
        [
            "run",
            "--config",
            str(FIXTURES_DIR / "config.yaml"),
            "--data-dir",
            str(tmp_path / "data"),
        ],
    )
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output.strip().splitlines()[-1])
    assert payload["finalized"] is True
