import asyncio
import json

import pytest

from app import cli, crud
from app.db import session_scope
from app.services.solver import NumericalFailure

TINY = "grid.points = 8\ngrid.half_width = 4.0\nkernel.sigma_nodes = 8\ndt = 0.05\nt_end = 0.1\n"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(TINY, encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("BOLTZLAB_DATABASE_URL", f"sqlite+aiosqlite:///{tmp_path / 'ledger.db'}")
    monkeypatch.setenv("BOLTZLAB_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("BOLTZLAB_RECORD_RUNS", "false")


def test_missing_command_is_usage_error():
    assert cli.main([]) == cli.EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert cli.main(["--help"]) == cli.EXIT_OK
    assert "kernel-info" in capsys.readouterr().out


def test_kernel_info(capsys, config_file):
    assert cli.main(["kernel-info", "--config", str(config_file)]) == cli.EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["angular_mass"] == pytest.approx(1.0)


def test_unknown_suite(tmp_path, config_file, capsys):
    code = cli.main(["verify", "nope", "--config", str(config_file), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_USAGE
    assert "Unknown suite" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.conf"
    path.write_text("grid.points = 12\n", encoding="utf-8")
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_USAGE
    assert "line 1" in capsys.readouterr().err


def test_bad_thread_count(config_file):
    assert cli.main(["run", "--config", str(config_file), "--threads", "0"]) == cli.EXIT_USAGE


def test_run_writes_outputs(tmp_path, config_file):
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(config_file), "--out", str(out)]) == cli.EXIT_OK
    assert (out / "diagnostics.csv").exists()
    assert (out / "final.txt").exists()


def test_oracle(tmp_path, config_file, capsys):
    out = tmp_path / "oracle"
    assert cli.main(["oracle", "--config", str(config_file), "--out", str(out)]) == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("t,parameter")


def test_numerical_failure_writes_report(tmp_path, config_file, monkeypatch):
    def explode(ctx):
        raise NumericalFailure("non-finite values", {"t": 0.25, "dt": 0.05})

    monkeypatch.setattr(cli, "cmd_run", explode)
    out = tmp_path / "failed"
    code = cli.main(["run", "--config", str(config_file), "--out", str(out)])
    assert code == cli.EXIT_NUMERICAL
    payload = json.loads((out / "failure.json").read_text(encoding="utf-8"))
    assert payload["diagnostics"]["t"] == 0.25


def test_verify_is_recorded(tmp_path, config_file):
    out = tmp_path / "verify"
    code = cli.main(
        ["verify", "appendix", "--config", str(config_file), "--out", str(out), "--record", "--seed", "5"]
    )
    assert code == cli.EXIT_OK
    assert (out / "verify_appendix.json").exists()

    async def fetch():
        async with session_scope(f"sqlite+aiosqlite:///{tmp_path / 'ledger.db'}") as session:
            return await crud.list_runs(session, suite="appendix")

    runs = asyncio.run(fetch())
    assert len(runs) == 1
    assert runs[0].status == "pass"
    assert runs[0].command == "verify"
    assert {check.name for check in runs[0].checks} == {
        "young_equality_case",
        "weighted_young",
        "translation_weight",
    }
    assert "grid.points = 8" in runs[0].config_text
