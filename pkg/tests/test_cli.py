import json

import pandas as pd
import pytest

from symfin.__main__ import cli_entrypoint
from symfin.config import Config
from symfin.runner import EXIT_CONFIG, EXIT_OK, SymRunner


def _run(cli_argv, tmp_path, *args: str) -> tuple[int, dict]:
    cli_argv(f"--save_dir={tmp_path}", *args)
    runner = SymRunner(Config())
    code = runner.run()
    manifest = json.loads((runner.save_dir / "run-manifest.json").read_text())
    return code, manifest


def test_verify_heat_catalog(cli_argv, tmp_path):
    code, manifest = _run(cli_argv, tmp_path, "--command=verify", "--pde.catalog_id=heat2d")
    assert code == EXIT_OK
    assert manifest["exit_code"] == EXIT_OK
    assert "verify.json" in manifest["artifacts"]


def test_verify_records_repairs(cli_argv, tmp_path):
    code, manifest = _run(cli_argv, tmp_path, "--command=verify", "--pde.catalog_id=bs2d_canonical")
    assert code == EXIT_OK
    assert any(r.startswith("X2:") for r in manifest["repairs"])


def test_classify_heat1d(cli_argv, tmp_path):
    code, _ = _run(cli_argv, tmp_path, "--command=classify", "--pde.catalog_id=heat1d")
    assert code == EXIT_OK
    report = json.loads((tmp_path / "run_1" / "classify.json").read_text())
    assert report["label"] == report["expected"]


def test_reduce_special_model(cli_argv, tmp_path):
    code, _ = _run(
        cli_argv, tmp_path, "--command=reduce", "--pde.catalog_id=bs2d_special_nonauto"
    )
    assert code == EXIT_OK


def test_ermakov(cli_argv, tmp_path):
    code, manifest = _run(cli_argv, tmp_path, "--command=ermakov", "--ermakov.t_end=10")
    assert code == EXIT_OK
    assert manifest["artifacts"] == ["ermakov.json"]


def test_determining_on_a_mode(cli_argv, tmp_path):
    code, _ = _run(cli_argv, tmp_path, "--command=determining", "--determining.mode=1")
    assert code == EXIT_OK
    frame = pd.read_csv(tmp_path / "run_1" / "determining.csv")
    assert len(frame) == 201


def test_unknown_model_is_a_configuration_error(cli_argv, tmp_path):
    code, manifest = _run(cli_argv, tmp_path, "--command=verify", "--pde.catalog_id=nope")
    assert code == EXIT_CONFIG
    assert manifest["exit_code"] == EXIT_CONFIG


def test_runs_get_numbered_directories(cli_argv, tmp_path):
    _run(cli_argv, tmp_path, "--command=verify", "--pde.catalog_id=heat1d")
    _run(cli_argv, tmp_path, "--command=verify", "--pde.catalog_id=heat1d")
    assert (tmp_path / "run_1").is_dir()
    assert (tmp_path / "run_2").is_dir()


def test_entrypoint_short_flags(cli_argv, tmp_path):
    cli_argv("verify", "--model", "heat1d", "--out", str(tmp_path))
    with pytest.raises(SystemExit) as info:
        cli_entrypoint()
    assert info.value.code == EXIT_OK
    manifest = json.loads((tmp_path / "run_1" / "run-manifest.json").read_text())
    assert manifest["config"]["pde"]["catalog_id"] == "heat1d"


def test_entrypoint_rejects_even_node_counts(cli_argv, tmp_path):
    cli_argv("solve", "--grid", "40x41x10", "--out", str(tmp_path))
    with pytest.raises(SystemExit) as info:
        cli_entrypoint()
    assert info.value.code == EXIT_CONFIG


def test_entrypoint_reads_a_config_file(cli_argv, tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(f"command: verify\nsave_dir: {tmp_path / 'out'}\npde:\n  catalog_id: heat1d\n")
    cli_argv("verify", "--config", str(path))
    with pytest.raises(SystemExit) as info:
        cli_entrypoint()
    assert info.value.code == EXIT_OK
    assert (tmp_path / "out" / "run_1" / "verify.json").is_file()
