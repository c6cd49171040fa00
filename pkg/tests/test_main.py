from unittest.mock import patch

import pytest

import main
from src.conf.config import settings
from src.repository.results_repo import parse_table
from src.services.errors import ConvergenceError

FAST_SCENARIO = "kind = moments\nm = 1\nN_c = 0.5\n"


def test_list_presets(capsys):
    assert main.main(["--list-presets"]) == 0
    out = capsys.readouterr().out
    assert "fig1a" in out
    assert "appB" in out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main.main(["--version"])
    assert exc.value.code == 0
    assert "fock-metrology" in capsys.readouterr().out


def test_no_command():
    assert main.main([]) == 2


def test_run_config_to_file(tmp_path):
    config = tmp_path / "moments.txt"
    config.write_text(FAST_SCENARIO, encoding="utf-8")
    out = tmp_path / "out.csv"
    assert main.main(["run", "--config", str(config), "--out", str(out)]) == 0
    table = parse_table(out.read_text(encoding="utf-8"))
    assert table.column("m") == [1]
    assert table.column("mean")[0] == pytest.approx(1.5, abs=1e-8)


def test_run_config_to_stdout(tmp_path, capsys):
    config = tmp_path / "moments.txt"
    config.write_text(FAST_SCENARIO, encoding="utf-8")
    assert main.main(["run", "--config", str(config)]) == 0
    assert capsys.readouterr().out.startswith("# table: custom")


def test_seed_override_reaches_scenario(scenario_file):
    with patch("main.run") as run:
        run.return_value = parse_table("# table: t\nx\n1\n")
        with patch("main.repo_write_table"):
            assert main.main(["run", "--config", str(scenario_file), "--seed", "9", "--trials", "50"]) == 0
    scenario = run.call_args.args[0]
    assert scenario.seed == 9
    assert scenario.trials == 50
    assert scenario.m == 3


def test_unknown_preset_exit_code():
    assert main.main(["run", "--preset", "fig9"]) == 2


def test_invalid_config_exit_code(tmp_path):
    config = tmp_path / "bad.txt"
    config.write_text("kind = mle-sim\nm = -1\nN_c = 1.0\n", encoding="utf-8")
    assert main.main(["run", "--config", str(config)]) == 2


def test_missing_config_exit_code(tmp_path):
    assert main.main(["run", "--config", str(tmp_path / "absent.txt")]) == 2


def test_bad_threads_exit_code(scenario_file):
    assert main.main(["run", "--config", str(scenario_file), "--threads", "0"]) == 2


def test_threads_update_settings(scenario_file, monkeypatch):
    monkeypatch.setattr(settings, "threads", 1)
    with patch("main.run") as run, patch("main.repo_write_table"):
        run.return_value = parse_table("# table: t\nx\n1\n")
        assert main.main(["run", "--config", str(scenario_file), "--threads", "3"]) == 0
    assert settings.threads == 3


def test_convergence_failure_exit_code(scenario_file):
    with patch("main.run", side_effect=ConvergenceError("likelihood vanishes on the whole prior range")):
        assert main.main(["run", "--config", str(scenario_file)]) == 3


def test_preset_run_uses_overrides():
    with patch("main.run_preset") as run_preset, patch("main.repo_write_table") as write:
        run_preset.return_value = parse_table("# table: fig1a\nM\n50\n")
        assert main.main(["run", "--preset", "fig1a", "--seed", "4", "--trials", "10", "--out", "x.csv"]) == 0
    run_preset.assert_called_once_with("fig1a", seed=4, trials=10)
    assert write.call_args.args[1] == "x.csv"
