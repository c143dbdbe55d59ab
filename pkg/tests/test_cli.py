import json

from mime_rl.cli import main


def write_config(path, extra=""):
    path.write_text(
        "env:\n  name: plane\nmethod:\n  kind: mime\nbudget: 1000\npolicy:\n  num_envs: 2\n  horizon: 100\n" + extra
    )
    return path


def test_run_and_replay(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["run", str(cfg), "--seeds", "3,4", "--out", str(tmp_path / "out"), "--serial"]) == 0
    run_dir = tmp_path / "out" / "plane-mime"
    metrics = json.loads((run_dir / "metrics.json").read_text())
    assert [r["seed"] for r in metrics["runs"]] == [3, 4]
    assert "seed 3" in capsys.readouterr().out
    assert main(["replay", str(run_dir)]) == 0
    assert "match" in capsys.readouterr().out


def test_budget_flag(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["run", str(cfg), "--seeds", "0", "--budget", "400", "--out", str(tmp_path), "--serial"]) == 0
    assert json.loads((tmp_path / "plane-mime" / "metrics.json").read_text())["runs"][0]["steps"] == 400


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", "seeds: [1, 1]\n")
    assert main(["run", str(cfg)]) == 2
    assert "seeds" in capsys.readouterr().err


def test_replay_of_missing_dir(tmp_path):
    assert main(["replay", str(tmp_path / "nope")]) == 2


def test_compare_failed_check_exits_nonzero(tmp_path, capsys):
    # 1000 steps is far too few for anyone to find the goal, so the ordering checks fail
    cfg = write_config(tmp_path / "c.yaml")
    code = main(["compare", str(cfg), "--methods", "none,mime", "--seeds", "0", "--out", str(tmp_path), "--serial"])
    out = capsys.readouterr().out
    assert code == 1 and "FAIL mime median below none" in out
    assert (tmp_path / "compare-plane" / "comparison.md").is_file()


def test_compare_unknown_method(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["compare", str(cfg), "--methods", "mime,vime", "--serial", "--out", str(tmp_path)]) == 2
