import json

import pytest

from competing_decay.cli import (
    FIGURES,
    RunConfig,
    config_from_dict,
    load_config,
    main,
    parse_seeds,
    read_table,
    reproduce,
    run_sweep,
)
from competing_decay.errors import ConfigError

VALIDATE = """
task = "validate"
[grid]
n_atoms = [2, 4, 9]
omega_ratios = {start = 0.3, stop = 1.2, num = 3}
[model]
gamma_c = 5.0
"""


def _write(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return path


def test_validate_sweep_and_cap_rows(tmp_path):
    cfg = load_config(_write(tmp_path, VALIDATE))
    cfg.out = str(tmp_path / "out")
    config, rows = read_table(run_sweep(cfg))
    assert config["task"] == "validate" and config["model"]["gamma_c"] == 5.0
    assert len(rows) == 9
    ok = [r for r in rows if r["status"] == "ok"]
    assert len(ok) == 6 and all(float(r["max_delta"]) < 1e-7 for r in ok)
    assert all(r["status"].startswith("cap") for r in rows if r["n_atoms"] == "9")


def test_output_is_deterministic(tmp_path):
    texts = []
    for k in range(2):
        cfg = config_from_dict({"task": "steady", "out": str(tmp_path / f"o{k}"),
                                "grid": {"n_atoms": [5, 8], "omega_ratios": [0.4, 0.9]}})
        texts.append(run_sweep(cfg).read_text())
    assert texts[0].replace("o0", "o1") == texts[1]


def test_empty_grid_is_rejected_before_work(tmp_path, capsys):
    path = _write(tmp_path, 'task = "steady"\n[grid]\nn_atoms = []\n')
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
    assert "empty parameter grid" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"grid": {"n_atom": [4]}})


def test_seed_parsing():
    assert parse_seeds("3..6") == [3, 4, 5, 6]
    assert parse_seeds("1,5") == [1, 5]
    assert parse_seeds("7") == [7]
    with pytest.raises(ConfigError):
        parse_seeds("6..3")


def test_point_failures_are_isolated(tmp_path, monkeypatch):
    from competing_decay import cli

    def flaky(cfg, p):
        if p.omega_ratio > 1:
            raise RuntimeError("solver blew up")
        return {"value": 1.0}

    monkeypatch.setitem(cli._EVALUATORS, "gap", flaky)
    cfg = config_from_dict({"task": "gap", "out": str(tmp_path),
                            "grid": {"n_atoms": [4], "omega_ratios": [0.5, 2.0, 0.7]}})
    _, rows = read_table(run_sweep(cfg))
    assert [r["status"] for r in rows] == ["ok", "error: RuntimeError: solver blew up", "ok"]


def test_decompose_without_drive_reports_blank_correlations():
    from competing_decay import ModelParams
    from competing_decay.cli import decompose_point

    row = decompose_point(ModelParams.from_ratio(4, 10.0, 0.0))
    assert row["g2_plus"] is None or row["g2_plus"] >= 0


def test_trajectory_task_writes_jsonl(tmp_path):
    path = _write(tmp_path, """
task = "trajectories"
[grid]
n_atoms = 4
omega_ratios = [0.8]
[trajectories]
t_final = 1.0
""")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "t"), "--seeds", "0..1"]) == 0
    _, rows = read_table(tmp_path / "t" / "trajectories.csv")
    assert [r["seed"] for r in rows] == ["0", "1"]
    head = json.loads((tmp_path / "t" / rows[0]["file"]).read_text().splitlines()[0])
    assert head["config"]["trajectories"]["seeds"] == [0, 1]


def test_reproduce_unknown_id_lists_valid(tmp_path, capsys):
    assert main(["reproduce", "fig8", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert all(k in err for k in FIGURES)


@pytest.mark.parametrize("fig", ["fig1b", "fig7"])
def test_fast_figures(tmp_path, fig):
    out = reproduce(fig, tmp_path / fig)
    assert (out / "README.md").exists()
    config, rows = read_table(next(out.glob("*.csv")))
    assert config["figure"] == fig and rows


def test_fig1b_has_stability_labels(tmp_path):
    _, rows = read_table(reproduce("fig1b", tmp_path) / "branches.csv")
    labels = {r["stability"] for r in rows}
    assert {"stable", "unstable"} <= labels


def test_default_config_is_valid():
    assert RunConfig().validate().task == "steady"
