import json

import pytest

from mixconc.cli import main
from mixconc.harness import CSV_COLUMNS


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


def test_beta_command(tmp_path, capsys):
    cfg = write(tmp_path, "chain.json", {"P": [[0.7, 0.3], [0.3, 0.7]], "lags": [0, 1, 2]})
    assert main(["beta", "--config", cfg]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "l,beta"
    assert float(lines[3].split(",")[1]) == pytest.approx(0.5 * 0.16, rel=1e-12)
    # global flags are accepted before the subcommand too
    out = tmp_path / "b.json"
    assert main(["--format", "json", "beta", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads(out.read_text())[0] == {"l": 0, "beta": pytest.approx(0.5)}


def test_bound_command(tmp_path, capsys):
    doc = {"alpha": 1, "C_Theta": 1, "C_Z": 1, "gamma2": 1, "gamma_alpha": 1, "T": 1000, "n": 50,
           "eps1": 4, "eps2": 1, "beta": {"kind": "polynomial", "zeta": 10}}
    cfg = write(tmp_path, "b.json", doc)
    assert main(["bound", "--config", cfg]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["compact"]["threshold"] == pytest.approx(1459.4994457143394, rel=1e-12)
    assert len(res["decomposed"]["terms"]) == 3
    assert main(["bound", "--config", cfg, "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("form,threshold")


def test_concentration_and_erm_commands(tmp_path):
    cfg = write(tmp_path, "c.json", {"replications": 3, "T_grid": [100, 200]})
    out = tmp_path / "c.csv"
    assert main(["concentration", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 7
    assert all(l.split(",")[0] == "concentration" for l in lines[1:])
    erm = write(tmp_path, "e.json", {"replications": 1, "T_grid": [64], "mc_draws": 500,
                                     "grid_points": 3, "train": {"restarts": 2, "steps": 30}})
    out2 = tmp_path / "e.json.out"
    assert main(["erm", "--config", erm, "--out", str(out2), "--format", "json"]) == 0
    assert json.loads(out2.read_text())[0]["experiment"] == "erm-oracle"


def test_simulate_and_gamma_commands(tmp_path, capsys):
    cfg = write(tmp_path, "s.json", {"T": 5, "process": {"P": [[0.5, 0.5], [0.5, 0.5]]}})
    assert main(["simulate", "--config", cfg, "--seed", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,x0" and len(lines) == 6
    g = write(tmp_path, "g.json", {"coordinates": [[0], [1], [3]], "alphas": [2]})
    assert main(["gamma", "--config", g]) == 0
    assert capsys.readouterr().out.startswith("alpha,points,gamma_greedy")


@pytest.mark.parametrize(
    "argv_doc",
    [
        ("concentration", {"replications": 0}),
        ("concentration", {"kind": "erm-oracle"}),
        ("concentration", {"colour": "red"}),
        ("beta", {"P": [[0.5, 0.4], [0.5, 0.5]]}),
        ("bound", {"alpha": 1}),
        ("bound", {"alpha": 1, "C_Theta": 1, "C_Z": 1, "T": 10, "n": 11}),
        ("erm", {"train": {"restarts": 0}}),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, argv_doc):
    cmd, doc = argv_doc
    cfg = write(tmp_path, "bad.json", doc)
    assert main([cmd, "--config", cfg]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_malformed_json_reports_location(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", '{\n "T_grid": [1,\n}')
    assert main(["concentration", "--config", cfg]) == 2
    assert "line 3" in capsys.readouterr().err


def test_flag_validation_exit_2(capsys):
    assert main(["beta", "--threads", "0"]) == 2
    assert main(["beta", "--seed", str(2**64)]) == 2


def test_infeasible_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, "b.json", {"alpha": 1, "C_Theta": 1, "C_Z": 1, "T": 5, "n": 3})
    assert main(["bound", "--config", cfg]) == 3
    assert "infeasible" in capsys.readouterr().err
    c = write(tmp_path, "c.json", {"T_grid": [5], "n": 3})
    assert main(["concentration", "--config", c]) == 3


def test_io_errors_exit_4(tmp_path, capsys):
    assert main(["beta", "--config", str(tmp_path / "missing.json")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["beta", "--out", str(blocker / "out.csv")]) == 4
    cfg = write(tmp_path, "c.json", {"replications": 1, "T_grid": [50]})
    assert main(["concentration", "--config", cfg, "--out", str(blocker / "o.csv")]) == 4
    assert "out.csv" in capsys.readouterr().err


def test_usage_error_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
