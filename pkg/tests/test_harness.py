import json

import numpy as np
import pytest

from mixconc.harness import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    beta_profile,
    calibrate_bound,
    concentration_setup,
    derive_seed,
    emit_results,
    erm_summary,
    gamma_profile,
    read_results_json,
    render,
    run_concentration_experiment,
    run_erm_experiment,
    simulate,
    sup_deviation,
)
from mixconc.bounds import theorem_bound


def conc_config(**kw):
    doc = {"kind": "concentration", "replications": 20, "T_grid": [200, 400], "seed": 7, **kw}
    return ExperimentConfig.from_dict(doc)


def strip_wall(text):
    lines = text.splitlines()
    idx = lines[0].split(",").index("wall_ms")
    return [",".join(f for i, f in enumerate(l.split(",")) if i != idx) for l in lines]


def test_config_validation():
    with pytest.raises(ConfigError, match="kind"):
        ExperimentConfig.from_dict({"kind": "nope"})
    with pytest.raises(ConfigError, match="replications"):
        ExperimentConfig.from_dict({"kind": "concentration", "replications": 0})
    with pytest.raises(ConfigError, match="sorted"):
        ExperimentConfig.from_dict({"kind": "concentration", "T_grid": [10, 5]})
    with pytest.raises(ConfigError, match="nonempty"):
        ExperimentConfig.from_dict({"kind": "concentration", "T_grid": []})
    with pytest.raises(ConfigError, match="unknown field"):
        ExperimentConfig.from_dict({"kind": "concentration", "colour": 1})
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"kind": "concentration", "seed": -1})
    with pytest.raises(ConfigError, match="line 3, column"):
        ExperimentConfig.from_json('{\n  "kind": "concentration",\n  "seed": ,\n}')
    cfg = conc_config()
    assert cfg.params["alpha"] == 2.0 and cfg.T_grid == (200, 400)
    assert cfg.with_overrides(seed=3).seed == 3


def test_derive_seed():
    a = derive_seed(1, "concentration", 0, 0)
    assert a == derive_seed(1, "concentration", 0, 0)
    others = {derive_seed(1, "concentration", 0, 1), derive_seed(1, "concentration", 1, 0),
              derive_seed(1, "erm-oracle", 0, 0), derive_seed(2, "concentration", 0, 0)}
    assert a not in others and len(others) == 4
    assert 0 <= a < 2**64


def test_result_record_invariant():
    ResultRecord("concentration", 10, 2, 0, 1, 0.5, 1.0, False, 0.0)
    ResultRecord("concentration", 10, 2, 0, 1, 1.0, 1.0, False, 0.0)
    with pytest.raises(ValueError):
        ResultRecord("concentration", 10, 2, 0, 1, 2.0, 1.0, False, 0.0)


def test_emit_header_only_and_round_trip(tmp_path, capsys):
    assert render([], "csv") == ",".join(CSV_COLUMNS) + "\n"
    assert render([], "json").strip() == "[]"
    recs = [
        ResultRecord("concentration", 10, 2, 0, 2**64 - 1, 0.1 + 0.2, 1 / 3, False, 1.5),
        ResultRecord("erm-oracle", 20, 3, 1, 5, 7.0, float("inf"), False, 0.0),
        ResultRecord("erm-oracle", 20, 3, 2, 6, 1e-300, 0.0, True, 2.25),
    ]
    path = tmp_path / "sub" / "r.json"
    emit_results(recs, "json", str(path))
    assert read_results_json(str(path)) == recs
    emit_results(recs, "csv")
    out = capsys.readouterr().out
    assert out.splitlines()[1].split(",")[5] == "0.30000000000000004"
    assert out.splitlines()[2].split(",")[6] == "Infinity"
    with pytest.raises(OSError, match="r.csv"):
        emit_results(recs, "csv", str(tmp_path / "sub" / "r.json" / "r.csv"))


def test_concentration_rows_and_bookkeeping(tmp_path):
    cfg = conc_config()
    recs = run_concentration_experiment(cfg)
    assert len(recs) == 2 * 20
    assert [(r.T, r.replication) for r in recs] == sorted((r.T, r.replication) for r in recs)
    path = tmp_path / "c.csv"
    emit_results(recs, "csv", str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 41
    for line in lines[1:]:
        f = dict(zip(CSV_COLUMNS, line.split(",")))
        assert (f["exceeded"] == "true") == (float(f["observed"]) > float(f["threshold"]))


def test_concentration_reproducible_serial_parallel():
    cfg = conc_config()
    a = render(run_concentration_experiment(cfg), "csv")
    b = render(run_concentration_experiment(cfg), "csv")
    c = render(run_concentration_experiment(cfg, threads=3), "csv")
    assert strip_wall(a) == strip_wall(b) == strip_wall(c)
    d = render(run_concentration_experiment(cfg.with_overrides(seed=8)), "csv")
    assert strip_wall(a) != strip_wall(d)


def test_degenerate_loss_never_exceeds():
    # constant values make g independent of the state
    cfg = conc_config(values=[0.25, 0.25])
    recs = run_concentration_experiment(cfg)
    assert all(r.observed == 0.0 and not r.exceeded for r in recs)


def test_sup_deviation_matches_direct_average():
    cfg = conc_config(chain={"P": [[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]]}, theta_points=11)
    setup = concentration_setup(cfg.params)
    traj = np.random.default_rng(0).integers(0, 3, 500)
    G = (setup.values[:, None] - setup.grid[None, :]) ** 2
    direct = np.max(np.abs(G[traj].mean(axis=0) - setup.chain.pi @ G))
    assert sup_deviation(setup, traj) == pytest.approx(direct, abs=1e-12)


def test_calibration_hits_target():
    cfg = conc_config()
    setup = concentration_setup(cfg.params)
    for T, n in ((2000, 45), (400, 20)):
        inp = calibrate_bound(setup, cfg.params, T, n)
        assert inp.eps1 >= 2
        res = theorem_bound(inp).compact
        assert res.raw_prob == pytest.approx(0.05, rel=1e-9) or inp.eps1 == 2.0
    iid = conc_config(chain={"P": [[0.5, 0.5], [0.5, 0.5]]}, beta="zero", n="T")
    s2 = concentration_setup(iid.params)
    inp = calibrate_bound(s2, iid.params, 2000, 2000)
    assert inp.eps2 == 0.0
    assert theorem_bound(inp).compact.raw_prob == pytest.approx(0.05, rel=1e-9)


def test_bad_concentration_params():
    with pytest.raises(ConfigError, match="values"):
        run_concentration_experiment(conc_config(values=[1, 2, 3]))
    with pytest.raises(ConfigError, match="zeta"):
        run_concentration_experiment(conc_config(zeta=3.0))
    with pytest.raises(ConfigError, match="n:"):
        run_concentration_experiment(conc_config(n=0))
    with pytest.raises(ConfigError, match="chain"):
        run_concentration_experiment(conc_config(chain={"P": [[0.5, 0.4], [0.5, 0.5]]}))


def erm_config(**kw):
    doc = {"kind": "erm-oracle", "replications": 2, "T_grid": [64, 128], "seed": 3,
           "mc_draws": 2000, "grid_points": 3, "train": {"restarts": 3, "steps": 80}, **kw}
    return ExperimentConfig.from_dict(doc)


def test_erm_experiment_small():
    cfg = erm_config()
    recs = run_erm_experiment(cfg)
    assert len(recs) == 4
    assert all(r.observed >= 0 and r.threshold > 0 for r in recs)
    assert all(r.extra["basic_passed"] for r in recs)
    par = run_erm_experiment(cfg, threads=2)
    assert strip_wall(render(recs, "csv")) == strip_wall(render(par, "csv"))
    summ = erm_summary(recs)
    assert summ["T"] == [64, 128] and len(summ["median"]) == 2
    with pytest.raises(ConfigError):
        run_erm_experiment(erm_config(train={"mode": "bogus"}))
    with pytest.raises(ConfigError, match="expected"):
        run_erm_experiment(conc_config())


def test_beta_profile_rows():
    rows = beta_profile({"P": [[0.7, 0.3], [0.3, 0.7]], "pi": None, "lags": [0, 1, 5]})
    assert [r["l"] for r in rows] == [0, 1, 5]
    assert rows[2]["beta"] == pytest.approx(0.5 * 0.4**5, rel=1e-12)
    assert render(rows, "csv").splitlines()[0] == "l,beta"
    with pytest.raises(ConfigError):
        beta_profile({"P": [[0.7, 0.3], [0.3, 0.7]], "lags": [-1]})


def test_gamma_profile_rows():
    rows = gamma_profile({"coordinates": [[0.0], [1.0], [2.0]], "alphas": [2.0], "metric": "euclidean",
                          "grid": None})
    assert rows[0]["points"] == 3
    assert rows[0]["gamma_exact"] <= rows[0]["gamma_greedy"] + 1e-12
    big = gamma_profile({"coordinates": None, "grid": {"low": -1, "high": 1, "points": 41},
                         "alphas": [1.0], "metric": "cityblock"})
    assert np.isnan(big[0]["gamma_exact"]) and big[0]["gamma_greedy"] > 0


def test_simulate_rows():
    rows = simulate({"P": [[0.9, 0.1], [0.1, 0.9]]}, 50, 1)
    assert len(rows) == 50 and rows[0]["t"] == 1
    assert simulate({"P": [[0.9, 0.1], [0.1, 0.9]]}, 50, 1) == rows
    ar = simulate({"phi": 0.5, "d": 2}, 10, 1)
    assert set(ar[0]) == {"t", "x0", "x1"}
    with pytest.raises(ConfigError):
        simulate({"phi": 1.5}, 10, 1)


def test_json_output_is_valid_json():
    recs = run_concentration_experiment(conc_config(replications=2, T_grid=[100]))
    docs = json.loads(render(recs, "json"))
    assert [list(d) for d in docs] == [list(CSV_COLUMNS)] * 2
