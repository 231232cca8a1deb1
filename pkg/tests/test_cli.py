import csv
import json

import pytest

from dasyflexa.cli import main
from dasyflexa.config import ConfigError, parse_config, validate_config


def lasso_cfg(**engine):
    e = {"seed": 0, "gamma": 0.9, "max_iterations": 3000, "stop_tolerance": 1e-12,
         "surrogate": {"kind": "linearized", "tau": "L"},
         "schedule": {"kind": "shuffled-rounds", "seed": 1}}
    e.update(engine)
    return {"schema_version": 1,
            "problem": {"type": "lasso", "m": 40, "n": 60, "N_agents": 4, "density": 0.2,
                        "lambda": 0.1, "seed": 0},
            "engine": e,
            "reference": {"compute_Vstar": True, "tol": 1e-12}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_writes_trace_and_summary(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, lasso_cfg()), "--out", str(out)]) == 0
    with open(out / "trace.csv") as fh:
        header = fh.readline().strip()
    assert header == "k,agent,V,MV,lyapunov,prox_residual,messages,update_norm,rel_error"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "converged"
    assert summary["relative_error_final"] <= 1e-6
    validate_config(summary["config"])
    for key in ("L", "rho", "max_safe_stepsize", "C1", "C2", "lambda_"):
        assert key in summary["theory"]


def test_header_without_reference(tmp_path):
    cfg = lasso_cfg(max_iterations=10)
    del cfg["reference"]
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(out)]) == 2
    with open(out / "trace.csv") as fh:
        assert fh.readline().strip() == \
            "k,agent,V,MV,lyapunov,prox_residual,messages,update_norm"


def test_seventeen_significant_digits(tmp_path):
    cfg = lasso_cfg(max_iterations=5)
    out = tmp_path / "out"
    main(["run", "--config", write(tmp_path, cfg), "--out", str(out)])
    with open(out / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[1]["agent"].isdigit()
    assert float(rows[1]["V"]) == float(repr(float(rows[1]["V"])))
    assert len(rows[1]["V"].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17


def test_missing_field_names_it(tmp_path, capsys):
    cfg = lasso_cfg()
    del cfg["problem"]["seed"]
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "problem" in err and "seed" in err


def test_invalid_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"schema_version": 1,\n  "problem": {,}\n}')
    assert main(["check", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_config_rules():
    with pytest.raises(ConfigError):
        validate_config(lasso_cfg(gamma_safe_fraction=0.5))
    cfg = lasso_cfg()
    cfg["engine"]["schedule"] = {"kind": "clock-phase"}
    with pytest.raises(ConfigError, match="seed"):
        validate_config(cfg)
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("{")


def test_determinism(tmp_path):
    cfg = lasso_cfg(max_iterations=300, delay={"kind": "uniform", "D": 3, "seed": 4})
    path = write(tmp_path, cfg)
    blobs = []
    for r in range(3):
        out = tmp_path / f"r{r}"
        main(["run", "--config", path, "--out", str(out)])
        blobs.append((out / "trace.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_check_prints_bound(tmp_path, capsys):
    cfg = lasso_cfg(gamma=0.5)
    assert main(["check", "--config", write(tmp_path, cfg)]) == 0
    lines = dict(l.split(" = ", 1) for l in capsys.readouterr().out.splitlines() if " = " in l)
    # with D = 0 and tau = L the bound is tau / L = 1
    assert float(lines["max_safe_stepsize"]) == pytest.approx(1.0)
    assert lines["stepsize_warning"] == "false"


def test_check_flags_unsafe_gamma(tmp_path, capsys):
    cfg = lasso_cfg(gamma=1.0, delay={"kind": "fixed", "D": 5})
    assert main(["check", "--config", write(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    assert "stepsize_warning = true" in out


def test_check_small_gamma_lambda_in_unit_interval(tmp_path, capsys):
    cfg = lasso_cfg(gamma=1e-4)
    assert main(["check", "--config", write(tmp_path, cfg)]) == 0
    lines = dict(l.split(" = ", 1) for l in capsys.readouterr().out.splitlines() if " = " in l)
    assert 0 < float(lines["one_minus_lambda"]) < 1


def test_sweep_over_delay(tmp_path):
    cfg = lasso_cfg(max_iterations=2000)
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", write(tmp_path, cfg), "--param", "D",
                 "--values", "0,5,20", "--out", str(out)])
    assert code in (0, 2)
    for d in (0, 5, 20):
        assert (out / f"D={d}" / "trace.csv").exists()
    with open(out / "sweep_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["0", "5", "20"]


def test_sweep_gamma_flags(tmp_path):
    cfg = lasso_cfg(max_iterations=20)
    out = tmp_path / "sweep"
    main(["sweep", "--config", write(tmp_path, cfg), "--param", "gamma",
          "--values", "0.5,1.0", "--out", str(out)])
    with open(out / "sweep_summary.csv") as fh:
        flags = [r["gamma_theory_safe"] for r in csv.DictReader(fh)]
    assert flags == ["True", "False"]


def test_sweep_errors(tmp_path):
    path = write(tmp_path, lasso_cfg())
    assert main(["sweep", "--config", path, "--param", "D", "--values", "",
                 "--out", str(tmp_path)]) == 1
    assert main(["sweep", "--config", path, "--param", "tau", "--values", "1",
                 "--out", str(tmp_path)]) == 1


def test_parallel_mode(tmp_path):
    cfg = lasso_cfg(delay={"kind": "fixed", "D": 2}, stop_tolerance=1e-8)
    cfg["mode"] = {"kind": "parallel", "workers": 2}
    out = tmp_path / "par"
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_staleness"] <= 2
