import json

import numpy as np
import pytest

from gcalc.cli import RunConfig, build_parser, main, render_reference


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def result(capsys, *argv):
    code, out, err = run(capsys, *argv, "--no-timestamp")
    assert code == 0, err
    return json.loads(out)


def test_gheat_summary_and_csv(capsys, tmp_path):
    f = tmp_path / "v.csv"
    doc = result(capsys, "gheat", "--payoff", "quadratic", "--sigma-low", "0.5", "--sigma-high", "1", "--T", "1",
                 "--csv", str(f), "--time-stride", "1000")
    assert doc["result"]["value_at_origin"] == pytest.approx(1.0, abs=5e-3)
    assert doc["result"]["cfl_ratio"] <= 1.0
    assert f.read_text().startswith("t,x,u\n")
    assert "timestamp" not in doc


def test_timestamp_present_by_default(capsys):
    code, out, _ = run(capsys, "gheat", "--payoff", "constant:1", "--n-points", "21")
    assert code == 0 and "timestamp" in json.loads(out)


def test_missing_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["gheat"])
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_cfl_violation_exit_2(capsys):
    code, out, err = run(capsys, "gheat", "--payoff", "quadratic", "--steps", "10")
    assert code == 2 and out == ""
    assert "4445" in err


def test_numeric_error_exit_3(capsys):
    code, _, err = run(capsys, "gheat", "--payoff", "poly:0,0,0,0,0,0,0,0,1e305", "--n-points", "21")
    assert code == 3 and "non-finite" in err


def test_bad_payoff_exit_2(capsys):
    code, _, err = run(capsys, "gexp", "--payoff", "butterfly:K=0,w=-1", "--method", "pde")
    assert code == 2 and "width" in err


def test_gexp_both_quadratic(capsys):
    doc = result(capsys, "gexp", "--payoff", "quadratic", "--method", "both", "--paths", "20000", "--mc-steps", "16")
    r = doc["result"]
    assert r["within_3se"] is True
    assert r["mc"]["best_member"] == 8
    assert r["gap"] == r["pde"] - r["mc"]["best"]["mean"]


def test_gexp_constant_gap_zero(capsys):
    doc = result(capsys, "gexp", "--payoff", "constant:0.1", "--paths", "5000", "--mc-steps", "4", "--n-points", "51")
    assert doc["result"]["gap"] == 0.0


def test_gexp_feedback_butterfly(capsys):
    doc = result(capsys, "gexp", "--payoff", "butterfly:K=0,w=1", "--family", "feedback", "--paths", "20000",
                 "--mc-steps", "128", "--n-points", "401")
    assert doc["result"]["within_3se"] is True
    assert doc["result"]["mc"]["best_member"] == "feedback"


def test_gexp_fixed_family(capsys, tmp_path):
    f = tmp_path / "ctl.csv"
    np.savetxt(f, np.full(8, 0.75))
    doc = result(capsys, "gexp", "--payoff", "quadratic", "--method", "mc", "--family", f"fixed:{f}",
                 "--paths", "20000", "--mc-steps", "8")
    best = doc["result"]["mc"]["best"]
    assert abs(best["mean"] - 0.5625) <= 3 * best["std_error"]
    code, _, err = run(capsys, "gexp", "--payoff", "quadratic", "--method", "mc", "--family", "fixed:/nonexistent.csv")
    assert code == 2


def test_gsde_geometric_small(capsys):
    doc = result(capsys, "gsde", "geometric", "--gamma", "0.1", "--sigma", "0.2", "--paths", "20000", "--steps", "64")
    r = doc["result"]
    assert r["analytic"] == pytest.approx(1.10517, abs=1e-5)
    assert r["within_3se"] is True and r["mc"]["best_member"] == 8
    assert doc["config"]["mc_steps"] == 64


def test_cylinder_command(capsys):
    doc = result(capsys, "cylinder", "--times", "0.5,1.0", "--phi", "sum:quadratic,quadratic", "--s", "0.5",
                 "--observed", "0.3")
    r = doc["result"]
    assert r["value"] == pytest.approx(1.0, abs=1e-2)
    assert r["conditional_value"] == pytest.approx(0.59, abs=1e-2)
    assert r["tower_gap"] <= 2e-2


def test_cylinder_base_case_equals_gexp(capsys):
    cyl = result(capsys, "cylinder", "--times", "1.0", "--phi", "quadratic")
    pde = result(capsys, "gexp", "--payoff", "quadratic", "--method", "pde")
    assert cyl["result"]["value"] == pytest.approx(pde["result"]["pde"], abs=1e-3)


def test_lifts_export(capsys, tmp_path):
    doc = result(capsys, "lifts", "export", "--paths", "2", "--out-dir", str(tmp_path), "--mc-steps", "32")
    files = doc["result"]["files"]
    assert len(files) == 2
    for f in files:
        data = np.loadtxt(f, delimiter=",", skiprows=1)
        assert data.shape == (33, 3)
        assert np.all(np.diff(data[:, 2]) >= 0)


def test_threads_do_not_change_output(capsys, monkeypatch):
    argv = ["gexp", "--payoff", "butterfly:0,1", "--paths", "9000", "--mc-steps", "8", "--n-points", "101"]
    outs = [run(capsys, *argv, "--threads", str(t), "--no-timestamp")[1] for t in (1, 4, 8)]
    monkeypatch.setenv("GCALC_THREADS", "4")
    outs.append(run(capsys, *argv, "--no-timestamp")[1])
    assert len(set(outs)) == 1


def test_run_config_round_trip():
    args = build_parser().parse_args(["gsde", "geometric", "--gamma", "-0.1", "--sigma", "0.2"])
    cfg = RunConfig.from_args(args)
    assert cfg.command == "gsde geometric"
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert "threads" not in cfg.params


def test_reference_page(capsys):
    code, out, _ = run(capsys, "--reference")
    assert code == 0 and out == render_reference()
    for name in ("## gheat", "## gexp", "## gsde geometric", "## cylinder", "## lifts export"):
        assert name in out
