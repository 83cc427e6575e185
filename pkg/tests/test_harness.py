import csv
from dataclasses import replace

import numpy as np
import pytest

from rislex.cli import main
from rislex.harness import (
    ExperimentSpec,
    TRIAL_HEADER,
    check_invariants,
    parse_config,
    run_experiment,
    run_trial,
)
from rislex.sysmodel import SystemConfig

TINY = SystemConfig(M=4, N=16, K=3)


def tiny_spec(tmp_path, **kw):
    kw.setdefault("trials", 2)
    return ExperimentSpec(base=TINY, out_dir=str(tmp_path), **kw)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_empty_config_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("# nothing here\n\n")
    spec = parse_config(f)
    assert spec.base == SystemConfig()
    assert spec.rhos == (0.85, 0.5) and spec.trials == 50 and spec.sweep == "none"


def test_config_units_and_lists(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("pmax_dbm = 25  # watts after parsing\nrho = 0.85, 0.5, 0.3\nsweep = pmax\npmax_sweep_dbm = 10, 20\nnoise_dbm = -120\nK = 2\n")
    spec = parse_config(f)
    assert spec.base.p_max == pytest.approx(0.31623, rel=1e-5)
    assert spec.base.noise_power == pytest.approx(1e-15)
    assert spec.rhos == (0.85, 0.5, 0.3)
    assert spec.sweep_values == (10.0, 20.0)
    assert len(spec.base.carriers) == 2 and len(spec.base.p_ue) == 2


@pytest.mark.parametrize(
    "line, match",
    [("rho = 1.2", r"rho.*\[0, 1\]"), ("colour = red", "colour"), ("M = zero", "M"), ("trials = 0", "trials"), ("just words", "key = value")],
)
def test_bad_config_is_rejected(tmp_path, line, match):
    f = tmp_path / "bad.cfg"
    f.write_text(line + "\n")
    with pytest.raises(ValueError, match=match):
        parse_config(f)


def test_missing_config_names_path(tmp_path):
    with pytest.raises(OSError, match="nope.cfg"):
        parse_config(tmp_path / "nope.cfg")


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(sweep="pmax", sweep_values=(30.0, 20.0))
    with pytest.raises(ValueError):
        ExperimentSpec(modes=("bogus",))


def test_trial_is_deterministic_and_clean(tmp_path):
    spec = tiny_spec(tmp_path)
    a, b = run_trial(spec, 3), run_trial(spec, 3)
    assert a.seed == 3
    for label in a.reports:
        assert np.array_equal(a.reports[label].p, b.reports[label].p)
        assert np.array_equal(a.reports[label].theta, b.reports[label].theta)
    assert check_invariants(a, TINY) == []
    assert set(a.reports) == {"stage1", "prop85", "prop50", "fairness"}


def test_single_user_has_unit_jain(tmp_path):
    spec = ExperimentSpec(base=SystemConfig(M=2, N=4, K=1), trials=1, out_dir=str(tmp_path))
    rec = run_trial(spec, 0)
    assert all(r.jain == 1.0 for r in rec.reports.values())


def test_experiment_files_and_aggregates(tmp_path):
    spec = tiny_spec(tmp_path, sweep="pmax", sweep_values=(20.0, 30.0))
    res = run_experiment(spec)
    rows = read_rows(tmp_path / "P_EE.csv")
    assert rows[0] == ["P", "maxEE", "prop85", "prop50", "eeAware"]
    assert [r[0] for r in rows[1:]] == ["20", "30"]
    # Aggregates are plain means of the per-trial values.
    group = [r for r in res.records if r.point == 30.0]
    mean = np.mean([r.reports["prop85"].ee for r in group]) * 1e-6
    assert float(rows[2][2]) == pytest.approx(mean, rel=1e-11)
    trials = read_rows(tmp_path / "trials.csv")
    assert trials[0] == TRIAL_HEADER and len(trials) == 1 + 2 * 2 * 4
    assert (tmp_path / "plots.gp").read_text().count("plot ") == 3
    assert res.violations == []


def test_single_point_convergence_tables(tmp_path):
    run_experiment(tiny_spec(tmp_path))
    conv = read_rows(tmp_path / "conv_EE.csv")
    assert conv[0] == ["iter", "maxEE", "maxF85", "maxF50"]
    assert read_rows(tmp_path / "conv_mwr.csv")[0] == conv[0]
    ee = np.array([[float(x) for x in r[1:]] for r in conv[1:]])
    assert np.all(np.diff(ee[:, 0]) >= -1e-9)


def test_csvs_are_byte_identical_across_runs_and_workers(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(tiny_spec(a, trials=3))
    run_experiment(tiny_spec(b, trials=3, workers=2))
    for name in ("conv_EE.csv", "conv_mwr.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    strip = lambda p: [r[:-1] for r in read_rows(p)]
    assert strip(a / "trials.csv") == strip(b / "trials.csv")


def test_mode_subset(tmp_path):
    res = run_experiment(tiny_spec(tmp_path, modes=("stage1", "fairness"), sweep="nris", sweep_values=(4, 9)))
    assert read_rows(tmp_path / "N_JFI.csv")[0] == ["nRIS", "maxEE", "eeAware"]
    assert all(set(r.reports) == {"stage1", "fairness"} for r in res.records)


def test_cli_run(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("M = 4\nN = 16\nK = 2\n")
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--trials", "1", "--seed", "7", "--rho", "0.9", "--out", str(out), "--mode", "proposed", "--strict"])
    assert code == 0
    assert read_rows(out / "conv_EE.csv")[0] == ["iter", "maxF90"]
    assert read_rows(out / "trials.csv")[1][2] == "7"
    assert "1 trials written" in capsys.readouterr().out


def test_cli_reports_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("rho = 2\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "rho" in capsys.readouterr().err
