import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonholo import harness
from nonholo.errors import IncompatibleMethod, SolverDiverged
from nonholo.harness import ExperimentConfig, fmt, run_integrate, run_order_study, run_variance_study


def _read(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, 3.06, -2.5e-300, 1e308):
        assert float(fmt(x)) == x
    assert fmt(np.int64(4)) == "4"


def test_integrate_csv_is_deterministic_and_consistent(tmp_path, chaotic):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = ExperimentConfig(method="dg-gonzalez", h=0.05, t_end=1.0, seed=9)
    run_integrate(cfg.override(out=str(a)))
    run_integrate(cfg.override(out=str(b)))
    assert a.read_bytes() == b.read_bytes()
    head, data = _read(a)
    assert head[:2] == ["t", "q1"] and head[-1] == "solver_iters"
    assert "rho6" in head and "constraint_res_1" in head
    assert data.shape == (21, len(head))
    assert_allclose(data[:, 0], 0.05 * np.arange(21), atol=1e-15)
    # recompute H from the stored state
    for row in data:
        assert abs(chaotic.reduced.hamiltonian(row[1:14]) - row[14]) <= 1e-13
    assert abs(data[0, 14] - 3.06) <= 1e-12


def test_canonical_csv_has_p_columns(tmp_path, chaotic):
    out = tmp_path / "r.csv"
    run_integrate(ExperimentConfig(method="gonzalez-r", h=0.1, t_end=0.5, out=str(out)))
    head, data = _read(out)
    assert "p7" in head and "rho1" not in head
    for row in data:
        q, p = row[1:8], row[8:15]
        assert abs(chaotic.mechanical.hamiltonian(q, p) - row[15]) <= 1e-13
    assert np.max(np.abs(data[:, head.index("constraint_res_1")])) <= 1e-10


def test_explicit_initial_state_and_validation():
    cfg = ExperimentConfig(system="chaplygin-sleigh", method="dg-avf", h=0.5, t_end=1.0,
                           initial={"state": [0, 0, 0, 0.1, 0.5]})
    traj = run_integrate(cfg)
    assert traj.states.shape == (3, 5)
    with pytest.raises(ValueError):
        run_integrate(cfg.override(initial={"state": [0, 0, 0]}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"sytem": "suslov"})
    with pytest.raises(ValueError):
        ExperimentConfig(h=0.3, t_end=1.0).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(solver={"tolerance": 1e-9}).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(method="rk4").validate()


@pytest.mark.parametrize("system,method", [
    ("gearbox-pendulum", "dg-gonzalez"),
    ("suslov", "gonzalez-r"),
    ("suslov", "dla"),
])
def test_incompatible_pairs_rejected_before_stepping(system, method):
    with pytest.raises(IncompatibleMethod):
        ExperimentConfig(system=system, method=method).validate()


def test_suslov_runs_from_sampled_state():
    traj = run_integrate(ExperimentConfig(system="suslov", method="dg-itoh-abe", h=0.1, t_end=1.0))
    assert traj.max_rel_energy_error <= 1e-13


def test_error_sidecar_on_solver_failure(tmp_path):
    out = tmp_path / "fail.csv"
    cfg = ExperimentConfig(method="dg-gonzalez", h=0.05, t_end=0.5, out=str(out), solver={"max_iter": 1})
    with pytest.raises(SolverDiverged):
        run_integrate(cfg)
    report = json.loads(harness.error_report_path(out).read_text())
    assert report["error"] == "SolverDiverged"
    assert report["step"] == 1
    assert report["config"]["solver"] == {"max_iter": 1}
    assert not out.exists()


def test_order_study_dg_gonzalez(tmp_path):
    out = tmp_path / "order.csv"
    res = run_order_study(ExperimentConfig(method="dg-gonzalez", t_end=1.0, out=str(out)),
                          h_list=[0.1, 0.05, 0.025])
    assert 1.8 <= res.slope <= 2.2 and not res.degenerate
    assert res.h_ref == pytest.approx(0.025 / 20)
    head, data = _read(out)
    assert head == ["h", "global_error", "slope", "degenerate"]
    assert data.shape == (3, 4)


def test_order_study_flags_exact_trajectories():
    # heading fixed (rho2 = 0): the disk rolls straight and every step is exact
    cfg = ExperimentConfig(system="rolling-disk", method="dg-gonzalez", t_end=1.0,
                           initial={"state": [0.0, 0.0, 0.4, 0.0, 1.2, 0.0]})
    res = run_order_study(cfg, h_list=[0.1, 0.05, 0.025])
    assert res.degenerate and np.isnan(res.slope)


def test_order_study_needs_three_sizes():
    with pytest.raises(ValueError):
        run_order_study(ExperimentConfig(), h_list=[0.1, 0.05])


def test_variance_study_small(tmp_path, monkeypatch):
    monkeypatch.setenv("NONHOLO_THREADS", "1")
    out = tmp_path / "var.csv"
    cfg = ExperimentConfig(method="dla", t_end=4.0, ensemble=3, out=str(out))
    table = run_variance_study(cfg, h_list=[0.1, 0.05])
    assert table.scaled.shape == (2, 5)
    assert table.scaled[0, 0] == 0.0 and np.all(table.raw[:, 1:] > 0)
    head, data = _read(out)
    assert head == ["t", "h", "scaled_variance", "variance"] and data.shape == (10, 4)
    dg = run_variance_study(cfg.override(method="dg-gonzalez", out=None), h_list=[0.1])
    assert np.max(dg.raw) <= 1e-20


def test_variance_study_parallel_matches_serial(monkeypatch):
    cfg = ExperimentConfig(method="dla", t_end=2.0, ensemble=4)
    monkeypatch.setenv("NONHOLO_THREADS", "1")
    serial = run_variance_study(cfg, h_list=[0.1])
    monkeypatch.setenv("NONHOLO_THREADS", "2")
    assert harness.worker_count(4) == 2
    parallel = run_variance_study(cfg, h_list=[0.1])
    assert np.array_equal(serial.raw, parallel.raw)


def test_variance_study_rejects_fixed_state():
    with pytest.raises(ValueError):
        run_variance_study(ExperimentConfig(ensemble=1))


def test_sleigh_stability_report(tmp_path):
    out = tmp_path / "sleigh.csv"
    rep = harness.run_sleigh_stability(steps=200, out=str(out))
    lam = (2 * 9.0 - 0.5 * (-0.6)) / (2 * 9.0 + 0.5 * (-0.6))
    assert abs(rep.lambda1 - lam) <= 1e-14
    assert abs(rep.lambda1_numeric - lam) <= 1e-8
    assert rep.bound == pytest.approx(30.0) and rep.bound_ok
    saved = json.loads((tmp_path / "sleigh.csv.report.json").read_text())
    assert saved["lambda1"] == rep.lambda1 and len(saved["runs"]) == 2


def test_sleigh_bound_warning():
    with pytest.warns(RuntimeWarning):
        harness.run_sleigh_stability(h=40.0, steps=1, rho1_list=[0.0])
