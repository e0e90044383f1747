import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SHAPE, check, two_pow
from entcurves.builder import (
    BuildConfig,
    Check,
    Schedule,
    bump_eps,
    chain_holds,
    choose_circle_points,
    growth_ladder,
    ladder_slope,
    run_schedule,
    stability_budget,
    trajectory_ladder,
    verify_run,
    wp_preimage,
)
from entcurves.curves import curve_from_json
from entcurves.errors import InfeasibleError, InvariantError
from entcurves.geometry import Lattice, TargetCurrent
from entcurves.weierstrass import WeierstrassP

DIAG = TargetCurrent(np.diag([1.0, 0.0]))


@given(st.floats(2.0, 1e4), st.integers(1, 6))
def test_circle_points_equally_spaced_from_angle_zero(R, count):
    if count > 1 and 2 * R * math.sin(math.pi / count) <= 2:
        with pytest.raises(InvariantError):
            choose_circle_points(R, count)
        return
    pts = choose_circle_points(R, count)
    assert pts[0] == complex(R, 0)
    assert all(abs(abs(p) - R) < 1e-9 * R for p in pts)
    for i in range(count):
        for j in range(i + 1, count):
            assert abs(pts[i] - pts[j]) > 2


def test_bump_eps_keeps_margin():
    assert bump_eps(8.0) == pytest.approx(0.9 / 128)
    assert bump_eps(8.0) < 1 / (2 * 64)


def test_check_semantics():
    assert Check("a", 0.1, 0.01, 0.5).passed
    assert not Check("a", 0.49, 0.02, 0.5).passed
    assert Check("a", 0.49, 0.003, 0.5).marginal(5.0)
    assert not Check("a", 0.4, 0.003, 0.5).marginal(5.0)
    low = Check("p", 1.0, 0.0, 1.0, lower=True)
    assert low.passed and low.margin == 0
    again = Check.from_json(json.loads(json.dumps(Check("b", 0.2, 1e-9, 0.25).to_json())))
    assert again == Check("b", 0.2, 1e-9, 0.25)


@pytest.mark.parametrize("bad", [{"tol": 0.0}, {"tol": 0.2}, {"workers": 0}, {"alpha_cap": 1},
                                 {"eps_safety": 0.5}, {"bump_eps_factor": 1.0}])
def test_config_validation(bad):
    with pytest.raises(InvariantError):
        BuildConfig(**bad)


def test_config_json_round_trip_and_unknown_fields():
    cfg = BuildConfig(tol=1e-3, seed=5)
    assert BuildConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    with pytest.raises(InvariantError):
        BuildConfig.from_json({"tolerance": 1e-3})


def test_schedule_bookkeeping():
    other = TargetCurrent(np.eye(2) / 2)
    s = Schedule.round_robin([DIAG, other], 5)
    assert s.visit == (0, 1, 0, 1, 0)
    assert s.kind == "torus" and s.target(2) is other
    assert Schedule.from_json(json.loads(json.dumps(s.to_json()))).visit == s.visit
    with pytest.raises(InvariantError):
        s.check_prefix(1, min_visits=1)
    with pytest.raises(InvariantError):
        Schedule((DIAG,), (0, 1))
    with pytest.raises(InvariantError):
        Schedule((DIAG, SHAPE), (0, 1))


def test_chain_inequality():
    assert chain_holds([0.25, 0.0625, 0.015625])
    assert not chain_holds([0.01, 1.0])


def test_wp_preimage():
    W = WeierstrassP(Lattice.from_periods(1, 0.3 + 1.1j))
    for x in (2.0, -1 + 0.5j, 40.0):
        z = wp_preimage(W, x)
        assert abs(W.wp(np.array([z]))[0] - x) < 1e-9 * max(1, abs(x))


def test_zero_perturbations_keep_full_budget(torus_builds):
    curve = torus_builds["diag"].results[0][0]
    cfg = BuildConfig(perturbations=0)
    eps, info = stability_budget(curve, lambda c, slack: None, 1.0, 1, cfg)
    assert eps == pytest.approx(0.25)
    assert info["bound"] == 0.5


def test_torus_build_structure(torus_builds):
    for b in torus_builds.values():
        (c1, r1), (c2, r2) = b.results
        assert r1["R"] == 8.0 and r2["R"] == 16.0
        assert r1["eps"] < r1["eps_prev"] / 2 and r2["eps"] < r1["eps"] / 2
        assert c2.truncated(1).to_json() == c1.to_json()
        for t, r in enumerate(b.reports, start=1):
            assert r["passed"]
            assert check(r, "sup_norm")["threshold"] == two_pow(t) * r["eps_prev"]
        assert (b.run_dir / "summary.csv").read_text().count("\n") == 3


def test_shape_build_structure(shape_build):
    (c1, r1), (c2, r2) = shape_build.results
    assert r1["R"] == 16.0 and r2["R"] == 32.0
    assert 0 < c1.stages[0].delta < 0.5 and 0 < c2.stages[1].delta < 0.25
    p = r1["parameters"]
    assert 0 < p["p"][0] <= 1 and 0 < p["q"][0] <= 1
    assert p["p"][0] ** 2 / (p["c"] * p["q"][0] ** 2) == pytest.approx(SHAPE.A[0] / SHAPE.B[0])


def test_resume_reproduces_a_fresh_build(tmp_path):
    cfg = BuildConfig(workers=4)
    sched = Schedule.round_robin([DIAG], 2)
    run_schedule(sched, 1, cfg, tmp_path / "a")
    resumed = run_schedule(sched, 2, cfg, tmp_path / "a")
    fresh = run_schedule(sched, 2, cfg, tmp_path / "b")
    for name in ("stage_001.curve.json", "stage_002.curve.json", "stage_002.report.json", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert resumed[-1][1] == fresh[-1][1]


def test_alpha_cap_makes_stage_infeasible(tmp_path):
    cfg = BuildConfig(alpha_cap=8, workers=4)
    with pytest.raises(InfeasibleError) as info:
        run_schedule(Schedule.round_robin([DIAG], 1), 1, cfg, tmp_path)
    assert len(info.value.trajectory) == 3
    doc = json.loads((tmp_path / "stage_001.infeasible.json").read_text())
    assert [row["alpha"] for row in doc["trajectory"]] == [2, 4, 8]


def test_verify_detects_tampering(torus_builds, tmp_path):
    src = torus_builds["diag"].run_dir
    assert verify_run(src) == []
    dst = tmp_path / "copy"
    dst.mkdir()
    for f in src.iterdir():
        (dst / f.name).write_bytes(f.read_bytes())
    doc = json.loads((dst / "stage_002.curve.json").read_text())
    doc["stages"][1]["alpha"] *= 2
    (dst / "stage_002.curve.json").write_text(json.dumps(doc))
    problems = verify_run(dst)
    assert any("alpha" in p for p in problems)


def test_growth_ladder_on_accepted_tail(torus_builds):
    b = torus_builds["diag"]
    report = b.reports[0]
    pts = growth_ladder(b.curve, report, (1, 2))
    assert pts[0][0] == report["alpha"] and pts[1][0] == 2 * report["alpha"]
    assert pts[0][1] == pytest.approx(report["ahlfors"]["log_normalizer"], rel=1e-6)
    assert ladder_slope(pts) > 0
    assert len(trajectory_ladder(report)) == len(report["trajectory"])


def test_ladder_slope_exact_line():
    assert ladder_slope([(1, 2.0), (2, 5.0), (4, 11.0)]) == pytest.approx(3.0)
    with pytest.raises(InvariantError):
        ladder_slope([(2, 1.0), (2, 3.0)])


def test_snapshots_load_back(shape_build):
    doc = json.loads((shape_build.run_dir / "stage_002.curve.json").read_text())
    curve = curve_from_json(doc)
    z = np.array([1 + 1j, 15.5, -3j])
    assert np.array_equal(curve.eval(z), shape_build.curve.eval(z))


def test_resume_refuses_a_different_configuration(tmp_path):
    sched = Schedule.round_robin([DIAG], 1)
    run_schedule(sched, 1, BuildConfig(workers=2), tmp_path)
    run_schedule(sched, 1, BuildConfig(workers=5), tmp_path)
    with pytest.raises(InvariantError):
        run_schedule(sched, 1, BuildConfig(seed=3), tmp_path)
    with pytest.raises(InvariantError):
        run_schedule(Schedule.round_robin([TargetCurrent(np.eye(2) / 2)], 1), 1, BuildConfig(), tmp_path)
