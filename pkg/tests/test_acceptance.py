"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
pytest terminal summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np

from conftest import TORUS_TARGETS, check, margin_ok, record, two_pow
from entcurves.analysis import (
    ShapeSpec,
    ahlfors_report,
    diffuse_spec,
    nevanlinna_report,
    torus_character_mean,
)
from entcurves.builder import growth_ladder, ladder_slope, trajectory_ladder
from entcurves.cli import main
from entcurves.curves import affine_curve, curve_from_json
from entcurves.geometry import ConstantForm, Lattice, TargetCurrent, affine_current_pairing, spectral_decompose
from entcurves.weierstrass import WeierstrassP

ORACLE_RTOL = 1e-6


def test_criterion_01_degree_identity():
    start = time.perf_counter()
    value, err = WeierstrassP(Lattice.square()).integrate_density(256)
    seconds = time.perf_counter() - start
    ok = abs(value - 2) < 1e-3 and seconds < 60
    assert record(1, ok, f"integral {value:.12f} (estimate {err:.1e}) in {seconds:.2f} s")


def test_criterion_02_affine_pairing_oracle():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = 1 + seed % 3
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        xi = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        exact = affine_current_pairing(v, ConstantForm(xi))
        curve = affine_curve(v)
        for rep in (ahlfors_report(curve, 4.0, 1e-9), nevanlinna_report(curve, 4.0, 1e-9)):
            measured = complex(-2j * np.sum(xi * rep.H_hat))
            worst = max(worst, abs(measured - exact) / abs(exact))
    assert record(2, worst < ORACLE_RTOL, f"worst relative error {worst:.2e} over 20 pairs, both kinds")


def test_criterion_03_spectral_round_trip():
    recon, trace = 0.0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = 1 + seed % 4
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        H = X @ X.conj().T
        target = TargetCurrent(H / np.trace(H).real)
        dec = spectral_decompose(target)
        recon = max(recon, float(np.max(np.abs(dec.matrix() - target.H))))
        trace = max(trace, abs(sum(dec.betas) - 1))
    ok = recon < 1e-10 and trace < 1e-12
    assert record(3, ok, f"max reconstruction error {recon:.1e}, max |sum beta - 1| {trace:.1e}")


def test_criterion_04_torus_build(torus_builds):
    failures = []
    for name, b in torus_builds.items():
        H = TORUS_TARGETS[name]
        for r in b.reports:
            t = r["t"]
            for kind in ("ahlfors", "nevanlinna"):
                ratio = check(r, f"length_area_{kind}")
                if not (ratio["value"] < two_pow(t) and margin_ok(ratio)):
                    failures.append(f"{name} t={t} length-area {kind}")
                pair = check(r, f"pairing_{kind}")
                Hh = np.array(r[kind]["H_hat"]["re"]) + 1j * np.array(r[kind]["H_hat"]["im"])
                entry = float(np.max(np.abs(Hh - H)))
                if not (entry < two_pow(t) and pair["value"] >= entry and margin_ok(pair)):
                    failures.append(f"{name} t={t} pairing {kind}")
            sup = check(r, "sup_norm")
            if not (sup["value"] < two_pow(t) * r["eps_prev"] and margin_ok(sup)):
                failures.append(f"{name} t={t} sup-norm")
    seconds = sum(b.seconds for b in torus_builds.values())
    ok = not failures and seconds < 30 * 60
    assert record(4, ok, f"3 targets x 2 stages in {seconds:.1f} s; failing: {failures or 'none'}")


def test_criterion_05_shape_build(shape_build):
    failures = []
    for r in shape_build.reports:
        t = r["t"]
        for name in ("complement_ahlfors", "complement_nevanlinna", "projective_ahlfors", "projective_nevanlinna"):
            c = check(r, name)
            if not (c["value"] < two_pow(t) and margin_ok(c)):
                failures.append(f"t={t} {name}")
    ok = not failures and shape_build.seconds < 45 * 60
    assert record(5, ok, f"2 stages in {shape_build.seconds:.1f} s; failing: {failures or 'none'}")


def test_criterion_06_fiber_ratio_law(fiber_build):
    r = fiber_build.reports[0]
    p, q, c = r["parameters"]["p"], r["parameters"]["q"], r["parameters"]["c"]
    lines, ok = [], math.isclose(p[0] ** 2 / p[1] ** 2, 2.0, rel_tol=1e-12)
    for kind in ("ahlfors", "nevanlinna"):
        m = r[kind]["masses"]  # x-discs first, then y-discs
        a_ratio = m[0] / m[1]
        b_ratio = m[2] / m[1]
        b_target = c * q[0] ** 2 / p[1] ** 2
        ok &= abs(a_ratio / 2.0 - 1) < 0.10 and abs(b_ratio / b_target - 1) < 0.15
        lines.append(f"{kind} A1/A2 {a_ratio:.6f} (2), B1/A2 {b_ratio:.6f} ({b_target:.6f})")
    assert record(6, ok, f"alpha {r['alpha']}; " + "; ".join(lines))


def test_criterion_07_growth_rate(torus_builds, shape_build):
    # the accepted tail of the ladder: alpha_t, 2 alpha_t, 4 alpha_t, 8 alpha_t
    parts, ok = [], True
    for label, b in (("torus", torus_builds["diag"]), ("shape", shape_build)):
        r = b.reports[0]
        log_m = math.log(r["extrema"]["m"])
        tail = ladder_slope(growth_ladder(b.curve, r, (1, 2, 4, 8), workers=8)) / log_m
        full = ladder_slope(trajectory_ladder(r)) / log_m
        ok &= tail >= 1.5 - 0.2
        parts.append(f"{label} slope/log m {tail:.3f} (full ladder {full:.3f})")
    assert record(7, ok, "; ".join(parts) + "; threshold 1.3")


def fd_error(curve, rng, count=100, h=1e-6):
    R = curve.stages[-1].R
    z = R * np.sqrt(rng.uniform(size=count)) * np.exp(2j * np.pi * rng.uniform(size=count))
    s = curve.pointwise_log_scale(z)
    exact = curve.eval_derivative(z, shift=s)
    fd = (curve.eval(z + h, shift=s) - curve.eval(z - h, shift=s)) / (2 * h)
    return float(np.max(np.linalg.norm(exact - fd, axis=0) / np.linalg.norm(exact, axis=0)))


def test_criterion_08_derivatives(torus_builds, shape_build):
    rng = np.random.default_rng(2024)
    torus = fd_error(torus_builds["rank_one"].curve, rng)
    shape = fd_error(shape_build.curve, rng)
    ok = torus < 1e-6 and shape < 1e-6
    assert record(8, ok, f"max relative error torus {torus:.1e}, shape {shape:.1e} (100 points each)")


def test_criterion_09_verify_and_round_trip(torus_builds, shape_build, capsys):
    codes = [main(["verify", str(b.run_dir), "--workers", "8"])
             for b in list(torus_builds.values()) + [shape_build]]
    capsys.readouterr()
    bitwise = True
    rng = np.random.default_rng(9)
    for b in list(torus_builds.values()) + [shape_build]:
        for cp in sorted(b.run_dir.glob("stage_*.curve.json")):
            curve = curve_from_json(json.loads(cp.read_text()))
            again = curve_from_json(json.loads(json.dumps(curve.to_json())))
            z = curve.stages[-1].R * (rng.uniform(-1, 1, 64) + 1j * rng.uniform(-1, 1, 64)) / 2
            s = curve.pointwise_log_scale(z)
            bitwise &= np.array_equal(curve.eval(z, shift=s), again.eval(z, shift=s))
            bitwise &= np.array_equal(curve.eval_derivative(z, shift=s), again.eval_derivative(z, shift=s))
    ok = all(c == 0 for c in codes) and bitwise
    assert record(9, ok, f"verify exit codes {codes}; bitwise JSON round-trip {bitwise}")


def test_criterion_10_diffuse_convergence():
    parts, ok = [], True
    for label, lattice in (("Z+iZ", Lattice.square()), ("skew", Lattice.from_periods(1, 0.3 + 1.1j))):
        shape = ShapeSpec(lattice, (2.0,), (0.25,), (0.3 + 0.1j,), (0.25,))
        for fname, k in (("Re", (1, 0)), ("Im", (0, 1))):
            mean = torus_character_mean(lattice, *k)
            errs = [abs(diffuse_spec(shape, s).character_average(*k) - mean) for s in (4, 16, 64)]
            ok &= errs[0] >= errs[1] >= errs[2]
            parts.append(f"{label}/{fname} " + ",".join(f"{e:.2e}" for e in errs))
    assert record(10, ok, "errors at s=4,16,64: " + "; ".join(parts))
