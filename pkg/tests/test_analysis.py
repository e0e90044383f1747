import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entcurves.analysis import (
    ShapeSpec,
    ahlfors_report,
    diffuse_spec,
    nevanlinna_report,
    reports_csv,
    torus_character_mean,
)
from entcurves.curves import ProductCurveExpr, affine_curve
from entcurves.errors import InvariantError
from entcurves.geometry import ConstantForm, Lattice, affine_current_pairing
from entcurves.polynomials import Polynomial

SKEW = Lattice.from_periods(1, 0.3 + 1.1j)


def quadrature_pairing(report, xi):
    return complex(-2j * np.sum(xi * report.H_hat))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_affine_pairing_oracle(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    xi = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    exact = affine_current_pairing(v, ConstantForm(xi))
    curve = affine_curve(v, c)
    for rep in (ahlfors_report(curve, 3.0, 1e-8), nevanlinna_report(curve, 3.0, 1e-8)):
        assert abs(quadrature_pairing(rep, xi) - exact) <= 1e-6 * abs(exact)


def test_affine_length_area_ratios():
    curve = affine_curve([1.0, 1j])
    R = 3.0
    a = ahlfors_report(curve, R, 1e-10)
    n = nevanlinna_report(curve, R, 1e-10)
    # |v|^2 = 2: area 2 pi R^2, length 2 pi R sqrt(2)
    assert math.exp(a.log_normalizer) == pytest.approx(2 * math.pi * R * R, rel=1e-9)
    assert a.length_ratio == pytest.approx(2 * math.pi * R * math.sqrt(2) / (2 * math.pi * R * R), rel=1e-9)
    assert math.exp(n.log_normalizer) == pytest.approx(math.pi * R * R, rel=1e-6)


def test_flat_product_line():
    curve = ProductCurveExpr(Lattice.square(), base=(Polynomial((0,)), Polynomial((0, 1))))
    rep = ahlfors_report(curve, 3.0, 1e-8)
    assert math.exp(rep.log_normalizer) == pytest.approx(9 * math.pi, rel=1e-9)
    assert rep.fs_fraction == 0.0
    assert rep.complement == pytest.approx(1.0)


def test_report_json_and_csv():
    rep = ahlfors_report(affine_curve([1.0]), 2.0)
    doc = json.loads(json.dumps(rep.to_json()))
    assert doc["schema"] == "current-report/1" and doc["kind"] == "ahlfors"
    text = reports_csv([rep.csv_row(1)])
    assert text.splitlines()[0].startswith("t,kind,radius")


def test_shape_validation():
    lat = Lattice.square()
    with pytest.raises(InvariantError):
        ShapeSpec(lat, (1.0,), (0.7,), (0.5j,), (0.5,))
    with pytest.raises(InvariantError):
        ShapeSpec(lat, (1.0, 1.0), (0.2, 0.2))
    with pytest.raises(InvariantError):
        ShapeSpec(lat, (), (), (0.2, 1.2), (0.1, 0.1))
    with pytest.raises(InvariantError):
        ShapeSpec(lat)
    with pytest.raises(InvariantError):
        ShapeSpec(lat, (1.0,), (0.0,))


def test_shape_json_round_trip():
    s = ShapeSpec(SKEW, (2.0, -1 + 0.5j), (0.5, 0.25), (0.25 + 0.25j,), (0.25,))
    assert ShapeSpec.from_json(json.loads(json.dumps(s.to_json()))) == s
    assert s.P == 2 and s.Q == 1 and not s.swapped_roles()


def test_character_means():
    assert torus_character_mean(Lattice.square(), 0, 0) == 1
    assert torus_character_mean(Lattice.square(), 1, 0) == 0
    assert abs(torus_character_mean(SKEW, 0, 1)) > 0


@pytest.mark.parametrize("lattice", [Lattice.square(), SKEW], ids=["square", "skew"])
@pytest.mark.parametrize("k", [(1, 0), (0, 1), (1, 1)])
def test_closed_form_grid_average_matches_direct_sum(lattice, k):
    shape = ShapeSpec(lattice, (2.0,), (0.25,), (0.3 + 0.1j,), (0.25,))
    f = lambda z: np.exp(2j * np.pi * (k[0] * z.real + k[1] * z.imag))
    for s in (4, 16, 64):
        d = diffuse_spec(shape, s)
        assert abs(d.character_average(*k) - d.average(f)) < 1e-12


def test_diffuse_spec_weights():
    shape = ShapeSpec(Lattice.square(), (2.0,), (0.25,), (0.3 + 0.1j,), (0.25,))
    d = diffuse_spec(shape, 16)
    assert d.c_s == pytest.approx(0.5)
    assert len(d.points) == 16
    assert sum(d.spec.B) + sum(d.spec.A) == pytest.approx(1.0)


def test_diffuse_spec_needs_missing_mass():
    with pytest.raises(InvariantError):
        diffuse_spec(ShapeSpec(Lattice.square(), (2.0,), (0.5,), (0.3j,), (0.5,)), 4)


def test_diffuse_error_decreases_on_skew_lattice():
    shape = ShapeSpec(SKEW, (2.0,), (0.25,), (0.3 + 0.1j,), (0.25,))
    mean = torus_character_mean(SKEW, 0, 1)
    errs = [abs(diffuse_spec(shape, s).character_average(0, 1) - mean) for s in (4, 16, 64)]
    assert errs[0] > errs[1] > errs[2]
