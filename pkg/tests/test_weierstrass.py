import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entcurves.errors import InvariantError
from entcurves.geometry import Lattice
from entcurves.weierstrass import WeierstrassP, fs_cohomology, lattice_sum_wp

# theta-function values (30 digits), frozen
SQUARE = [
    (0.5, 6.875185818020372, 0),
    (0.5j, -6.875185818020372, 0),
    (0.25 + 0.1j, 10.476938068840619 - 9.031264628407708j, -38.000832915480544 + 95.28572601889903j),
    (0.37 - 0.21j, 3.53732681015553 + 3.273810333186189j, 4.309290114487504 - 31.069052105690183j),
]
SKEW_PERIODS = (1, 0.3 + 1.1j)
SKEW = [
    (0.5, 6.530994544098317 + 0.14953040942656545j, 0),
    (0.2 + 0.3j, -3.605358685816388 - 6.531278793194017j, 41.780354626804815 + 13.390644192030672j),
    (-0.41 + 0.05j, 7.055841960131096 + 1.086594154747405j, 17.662269317106915 + 12.444042759627006j),
]


@pytest.fixture(scope="module")
def square():
    return WeierstrassP(Lattice.square())


@pytest.fixture(scope="module")
def skew():
    return WeierstrassP(Lattice.from_periods(*SKEW_PERIODS))


@pytest.mark.parametrize("z, wp, wpp", SQUARE)
def test_square_lattice_values(square, z, wp, wpp):
    val, der = square.evaluate(np.array([z]))
    assert abs(val[0] - wp) < 1e-12 * max(1, abs(wp))
    assert abs(der[0] - wpp) < 1e-11 * max(1, abs(wpp))


@pytest.mark.parametrize("z, wp, wpp", SKEW)
def test_skew_lattice_values(skew, z, wp, wpp):
    val, der = skew.evaluate(np.array([z]))
    assert abs(val[0] - wp) < 1e-12 * max(1, abs(wp))
    assert abs(der[0] - wpp) < 1e-11 * max(1, abs(wpp))


def test_half_period_is_a_zero_of_the_square_lattice(square):
    val, der = square.evaluate(np.array([0.5 + 0.5j]))
    assert abs(val[0]) < 1e-12 and abs(der[0]) < 1e-12


def test_truncation_bounds_are_tiny(square, skew):
    assert square.tail_bound < 1e-10 and skew.tail_bound < 1e-10


complexes = st.builds(complex, st.floats(-3, 3), st.floats(-3, 3))


@settings(max_examples=60, deadline=None)
@given(complexes)
def test_periodic_and_even(z):
    W = WeierstrassP(Lattice.from_periods(*SKEW_PERIODS))
    if min(abs(W.lattice.reduce_centered(z)), abs(W.lattice.reduce_centered(-z))) < 0.05:
        return
    a, da = W.evaluate(np.array([z, z + 1, z + SKEW_PERIODS[1], -z]))
    assert np.allclose(a[1:3], a[0], rtol=1e-10, atol=1e-10)
    assert abs(a[3] - a[0]) < 1e-10 * max(1, abs(a[0]))
    assert abs(da[3] + da[0]) < 1e-9 * max(1, abs(da[0]))


@settings(max_examples=30, deadline=None)
@given(complexes)
def test_differential_equation(z):
    W = WeierstrassP(Lattice.square())
    if abs(W.lattice.reduce_centered(z)) < 0.1:
        return
    val, der = W.evaluate(np.array([z]))
    g2 = 4 * 6.875185818020372**2
    assert abs(der[0] ** 2 - (4 * val[0] ** 3 - g2 * val[0])) < 1e-9 * max(1, abs(val[0]) ** 3)


def test_direct_lattice_sum_agrees(skew):
    z = 0.2 + 0.3j
    wp, wpp, _ = lattice_sum_wp(z, skew.lattice, 400)
    val, der = skew.evaluate(np.array([z]))
    assert abs(wp - val[0]) < 1e-4
    assert abs(wpp - der[0]) < 1e-4


def test_density_vanishes_at_poles_and_integrates_to_two(square):
    assert square.density(0j) == pytest.approx(0.0, abs=1e-12)
    value, err = square.integrate_density(128)
    assert abs(value - 2) < 1e-10 and err < 1e-8


def test_density_integral_skew_lattice(skew):
    value, _ = skew.integrate_density(256)
    assert abs(value - 2) < 1e-8


def test_grid_half_period(square):
    assert square.fundamental_grid(1, centered=False)[0, 0] == pytest.approx(0.5 + 0.5j)


def test_cohomology_constant(square):
    coh = fs_cohomology(square, 64)
    assert coh.c == pytest.approx(2.0)
    assert coh.theta_sup > 0 and coh.lipschitz > 0


def test_rank_four_lattice_rejected():
    with pytest.raises(InvariantError):
        WeierstrassP(Lattice([[1, 0], [1j, 0], [0, 1], [0, 1j]]))
