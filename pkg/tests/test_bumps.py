import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entcurves.bumps import BumpFunction, bump_extrema, bump_extrema_exact
from entcurves.errors import InvariantError


def test_peak_value_at_centre():
    b = BumpFunction(8.0, eps=0.01)
    assert abs(b(8.0)) == pytest.approx(math.exp(0.01))


def test_rotated_copy_peaks_at_requested_point():
    R = 10.0
    target = R * np.exp(2.1j)
    b = BumpFunction.centered_at(target, R + 0j, 0.004)
    assert b.center == pytest.approx(target)
    assert abs(b(target)) == pytest.approx(math.exp(0.004))


def test_rotation_needs_same_modulus():
    with pytest.raises(InvariantError):
        BumpFunction.centered_at(3.0, 4.0)


def test_invalid_bumps():
    with pytest.raises(InvariantError):
        BumpFunction(0.0)
    with pytest.raises(InvariantError):
        BumpFunction(1.0, eps=0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(2.0, 64.0), st.floats(0.0, 2 * math.pi))
def test_small_off_the_unit_disc(R, angle):
    eps = 0.9 / (2 * R * R)
    b = BumpFunction.centered_at(R * np.exp(1j * angle), R + 0j, eps)
    t = np.linspace(0, 2 * np.pi, 2000)
    z = np.concatenate([R * np.exp(1j * t), 0.5 * R * np.exp(1j * t), [0j]])
    outside = np.abs(z - b.center) >= 1
    assert np.all(np.abs(b(z[outside])) < 1)


@pytest.mark.parametrize("R", [4.0, 8.0, 32.0])
def test_grid_extrema_match_closed_form(R):
    b = BumpFunction.centered_at(R * 1j, R + 0j, 0.9 / (2 * R * R))
    m, mp, m0 = bump_extrema(b, R)
    em, emp, em0 = bump_extrema_exact(b, R)
    assert m == pytest.approx(em, rel=1e-9)
    assert mp == pytest.approx(emp, rel=1e-9)
    assert m0 == pytest.approx(em0, rel=1e-6)
    assert m > 1 > m0


def test_power_and_derivative():
    b = BumpFunction(5.0, eps=0.02, theta=0.3)
    z = np.array([1 + 2j, -3 + 0.5j])
    assert np.allclose(b.power(z, 7), b(z) ** 7)
    h = 1e-6
    fd = (b(z + h) - b(z - h)) / (2 * h)
    assert np.allclose(b.derivative(z), fd, rtol=1e-8)


def test_json_round_trip():
    b = BumpFunction(5.0 - 1j, eps=0.02, theta=0.3)
    assert BumpFunction.from_json(b.to_json()) == b
