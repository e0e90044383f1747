import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entcurves.errors import InvariantError
from entcurves.geometry import (
    ConstantForm,
    Lattice,
    TargetCurrent,
    affine_current_pairing,
    chordal_distance,
    fs_distance,
    projective_distance,
    spectral_decompose,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
complexes = st.builds(complex, finite, finite)


def random_target(rng, n):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = X @ X.conj().T
    return TargetCurrent(H / np.trace(H).real)


def test_square_lattice_covolume_and_periods():
    lat = Lattice.square()
    assert lat.n == 1
    assert lat.covolume == pytest.approx(1.0)
    assert lat.periods == (1 + 0j, 1j)


def test_dependent_generators_rejected():
    with pytest.raises(InvariantError):
        Lattice.from_periods(1, 2)
    with pytest.raises(InvariantError):
        Lattice([[1.0], [1j], [2.0]])


@given(complexes)
def test_reduce_lands_in_fundamental_domain(z):
    lat = Lattice.from_periods(1, 0.3 + 1.1j)
    w = lat.reduce(z)
    c = lat.coordinates(w)
    assert np.all(c >= -1e-12) and np.all(c < 1)
    assert lat.distance(w, z) < 1e-9


def test_generators_reduce_to_zero():
    lat = Lattice.from_periods(1, 0.3 + 1.1j)
    assert lat.reduce(1.0) == 0
    assert lat.reduce(0.3 + 1.1j) == 0
    assert lat.reduce(-3 + 2 * (0.3 + 1.1j)) == pytest.approx(0)


@given(complexes, complexes)
def test_distance_is_symmetric_and_periodic(a, b):
    lat = Lattice.square()
    d = lat.distance(a, b)
    assert d == pytest.approx(lat.distance(b, a), abs=1e-9)
    assert d == pytest.approx(lat.distance(a + 3 - 2j, b), abs=1e-9)
    assert d <= math.sqrt(2) / 2 + 1e-12


def test_rank_four_lattice_reduce():
    lat = Lattice([[1, 0], [1j, 0], [0, 1], [0, 1j]])
    w = lat.reduce(np.array([2.5 - 1.25j, -0.5 + 3j]))
    assert np.allclose(w, [0.5 + 0.75j, 0.5 + 0j])


def test_lattice_json_round_trip():
    lat = Lattice.from_periods(1, 0.3 + 1.1j)
    assert Lattice.from_json(lat.to_json()).generators == lat.generators


def test_target_validation():
    with pytest.raises(InvariantError):
        TargetCurrent(np.diag([1.0, 1.0]))
    with pytest.raises(InvariantError):
        TargetCurrent(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(InvariantError):
        TargetCurrent(np.diag([1.5, -0.5]))


def test_spectral_decomposition_of_diagonal_target():
    dec = spectral_decompose(TargetCurrent(np.diag([0.25, 0.75])))
    assert dec.betas == pytest.approx((0.75, 0.25))
    assert np.allclose(dec.directions[0], (0, 1))


def test_spectral_decomposition_canonical_phase():
    v = np.array([1, 1j]) / math.sqrt(2)
    dec = spectral_decompose(TargetCurrent.rank_one(v * np.exp(0.7j)))
    assert dec.betas[0] == pytest.approx(1.0)
    first = dec.directions[0][0]
    assert first.imag == 0 and first.real > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_spectral_reconstruction(n, seed):
    target = random_target(np.random.default_rng(seed), n)
    dec = spectral_decompose(target)
    assert np.max(np.abs(dec.matrix() - target.H)) < 1e-10
    assert abs(sum(dec.betas) - 1) < 1e-12
    assert list(dec.betas) == sorted(dec.betas, reverse=True)
    for v in dec.directions:
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_affine_pairing_with_kahler_form_is_one():
    v = np.array([1 + 2j, -0.5j, 3.0])
    assert affine_current_pairing(v, ConstantForm.kahler(3)) == pytest.approx(1.0)


@given(complexes.filter(lambda c: abs(c) > 1e-3))
def test_affine_pairing_depends_only_on_the_line(scale):
    v = np.array([1 - 1j, 2j])
    xi = ConstantForm(np.array([[1, 2j], [0.5, -1]]))
    assert affine_current_pairing(scale * v, xi) == pytest.approx(affine_current_pairing(v, xi))


def test_cp1_distances():
    assert chordal_distance(0, None) == 1.0
    assert fs_distance(0, None) == pytest.approx(math.pi / 2)
    assert fs_distance(1, -1) == pytest.approx(math.pi / 2)
    assert fs_distance(2 + 1j, 2 + 1j) == 0.0


@given(complexes, complexes)
def test_fs_distance_inversion_invariant(p, q):
    if p == 0 or q == 0:
        return
    assert fs_distance(p, q) == pytest.approx(fs_distance(1 / p, 1 / q), abs=1e-9)


def test_projective_distance():
    assert projective_distance([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-7)
    assert projective_distance([1, 0], [0, 3]) == pytest.approx(math.pi / 2)
    with pytest.raises(InvariantError):
        projective_distance([0, 0], [1, 0])
