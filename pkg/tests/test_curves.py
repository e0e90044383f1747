import json
import math
from dataclasses import replace

import numpy as np
import pytest

from entcurves.bumps import BumpFunction
from entcurves.curves import (
    ProductCurveExpr,
    ProductStage,
    TorusCurveExpr,
    TorusStage,
    TorusTerm,
    affine_curve,
    curve_from_json,
    sup_norm_difference,
)
from entcurves.errors import InvariantError, TermOverflowError
from entcurves.geometry import Lattice
from entcurves.polynomials import Polynomial


def torus_curve(alpha=64, R=8.0):
    eps = 0.9 / (2 * R * R)
    b1 = BumpFunction.centered_at(R + 0j, R + 0j, eps)
    b2 = BumpFunction.centered_at(-R + 0j, R + 0j, eps)
    v = (1 / math.sqrt(2), 1j / math.sqrt(2))
    terms = (TorusTerm(0.75, b1, (1 + 0j, 0j)), TorusTerm(0.25, b2, v))
    base = (Polynomial((0.5, 1.0)), Polynomial((0, 0, 0.25j)))
    return TorusCurveExpr(n=2, base=base, stages=(TorusStage(R, alpha, terms),))


def product_curve(alpha=64):
    stage = ProductStage(16.0, 0.25, alpha, Polynomial((0.1, 0.2j, 0.01)), Polynomial((0, -0.3)),
                         ((0.5, BumpFunction.centered_at(16j, 16 + 0j, 0.9 / 512)),),
                         ((0.75, BumpFunction.centered_at(-16j, 16 + 0j, 0.9 / 512)),))
    return ProductCurveExpr(Lattice.square(), stages=(stage,))


def relative_fd_error(curve, z, h=1e-6):
    exact = curve.eval_derivative(z)
    fd = (curve.eval(z + h) - curve.eval(z - h)) / (2 * h)
    return np.linalg.norm(exact - fd, axis=0) / np.linalg.norm(exact, axis=0)


def random_disc_points(rng, R, count=100):
    r = R * np.sqrt(rng.uniform(size=count))
    return r * np.exp(2j * np.pi * rng.uniform(size=count))


def test_no_stages_gives_the_base_curve():
    c = TorusCurveExpr(n=2, base=(Polynomial((1, 2)), Polynomial((0, 0, 3))))
    z = np.array([0.5, 1j])
    assert np.allclose(c.eval(z), [1 + 2 * z, 3 * z * z])


def test_single_term_increment_is_a_bump_power():
    R, alpha = 8.0, 16
    b = BumpFunction.centered_at(R + 0j, R + 0j, 0.01)
    c = TorusCurveExpr(n=2, stages=(TorusStage(R, alpha, (TorusTerm(1.0, b, (1 + 0j, 0j)),)),))
    z = np.array([1 + 1j, 7.5, -3j])
    inc = c.stage_increment(z, 1)
    assert np.allclose(inc[0], b(z) ** alpha / alpha, rtol=1e-12)
    assert np.all(inc[1] == 0)


@pytest.mark.parametrize("make", [torus_curve, product_curve])
def test_derivative_matches_finite_differences(make):
    c = make()
    z = random_disc_points(np.random.default_rng(7), c.stages[-1].R)
    assert np.max(relative_fd_error(c, z)) < 1e-6


@pytest.mark.parametrize("make", [torus_curve, product_curve])
def test_json_round_trip_is_bitwise(make):
    c = make()
    again = curve_from_json(json.loads(json.dumps(c.to_json())))
    z = random_disc_points(np.random.default_rng(3), 10.0, 50)
    assert np.array_equal(c.eval(z), again.eval(z))
    assert np.array_equal(c.eval_derivative(z), again.eval_derivative(z))
    assert again.to_json() == c.to_json()


def test_eval_component_matches_full_evaluation():
    c = torus_curve()
    z = np.array([1 + 1j, -4.0])
    full = c.eval(z)
    for k in range(2):
        assert np.allclose(c.eval_component(z, k), full[k])


def test_overflow_names_the_term():
    c = torus_curve(alpha=2**20)
    with pytest.raises(TermOverflowError) as info:
        c.eval(np.array([8.0]))
    assert info.value.term


def test_shift_rescales():
    c = torus_curve(alpha=256)
    z = np.array([7.9, 3j])
    assert np.allclose(c.eval(z, shift=5.0), c.eval(z) * math.exp(-5.0))


def test_invariants_enforced():
    b = BumpFunction.centered_at(8 + 0j, 8 + 0j, 0.01)
    with pytest.raises(InvariantError):
        TorusCurveExpr(n=2, stages=(TorusStage(8.0, 4, (TorusTerm(0.5, b, (1 + 0j, 0j)),)),))
    with pytest.raises(InvariantError):
        TorusCurveExpr(n=2, stages=(TorusStage(8.0, 4, (TorusTerm(1.0, b, (1 + 0j, 1 + 0j)),)),))
    with pytest.raises(InvariantError):
        TorusCurveExpr(n=2, stages=(TorusStage(9.0, 4, (TorusTerm(1.0, b, (1 + 0j, 0j)),)),))
    near = BumpFunction.centered_at(8 * np.exp(0.1j), 8 + 0j, 0.01)
    terms = (TorusTerm(0.5, b, (1 + 0j, 0j)), TorusTerm(0.5, near, (0j, 1 + 0j)))
    with pytest.raises(InvariantError):
        TorusCurveExpr(n=2, stages=(TorusStage(8.0, 4, terms),))


def test_product_invariants():
    good = product_curve().stages[0]
    with pytest.raises(InvariantError):
        ProductCurveExpr(Lattice.square(), stages=(replace(good, delta=0.6),))
    with pytest.raises(InvariantError):
        ProductCurveExpr(Lattice.square(), stages=(replace(good, R=12.0),))


def test_truncated_and_with_stage():
    c = torus_curve()
    assert c.truncated(0).depth == 0
    assert c.truncated(0).with_stage(c.stages[0]).to_json() == c.to_json()


def test_affine_curve():
    c = affine_curve([1, 2j], [0.5, 0])
    assert np.allclose(c.eval(np.array([2.0]))[:, 0], [2.5, 4j])


def test_sup_norm_difference_of_single_term():
    R, alpha = 8.0, 8
    b = BumpFunction.centered_at(R + 0j, R + 0j, 0.01)
    c = TorusCurveExpr(n=1, stages=(TorusStage(R, alpha, (TorusTerm(1.0, b, (1 + 0j,)),)),))
    value, err = sup_norm_difference(c, 1, 4.0, with_error=True)
    # the bump power peaks on the positive real axis
    assert value == pytest.approx(abs(b(4.0)) ** alpha / alpha, rel=1e-9)
    assert err >= 0


def test_pointwise_shift_resolves_underflow_and_overflow():
    c = torus_curve(alpha=4096)
    c = TorusCurveExpr(n=2, stages=c.stages)
    z = np.array([0j, 4j, 7.9])
    with np.errstate(under="ignore"):
        assert np.all(c.eval(z)[:, :2] == 0)
    s = c.pointwise_log_scale(z)
    scaled = c.eval(z, shift=s)
    norms = np.max(np.abs(scaled), axis=0)
    # two terms, each at most 1 after the shift
    assert np.all(norms > 1e-3) and np.all(norms <= 2)
    # a scalar shift of zero is the plain evaluation
    assert np.array_equal(c.eval(z, shift=0.0), c.eval(z))
