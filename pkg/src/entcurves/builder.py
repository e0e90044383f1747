"""Stage-by-stage construction of entire curves with certified stage reports.

A torus stage adds bump powers along the eigen-directions of a target
matrix; a shape stage corrects the previous curve by Runge polynomials and
adds bump powers that concentrate area over prescribed fibers of CP^1 x E.
The exponent ``alpha`` climbs a doubling ladder until every stage check
passes with a margin larger than its numerical error.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import (
    CurrentReport,
    ShapeSpec,
    product_data,
    reports_from_data,
    torus_data,
)
from .bumps import BumpFunction, bump_extrema
from .curves import (
    ProductCurveExpr,
    ProductStage,
    TorusCurveExpr,
    TorusStage,
    TorusTerm,
    curve_from_json,
    sup_norm_difference,
)
from .errors import EntCurvesError, InfeasibleError, InvariantError, TermOverflowError
from .geometry import Lattice, TargetCurrent, fs_distance_array, projective_distance, spectral_decompose
from .polynomials import Polynomial, RungeTarget, multi_disc_runge
from .weierstrass import FSCohomology, WeierstrassP, fs_cohomology

log = logging.getLogger(__name__)

STAGE_SCHEMA = "stage-report/1"
CONFIG_SCHEMA = "build-config/1"
SCHEDULE_SCHEMA = "schedule/1"


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class BuildConfig:
    """Numerical parameters of a build.

    Attributes
    ----------
    tol : float
        Relative quadrature tolerance, in ``(0, 0.1]``.
    alpha_cap : int
        Largest exponent tried on the doubling ladder.
    eps0 : float
        Perturbation budget before the first stage.
    eps_safety : float
        Divisor applied to the measured stability bound.
    perturbations : int
        Number of random polynomial perturbations per stability test.
    perturbation_degree : int
        Degree of those polynomials.
    bisection_steps : int
        Geometric bisection steps after the first passing budget.
    bump_eps_factor : float
        Bumps use ``eps = bump_eps_factor / (2 R^2)``.
    torus_R0 : float or None
        Starting radius of torus builds; ``None`` means ``2 n``.
    product_R0 : float
        Starting radius of shape builds.
    margin_factor : float
        A passing check whose margin is below this many errors is re-measured
        at a quarter of the tolerance.
    tail_check : bool
        Measure the torus length-area ratio at twice the accepted exponent.
    """

    tol: float = 1e-4
    alpha_cap: int = 2**20
    alpha_start: int = 2
    eps0: float = 1.0
    eps_safety: float = 2.0
    seed: int = 0
    workers: int | None = None
    perturbations: int = 4
    perturbation_degree: int = 3
    bisection_steps: int = 2
    bump_eps_factor: float = 0.9
    torus_R0: float | None = None
    product_R0: float = 8.0
    margin_factor: float = 5.0
    tail_check: bool = True

    def __post_init__(self):
        if not (0.0 < self.tol <= 0.1):
            raise InvariantError("tolerance must lie in (0, 0.1]")
        if self.alpha_start < 1 or self.alpha_cap < self.alpha_start:
            raise InvariantError("alpha ladder must start at a positive integer below the cap")
        if self.workers is not None and self.workers < 1:
            raise InvariantError("workers must be at least 1")
        if not self.eps0 > 0 or not self.eps_safety >= 1.0:
            raise InvariantError("eps0 must be positive and the safety factor at least 1")
        if self.perturbations < 0 or self.perturbation_degree < 0 or self.bisection_steps < 0:
            raise InvariantError("perturbation settings must be nonnegative")
        if not 0.0 < self.bump_eps_factor < 1.0:
            raise InvariantError("bump eps factor must lie in (0, 1)")
        if self.torus_R0 is not None and not self.torus_R0 > 0:
            raise InvariantError("starting radius must be positive")
        if not self.product_R0 > 2:
            raise InvariantError("shape builds need a starting radius above 2")

    def to_json(self) -> dict:
        return {"schema": CONFIG_SCHEMA, **asdict(self)}

    @classmethod
    def from_json(cls, d: dict) -> "BuildConfig":
        d = {k: v for k, v in d.items() if k != "schema"}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvariantError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**d)

    def torus_start(self, n: int) -> float:
        return float(2 * n) if self.torus_R0 is None else float(self.torus_R0)


def bump_eps(R: float, factor: float = 0.9) -> float:
    """Bump offset keeping ``|phi| < 1`` off the unit disc at the centre."""
    return factor / (2.0 * R * R)


def choose_circle_points(R: float, count: int) -> list[complex]:
    """``count`` equally spaced points on ``|z| = R`` starting at angle 0.

    Raises
    ------
    InvariantError
        If the unit discs around the points cannot be pairwise disjoint.
    """
    if count < 1:
        raise InvariantError("need at least one point")
    if not R > 0:
        raise InvariantError("radius must be positive")
    if count > 1 and 2.0 * R * math.sin(math.pi / count) <= 2.0:
        raise InvariantError(f"{count} disjoint unit discs do not fit on the circle of radius {R}")
    return [complex(R * math.cos(2 * math.pi * k / count), R * math.sin(2 * math.pi * k / count))
            if k else complex(R, 0.0) for k in range(count)]


# -- checks and reports ------------------------------------------------------


@dataclass(frozen=True)
class Check:
    """One stage inequality ``value < threshold`` (or ``value >= threshold`` when ``lower``)."""

    name: str
    value: float
    error: float
    threshold: float
    lower: bool = False

    @property
    def margin(self) -> float:
        return self.value - self.threshold if self.lower else self.threshold - self.value

    @property
    def passed(self) -> bool:
        if self.lower and self.error == 0.0:
            return self.margin >= 0.0
        return bool(self.margin > self.error)

    def marginal(self, factor: float) -> bool:
        return self.passed and self.error > 0 and self.margin < factor * self.error

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value, "error": self.error, "threshold": self.threshold,
                "sense": ">=" if self.lower else "<", "margin": self.margin, "passed": self.passed}

    @classmethod
    def from_json(cls, d: dict) -> "Check":
        return cls(d["name"], float(d["value"]), float(d["error"]), float(d["threshold"]), d["sense"] == ">=")


@dataclass
class Measurement:
    checks: list[Check]
    ahlfors: CurrentReport | None = None
    nevanlinna: CurrentReport | None = None
    sup_norm: float = 0.0
    extra: dict = field(default_factory=dict)
    complete: bool = True
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return self.complete and all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def log_area(self) -> float | None:
        return None if self.ahlfors is None else self.ahlfors.log_normalizer

    def row(self, alpha: int) -> dict:
        return {"alpha": alpha, "log_area": self.log_area(), "passed": self.passed,
                "failing": self.failing(), "values": {c.name: c.value for c in self.checks}}


@dataclass
class StageReport:
    """Certified outcome of one stage."""

    kind: str
    t: int
    target_index: int
    alpha: int
    R: float
    R_prev: float
    eps_prev: float
    eps: float
    points: list[complex]
    extrema: dict
    checks: list[Check]
    ahlfors: CurrentReport
    nevanlinna: CurrentReport
    sup_norm: float
    tol: float
    trajectory: list[dict]
    parameters: dict
    stability: dict
    tail: dict | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "schema": STAGE_SCHEMA, "kind": self.kind, "t": self.t, "target_index": self.target_index,
            "alpha": self.alpha, "R": self.R, "R_prev": self.R_prev, "eps_prev": self.eps_prev,
            "eps": self.eps, "points": [[p.real, p.imag] for p in self.points], "extrema": self.extrema,
            "checks": [c.to_json() for c in self.checks], "passed": self.passed,
            "ahlfors": self.ahlfors.to_json(), "nevanlinna": self.nevanlinna.to_json(),
            "sup_norm": self.sup_norm, "tol": self.tol, "trajectory": self.trajectory,
            "parameters": self.parameters, "stability": self.stability, "tail": self.tail,
        }

    def summary_row(self) -> dict:
        row = {"t": self.t, "kind": self.kind, "target": self.target_index, "alpha": self.alpha,
               "R": self.R, "eps": self.eps, "sup_norm": self.sup_norm, "passed": self.passed}
        for c in self.checks:
            row[c.name] = c.value
            row[c.name + "_margin"] = c.margin
        return row


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


# -- shared ladder machinery -------------------------------------------------


def _refined(measure: Callable[..., Measurement], curve, tol: float, config: BuildConfig) -> Measurement:
    m = measure(curve, tol=tol)
    if m.passed and any(c.marginal(config.margin_factor) for c in m.checks):
        m = measure(curve, tol=tol / 4)
    return m


def _ladder(make: Callable[[int], object], measure, config: BuildConfig, label: str):
    trajectory = []
    alpha = config.alpha_start
    while alpha <= config.alpha_cap:
        try:
            curve = make(alpha)
            m = _refined(measure, curve, config.tol, config)
        except TermOverflowError as exc:
            trajectory.append({"alpha": alpha, "log_area": None, "passed": False,
                               "failing": ["overflow"], "values": {}, "message": str(exc)})
            raise InfeasibleError(f"{label}: {exc}", trajectory) from exc
        trajectory.append(m.row(alpha))
        log.info("%s alpha=%d failing=%s", label, alpha, m.failing())
        if m.passed:
            return alpha, curve, m, trajectory
        alpha *= 2
    last = trajectory[-1]["failing"] if trajectory else []
    raise InfeasibleError(f"{label}: alpha cap {config.alpha_cap} reached; still failing {last}", trajectory)


def _random_perturbation(rng: np.random.Generator, ncomp: int, radius: float, degree: int) -> list[Polynomial]:
    """Random polynomials whose vector sup-norm on the circle of ``radius`` is 1."""
    coeffs = rng.standard_normal((ncomp, degree + 1)) + 1j * rng.standard_normal((ncomp, degree + 1))
    polys = [Polynomial(tuple(c), radius) for c in coeffs]
    z = radius * np.exp(2j * np.pi * np.arange(2048) / 2048)
    vals = np.array([p(z) for p in polys])
    # a degree-d polynomial sampled at 2048 > 8 d points loses at most a few percent of its sup
    sup = float(np.max(np.sqrt(np.sum(np.abs(vals) ** 2, axis=0)))) * 1.05
    return [Polynomial(tuple(np.asarray(p.coeffs) / sup), radius) for p in polys]


def _scaled(polys: Sequence[Polynomial], eps: float) -> list[Polynomial]:
    return [Polynomial(tuple(np.asarray(p.coeffs) * eps), p.scale) for p in polys]


def stability_budget(curve, measure, eps_prev: float, t: int, config: BuildConfig) -> tuple[float, dict]:
    """Perturbation budget ``eps_t`` under which every stage check still holds with doubled slack.

    ``measure(curve, slack=2)`` must return a :class:`Measurement`.  Each
    candidate budget is tested on ``config.perturbations`` random polynomial
    perturbations of that sup-norm on the disc of radius ``R_t + 1``.
    """
    R = curve.stages[-1].R
    rng = np.random.default_rng([config.seed, t])
    shapes = [_random_perturbation(rng, curve.ncomp, R + 1.0, config.perturbation_degree)
              for _ in range(config.perturbations)]
    tried: list[dict] = []

    def ok(eps: float) -> bool:
        for k, polys in enumerate(shapes):
            m = measure(curve.perturbed(_scaled(polys, eps)), slack=2.0)
            if not m.passed:
                tried.append({"eps": eps, "passed": False, "perturbation": k, "failing": m.failing()})
                return False
        tried.append({"eps": eps, "passed": True})
        return True

    upper = eps_prev / 2.0
    cand = upper
    if ok(cand):
        bound = cand
    else:
        hi = cand
        while True:
            cand /= 2.0
            if cand < 1e-300:
                raise InfeasibleError(f"stage {t}: no stability budget above 1e-300", tried)
            if ok(cand):
                break
            hi = cand
        lo = cand
        for _ in range(config.bisection_steps):
            mid = math.sqrt(lo * hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        bound = lo
    eps = min(upper, bound) / config.eps_safety
    return eps, {"bound": bound, "tested": tried, "perturbations": config.perturbations,
                 "degree": config.perturbation_degree, "safety": config.eps_safety}


# -- torus stages ------------------------------------------------------------


def _torus_measure(curve: TorusCurveExpr, t: int, H: np.ndarray, eps_prev: float, R_prev: float, *,
                   tol: float, slack: float = 1.0, workers: int | None = None,
                   early_exit: bool = False) -> Measurement:
    thr = 2.0**-t * slack
    sup, sup_err = sup_norm_difference(curve, t, R_prev + 1.0, with_error=True)
    checks = [Check("sup_norm", sup, sup_err, thr * eps_prev)]
    if early_exit and not checks[0].passed:
        return Measurement(checks, sup_norm=sup, complete=False)
    R = curve.stages[-1].R
    data = torus_data(curve, R, tol, workers=workers)
    a, nv = reports_from_data(data)
    for rep in (a, nv):
        checks.append(Check(f"length_area_{rep.kind}", rep.length_ratio, rep.length_ratio_error, thr))
    for rep in (a, nv):
        # normalized pairing equals -2i H_hat, so its entrywise distance to -2i H is 2 |H_hat - H|
        err = 2.0 * float(np.max(np.abs(rep.H_hat - H)))
        checks.append(Check(f"pairing_{rep.kind}", err, 2.0 * rep.H_hat_error, thr))
    return Measurement(checks, a, nv, sup, {"converged": data.converged, "evaluations": data.evaluations},
                       tol=tol)


def _log_sup_derivative(curve, R: float, corrections: Sequence[Polynomial] = (),
                        samples: int = 4096) -> float | None:
    """``log`` of the largest coordinate derivative of ``curve + corrections`` on the disc of radius ``R``.

    ``None`` when the derivative vanishes identically.
    """
    S = curve.derivative_log_scale(R)
    z = R * np.exp(2j * np.pi * np.arange(samples) / samples)
    d = curve.eval_derivative(z, shift=S)
    for k, p in enumerate(corrections):
        d[k] += p.derivative(z) * math.exp(-S)
    top = float(np.max(np.abs(d)))
    return math.log(top) + S if top > 0 else None


def torus_stage(curve: TorusCurveExpr, eps_prev: float, target: TargetCurrent, config: BuildConfig,
                *, target_index: int = 0) -> tuple[TorusCurveExpr, StageReport]:
    """Add one torus stage aimed at ``target`` and certify it."""
    if target.n != curve.n:
        raise InvariantError("target dimension does not match the curve")
    t = curve.depth + 1
    R_prev = curve.stages[-1].R if curve.stages else config.torus_start(curve.n)
    R = 2.0 * R_prev
    dec = spectral_decompose(target)
    points = choose_circle_points(R, curve.n)
    eps_b = bump_eps(R, config.bump_eps_factor)
    bumps = [BumpFunction.centered_at(p, complex(R, 0.0), eps_b) for p in points]
    m, m_prime, m0 = bump_extrema(bumps[0], R)
    betas = np.clip(np.array(dec.betas), 0.0, None)
    betas = betas / betas.sum()
    terms = tuple(TorusTerm(float(b), bump, tuple(v)) for b, bump, v in zip(betas, bumps, dec.directions))
    H = np.asarray(target.H)

    def make(alpha: int) -> TorusCurveExpr:
        return curve.with_stage(TorusStage(R, alpha, terms))

    def measure(c, tol=config.tol, slack=1.0, early_exit=False):
        return _torus_measure(c, t, H, eps_prev, R_prev, tol=tol, slack=slack, workers=config.workers,
                              early_exit=early_exit)

    alpha, new, meas, trajectory = _ladder(make, measure, config, f"torus stage {t}")
    tail = None
    if config.tail_check:
        tm = measure(make(2 * alpha), tol=meas.tol)
        tail = {"alpha": 2 * alpha, "length_area_ahlfors": tm.ahlfors.length_ratio,
                "length_area_ahlfors_error": tm.ahlfors.length_ratio_error,
                "decreased": tm.ahlfors.length_ratio < meas.ahlfors.length_ratio}
    tol_used = meas.tol
    eps, stab = stability_budget(new, lambda c, slack: measure(c, tol=tol_used, slack=slack, early_exit=True),
                                 eps_prev, t, config)
    new = replace(new, stages=new.stages[:-1] + (replace(new.stages[-1], eps_budget=eps),))
    report = StageReport(
        kind="torus", t=t, target_index=target_index, alpha=alpha, R=R, R_prev=R_prev, eps_prev=eps_prev,
        eps=eps, points=points,
        extrema={"m": m, "m_prime": m_prime, "m0": m0, "log_M": _log_sup_derivative(curve, R),
                 "bump_eps": eps_b},
        checks=meas.checks, ahlfors=meas.ahlfors, nevanlinna=meas.nevanlinna, sup_norm=meas.sup_norm,
        tol=tol_used, trajectory=trajectory,
        parameters={"betas": betas.tolist(), "directions": _jsonable([list(v) for v in dec.directions]),
                    "target": target.to_json()},
        stability=stab, tail=tail,
    )
    return new, report


# -- shape stages ------------------------------------------------------------


@dataclass
class ShapeContext:
    """Per-lattice data reused across shape stages."""

    lattice: Lattice
    W: WeierstrassP
    coh: FSCohomology

    @classmethod
    def for_lattice(cls, lattice: Lattice) -> "ShapeContext":
        key = tuple(complex(w) for w in lattice.periods)
        if key not in _CONTEXTS:
            W = WeierstrassP(lattice)
            _CONTEXTS[key] = cls(lattice, W, fs_cohomology(W))
        return _CONTEXTS[key]


_CONTEXTS: dict = {}


def wp_preimage(W: WeierstrassP, x: complex, *, iterations: int = 100) -> complex:
    """A point ``z`` with ``wp(z) = x``, by Newton iteration from the best grid start."""
    grid = W.fundamental_grid(24, centered=True)
    grid = grid[np.abs(grid) > 1e-3]
    vals = W.wp(grid)
    z = complex(grid[int(np.argmin(fs_distance_array(vals, x)))])
    for _ in range(iterations):
        v, d = W.evaluate(np.array([z]))
        v, d = complex(v[0]), complex(d[0])
        if d == 0:
            break
        step = (v - x) / d
        z -= step
        if abs(step) < 1e-15 * max(1.0, abs(z)):
            break
    if fs_distance_array(W.wp(np.array([z])), x)[0] > 1e-9:
        raise InvariantError(f"no preimage of {x} under wp found")
    return z


def _nearest_lift(lattice: Lattice, anchor: complex, candidates: Sequence[complex]) -> complex:
    best = None
    for w in candidates:
        lift = anchor - complex(lattice.reduce_centered(anchor - w))
        if best is None or abs(lift - anchor) < abs(best - anchor):
            best = lift
    return best


def _disc_samples(center: complex, radius: float = 1.0, rings: int = 8, per_ring: int = 256) -> np.ndarray:
    r = radius * np.arange(1, rings + 1) / rings
    th = 2 * np.pi * np.arange(per_ring) / per_ring
    return np.concatenate([[center], (center + r[:, None] * np.exp(1j * th)[None]).ravel()])


def _inclusion(curve: ProductCurveExpr, shape: ShapeSpec, x_centers, y_centers, W: WeierstrassP) -> tuple[float, float]:
    """Largest sampled distances of the bump-disc images to their fibers (x discs, y discs)."""
    dx = 0.0
    for c, x in zip(x_centers, shape.x_points):
        g = curve.eval_component(_disc_samples(c), 0)
        _, u = W._reduce(g)
        if np.any(np.abs(u) < 1e-8):
            return math.inf, math.inf
        dx = max(dx, float(np.max(fs_distance_array(W.wp(g), x))))
    dy = 0.0
    for c, y in zip(y_centers, shape.y_points):
        h = curve.eval_component(_disc_samples(c), 1)
        dy = max(dy, float(np.max(np.abs(shape.lattice.reduce_centered(h - y)))))
    return dx, dy


def _shape_measure(curve: ProductCurveExpr, t: int, shape: ShapeSpec, delta: float, eps_prev: float,
                   R_prev: float, x_centers, y_centers, ctx: ShapeContext, params: dict, *, tol: float,
                   slack: float = 1.0, workers: int | None = None, fs_mode: str = "bracket",
                   early_exit: bool = False) -> Measurement:
    thr = 2.0**-t * slack
    alpha = curve.stages[-1].alpha
    sup, sup_err = sup_norm_difference(curve, t, R_prev + 1.0, with_error=True)
    checks = [Check("sup_norm", sup, sup_err, thr * eps_prev)]
    dx, dy = _inclusion(curve, shape, x_centers, y_centers, ctx.W)
    if shape.P:
        checks.append(Check("inclusion_x", dx, 0.0, 2 * delta * slack))
    if shape.Q:
        checks.append(Check("inclusion_y", dy, 0.0, 2 * delta * slack))
    if shape.P:
        checks.append(Check("p_alpha", max(params["p"]) * alpha, 0.0, 1.0, lower=True))
    if shape.Q:
        checks.append(Check("q_alpha", max(params["q"]) * alpha, 0.0, 1.0, lower=True))
    if early_exit and not all(c.passed for c in checks):
        return Measurement(checks, sup_norm=sup, complete=False)
    R = curve.stages[-1].R
    data = product_data(curve, R, tol, shape=shape, delta=delta, coh=ctx.coh, W=ctx.W, fs_mode=fs_mode,
                        x_discs=x_centers, y_discs=y_centers, workers=workers)
    a, nv = reports_from_data(data)
    for rep in (a, nv):
        checks.append(Check(f"length_area_{rep.kind}", rep.length_ratio, rep.length_ratio_error, thr))
    for rep in (a, nv):
        checks.append(Check(f"complement_{rep.kind}", rep.complement, rep.complement_error, thr))
    weights = shape.weights
    for rep in (a, nv):
        mv = np.clip(rep.masses, 1e-300, None)
        dist = projective_distance(mv, weights)
        err = min(math.pi / 2, float(np.linalg.norm(rep.mass_errors) / np.linalg.norm(mv)))
        checks.append(Check(f"projective_{rep.kind}", dist, err, thr))
    return Measurement(checks, a, nv, sup, {"converged": data.converged, "evaluations": data.evaluations,
                                            "fs_mode": data.fs_mode, "inclusion": [dx, dy]}, tol=tol)


def shape_stage(curve: ProductCurveExpr, eps_prev: float, shape: ShapeSpec, config: BuildConfig, *,
                target_index: int = 0, future_centers: Sequence[complex] | None = None,
                ctx: ShapeContext | None = None) -> tuple[ProductCurveExpr, StageReport]:
    """Add one shape stage aimed at ``shape`` and certify it.

    ``future_centers`` are the bump-disc centres of the next stage; the Runge
    corrections are kept bounded there so the next stage stays solvable.
    """
    if shape.lattice != curve.lattice:
        raise InvariantError("shape and curve live on different elliptic curves")
    ctx = ShapeContext.for_lattice(curve.lattice) if ctx is None else ctx
    t = curve.depth + 1
    R_prev = curve.last_radius
    count = shape.P + shape.Q
    R = float(max(2.0 * R_prev, count))
    points = choose_circle_points(R, count)
    x_centers, y_centers = points[:shape.P], points[shape.P:]
    d = shape.min_separation()
    delta = min(2.0**-t, d / 7.0) / 2.0
    c = ctx.coh.c
    root = [math.sqrt(a) for a in shape.A] + [math.sqrt(b / c) for b in shape.B]
    c_prime = 0.5 / max(root)
    p = [c_prime * math.sqrt(a) for a in shape.A]
    q = [c_prime * math.sqrt(b / c) for b in shape.B]
    if max(p + q) * config.alpha_cap < 1.0:
        raise InfeasibleError(f"shape stage {t}: weights too small for the alpha cap")

    # Runge corrections g*, h*
    L = ctx.coh.lipschitz
    chase = eps_prev * 2.0 ** (-t - 2)
    tol_gx = 0.5 * delta / L
    tol_hy = 0.5 * delta
    future = [] if future_centers is None else list(future_centers)
    g_prev = lambda z: curve.eval_component(z, 0)
    h_prev = lambda z: curve.eval_component(z, 1)
    zx = [wp_preimage(ctx.W, x) for x in shape.x_points]
    gx = [complex(g_prev(np.array([cc]))[0]) for cc in x_centers]
    hy = [complex(h_prev(np.array([cc]))[0]) for cc in y_centers]
    x_lifts = [_nearest_lift(curve.lattice, a, (z, -z)) for a, z in zip(gx, zx)]
    y_lifts = [_nearest_lift(curve.lattice, a, (y,)) for a, y in zip(hy, shape.y_points)]
    keep = [RungeTarget(cc, 1.0, None, 1.0) for cc in future]
    g_targets = ([RungeTarget(cc, 1.0, v, tol_gx) for cc, v in zip(x_centers, x_lifts)]
                 + [RungeTarget(cc, 1.0, None, 1.0) for cc in y_centers] + keep)
    h_targets = ([RungeTarget(cc, 1.0, v, tol_hy) for cc, v in zip(y_centers, y_lifts)]
                 + [RungeTarget(cc, 1.0, None, 1.0) for cc in x_centers] + keep)
    try:
        rg = multi_disc_runge(g_prev, R_prev + 1.0, g_targets, tol_gx,
                              base_tol=0.5 * min(chase, delta / L))
        rh = multi_disc_runge(h_prev, R_prev + 1.0, h_targets, tol_hy, base_tol=0.5 * min(chase, delta))
    except EntCurvesError as exc:
        raise InfeasibleError(f"shape stage {t}: Runge correction failed: {exc}") from exc

    eps_b = bump_eps(R, config.bump_eps_factor)
    base = complex(R, 0.0)
    phi = tuple((pj, BumpFunction.centered_at(cc, base, eps_b)) for pj, cc in zip(p, x_centers))
    psi = tuple((qk, BumpFunction.centered_at(cc, base, eps_b)) for qk, cc in zip(q, y_centers))
    m, m_prime, m0 = bump_extrema(BumpFunction(base, eps_b), R)
    params = {"p": p, "q": q, "c": c, "c_prime": c_prime, "delta": delta, "separation": d,
              "x_lifts": x_lifts, "y_lifts": y_lifts,
              "runge_g": rg.to_json(), "runge_h": rh.to_json(), "swapped": shape.swapped_roles(),
              "shape": shape.to_json()}

    def make(alpha: int) -> ProductCurveExpr:
        return curve.with_stage(ProductStage(R, delta, alpha, rg.correction, rh.correction, psi, phi))

    def measure(cv, tol=config.tol, slack=1.0, early_exit=False):
        return _shape_measure(cv, t, shape, delta, eps_prev, R_prev, x_centers, y_centers, ctx, params,
                              tol=tol, slack=slack, workers=config.workers, early_exit=early_exit)

    alpha, new, meas, trajectory = _ladder(make, measure, config, f"shape stage {t}")
    tol_used = meas.tol
    eps, stab = stability_budget(new, lambda cv, slack: measure(cv, tol=tol_used, slack=slack, early_exit=True),
                                 eps_prev, t, config)
    last = replace(new.stages[-1], eps_budget=eps)
    new = replace(new, stages=new.stages[:-1] + (last,), perturbation=())
    log_M = _log_sup_derivative(curve, R, (rg.correction, rh.correction))
    report = StageReport(
        kind="shape", t=t, target_index=target_index, alpha=alpha, R=R, R_prev=R_prev, eps_prev=eps_prev,
        eps=eps, points=points,
        extrema={"m": m, "m_prime": m_prime, "m0": m0, "log_M": log_M, "bump_eps": eps_b},
        checks=meas.checks, ahlfors=meas.ahlfors, nevanlinna=meas.nevanlinna, sup_norm=meas.sup_norm,
        tol=tol_used, trajectory=trajectory, parameters=_jsonable(params), stability=stab,
    )
    return new, report


# -- schedules and runs ------------------------------------------------------


def _target_to_json(target) -> dict:
    if isinstance(target, TargetCurrent):
        return {"type": "torus", **target.to_json()}
    if isinstance(target, ShapeSpec):
        return {"type": "shape", **target.to_json()}
    raise InvariantError("targets are torus currents or shapes")


def _target_from_json(d: dict):
    kind = d.get("type")
    body = {k: v for k, v in d.items() if k != "type"}
    if kind == "torus":
        return TargetCurrent.from_json(body)
    if kind == "shape":
        return ShapeSpec.from_json(body)
    raise InvariantError(f"unknown target type {kind!r}")


@dataclass(frozen=True)
class Schedule:
    """Targets and the order in which stages visit them (``visit[t - 1]`` indexes ``targets``)."""

    targets: tuple
    visit: tuple[int, ...]

    def __post_init__(self):
        targets = tuple(self.targets)
        visit = tuple(int(v) for v in self.visit)
        if not targets:
            raise InvariantError("a schedule needs at least one target")
        kinds = {type(tg) for tg in targets}
        if len(kinds) != 1 or not kinds <= {TargetCurrent, ShapeSpec}:
            raise InvariantError("all targets must be torus currents or all shapes")
        if isinstance(targets[0], TargetCurrent) and len({tg.n for tg in targets}) != 1:
            raise InvariantError("torus targets must share a dimension")
        if isinstance(targets[0], ShapeSpec) and len({tg.lattice for tg in targets}) != 1:
            raise InvariantError("shape targets must share a lattice")
        if any(not 0 <= v < len(targets) for v in visit):
            raise InvariantError("visit order refers to a missing target")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "visit", visit)

    @classmethod
    def round_robin(cls, targets: Sequence, depth: int) -> "Schedule":
        return cls(tuple(targets), tuple(t % len(targets) for t in range(depth)))

    @property
    def kind(self) -> str:
        return "torus" if isinstance(self.targets[0], TargetCurrent) else "shape"

    def target_index(self, t: int) -> int:
        if not 1 <= t <= len(self.visit):
            raise InvariantError(f"schedule has no entry for stage {t}")
        return self.visit[t - 1]

    def target(self, t: int):
        return self.targets[self.target_index(t)]

    def check_prefix(self, depth: int, min_visits: int = 1) -> None:
        if depth > len(self.visit):
            raise InvariantError(f"schedule lists {len(self.visit)} stages, {depth} requested")
        counts = np.bincount(np.array(self.visit[:depth], dtype=int), minlength=len(self.targets))
        if np.any(counts < min_visits):
            raise InvariantError(f"every target must be visited at least {min_visits} times in {depth} stages")

    def to_json(self) -> dict:
        return {"schema": SCHEDULE_SCHEMA, "targets": [_target_to_json(tg) for tg in self.targets],
                "visit": list(self.visit)}

    @classmethod
    def from_json(cls, d: dict) -> "Schedule":
        try:
            return cls(tuple(_target_from_json(tg) for tg in d["targets"]), tuple(d["visit"]))
        except (KeyError, TypeError) as exc:
            raise InvariantError(f"malformed schedule: {exc}") from exc


def initial_curve(schedule: Schedule, config: BuildConfig):
    if schedule.kind == "torus":
        return TorusCurveExpr(n=schedule.targets[0].n)
    return ProductCurveExpr(lattice=schedule.targets[0].lattice, R0=config.product_R0)


def chain_holds(eps: Sequence[float]) -> bool:
    """``sum_{j >= t} 2^{-j-1} eps_j < eps_t`` for every stage ``t`` of the prefix (1-based)."""
    for t in range(1, len(eps) + 1):
        tail = sum(2.0 ** (-j - 1) * eps[j - 1] for j in range(t, len(eps) + 1))
        if not tail < eps[t - 1]:
            return False
    return True


def _future_centers(schedule: Schedule, t: int, R: float) -> list[complex]:
    if t >= len(schedule.visit):
        return []
    nxt = schedule.target(t + 1)
    count = nxt.P + nxt.Q
    return choose_circle_points(max(2.0 * R, count), count)


def build_stage(curve, eps_prev: float, schedule: Schedule, t: int, config: BuildConfig):
    target = schedule.target(t)
    idx = schedule.target_index(t)
    if schedule.kind == "torus":
        return torus_stage(curve, eps_prev, target, config, target_index=idx)
    R = float(max(2.0 * curve.last_radius, target.P + target.Q))
    return shape_stage(curve, eps_prev, target, config, target_index=idx,
                       future_centers=_future_centers(schedule, t, R))


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _stage_path(run_dir: Path, t: int, what: str) -> Path:
    return run_dir / f"stage_{t:03d}.{what}.json"


def write_summary(run_dir: Path, reports: Sequence[dict]) -> None:
    rows = []
    for rep in reports:
        row = {"t": rep["t"], "kind": rep["kind"], "target": rep["target_index"], "alpha": rep["alpha"],
               "R": rep["R"], "eps": rep["eps"], "sup_norm": rep["sup_norm"], "passed": rep["passed"]}
        for c in rep["checks"]:
            row[c["name"]] = c["value"]
            row[c["name"] + "_margin"] = c["margin"]
        rows.append(row)
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (run_dir / "summary.csv").write_text(buf.getvalue())


def _check_resumable(run_dir: Path, config: BuildConfig, schedule: Schedule) -> None:
    """Refuse to resume a run built from a different configuration or schedule.

    The worker count does not change results, so it may differ.
    """
    cp, sp = run_dir / "config.json", run_dir / "schedule.json"
    if cp.exists():
        old = json.loads(cp.read_text())
        new = config.to_json()
        old.pop("workers", None)
        new.pop("workers", None)
        if json.loads(json.dumps(new)) != old:
            raise InvariantError(f"{run_dir} was built with a different configuration")
    if sp.exists():
        old = json.loads(sp.read_text())
        new = json.loads(json.dumps(schedule.to_json()))
        n = min(len(old.get("visit", [])), len(new["visit"]))
        if old.get("targets") != new["targets"] or old.get("visit", [])[:n] != new["visit"][:n]:
            raise InvariantError(f"{run_dir} was built for a different schedule")


def run_schedule(schedule: Schedule, depth: int, config: BuildConfig, run_dir: str | os.PathLike | None = None,
                 *, resume: bool = True, min_visits: int = 1) -> list[tuple[object, dict]]:
    """Build ``depth`` stages in schedule order, persisting each snapshot and report.

    With ``run_dir`` set, stages already on disk are loaded instead of rebuilt
    when ``resume`` is true.  A failing stage writes its ladder trajectory to
    ``stage_NNN.infeasible.json`` before the error propagates.

    Returns
    -------
    list of (curve, report)
        Curve snapshot after each stage and the stage report as a JSON document.
    """
    if depth < 1:
        raise InvariantError("depth must be at least 1")
    schedule.check_prefix(depth, min_visits)
    out_dir = None if run_dir is None else Path(run_dir)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if resume:
            _check_resumable(out_dir, config, schedule)
        (out_dir / "config.json").write_text(dumps(config.to_json()))
        (out_dir / "schedule.json").write_text(dumps(schedule.to_json()))
    curve = initial_curve(schedule, config)
    eps = config.eps0
    results: list[tuple[object, dict]] = []
    for t in range(1, depth + 1):
        loaded = False
        if out_dir is not None and resume:
            cp, rp = _stage_path(out_dir, t, "curve"), _stage_path(out_dir, t, "report")
            if cp.exists() and rp.exists():
                curve = curve_from_json(json.loads(cp.read_text()))
                doc = json.loads(rp.read_text())
                loaded = True
        if not loaded:
            try:
                curve, report = build_stage(curve, eps, schedule, t, config)
            except InfeasibleError as exc:
                if out_dir is not None:
                    _stage_path(out_dir, t, "infeasible").write_text(dumps(
                        {"t": t, "message": str(exc), "trajectory": _jsonable(exc.trajectory)}))
                raise
            doc = _jsonable(report.to_json())
            if out_dir is not None:
                _stage_path(out_dir, t, "curve").write_text(dumps(curve.to_json()))
                _stage_path(out_dir, t, "report").write_text(dumps(doc))
                stale = _stage_path(out_dir, t, "infeasible")
                if stale.exists():
                    stale.unlink()
        eps = doc["eps"]
        results.append((curve, doc))
        if out_dir is not None:
            write_summary(out_dir, [r for _, r in results])
    eps_list = [r["eps"] for _, r in results]
    if not chain_holds(eps_list):
        raise InvariantError("perturbation budgets violate the chain inequality")
    return results


# -- re-verification ---------------------------------------------------------


def remeasure(curve, report: dict, tol: float | None = None, workers: int | None = None) -> Measurement:
    """Recompute every stage check of ``report`` on the snapshot ``curve`` (truncated to the stage)."""
    t = int(report["t"])
    curve = curve.truncated(t)
    tol = float(report["tol"]) if tol is None else tol
    eps_prev, R_prev = float(report["eps_prev"]), float(report["R_prev"])
    params = report["parameters"]
    if report["kind"] == "torus":
        H = np.asarray(TargetCurrent.from_json(params["target"]).H)
        return _torus_measure(curve, t, H, eps_prev, R_prev, tol=tol, workers=workers)
    shape = ShapeSpec.from_json(params["shape"])
    points = [complex(a, b) for a, b in report["points"]]
    ctx = ShapeContext.for_lattice(curve.lattice)
    delta = curve.stages[t - 1].delta
    return _shape_measure(curve, t, shape, delta, eps_prev, R_prev, points[:shape.P], points[shape.P:],
                          ctx, params, tol=tol, workers=workers)


def verify_stage(curve, report: dict, tol_factor: float = 1.0, workers: int | None = None) -> list[str]:
    """Mismatches between a stored stage report and a fresh measurement of ``curve``."""
    problems = []
    t = int(report["t"])
    if curve.depth < t:
        return [f"stage {t}: snapshot has only {curve.depth} stages"]
    st = curve.stages[t - 1]
    if int(report["alpha"]) != st.alpha:
        problems.append(f"stage {t}: alpha {report['alpha']} in report, {st.alpha} in curve")
    if not math.isclose(float(report["R"]), st.R, rel_tol=1e-12):
        problems.append(f"stage {t}: radius {report['R']} in report, {st.R} in curve")
    if st.eps_budget is None or not math.isclose(float(report["eps"]), st.eps_budget, rel_tol=1e-12):
        problems.append(f"stage {t}: eps budget differs between report and curve")
    if not float(report["eps"]) < float(report["eps_prev"]) / 2:
        problems.append(f"stage {t}: eps_t is not below eps_(t-1) / 2")
    try:
        fresh = remeasure(curve, report, float(report["tol"]) * tol_factor, workers)
    except EntCurvesError as exc:
        return problems + [f"stage {t}: re-measurement failed: {exc}"]
    stored = {c["name"]: Check.from_json(c) for c in report["checks"]}
    new = {c.name: c for c in fresh.checks}
    if set(stored) != set(new):
        problems.append(f"stage {t}: check sets differ: {sorted(set(stored) ^ set(new))}")
    for name in sorted(set(stored) & set(new)):
        a, b = stored[name], new[name]
        slack = a.error + b.error + 1e-9 * max(abs(a.value), abs(b.value), 1e-300)
        if abs(a.value - b.value) > slack:
            problems.append(f"stage {t}: {name} = {b.value!r} differs from stored {a.value!r}")
        if a.passed != b.passed:
            problems.append(f"stage {t}: {name} pass/fail flipped")
    return problems


def verify_run(run_dir: str | os.PathLike, tol_factor: float = 1.0, workers: int | None = None) -> list[str]:
    """Re-verify every persisted stage of a run directory; returns the list of mismatches."""
    run_dir = Path(run_dir)
    problems = []
    reports = sorted(run_dir.glob("stage_*.report.json"))
    if not reports:
        return [f"{run_dir}: no stage reports"]
    eps = []
    prev_curve = None
    for rp in reports:
        doc = json.loads(rp.read_text())
        t = int(doc["t"])
        cp = _stage_path(run_dir, t, "curve")
        if not cp.exists():
            problems.append(f"stage {t}: curve snapshot missing")
            continue
        curve = curve_from_json(json.loads(cp.read_text()))
        if prev_curve is not None and curve.truncated(t - 1).to_json() != prev_curve.to_json():
            problems.append(f"stage {t}: snapshot does not extend the stage {t - 1} snapshot")
        prev_curve = curve
        problems += verify_stage(curve, doc, tol_factor, workers)
        eps.append(float(doc["eps"]))
    if eps and not chain_holds(eps):
        problems.append("perturbation budgets violate the chain inequality")
    return problems


# -- growth along the alpha ladder -------------------------------------------


def growth_ladder(curve, report: dict, factors: Sequence[int] = (1, 2, 4, 8),
                  workers: int | None = None) -> list[tuple[int, float]]:
    """``(alpha, log area)`` of stage ``report['t']`` with its exponent replaced by ``alpha_t * k``."""
    t = int(report["t"])
    base = curve.truncated(t)
    out = []
    for k in factors:
        alpha = int(report["alpha"]) * int(k)
        stages = base.stages[:-1] + (replace(base.stages[-1], alpha=alpha),)
        meas = remeasure(replace(base, stages=stages), report, workers=workers)
        out.append((alpha, meas.log_area()))
    return out


def ladder_slope(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log area against alpha."""
    a = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if a.size < 2 or np.ptp(a) == 0:
        raise InvariantError("a slope needs at least two distinct exponents")
    return float(np.polyfit(a, y, 1)[0])


def trajectory_ladder(report: dict) -> list[tuple[int, float]]:
    """``(alpha, log area)`` pairs recorded while the stage climbed its ladder."""
    return [(int(r["alpha"]), float(r["log_area"])) for r in report["trajectory"] if r.get("log_area") is not None]
