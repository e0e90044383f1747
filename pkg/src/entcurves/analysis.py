"""Normalized Ahlfors and Nevanlinna data of stage curves.

Torus curves: the pairing matrix ``M[k, l] = int f_k' conj(f_l') w dA`` with
weight ``w = 1`` (Ahlfors) or ``w = log(R / |z|)`` (Nevanlinna), its trace
(area), and boundary lengths.

Product curves ``(g, h)`` into CP^1 x E: the area density is
``2 theta(g) |g'|^2 + |h'|^2`` with ``theta`` the pulled-back round density.
When ``g`` is far beyond the resolvable range its round area is bracketed by
the flat area: ``c int |g'|^2`` plus a boundary term bounded by
``theta_sup * int |g'| ds``.  All curve derivatives are evaluated with a
common factor ``exp(-S)`` removed; quadratic quantities carry ``exp(2 S)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .curves import ProductCurveExpr, TorusCurveExpr
from .errors import InvariantError
from .geometry import Lattice, fs_distance_array, projective_distance
from .quadrature import (
    RegionMask,
    circle_arcs_inside,
    circle_arcs_outside,
    integrate_arcs,
    integrate_region,
)
from .weierstrass import FSCohomology, WeierstrassP, fs_cohomology

REPORT_SCHEMA = "current-report/1"
# largest |g|, |h| (as log) for which wp(g) and pi(h) are evaluated literally
RESOLVABLE_LOG = 23.0
# below this log-size of g the literal round density is cheap to integrate
CHEAP_LITERAL_LOG = 3.0

__all__ = [
    "CurrentReport", "ShapeSpec", "DiffuseShapeSpec", "TorusData", "ProductData",
    "torus_data", "product_data", "ahlfors_report", "nevanlinna_report", "tube_masses",
    "projective_distance", "diffuse_spec", "reports_csv", "reports_from_data", "MaskMass",
    "torus_character_mean",
]


# -- shapes ------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeSpec:
    """Target shape: points of CP^1 with weights ``A`` and points of E with weights ``B``."""

    lattice: Lattice
    x_points: tuple[complex, ...] = ()
    A: tuple[float, ...] = ()
    y_points: tuple[complex, ...] = ()
    B: tuple[float, ...] = ()

    def __post_init__(self):
        if self.lattice.n != 1:
            raise InvariantError("shape lattice must be a lattice in C")
        x = tuple(complex(p) for p in self.x_points)
        y = tuple(complex(self.lattice.reduce(p)) for p in self.y_points)
        A = tuple(float(a) for a in self.A)
        B = tuple(float(b) for b in self.B)
        if len(x) != len(A) or len(y) != len(B):
            raise InvariantError("each point needs exactly one weight")
        if not x and not y:
            raise InvariantError("a shape needs at least one point (P + Q >= 1)")
        if any(not (w > 0 and math.isfinite(w)) for w in A + B):
            raise InvariantError("weights must be positive")
        if sum(A) + sum(B) > 1.0 + 1e-12:
            raise InvariantError("total weight exceeds 1")
        for p in x:
            if not (math.isfinite(p.real) and math.isfinite(p.imag)):
                raise InvariantError("CP^1 points are given by finite affine coordinates")
        object.__setattr__(self, "x_points", x)
        object.__setattr__(self, "y_points", y)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.min_separation() < 1e-12:
            raise InvariantError("shape points must be pairwise distinct")

    @property
    def P(self) -> int:
        return len(self.x_points)

    @property
    def Q(self) -> int:
        return len(self.y_points)

    @property
    def weights(self) -> np.ndarray:
        return np.array(self.A + self.B)

    def min_separation(self) -> float:
        """Smallest angular distance among the x points and flat distance among the y points."""
        d = math.inf
        for i in range(self.P):
            for j in range(i + 1, self.P):
                d = min(d, float(fs_distance_array(np.array([self.x_points[i]]), self.x_points[j])[0]))
        for i in range(self.Q):
            for j in range(i + 1, self.Q):
                d = min(d, self.lattice.distance(self.y_points[i], self.y_points[j]))
        return d

    def swapped_roles(self) -> bool:
        return self.P == 0

    def to_json(self) -> dict:
        return {
            "lattice": self.lattice.to_json(),
            "x": [[p.real, p.imag] for p in self.x_points], "A": list(self.A),
            "y": [[p.real, p.imag] for p in self.y_points], "B": list(self.B),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ShapeSpec":
        try:
            lat = Lattice.from_json(d["lattice"]) if "lattice" in d else Lattice.square()
            return cls(lat, tuple(complex(a, b) for a, b in d.get("x", [])), tuple(d.get("A", [])),
                       tuple(complex(a, b) for a, b in d.get("y", [])), tuple(d.get("B", [])))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvariantError):
                raise
            raise InvariantError(f"malformed shape document: {exc}") from exc


def _grid_factors(s: int) -> tuple[int, int]:
    a = int(math.isqrt(s))
    while s % a:
        a -= 1
    return s // a, a


@dataclass(frozen=True)
class DiffuseShapeSpec:
    """A shape with its missing mass spread over ``s`` grid fibers of E."""

    base: ShapeSpec
    s: int
    points: tuple[complex, ...]
    c_s: float
    spec: ShapeSpec

    def average(self, f: Callable[[np.ndarray], np.ndarray]) -> complex:
        """Mean of ``f`` over the grid points (the normalized sum of Diracs)."""
        return complex(np.mean(f(np.array(self.points))))

    def character_average(self, k1: int, k2: int) -> complex:
        """Grid mean of ``exp(2 pi i (k1 Re z + k2 Im z))`` summed in closed form.

        The grid is a product of arithmetic progressions, so the mean is a
        product of geometric sums.  Phases whose total advance is an integer
        are reduced exactly before exponentiation.
        """
        w1, w2 = self.base.lattice.periods
        s1, s2 = _grid_factors(self.s)
        return _grid_character(w1, s1, k1, k2) * _grid_character(w2, s2, k1, k2)


def _frac(x: float) -> float:
    return x - math.floor(x)


def _grid_character(w: complex, m: int, k1: int, k2: int) -> complex:
    """``(1/m) sum_{l<m} exp(2 pi i phi l / m)`` with ``phi = k1 Re w + k2 Im w``."""
    phi = k1 * w.real + k2 * w.imag
    total = _frac(phi)
    if total == 0.0:
        return 1.0 + 0j if _frac(phi / m) == 0.0 else 0j
    num = complex(math.cos(2 * math.pi * total) - 1.0, math.sin(2 * math.pi * total))
    step = _frac(phi / m)
    den = complex(math.cos(2 * math.pi * step) - 1.0, math.sin(2 * math.pi * step))
    return num / (m * den)


def torus_character_mean(lattice: Lattice, k1: int, k2: int) -> complex:
    """Mean of ``exp(2 pi i (k1 Re z + k2 Im z))`` over E against the flat area form."""
    out = 1.0 + 0j
    for w in lattice.periods:
        phi = k1 * w.real + k2 * w.imag
        total = _frac(phi)
        if total == 0.0:
            if phi != 0.0:
                return 0j
            continue
        out *= complex(math.cos(2 * math.pi * total) - 1.0, math.sin(2 * math.pi * total)) / (2j * math.pi * phi)
    return out


def diffuse_spec(shape: ShapeSpec, s: int) -> DiffuseShapeSpec:
    """Append ``s`` equal-weight fibers over a lattice-fraction grid of E.

    The grid has ``s1 x s2 = s`` points with coordinates ``(l1 / s1, l2 / s2)``
    in the generator basis; each carries weight ``c_s / s`` where ``c_s`` is
    the missing mass ``1 - sum A - sum B``.
    """
    if s < 1:
        raise InvariantError("s must be a positive integer")
    c_s = 1.0 - sum(shape.A) - sum(shape.B)
    if not c_s > 1e-12:
        raise InvariantError("no mass left for a diffuse part (sum of weights must be < 1)")
    s1, s2 = _grid_factors(s)
    w1, w2 = shape.lattice.periods
    pts = tuple(complex(l1 / s1 * w1 + l2 / s2 * w2) for l1 in range(s1) for l2 in range(s2))
    for p in pts:
        for y in shape.y_points:
            if shape.lattice.distance(p, y) < 1e-12:
                raise InvariantError("a grid fiber coincides with a rational point of the shape")
    spec = ShapeSpec(shape.lattice, shape.x_points, shape.A, shape.y_points + pts,
                     shape.B + tuple([c_s / s] * s))
    return DiffuseShapeSpec(shape, s, pts, c_s, spec)


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class CurrentReport:
    """Normalized current data of one curve on one disc.

    ``log_normalizer`` is the log of the area (Ahlfors) or of the Jensen
    weighted area (Nevanlinna); ``length_ratio`` divides the matching boundary
    length by it.  Torus reports fill ``H_hat``; product reports fill the
    normalized masses (x-discs first, then y-discs) and the complement.
    """

    kind: str
    radius: float
    log_normalizer: float
    normalizer_rel_error: float
    length_ratio: float
    length_ratio_error: float
    H_hat: np.ndarray | None = None
    H_hat_error: float = 0.0
    masses: np.ndarray | None = None
    mass_errors: np.ndarray | None = None
    complement: float | None = None
    complement_error: float = 0.0
    fs_fraction: float | None = None
    e_fraction: float | None = None
    image_tube_masses: np.ndarray | None = None
    image_tube_note: str = ""
    additivity_gap: float = 0.0
    additivity_error: float = 0.0
    converged: bool = True

    def to_json(self) -> dict:
        def arr(a):
            if a is None:
                return None
            a = np.asarray(a)
            if np.iscomplexobj(a):
                return {"re": a.real.tolist(), "im": a.imag.tolist()}
            return a.tolist()
        return {
            "schema": REPORT_SCHEMA, "kind": self.kind, "radius": self.radius,
            "log_normalizer": self.log_normalizer, "normalizer_rel_error": self.normalizer_rel_error,
            "length_ratio": self.length_ratio, "length_ratio_error": self.length_ratio_error,
            "H_hat": arr(self.H_hat), "H_hat_error": self.H_hat_error,
            "masses": arr(self.masses), "mass_errors": arr(self.mass_errors),
            "complement": self.complement, "complement_error": self.complement_error,
            "fs_fraction": self.fs_fraction, "e_fraction": self.e_fraction,
            "image_tube_masses": arr(self.image_tube_masses), "image_tube_note": self.image_tube_note,
            "additivity_gap": self.additivity_gap, "additivity_error": self.additivity_error,
            "converged": self.converged,
        }

    def csv_row(self, stage: int) -> dict:
        row = {"t": stage, "kind": self.kind, "radius": self.radius,
               "log_normalizer": self.log_normalizer, "length_ratio": self.length_ratio,
               "length_ratio_error": self.length_ratio_error, "converged": self.converged}
        if self.H_hat is not None:
            row["H_hat_error"] = self.H_hat_error
        if self.masses is not None:
            row["masses"] = " ".join(f"{m:.6g}" for m in self.masses)
            row["complement"] = self.complement
        return row


def reports_csv(rows: Sequence[dict]) -> str:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


# -- torus -------------------------------------------------------------------


@dataclass(frozen=True)
class TorusData:
    """Raw quadrature of a torus curve on ``D_R`` (quadratic quantities scaled by ``exp(-2 S)``)."""

    R: float
    S: float
    M: np.ndarray
    M_err: np.ndarray
    MN: np.ndarray
    MN_err: np.ndarray
    area: float
    area_err: float
    nev_area: float
    nev_area_err: float
    length: float
    length_err: float
    nev_length: float
    nev_length_err: float
    evaluations: int
    converged: bool


def torus_data(curve: TorusCurveExpr, R: float, tol: float = 1e-4, *, workers: int | None = None) -> TorusData:
    n = curve.n
    S = curve.derivative_log_scale(R)
    pairs = [(k, l) for k in range(n) for l in range(k, n)]
    hints = curve.hints(R)
    npair = len(pairs)

    def integrand(z, r):
        d = curve.eval_derivative(z, shift=S)
        out = np.empty((2 * npair + 3, z.size), dtype=complex)
        w = np.log(R / np.maximum(r, 1e-300))
        sq = np.sum(np.abs(d) ** 2, axis=0)
        out[0] = sq
        out[npair + 1] = sq * w
        for i, (k, l) in enumerate(pairs):
            p = d[k] * np.conj(d[l])
            out[1 + i] = p
            out[npair + 2 + i] = p * w
        out[-1] = np.sqrt(sq) / np.maximum(r, 1e-300)
        return out

    ref = [0] + [0] * npair + [npair + 1] + [npair + 1] * npair + [2 * npair + 2]
    q = integrate_region(integrand, RegionMask.disc(R), tol, hints=hints, reference=ref, workers=workers)
    length = integrate_arcs(
        lambda z, tan: np.sqrt(np.sum(np.abs(curve.eval_derivative(z, shift=S)) ** 2, axis=0))[None],
        circle_arcs_outside(R, []), tol, hints=hints)

    def matrix(off):
        M = np.zeros((n, n), dtype=complex)
        E = np.zeros((n, n))
        for i, (k, l) in enumerate(pairs):
            M[k, l] = q.value[off + i]
            M[l, k] = np.conj(q.value[off + i])
            E[k, l] = E[l, k] = q.error[off + i]
        return M, E

    M, ME = matrix(1)
    MN, MNE = matrix(npair + 2)
    return TorusData(
        R=R, S=S, M=M, M_err=ME, MN=MN, MN_err=MNE,
        area=float(q.value[0].real), area_err=float(q.error[0]),
        nev_area=float(q.value[npair + 1].real), nev_area_err=float(q.error[npair + 1]),
        length=float(length.value[0].real), length_err=float(length.error[0]),
        nev_length=float(q.value[-1].real), nev_length_err=float(q.error[-1]),
        evaluations=q.evaluations + length.evaluations,
        converged=bool(q.converged and length.converged),
    )


def _torus_report(data: TorusData, kind: str) -> CurrentReport:
    if kind == "ahlfors":
        M, ME, A, AE, L, LE = data.M, data.M_err, data.area, data.area_err, data.length, data.length_err
    else:
        M, ME, A, AE = data.MN, data.MN_err, data.nev_area, data.nev_area_err
        L, LE = data.nev_length, data.nev_length_err
    if not A > 0:
        return CurrentReport(kind, data.R, -math.inf, math.inf, math.inf, math.inf,
                             H_hat=np.full(M.shape, np.nan, dtype=complex), H_hat_error=math.inf,
                             converged=data.converged)
    H = M / A
    H_err = float(np.max(ME / A + np.abs(M) * AE / A**2))
    ratio = L / A * math.exp(-data.S)
    ratio_err = ratio * (LE / max(L, 1e-300) + AE / A)
    return CurrentReport(kind, data.R, math.log(A) + 2 * data.S, AE / A, ratio, ratio_err,
                         H_hat=H, H_hat_error=H_err, converged=data.converged)


# -- product -----------------------------------------------------------------


@dataclass(frozen=True)
class MaskMass:
    """Round (CP^1) and flat (E) parts of the area of one mask, with errors, in scaled units."""

    fs: float
    fs_err: float
    e: float
    e_err: float
    fs_n: float
    fs_n_err: float
    e_n: float
    e_n_err: float

    @property
    def total(self) -> float:
        return self.fs + self.e

    @property
    def total_err(self) -> float:
        return self.fs_err + self.e_err

    @property
    def total_n(self) -> float:
        return self.fs_n + self.e_n

    @property
    def total_n_err(self) -> float:
        return self.fs_n_err + self.e_n_err


@dataclass(frozen=True)
class ProductData:
    R: float
    S: float
    full: MaskMass
    x_masses: tuple[MaskMass, ...]
    y_masses: tuple[MaskMass, ...]
    complement: MaskMass
    length_upper: float
    length_err: float
    nev_length_upper: float
    nev_length_err: float
    fs_mode: str
    image_tube: np.ndarray | None
    image_tube_n: np.ndarray | None
    image_tube_note: str
    evaluations: int
    converged: bool


def _stage_discs(curve: ProductCurveExpr) -> tuple[list[complex], list[complex]]:
    if not curve.stages:
        return [], []
    st = curve.stages[-1]
    return [b.center for _, b in st.phi_terms], [b.center for _, b in st.psi_terms]


def product_data(
    curve: ProductCurveExpr,
    R: float,
    tol: float = 1e-4,
    *,
    shape: ShapeSpec | None = None,
    delta: float | None = None,
    coh: FSCohomology | None = None,
    W: WeierstrassP | None = None,
    fs_mode: str = "bracket",
    image_tubes: bool = False,
    x_discs: Sequence[complex] | None = None,
    y_discs: Sequence[complex] | None = None,
    workers: int | None = None,
) -> ProductData:
    """Area data of a product curve on ``D_R`` split over the stage bump discs.

    ``fs_mode`` is ``"bracket"`` (round area from the flat area plus the
    boundary bound), ``"literal"`` (integrate ``2 theta(g) |g'|^2``) or
    ``"auto"`` (literal when the values of ``g`` stay small enough for the
    oscillation of ``theta(g)`` to be resolved cheaply).  Image-tube masses
    (areas of the preimages of the tubes around the shape fibers) need the
    literal mode and are computed only when ``image_tubes`` is set.
    """
    W = WeierstrassP(curve.lattice) if W is None else W
    coh = fs_cohomology(W) if coh is None else coh
    if x_discs is None or y_discs is None:
        xd, yd = _stage_discs(curve)
        x_discs = xd if x_discs is None else list(x_discs)
        y_discs = yd if y_discs is None else list(y_discs)
    discs = list(x_discs) + list(y_discs)
    S = curve.derivative_log_scale(R)
    value_log = curve.log_scale(R)
    resolvable = value_log < RESOLVABLE_LOG and S < RESOLVABLE_LOG
    if fs_mode == "auto":
        fs_mode = "literal" if value_log < CHEAP_LITERAL_LOG else "bracket"
    if image_tubes and fs_mode != "literal":
        if not resolvable:
            image_tubes = False
        else:
            fs_mode = "literal"
    if fs_mode == "literal" and not resolvable:
        raise InvariantError("literal round areas need curve values within floating resolution")
    literal = fs_mode == "literal"
    c = coh.c
    tmax = 2.0 * coh.density_max
    hints = curve.hints(R)
    tubes = literal and image_tubes and shape is not None and delta is not None
    y_lifts = None
    if tubes:
        y_lifts = np.array(shape.y_points)

    ncomp = 8 + (2 if literal else 0) + (2 * (len(discs)) if tubes else 0)

    def integrand(z, r):
        d = curve.eval_derivative(z, shift=S)
        gp2 = np.abs(d[0]) ** 2
        hp2 = np.abs(d[1]) ** 2
        w = np.log(R / np.maximum(r, 1e-300))
        inv_r = 1.0 / np.maximum(r, 1e-300)
        out = np.empty((ncomp, z.size))
        out[0] = hp2
        out[1] = gp2
        out[2] = hp2 * w
        out[3] = gp2 * w
        out[4] = np.sqrt(gp2) * inv_r
        out[5] = np.sqrt(tmax * gp2 + hp2) * inv_r
        out[6] = hp2 + c * gp2
        out[7] = out[6] * w
        k = 8
        if literal:
            g, h = curve.eval(z)
            dens = 2.0 * W.density(g) * gp2
            out[k] = dens
            out[k + 1] = dens * w
            k += 2
            if tubes:
                full = dens + hp2
                wp = np.full(g.shape, np.inf + 0j)
                _, u = W._reduce(g)
                ok = np.abs(u) >= 1e-8
                wp[ok] = W.wp(g[ok])
                for xj in shape.x_points:
                    ind = np.zeros(g.shape)
                    fin = np.isfinite(wp)
                    ind[fin] = fs_distance_array(wp[fin], xj) < 2 * delta
                    out[k] = full * ind
                    out[k + 1] = full * ind * w
                    k += 2
                hr = curve.lattice.reduce_centered
                for yk in y_lifts:
                    dist = np.abs(hr(h - yk))
                    ind = (dist < 2 * delta).astype(float)
                    out[k] = full * ind
                    out[k + 1] = full * ind * w
                    k += 2
        return out

    ref = [6, 6, 7, 7, 4, 5, 6, 7] + ([6, 7] if literal else []) + ([6, 7] * len(discs) if tubes else [])
    evals = 0
    conv = True

    def run(mask, atol=0.0):
        nonlocal evals, conv
        q = integrate_region(integrand, mask, tol, hints=hints, reference=ref, atol=atol, workers=workers)
        evals += q.evaluations
        conv = conv and q.converged
        return q

    full = run(RegionMask.disc(R))
    atol = tol * np.abs(np.asarray(full.value))[np.asarray(ref)] * 0.5
    disc_q = [run(RegionMask.intersection(cc, R), atol) for cc in discs]
    comp_q = run(RegionMask.complement(R, [(cc, 1.0) for cc in discs]), atol) if discs else full

    # boundary integrals of |g'| (and the Jensen-weighted version on the unit circles)
    def gspeed(z, tan):
        return np.abs(curve.eval_derivative(z, shift=S)[0])[None]

    def gspeed_log(z, tan):
        s = np.abs(curve.eval_derivative(z, shift=S)[0])
        return np.stack([s, s * np.log(R / np.maximum(np.abs(z), 1e-300))])

    def arc_int(fun, arcs):
        nonlocal evals, conv
        if not arcs:
            return np.zeros(2), np.zeros(2)
        q = integrate_arcs(fun, arcs, tol, hints=hints)
        evals += q.evaluations
        conv = conv and q.converged
        return np.real(np.asarray(q.value)), np.asarray(q.error)

    unit = [arc_int(gspeed_log, circle_arcs_inside(cc, 1.0, R)) for cc in discs]
    rim_in = [arc_int(gspeed, _rim_inside(R, cc)) for cc in discs]
    rim_out = arc_int(gspeed, circle_arcs_outside(R, [(cc, 1.0) for cc in discs]))

    def length_fun(z, tan):
        d = curve.eval_derivative(z, shift=S)
        return np.sqrt(tmax * np.abs(d[0]) ** 2 + np.abs(d[1]) ** 2)[None]

    lq = integrate_arcs(length_fun, circle_arcs_outside(R, []), tol, hints=hints)
    evals += lq.evaluations
    conv = conv and lq.converged
    shrink = math.exp(-S)
    theta = coh.theta_sup

    def mask_mass(q, boundary_a, boundary_n):
        v = np.real(np.asarray(q.value))
        e = np.asarray(q.error)
        if literal:
            fs, fs_e, fs_n, fs_n_e = v[8], e[8], v[9], e[9]
        else:
            fs = c * v[1]
            fs_e = c * e[1] + theta * boundary_a * shrink
            fs_n = c * v[3]
            fs_n_e = c * e[3] + theta * (boundary_n + v[4] + e[4]) * shrink
        return MaskMass(fs, fs_e, v[0], e[0], fs_n, fs_n_e, v[2], e[2])

    full_b = rim_out[0][0] + sum(ri[0][0] for ri in rim_in) + rim_out[1][0] + sum(ri[1][0] for ri in rim_in)
    full_m = mask_mass(full, full_b, 0.0)
    disc_m = []
    for i, q in enumerate(disc_q):
        (ua, ue), (ra, re_) = unit[i], rim_in[i]
        ua = ua if ua.size == 2 else np.zeros(2)
        ue = ue if ue.size == 2 else np.zeros(2)
        ba = ua[0] + ue[0] + ra[0] + re_[0]
        bn = ua[1] + ue[1]
        disc_m.append(mask_mass(q, ba, bn))
    if discs:
        ba = rim_out[0][0] + rim_out[1][0] + sum((u[0][0] + u[1][0]) if u[0].size == 2 else 0.0 for u in unit)
        bn = sum((u[0][1] + u[1][1]) if u[0].size == 2 else 0.0 for u in unit)
        comp_m = mask_mass(comp_q, ba, bn)
    else:
        comp_m = full_m

    fv = np.real(np.asarray(full.value))
    fe = np.asarray(full.error)
    image = image_n = None
    note = ""
    if tubes:
        vals = fv[10:10 + 2 * len(discs)]
        image = vals[0::2]
        image_n = vals[1::2]
    elif shape is not None and not resolvable:
        note = "image tubes not resolvable: curve values exceed floating resolution"
    elif shape is not None:
        note = "image tubes not requested"
    nx = len(x_discs)
    return ProductData(
        R=R, S=S, full=full_m, x_masses=tuple(disc_m[:nx]), y_masses=tuple(disc_m[nx:]),
        complement=comp_m,
        length_upper=float(np.real(lq.value[0])), length_err=float(lq.error[0]),
        nev_length_upper=float(fv[5]), nev_length_err=float(fe[5]),
        fs_mode=fs_mode, image_tube=image, image_tube_n=image_n, image_tube_note=note,
        evaluations=evals, converged=conv,
    )


def _rim_inside(R: float, center: complex) -> list:
    """Arcs of ``|z| = R`` inside the unit disc around ``center``."""
    from .quadrature import Arc

    mod = abs(center)
    if mod + 1.0 <= R or mod - 1.0 >= R:
        return []
    cos_x = (R * R + mod * mod - 1.0) / (2 * R * mod)
    x = math.acos(max(-1.0, min(1.0, cos_x)))
    a = math.atan2(center.imag, center.real)
    return [Arc(0j, R, a - x, a + x)]


def _product_report(data: ProductData, kind: str) -> CurrentReport:
    nev = kind == "nevanlinna"

    def tot(m: MaskMass):
        return (m.total_n, m.total_n_err) if nev else (m.total, m.total_err)

    N, NE = tot(data.full)
    masses = [tot(m) for m in data.x_masses + data.y_masses]
    comp, comp_e = tot(data.complement)
    if not N > 0:
        return CurrentReport(kind, data.R, -math.inf, math.inf, math.inf, math.inf, converged=data.converged)
    L = data.nev_length_upper if nev else data.length_upper
    LE = data.nev_length_err if nev else data.length_err
    ratio = L / N * math.exp(-data.S)
    ratio_err = ratio * (LE / max(L, 1e-300) + NE / N)
    mv = np.array([m[0] for m in masses]) / N
    me = np.array([m[1] for m in masses]) / N + np.abs(mv) * NE / N
    fs = (data.full.fs_n if nev else data.full.fs) / N
    gap = sum(m[0] for m in masses) + comp - N
    gap_err = sum(m[1] for m in masses) + comp_e + NE
    image = None
    if data.image_tube is not None:
        image = (data.image_tube_n if nev else data.image_tube) / N
    return CurrentReport(
        kind, data.R, math.log(N) + 2 * data.S, NE / N, ratio, ratio_err,
        masses=mv, mass_errors=me, complement=comp / N, complement_error=comp_e / N + comp * NE / N**2,
        fs_fraction=fs, e_fraction=1.0 - fs, image_tube_masses=image, image_tube_note=data.image_tube_note,
        additivity_gap=gap / N, additivity_error=gap_err / N, converged=data.converged,
    )


# -- public API --------------------------------------------------------------


def _report(curve, R, tol, kind, **kw):
    if isinstance(curve, TorusCurveExpr):
        return _torus_report(torus_data(curve, R, tol, workers=kw.get("workers")), kind)
    if isinstance(curve, ProductCurveExpr):
        return _product_report(product_data(curve, R, tol, **kw), kind)
    raise InvariantError("unsupported curve type")


def ahlfors_report(curve, R: float, tol: float = 1e-4, **kw) -> CurrentReport:
    """Area-normalized current data of ``curve`` restricted to ``D_R``."""
    return _report(curve, R, tol, "ahlfors", **kw)


def nevanlinna_report(curve, R: float, tol: float = 1e-4, **kw) -> CurrentReport:
    """Jensen-weighted (Nevanlinna) current data of ``curve`` on ``D_R``."""
    return _report(curve, R, tol, "nevanlinna", **kw)


def reports_from_data(data) -> tuple[CurrentReport, CurrentReport]:
    if isinstance(data, TorusData):
        return _torus_report(data, "ahlfors"), _torus_report(data, "nevanlinna")
    return _product_report(data, "ahlfors"), _product_report(data, "nevanlinna")


def tube_masses(curve: ProductCurveExpr, R: float, shape: ShapeSpec, delta: float, tol: float = 1e-4,
                **kw) -> dict:
    """Fiber masses over the bump discs and over the image tubes, with the complement.

    Returns normalized values for both kinds.  Image-tube masses are ``None``
    when the curve values are beyond floating resolution.
    """
    data = product_data(curve, R, tol, shape=shape, delta=delta, **kw)
    a, n = _product_report(data, "ahlfors"), _product_report(data, "nevanlinna")
    return {
        "ahlfors": {"disc": a.masses, "disc_error": a.mass_errors, "complement": a.complement,
                    "complement_error": a.complement_error, "image_tube": a.image_tube_masses},
        "nevanlinna": {"disc": n.masses, "disc_error": n.mass_errors, "complement": n.complement,
                       "complement_error": n.complement_error, "image_tube": n.image_tube_masses},
        "note": data.image_tube_note,
        "data": data,
    }
