"""Adaptive polar quadrature of vector-valued integrands over discs and disc masks.

A region is cut into angular pieces on which the radial extent is an interval
``[lo(theta), hi(theta)]`` with smooth end points.  Each piece is integrated
in coordinates ``(theta, u)`` with ``r = lo + u (hi - lo)`` by tensor
Gauss-Legendre cells.  Every cell is evaluated whole and split in half along
each direction; the larger change gives both the cell value and its error
estimate, and the direction(s) to split when the cell is refined.  Refinement
marks the cells carrying the bulk of the normalised error until the total
error is below ``tol`` times the magnitude of each component.

Evaluation batches are cut into fixed-size chunks whose results are joined in
index order, so values are bitwise independent of the worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvariantError

WORKERS_ENV = "ENTCURVES_WORKERS"
CHUNK = 1 << 15
ORDER = 5

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class QuadratureResult:
    """Integral estimate.

    ``value`` and ``error`` are arrays with one entry per integrand component
    (or scalars for single-component results).  ``error`` is the absolute
    difference between the two finest refinement levels summed over cells.
    The true integral is ``value * exp(log_scale)``.
    """

    value: np.ndarray
    error: np.ndarray
    evaluations: int
    cells: int = 0
    converged: bool = True
    log_scale: float = 0.0
    wall_time_ms: float = 0.0

    def __getitem__(self, k) -> "QuadratureResult":
        return QuadratureResult(np.asarray(self.value)[k], np.asarray(self.error)[k], self.evaluations,
                                self.cells, self.converged, self.log_scale, self.wall_time_ms)

    def scalar(self) -> complex | float:
        v = np.asarray(self.value)
        return v.item() if v.size == 1 else v

    def bench_row(self, kernel: str) -> dict:
        v = np.asarray(self.value).ravel()
        e = np.asarray(self.error).ravel()
        return {"kernel": kernel, "cells": self.cells, "evaluations": self.evaluations,
                "value": complex(v[0]) if np.iscomplexobj(v) else float(v[0]),
                "err": float(e[0]), "wall_time_ms": self.wall_time_ms}


@dataclass(frozen=True)
class Hint:
    """Location where an integrand concentrates near the rim of the disc.

    ``angle`` is the direction of the peak, ``radial`` and ``angular`` are
    its decay lengths in ``r`` and in ``theta``.
    """

    angle: float
    radial: float
    angular: float


# -- regions -----------------------------------------------------------------


@dataclass(frozen=True)
class Disc:
    center: complex
    radius: float = 1.0


@dataclass(frozen=True)
class RegionMask:
    """One of: the disc ``D_r``; ``D(c, rho) & D_r``; ``D_r`` minus a union of discs."""

    kind: str
    r: float
    discs: tuple[Disc, ...] = ()

    def __post_init__(self):
        if self.kind not in ("disc", "intersection", "complement"):
            raise InvariantError(f"unknown region kind {self.kind!r}")
        if not self.r > 0:
            raise InvariantError("region radius must be positive")
        if self.kind == "intersection" and len(self.discs) != 1:
            raise InvariantError("an intersection mask takes exactly one disc")
        for d in self.discs:
            if not d.radius > 0:
                raise InvariantError("mask discs need a positive radius")

    @classmethod
    def disc(cls, r: float) -> "RegionMask":
        return cls("disc", float(r))

    @classmethod
    def intersection(cls, center: complex, r: float, radius: float = 1.0) -> "RegionMask":
        return cls("intersection", float(r), (Disc(complex(center), float(radius)),))

    @classmethod
    def complement(cls, r: float, discs: Sequence[tuple[complex, float]]) -> "RegionMask":
        return cls("complement", float(r), tuple(Disc(complex(c), float(rho)) for c, rho in discs))

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) < self.r
        if self.kind == "intersection":
            d = self.discs[0]
            return inside & (np.abs(z - d.center) < d.radius)
        if self.kind == "complement":
            for d in self.discs:
                inside &= np.abs(z - d.center) >= d.radius
        return inside

    def to_json(self) -> dict:
        return {"kind": self.kind, "r": self.r,
                "discs": [[d.center.real, d.center.imag, d.radius] for d in self.discs]}


def _ray_hits(theta: np.ndarray, c: complex, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Near and far intersections ``s`` of the ray ``s e^{i theta}`` with a circle."""
    b = (c * np.exp(-1j * theta)).real
    disc = b * b - abs(c) ** 2 + rho * rho
    root = np.sqrt(np.maximum(disc, 0.0))
    return np.maximum(b - root, 0.0), np.maximum(b + root, 0.0)


@dataclass(frozen=True)
class _Piece:
    t0: float
    t1: float
    lo: Callable[[np.ndarray], np.ndarray]
    hi: Callable[[np.ndarray], np.ndarray]
    origin: bool = False  # lo == 0, so grade toward the origin too


def _angle_window(c: complex, rho: float, r: float) -> tuple[float, float, list[float]]:
    """Angular window of the disc seen from the origin and the kink angles of ``min(r, far)``."""
    a = math.atan2(c.imag, c.real)
    mod = abs(c)
    if mod <= rho:
        raise InvariantError("mask discs must not contain the origin")
    half = math.asin(rho / mod)
    kinks = []
    cos_x = (r * r + mod * mod - rho * rho) / (2 * r * mod)
    if -1.0 < cos_x < 1.0:
        x = math.acos(cos_x)
        if x < half:
            kinks = [a - x, a + x]
    return a - half, a + half, kinks


def _pieces(mask: RegionMask) -> list[_Piece]:
    r = mask.r
    const_r = lambda t: np.full(np.shape(t), r)
    zero = lambda t: np.zeros(np.shape(t))
    if mask.kind == "disc":
        return [_Piece(0.0, 2 * math.pi, zero, const_r, True)]

    if mask.kind == "intersection":
        d = mask.discs[0]
        lo_a, hi_a, kinks = _angle_window(d.center, d.radius, r)
        near = lambda t, c=d.center, rho=d.radius: np.minimum(_ray_hits(t, c, rho)[0], r)
        far = lambda t, c=d.center, rho=d.radius: np.minimum(_ray_hits(t, c, rho)[1], r)
        if abs(d.center) - d.radius >= r:
            return []
        cuts = [lo_a] + sorted(kinks) + [hi_a]
        out = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            if _ray_hits(np.array(mid), d.center, d.radius)[0] < r:
                out.append(_Piece(a, b, near, far))
        return out

    # complement: disjoint angular windows are required
    windows = []
    for d in mask.discs:
        if abs(d.center) - d.radius >= r:
            continue
        lo_a, hi_a, kinks = _angle_window(d.center, d.radius, r)
        windows.append((lo_a, hi_a, sorted(kinks), d))
    windows.sort(key=lambda w: w[0])
    if windows:
        # rotate so that no window wraps past the starting angle
        start = windows[0][0]
        norm = []
        for lo_a, hi_a, kinks, d in windows:
            shift = 2 * math.pi * math.floor((lo_a - start) / (2 * math.pi))
            norm.append((lo_a - shift, hi_a - shift, [k - shift for k in kinks], d))
        norm.sort(key=lambda w: w[0])
        for (a0, a1, _, _), (b0, _, _, _) in zip(norm, norm[1:] + [(norm[0][0] + 2 * math.pi, 0, 0, 0)]):
            if a1 > b0:
                raise InvariantError("complement masks need discs with disjoint angular windows")
        windows = norm
    out = []
    if not windows:
        return [_Piece(0.0, 2 * math.pi, zero, const_r, True)]
    for i, (lo_a, hi_a, kinks, d) in enumerate(windows):
        next_lo = windows[(i + 1) % len(windows)][0] + (2 * math.pi if i + 1 == len(windows) else 0.0)
        near = lambda t, c=d.center, rho=d.radius: np.minimum(_ray_hits(t, c, rho)[0], r)
        far = lambda t, c=d.center, rho=d.radius: np.minimum(_ray_hits(t, c, rho)[1], r)
        cuts = [lo_a] + kinks + [hi_a]
        for a, b in zip(cuts[:-1], cuts[1:]):
            out.append(_Piece(a, b, zero, near, True))
            mid = np.array(0.5 * (a + b))
            if _ray_hits(mid, d.center, d.radius)[1] < r:
                out.append(_Piece(a, b, far, const_r))
        if next_lo > hi_a:
            out.append(_Piece(hi_a, next_lo, zero, const_r, True))
    return out


# -- engine ------------------------------------------------------------------

_NODES, _WEIGHTS = leggauss(ORDER)
_SUB = (
    ((0.0, 1.0), (0.0, 1.0)),
    ((0.0, 0.5), (0.0, 1.0)), ((0.5, 1.0), (0.0, 1.0)),
    ((0.0, 1.0), (0.0, 0.5)), ((0.0, 1.0), (0.5, 1.0)),
)


def _graded_breaks(lo: float, hi: float, hints: Sequence[Hint], base: int) -> np.ndarray:
    pts = list(np.linspace(lo, hi, max(2, base + 1)))
    span = hi - lo
    for h in hints:
        for wrap in (-2 * math.pi, 0.0, 2 * math.pi):
            a = h.angle + wrap
            if a < lo - math.pi or a > hi + math.pi:
                continue
            w = max(h.angular, 1e-12)
            k = 0
            while w * 2**k < span:
                for s in (-1.0, 1.0):
                    p = a + s * w * 2**k
                    if lo < p < hi:
                        pts.append(p)
                k += 1
            if lo < a < hi:
                pts.append(a)
    pts = np.unique(np.clip(pts, lo, hi))
    return pts


def _u_breaks(depth: int, origin: bool) -> np.ndarray:
    pts = [0.0, 0.5, 1.0] + [1.0 - 2.0**-k for k in range(2, depth + 1)]
    if origin:
        pts += [2.0**-k for k in range(2, 6)]
    return np.unique(pts)


@dataclass
class _Cells:
    piece: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    u0: np.ndarray
    u1: np.ndarray

    def __len__(self):
        return self.piece.size

    @staticmethod
    def concat(parts: Sequence["_Cells"]) -> "_Cells":
        return _Cells(*(np.concatenate([getattr(p, f) for p in parts])
                        for f in ("piece", "t0", "t1", "u0", "u1")))

    def take(self, idx) -> "_Cells":
        return _Cells(self.piece[idx], self.t0[idx], self.t1[idx], self.u0[idx], self.u1[idx])


def _evaluate_chunked(fun: Integrand, z: np.ndarray, r: np.ndarray, workers: int) -> np.ndarray:
    starts = range(0, z.size, CHUNK)
    if workers > 1 and z.size > CHUNK:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: np.atleast_2d(fun(z[s:s + CHUNK], r[s:s + CHUNK])), starts))
    else:
        parts = [np.atleast_2d(fun(z[s:s + CHUNK], r[s:s + CHUNK])) for s in starts]
    return np.concatenate(parts, axis=1)


def _eval_cells(fun: Integrand, pieces: list[_Piece], cells: _Cells, workers: int):
    """Rule values on every cell: shape (K, ncells, 5) for the whole cell and the four halves."""
    n = len(cells)
    p = ORDER
    x = (_NODES + 1.0) / 2.0
    w = _WEIGHTS / 2.0
    T = np.empty((n, 5, p))
    U = np.empty((n, 5, p))
    WT = np.empty((n, 5, p))
    WU = np.empty((n, 5, p))
    dt = cells.t1 - cells.t0
    du = cells.u1 - cells.u0
    for s, ((a0, a1), (b0, b1)) in enumerate(_SUB):
        T[:, s, :] = cells.t0[:, None] + dt[:, None] * (a0 + (a1 - a0) * x[None, :])
        U[:, s, :] = cells.u0[:, None] + du[:, None] * (b0 + (b1 - b0) * x[None, :])
        WT[:, s, :] = dt[:, None] * (a1 - a0) * w[None, :]
        WU[:, s, :] = du[:, None] * (b1 - b0) * w[None, :]
    LO = np.empty_like(T)
    HI = np.empty_like(T)
    for k, pc in enumerate(pieces):
        sel = cells.piece == k
        if np.any(sel):
            LO[sel] = pc.lo(T[sel])
            HI[sel] = pc.hi(T[sel])
    H = np.maximum(HI - LO, 0.0)
    # r[i, s, a, b] for theta node a and u node b
    Rr = LO[..., :, None] + U[..., None, :] * H[..., :, None]
    Z = Rr * np.exp(1j * T[..., :, None])
    W = WT[..., :, None] * WU[..., None, :] * H[..., :, None] * Rr
    vals = _evaluate_chunked(fun, Z.ravel(), Rr.ravel(), workers)
    K = vals.shape[0]
    vals = vals.reshape(K, n, 5, p, p)
    out = np.einsum("knsab,nsab->kns", vals, W)
    return out, Z.size


def integrate_region(
    fun: Integrand,
    mask: RegionMask,
    tol: float = 1e-4,
    *,
    hints: Sequence[Hint] = (),
    reference: Sequence[int] | None = None,
    atol: float = 0.0,
    max_cells: int = 400_000,
    max_rounds: int = 200,
    base_angles: int = 16,
    workers: int | None = None,
    log_scale: float = 0.0,
) -> QuadratureResult:
    """Integrate every component of ``fun(z, r)`` over a region mask.

    Parameters
    ----------
    fun : callable
        Returns an array of shape ``(K, len(z))`` (or ``(len(z),)``).
    reference : sequence of int, optional
        For each component, the index of the component whose magnitude sets
        its relative tolerance (defaults to itself).
    atol : float
        Absolute error floor applied to every component.
    """
    t_start = time.perf_counter()
    workers = default_workers() if workers is None else workers
    pieces = _pieces(mask)
    if not pieces:
        return QuadratureResult(np.zeros(1), np.zeros(1), 1, 0, True, log_scale)
    # radial grading depth from the sharpest hint
    depth = 2
    for h in hints:
        depth = max(depth, int(math.ceil(math.log2(max(mask.r / max(h.radial, 1e-300), 1.0)))) + 2)
    depth = min(depth, 60)
    parts = []
    for k, pc in enumerate(pieces):
        frac = (pc.t1 - pc.t0) / (2 * math.pi)
        tb = _graded_breaks(pc.t0, pc.t1, hints, max(1, int(round(base_angles * frac))))
        ub = _u_breaks(depth, pc.origin)
        T0, U0 = np.meshgrid(tb[:-1], ub[:-1], indexing="ij")
        T1, U1 = np.meshgrid(tb[1:], ub[1:], indexing="ij")
        parts.append(_Cells(np.full(T0.size, k), T0.ravel(), T1.ravel(), U0.ravel(), U1.ravel()))
    cells = _Cells.concat(parts)

    evals = 0
    q, cnt = _eval_cells(fun, pieces, cells, workers)
    evals += cnt
    K = q.shape[0]
    ref = np.arange(K) if reference is None else np.asarray(reference)
    converged = False
    for _ in range(max_rounds):
        d_t = np.abs(q[:, :, 1] + q[:, :, 2] - q[:, :, 0])
        d_u = np.abs(q[:, :, 3] + q[:, :, 4] - q[:, :, 0])
        nt = np.max(d_t, axis=0)
        nu = np.max(d_u, axis=0)
        use_t = nt >= nu
        value_cells = np.where(use_t[None, :], q[:, :, 1] + q[:, :, 2], q[:, :, 3] + q[:, :, 4])
        err_cells = np.maximum(d_t, d_u)
        total = value_cells.sum(axis=1)
        err = err_cells.sum(axis=1)
        scale = np.maximum(np.abs(total), np.abs(total[ref]))
        allowed = np.maximum(tol * scale, atol)
        if np.all(err <= allowed):
            converged = True
            break
        if len(cells) > max_cells:
            break
        # normalised error per cell; mark the bulk (Doerfler marking)
        norm = np.max(err_cells / np.maximum(allowed, 1e-300)[:, None], axis=0)
        order = np.argsort(-norm, kind="stable")
        cum = np.cumsum(norm[order])
        nmark = int(np.searchsorted(cum, 0.5 * cum[-1])) + 1
        marked = order[:nmark]
        keep = np.ones(len(cells), dtype=bool)
        keep[marked] = False
        mc = cells.take(marked)
        split_t = np.max(d_t[:, marked] / np.maximum(allowed, 1e-300)[:, None], axis=0)
        split_u = np.max(d_u[:, marked] / np.maximum(allowed, 1e-300)[:, None], axis=0)
        do_t = split_t >= 0.25 * split_u
        do_u = split_u >= 0.25 * split_t
        children = []
        for sel_t, sel_u in ((do_t & do_u, True), (do_t & ~do_u, False), (~do_t & do_u, None)):
            idx = np.flatnonzero(sel_t)
            if idx.size == 0:
                continue
            c = mc.take(idx)
            tm = 0.5 * (c.t0 + c.t1)
            um = 0.5 * (c.u0 + c.u1)
            if sel_u is True:
                children += [
                    _Cells(c.piece, c.t0, tm, c.u0, um), _Cells(c.piece, tm, c.t1, c.u0, um),
                    _Cells(c.piece, c.t0, tm, um, c.u1), _Cells(c.piece, tm, c.t1, um, c.u1)]
            elif sel_u is False:
                children += [_Cells(c.piece, c.t0, tm, c.u0, c.u1), _Cells(c.piece, tm, c.t1, c.u0, c.u1)]
            else:
                children += [_Cells(c.piece, c.t0, c.t1, c.u0, um), _Cells(c.piece, c.t0, c.t1, um, c.u1)]
        new = _Cells.concat(children)
        qn, cnt = _eval_cells(fun, pieces, new, workers)
        evals += cnt
        cells = _Cells.concat([cells.take(np.flatnonzero(keep)), new])
        q = np.concatenate([q[:, keep, :], qn], axis=1)
    else:
        converged = False
    d_t = np.abs(q[:, :, 1] + q[:, :, 2] - q[:, :, 0])
    d_u = np.abs(q[:, :, 3] + q[:, :, 4] - q[:, :, 0])
    use_t = np.max(d_t, axis=0) >= np.max(d_u, axis=0)
    value_cells = np.where(use_t[None, :], q[:, :, 1] + q[:, :, 2], q[:, :, 3] + q[:, :, 4])
    value = value_cells.sum(axis=1)
    err = np.maximum(d_t, d_u).sum(axis=1)
    wall = (time.perf_counter() - t_start) * 1e3
    return QuadratureResult(value, err, evals, len(cells), converged, log_scale, wall)


# -- arcs --------------------------------------------------------------------


@dataclass(frozen=True)
class Arc:
    """Circle arc ``center + radius e^{it}`` for ``t`` in ``[t0, t1]``."""

    center: complex
    radius: float
    t0: float
    t1: float


def circle_arcs_inside(center: complex, radius: float, r: float) -> list[Arc]:
    """Arcs of the circle ``|z - center| = radius`` lying in the closed disc ``D_r``."""
    mod = abs(center)
    if mod + radius <= r:
        return [Arc(center, radius, 0.0, 2 * math.pi)]
    if mod - radius >= r or radius - mod >= r:
        return []
    # |center + radius e^{it}|^2 <= r^2 exactly when cos(t - arg center) <= cos_x
    cos_x = (r * r - mod * mod - radius * radius) / (2 * mod * radius)
    x = math.acos(max(-1.0, min(1.0, cos_x)))
    a = math.atan2(center.imag, center.real)
    return [Arc(center, radius, a + x, a + 2 * math.pi - x)]


def circle_arcs_outside(r: float, discs: Sequence[tuple[complex, float]]) -> list[Arc]:
    """Arcs of ``|z| = r`` lying outside every given open disc."""
    blocked = []
    for c, rho in discs:
        mod = abs(c)
        if mod - rho >= r or mod + rho <= r:
            continue
        cos_x = (r * r + mod * mod - rho * rho) / (2 * r * mod)
        x = math.acos(max(-1.0, min(1.0, cos_x)))
        a = math.atan2(c.imag, c.real)
        blocked.append((a - x, a + x))
    if not blocked:
        return [Arc(0j, r, 0.0, 2 * math.pi)]
    blocked.sort()
    start = blocked[0][0]
    norm = sorted((a - 2 * math.pi * math.floor((a - start) / (2 * math.pi)),
                   b - 2 * math.pi * math.floor((a - start) / (2 * math.pi))) for a, b in blocked)
    arcs = []
    for (a0, a1), (b0, _) in zip(norm, norm[1:] + [(norm[0][0] + 2 * math.pi, 0.0)]):
        if b0 > a1:
            arcs.append(Arc(0j, r, a1, b0))
    return arcs


def integrate_arcs(
    fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
    arcs: Sequence[Arc],
    tol: float = 1e-4,
    *,
    hints: Sequence[Hint] = (),
    reference: Sequence[int] | None = None,
    atol: float = 0.0,
    base: int = 64,
    max_intervals: int = 200_000,
    log_scale: float = 0.0,
) -> QuadratureResult:
    """Integrate ``fun(z, tangent)`` against arc length over a set of arcs.

    ``tangent`` is the unit tangent ``dz / |dz|``.  Adaptive Gauss-Legendre
    on parameter intervals, seeded around hint angles seen from each arc centre.
    """
    t_start = time.perf_counter()
    if not arcs:
        return QuadratureResult(np.zeros(1), np.zeros(1), 1, 0, True, log_scale)
    segs = []
    for k, arc in enumerate(arcs):
        local = []
        for h in hints:
            # only hints on circles centred at the origin translate to parameter angles
            if arc.center == 0:
                local.append(h)
        frac = (arc.t1 - arc.t0) / (2 * math.pi)
        br = _graded_breaks(arc.t0, arc.t1, local, max(2, int(base * frac)))
        segs.append(np.column_stack([np.full(br.size - 1, k), br[:-1], br[1:]]))
    seg = np.concatenate(segs)
    centers = np.array([a.center for a in arcs])
    radii = np.array([a.radius for a in arcs])
    x = (_NODES + 1.0) / 2.0
    w = _WEIGHTS / 2.0

    def rule(s: np.ndarray):
        idx = s[:, 0].astype(int)
        a, b = s[:, 1], s[:, 2]
        out = []
        for lo_f, hi_f in ((0.0, 1.0), (0.0, 0.5), (0.5, 1.0)):
            t = a[:, None] + (b - a)[:, None] * (lo_f + (hi_f - lo_f) * x[None, :])
            wt = (b - a)[:, None] * (hi_f - lo_f) * w[None, :] * radii[idx][:, None]
            z = centers[idx][:, None] + radii[idx][:, None] * np.exp(1j * t)
            tan = 1j * np.exp(1j * t)
            v = np.atleast_2d(fun(z.ravel(), tan.ravel()))
            out.append(np.einsum("kna,na->kn", v.reshape(v.shape[0], *t.shape), wt))
        return np.stack(out, axis=-1), 3 * t.size

    q, evals = rule(seg)
    K = q.shape[0]
    ref = np.arange(K) if reference is None else np.asarray(reference)
    converged = False
    while True:
        d = np.abs(q[:, :, 1] + q[:, :, 2] - q[:, :, 0])
        total = (q[:, :, 1] + q[:, :, 2]).sum(axis=1)
        err = d.sum(axis=1)
        scale = np.maximum(np.abs(total), np.abs(total[ref]))
        allowed = np.maximum(tol * scale, atol)
        if np.all(err <= allowed):
            converged = True
            break
        if seg.shape[0] > max_intervals:
            break
        norm = np.max(d / np.maximum(allowed, 1e-300)[:, None], axis=0)
        order = np.argsort(-norm, kind="stable")
        cum = np.cumsum(norm[order])
        marked = order[: int(np.searchsorted(cum, 0.5 * cum[-1])) + 1]
        keep = np.ones(seg.shape[0], dtype=bool)
        keep[marked] = False
        m = seg[marked]
        mid = 0.5 * (m[:, 1] + m[:, 2])
        new = np.concatenate([np.column_stack([m[:, 0], m[:, 1], mid]),
                              np.column_stack([m[:, 0], mid, m[:, 2]])])
        qn, cnt = rule(new)
        evals += cnt
        seg = np.concatenate([seg[keep], new])
        q = np.concatenate([q[:, keep, :], qn], axis=1)
    value = (q[:, :, 1] + q[:, :, 2]).sum(axis=1)
    err = np.abs(q[:, :, 1] + q[:, :, 2] - q[:, :, 0]).sum(axis=1)
    wall = (time.perf_counter() - t_start) * 1e3
    return QuadratureResult(value, err, evals, seg.shape[0], converged, log_scale, wall)


def log_ladder_integral(
    area_between: Callable[[float, float], QuadratureResult],
    R: float,
    nodes: int = 64,
    decades: float = 8.0,
) -> QuadratureResult:
    """``int_0^R A(t) dt / t`` from cumulative shell integrals on a log-spaced radius ladder.

    ``area_between(a, b)`` integrates the density over the annulus
    ``a <= |z| < b``.  Radii ``t_i = R e^{-s_i}`` use a composite trapezoid in
    ``s``; the innermost disc, where ``A(t)`` is quadratic in ``t``,
    contributes ``A(t_min) / 2``.
    """
    s_max = decades * math.log(10.0)
    s = np.linspace(0.0, s_max, nodes)
    t = R * np.exp(-s)[::-1]  # ascending radii
    inner = area_between(0.0, float(t[0]))
    shells = [inner]
    for a, b in zip(t[:-1], t[1:]):
        shells.append(area_between(float(a), float(b)))
    vals = np.cumsum([np.asarray(q.value) for q in shells], axis=0)
    errs = np.cumsum([np.asarray(q.error) for q in shells], axis=0)
    h = s[1] - s[0]
    weights = np.full(nodes, h)
    weights[0] = weights[-1] = h / 2
    w = weights[::-1]
    value = np.tensordot(w, vals, axes=1) + vals[0] / 2
    error = np.tensordot(w, errs, axes=1) + errs[0] / 2
    evals = sum(q.evaluations for q in shells)
    conv = all(q.converged for q in shells)
    return QuadratureResult(value, error, evals, sum(q.cells for q in shells), conv, shells[0].log_scale)
