"""Polynomials in scaled Newton form and constructive multi-disc Runge approximation.

A polynomial is stored as ``p(z) = sum_k c_k prod_{j<k} (z - z_j) / s``.
With all nodes at 0 this is the scaled monomial form ``sum_k c_k (z/s)^k``.
Newton form on Leja points of a compact set is the numerically stable way to
represent polynomials that approximate well on that set while growing
rapidly elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvariantError, RungeError


@dataclass(frozen=True)
class Polynomial:
    """``p(z) = sum_k coeffs[k] * prod_{j<k} (z - nodes[j]) / scale``."""

    coeffs: tuple[complex, ...] = (0j,)
    scale: float = 1.0
    nodes: tuple[complex, ...] | None = None

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in np.atleast_1d(np.asarray(self.coeffs, dtype=complex)))
        if not coeffs:
            coeffs = (0j,)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvariantError("polynomial scale must be positive")
        nodes = None
        if self.nodes is not None:
            nodes = tuple(complex(c) for c in np.atleast_1d(np.asarray(self.nodes, dtype=complex)))
            if len(nodes) < len(coeffs) - 1:
                raise InvariantError("Newton form needs one node per coefficient beyond the first")
            nodes = nodes[: len(coeffs) - 1]
            if all(n == 0 for n in nodes):
                nodes = None
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls((0j,))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def _node(self, k: int) -> complex:
        return 0j if self.nodes is None else self.nodes[k]

    def evaluate(self, z):
        """Value and derivative in one nested pass."""
        z = np.asarray(z, dtype=complex)
        val = np.zeros(z.shape, dtype=complex) + self.coeffs[-1]
        der = np.zeros(z.shape, dtype=complex)
        inv = 1.0 / self.scale
        for k in range(len(self.coeffs) - 2, -1, -1):
            step = (z - self._node(k)) * inv
            der = der * step + val * inv
            val = val * step + self.coeffs[k]
        return val, der

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        val = np.zeros(z.shape, dtype=complex) + self.coeffs[-1]
        inv = 1.0 / self.scale
        for k in range(len(self.coeffs) - 2, -1, -1):
            val = val * ((z - self._node(k)) * inv) + self.coeffs[k]
        return val

    def derivative(self, z):
        return self.evaluate(z)[1]

    def to_json(self) -> dict:
        doc = {"scale": self.scale, "coeffs": [[c.real, c.imag] for c in self.coeffs]}
        if self.nodes is not None:
            doc["nodes"] = [[c.real, c.imag] for c in self.nodes]
        return doc

    @classmethod
    def from_json(cls, data: dict) -> "Polynomial":
        nodes = data.get("nodes")
        return cls(
            tuple(complex(re, im) for re, im in data["coeffs"]),
            data.get("scale", 1.0),
            None if nodes is None else tuple(complex(re, im) for re, im in nodes),
        )


@dataclass(frozen=True)
class RungeTarget:
    """Closed disc on which ``f + correction`` should be near ``value``.

    ``value=None`` asks for the correction itself to be small there.
    ``tol`` overrides the global tolerance for this disc.
    """

    center: complex
    radius: float = 1.0
    value: complex | None = None
    tol: float | None = None


@dataclass(frozen=True)
class RungeResult:
    correction: Polynomial
    degree: int
    sup_base: float
    sup_targets: tuple[float, ...]
    verification_samples: int
    polynomial: Polynomial | None = None
    notes: str = field(default="")

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "sup_base": self.sup_base,
            "sup_targets": list(self.sup_targets),
            "verification_samples": self.verification_samples,
            "notes": self.notes,
        }


def _circle(center: complex, radius: float, m: int, phase: float = 0.0) -> np.ndarray:
    t = (np.arange(m) + phase) * (2 * np.pi / m)
    return center + radius * np.exp(1j * t)


def leja_order(candidates: np.ndarray, count: int) -> np.ndarray:
    """Indices of the first ``count`` Leja points of a discrete candidate set."""
    count = min(count, candidates.size)
    idx = np.empty(count, dtype=int)
    idx[0] = int(np.argmax(np.abs(candidates)))
    logp = np.log(np.abs(candidates - candidates[idx[0]]) + 1e-300)
    logp[idx[0]] = -np.inf
    for k in range(1, count):
        j = int(np.argmax(logp))
        idx[k] = j
        logp += np.log(np.abs(candidates - candidates[j]) + 1e-300)
        logp[j] = -np.inf
    return idx


def _newton_coefficients(nodes: np.ndarray, values: np.ndarray, scale: float) -> np.ndarray:
    n = nodes.size
    c = np.zeros(n, dtype=complex)
    c[0] = values[0]
    for i in range(1, n):
        w = np.concatenate([[1.0 + 0j], np.cumprod((nodes[i] - nodes[:i]) / scale)])
        c[i] = (values[i] - np.dot(c[:i], w[:i])) / w[i]
    return c


def multi_disc_runge(
    f: Callable[[np.ndarray], np.ndarray],
    R: float,
    targets: Sequence[RungeTarget],
    delta: float,
    *,
    base_tol: float | None = None,
    start_degree: int = 8,
    degree_cap: int = 2**14,
    candidates_per_circle: int = 4096,
) -> RungeResult:
    """Polynomial correction ``p`` with ``|p| < base_tol`` on the closed disc of
    radius ``R`` and ``|f + p - value_j| < tol_j`` on every target disc.

    ``p`` interpolates the required residuals at Leja points of the union of
    the boundary circles.  The degree doubles until verification passes.
    Both ``p`` and ``f + p - value_j`` are holomorphic, so their suprema over
    the closed discs are attained on the boundary circles; verification
    samples every circle at ``max(4096, 8 (degree + 1))`` points offset from
    the candidate set, plus an interior circle and the centre.

    Raises
    ------
    RungeError
        When the degree cap is reached, or doubling stops improving the fit,
        before the tolerances are met.  Carries the best sup-norms found.
    """
    if R <= 0 or delta <= 0:
        raise InvariantError("radius and tolerance must be positive")
    base_tol = delta if base_tol is None else base_tol
    targets = list(targets)
    for i, a in enumerate(targets):
        if a.radius <= 0:
            raise InvariantError("target discs need a positive radius")
        if abs(a.center) - a.radius <= R:
            raise InvariantError(f"target disc {i} meets the base disc")
        for b in targets[i + 1:]:
            if abs(a.center - b.center) <= a.radius + b.radius:
                raise InvariantError("target discs must be pairwise disjoint")
    if not targets:
        return RungeResult(Polynomial.zero(), 0, 0.0, (), 0,
                           f if isinstance(f, Polynomial) else None, "no targets")

    regions = [(0j, float(R), None, float(base_tol))] + [
        (complex(a.center), float(a.radius), a.value, float(delta if a.tol is None else a.tol))
        for a in targets
    ]
    m = candidates_per_circle
    cand = np.concatenate([_circle(c, r, m) for c, r, _, _ in regions])
    resid = np.concatenate([
        np.zeros(m, dtype=complex) if v is None
        else v - np.asarray(f(_circle(c, r, m)), dtype=complex)
        for c, r, v, _ in regions
    ])
    cap = min(degree_cap, cand.size // 4)
    order = leja_order(cand, min(cap, 4 * start_degree) + 1)
    # logarithmic capacity estimate keeps the Newton basis of unit size on the set
    head = cand[order]
    scale = float(np.exp(np.mean(np.log(np.abs(head[-1] - head[:-1])))))

    def verify(poly: Polynomial, mv: int) -> list[float]:
        sups = []
        for c, r, v, _ in regions:
            z = np.concatenate([_circle(c, r, mv, 0.5), _circle(c, 0.5 * r, 64), np.array([c])])
            if v is None:
                err = np.abs(poly(z))
            else:
                err = np.abs(np.asarray(f(z), dtype=complex) + poly(z) - v)
            sups.append(float(np.max(err)))
        return sups

    best = None
    stall = 0
    degree = start_degree
    while True:
        if degree + 1 > order.size:
            order = leja_order(cand, min(cap, 2 * degree) + 1)
        use = order[: degree + 1]
        nodes = cand[use]
        coef = _newton_coefficients(nodes, resid[use], scale)
        poly = Polynomial(tuple(coef), scale, tuple(nodes[:-1]))
        mv = max(4096, 8 * (degree + 1))
        sups = verify(poly, mv)
        score = max(s / tol for s, (*_, tol) in zip(sups, regions))
        stall = 0 if best is None or score < 0.9 * best[0] else stall + 1
        if best is None or score < best[0]:
            best = (score, poly, sups, degree, mv)
        if score < 1.0:
            break
        if 2 * degree > cap or stall >= 2:
            raise RungeError(
                f"Runge approximation failed at degree {degree}: best tolerance ratio {best[0]:.3g}",
                best[2], best[3])
        degree *= 2

    _, poly, sups, degree, mv = best
    zero_base = isinstance(f, Polynomial) and f.is_zero
    return RungeResult(
        correction=poly,
        degree=degree,
        sup_base=sups[0],
        sup_targets=tuple(sups[1:]),
        verification_samples=mv,
        polynomial=poly if zero_base else None,
        notes="Newton interpolation at Leja points; suprema sampled on boundary circles, "
              "an interior circle and centres",
    )
