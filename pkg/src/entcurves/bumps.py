"""Exponential bump functions exp(z / x - 1 + eps) and their rotated copies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError

DEFAULT_EPS = 1e-3


@dataclass(frozen=True)
class BumpFunction:
    """Entire function ``phi(z) = exp(z * e^{i theta} / x - 1 + eps)``.

    ``x`` is the base (unrotated) centre; the bump peaks at the rotated
    centre ``x * e^{-i theta}``, where ``|phi| = e^eps``.  On the closed disc
    of radius ``|x|`` minus the unit disc around the peak, ``|phi| < 1`` as
    long as ``eps < 1 / (2 |x|^2)``.
    """

    x: complex
    eps: float = DEFAULT_EPS
    theta: float = 0.0

    def __post_init__(self):
        x = complex(self.x)
        if x == 0 or not math.isfinite(abs(x)):
            raise InvariantError("bump centre must be finite and nonzero")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise InvariantError("bump eps must be a positive real")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))

    @classmethod
    def centered_at(cls, center: complex, base: complex, eps: float = DEFAULT_EPS) -> "BumpFunction":
        """Rotated copy of the bump based at ``base`` that peaks at ``center``."""
        if not math.isclose(abs(center), abs(base), rel_tol=1e-12):
            raise InvariantError("a rotated copy keeps the modulus of the centre")
        theta = math.atan2((base / center).imag, (base / center).real)
        return cls(base, eps, theta % (2 * math.pi))

    @property
    def rotation(self) -> complex:
        return complex(math.cos(self.theta), math.sin(self.theta))

    @property
    def center(self) -> complex:
        return self.x / self.rotation

    @property
    def slope(self) -> complex:
        """Derivative of the exponent: ``e^{i theta} / x``."""
        return self.rotation / self.x

    def exponent(self, z):
        """``w(z)`` with ``phi = exp(w)``."""
        return np.asarray(z, dtype=complex) * self.slope - 1.0 + self.eps

    def max_log_modulus(self, R: float) -> float:
        """Maximum of ``log |phi|`` over the closed disc of radius ``R``."""
        return R / abs(self.x) - 1.0 + self.eps

    def __call__(self, z):
        return np.exp(self.exponent(z))

    def derivative(self, z):
        return self.slope * np.exp(self.exponent(z))

    def power(self, z, alpha: float):
        """``phi(z) ** alpha`` computed as ``exp(alpha * w(z))``."""
        return np.exp(alpha * self.exponent(z))

    def to_json(self) -> dict:
        return {"x_re": self.x.real, "x_im": self.x.imag, "eps": self.eps, "theta": self.theta}

    @classmethod
    def from_json(cls, data: dict) -> "BumpFunction":
        return cls(complex(data["x_re"], data["x_im"]), data["eps"], data["theta"])


def bump_eval(bump: BumpFunction, z):
    return bump(z)


def bump_eval_derivative(bump: BumpFunction, z):
    return bump.derivative(z)


def bump_extrema(bump: BumpFunction, R: float, samples: int = 4096) -> tuple[float, float, float]:
    """Grid maxima ``(m, m', m0)`` of a bump on the disc of radius ``R``.

    ``m`` is the maximum of ``|phi|`` on the closed disc intersected with the
    unit disc at the centre, ``m'`` the maximum of ``|phi'|`` on the disc and
    ``m0`` the maximum of ``|phi|`` on the disc minus the open unit disc at the
    centre.  Each maximum is taken over boundary samples of the region (the
    modulus of a holomorphic function is subharmonic) followed by one local
    refinement pass around the best sample.
    """
    c = bump.center
    if not math.isclose(abs(c), R, rel_tol=1e-9):
        raise InvariantError("bump centre must lie on the boundary circle")
    arg_c = math.atan2(c.imag, c.real)
    # angular half-width of the part of |z| = R inside the unit disc at c
    half = 2.0 * math.asin(min(1.0, 1.0 / (2.0 * R)))

    def refine(fun, pts: np.ndarray, param: np.ndarray, build) -> float:
        vals = fun(pts)
        k = int(np.argmax(vals))
        step = (param[1] - param[0]) if param.size > 1 else 0.0
        lo, hi = max(param[0], param[k] - step), min(param[-1], param[k] + step)
        fine = build(np.linspace(lo, hi, 257))
        return float(max(vals[k], np.max(fun(fine))))

    modulus = lambda z: np.abs(bump(z))
    dmodulus = lambda z: np.abs(bump.derivative(z))

    # m: boundary of the unit disc at c clipped to |z| <= R, plus the arc of |z| = R inside it
    t = np.linspace(0.0, 2 * np.pi, samples)
    circ = c + np.exp(1j * t)
    inside = np.abs(circ) <= R * (1 + 1e-12)
    cand = [modulus(circ[inside]).max() if inside.any() else 0.0]
    tt = np.linspace(arg_c - half, arg_c + half, samples)
    cand.append(refine(modulus, R * np.exp(1j * tt), tt, lambda s: R * np.exp(1j * s)))
    m = float(max(cand))

    # m': boundary circle of the disc
    tt = np.linspace(0.0, 2 * np.pi, samples)
    m_prime = refine(dmodulus, R * np.exp(1j * tt), tt, lambda s: R * np.exp(1j * s))

    # m0: arc of |z| = R outside the unit disc at c, and the arc of the unit circle inside |z| <= R
    tt = np.linspace(arg_c + half, arg_c + 2 * np.pi - half, samples)
    m0_outer = refine(modulus, R * np.exp(1j * tt), tt, lambda s: R * np.exp(1j * s))
    inner = circ[inside]
    m0_inner = float(modulus(inner).max()) if inner.size else 0.0
    m0 = max(m0_outer, m0_inner)
    if m <= 1.0:
        raise InvariantError(f"bump maximum {m} does not exceed 1; eps too small or centre misplaced")
    if m0 >= 1.0:
        raise InvariantError(f"bump exceeds 1 away from its centre (m0 = {m0}); eps too large for R = {R}")
    return m, m_prime, m0


def bump_extrema_exact(bump: BumpFunction, R: float) -> tuple[float, float, float]:
    """Closed-form values of :func:`bump_extrema` for a centre on the circle ``|z| = R``."""
    eps = bump.eps
    a = abs(bump.x)
    return math.exp(eps), math.exp(R / a - 1 + eps) / a, math.exp(eps - 1.0 / (2.0 * R * R))
