"""Stage curves for tori and for CP^1 x E as exact sums of exponential terms.

Every bump power ``amp * phi^alpha`` equals ``amp * exp(a z + b)`` with
``a = alpha e^{i theta} / x`` and ``b = alpha (eps - 1)``, so a stage curve
is a sum of polynomials and exponentials.  Values can be computed with a
global factor ``exp(-shift)`` removed, which keeps integrands finite when the
exponents exceed the floating range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .bumps import BumpFunction
from .errors import InvariantError, TermOverflowError
from .geometry import Lattice, reduce_mod_lattice
from .polynomials import Polynomial
from .quadrature import Hint
from .weierstrass import WeierstrassP

TORUS_SCHEMA = "torus-curve/1"
PRODUCT_SCHEMA = "product-curve/1"
_EXP_LIMIT = 700.0
# terms smaller than the dominant one by this many e-folds get no quadrature hint
_HINT_WINDOW = 60.0


@dataclass(frozen=True)
class _Terms:
    """Flattened exponential terms: ``sum_j amps[j] * exp(rates[j] z + consts[j])``."""

    amps: np.ndarray  # (T, ncomp) complex
    rates: np.ndarray  # (T,) complex
    consts: np.ndarray  # (T,) real
    labels: tuple[str, ...]
    peaks: np.ndarray  # (T,) complex peak location (bump centre)
    alphas: np.ndarray  # (T,) real

    def log_max(self, R: float) -> np.ndarray:
        """``log`` of each term's maximum modulus over the closed disc of radius ``R``."""
        with np.errstate(divide="ignore"):
            la = np.log(np.max(np.abs(self.amps), axis=1)) if self.amps.size else np.zeros(0)
        return la + np.abs(self.rates) * R + self.consts


def _polys_eval(polys: Sequence[Sequence[Polynomial]], z: np.ndarray, derivative: bool) -> np.ndarray:
    out = np.zeros((len(polys),) + z.shape, dtype=complex)
    for k, plist in enumerate(polys):
        for p in plist:
            if p.is_zero:
                continue
            if derivative:
                out[k] += p.evaluate(z)[1]
            else:
                out[k] += p(z)
    return out


def _rescaled(values: np.ndarray, shift) -> np.ndarray:
    """``values * exp(-shift)`` with zeros kept at zero when ``exp(-shift)`` overflows."""
    if np.all(np.asarray(shift) == 0):
        return values
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(values == 0, 0j, values * np.exp(-shift))


class _ExpCurve:
    """Shared evaluation for curves made of polynomials plus exponential terms."""

    ncomp: int

    def _polys(self) -> list[list[Polynomial]]:
        raise NotImplementedError

    def _terms(self, upto: int | None = None) -> _Terms:
        raise NotImplementedError

    def _combine(self, z, derivative: bool, shift: float, upto: int | None, only: int | None):
        z = np.asarray(z, dtype=complex)
        terms = self._terms(upto) if only is None else self._stage_terms(only)
        out = np.zeros((self.ncomp,) + z.shape, dtype=complex)
        if only is None:
            polys = self._polys() if upto is None else self._polys_upto(upto)
            out += _rescaled(_polys_eval(polys, z, derivative), shift)
        else:
            polys = self._stage_polys(only)
            out += _rescaled(_polys_eval(polys, z, derivative), shift)
        for j in range(terms.rates.size):
            if not np.any(terms.amps[j]):
                continue
            expo = terms.rates[j] * z + (terms.consts[j] - shift)
            top = float(np.max(expo.real)) if expo.size else -np.inf
            if top > _EXP_LIMIT:
                raise TermOverflowError(
                    f"term {terms.labels[j]} reaches exp({top:.4g}) beyond floating range; "
                    "evaluate with a larger shift", terms.labels[j])
            e = np.exp(expo)
            if derivative:
                e = e * terms.rates[j]
            out += terms.amps[j][(slice(None),) + (None,) * z.ndim] * e[None]
        return out

    def eval(self, z, *, shift=0.0, upto: int | None = None):
        """Curve value, multiplied by ``exp(-shift)``; shape ``(ncomp,) + z.shape``.

        ``shift`` is a scalar or an array broadcasting against ``z``.
        """
        return self._combine(z, False, shift, upto, None)

    def eval_derivative(self, z, *, shift=0.0, upto: int | None = None):
        """Exact derivative, multiplied by ``exp(-shift)``."""
        return self._combine(z, True, shift, upto, None)

    def eval_component(self, z, k: int, *, shift: float = 0.0, derivative: bool = False):
        """One coordinate of the curve (or its derivative), skipping terms absent from it.

        Terms that live only in other coordinates are never exponentiated, so
        a coordinate stays evaluable where another one overflows.
        """
        z = np.asarray(z, dtype=complex)
        terms = self._terms()
        out = _rescaled(_polys_eval([self._polys()[k]], z, derivative)[0], shift)
        for j in range(terms.rates.size):
            amp = terms.amps[j][k]
            if amp == 0:
                continue
            expo = terms.rates[j] * z + (terms.consts[j] - shift)
            top = float(np.max(expo.real)) if expo.size else -np.inf
            if top > _EXP_LIMIT:
                raise TermOverflowError(
                    f"term {terms.labels[j]} reaches exp({top:.4g}) beyond floating range", terms.labels[j])
            e = np.exp(expo)
            out = out + amp * (e * terms.rates[j] if derivative else e)
        return out

    def stage_increment(self, z, stage: int, *, derivative: bool = False):
        """Contribution added by one stage (1-based): ``F_t - F_{t-1}``.

        A perturbation counts as part of the last stage.
        """
        return self._combine(z, derivative, 0.0, None, stage)

    def pointwise_log_scale(self, z) -> np.ndarray:
        """Largest log-modulus among the polynomial parts and exponential terms at each point.

        Passing it as ``shift`` keeps every value finite and the dominant
        term of order one, even where the curve itself under- or overflows.
        Points where everything vanishes get 0.
        """
        z = np.asarray(z, dtype=complex)
        t = self._terms()
        with np.errstate(divide="ignore"):
            polys = _polys_eval(self._polys(), z, False)
            out = np.max(np.log(np.abs(polys)), axis=0)
            for j in range(t.rates.size):
                if not np.any(t.amps[j]):
                    continue
                la = float(np.log(np.max(np.abs(t.amps[j]))))
                out = np.maximum(out, (t.rates[j] * z).real + t.consts[j] + la)
        return np.where(np.isfinite(out), out, 0.0)

    def log_scale(self, R: float, *, upto: int | None = None) -> float:
        """Shift that keeps all terms at most ``O(1)`` on the disc of radius ``R``."""
        lm = self._terms(upto).log_max(R)
        return float(max(0.0, np.max(lm))) if lm.size else 0.0

    def derivative_log_scale(self, R: float, *, upto: int | None = None) -> float:
        t = self._terms(upto)
        lm = t.log_max(R)
        if not lm.size:
            return 0.0
        with np.errstate(divide="ignore"):
            lm = lm + np.log(np.abs(t.rates))
        return float(max(0.0, np.max(lm)))

    def hints(self, R: float, *, upto: int | None = None) -> list[Hint]:
        """Quadrature hints for terms that are significant on the disc of radius ``R``."""
        t = self._terms(upto)
        lm = t.log_max(R)
        if not lm.size:
            return []
        top = float(np.max(lm))
        out = []
        for j in range(lm.size):
            if lm[j] < top - _HINT_WINDOW or not np.isfinite(lm[j]):
                continue
            a = abs(t.rates[j])
            if a == 0:
                continue
            # direction in which Re(rate * z) is largest on the circle
            ang = -math.atan2(t.rates[j].imag, t.rates[j].real)
            out.append(Hint(ang, 1.0 / a, 1.0 / math.sqrt(a * R)))
        return out

    def _polys_upto(self, upto: int) -> list[list[Polynomial]]:
        raise NotImplementedError

    def _stage_polys(self, stage: int) -> list[list[Polynomial]]:
        raise NotImplementedError

    def _stage_terms(self, stage: int) -> _Terms:
        raise NotImplementedError


def _stack_terms(rows: list[tuple[np.ndarray, BumpFunction, float, str]], ncomp: int) -> _Terms:
    if not rows:
        return _Terms(np.zeros((0, ncomp), dtype=complex), np.zeros(0, dtype=complex), np.zeros(0),
                      (), np.zeros(0, dtype=complex), np.zeros(0))
    amps = np.array([r[0] for r in rows], dtype=complex).reshape(len(rows), ncomp)
    rates = np.array([r[2] * r[1].slope for r in rows], dtype=complex)
    consts = np.array([r[2] * (r[1].eps - 1.0) for r in rows])
    return _Terms(amps, rates, consts, tuple(r[3] for r in rows),
                  np.array([r[1].center for r in rows]), np.array([r[2] for r in rows], dtype=float))


# -- torus -------------------------------------------------------------------


@dataclass(frozen=True)
class TorusTerm:
    beta: float
    bump: BumpFunction
    v: tuple[complex, ...]


@dataclass(frozen=True)
class TorusStage:
    R: float
    alpha: int
    terms: tuple[TorusTerm, ...]
    eps_budget: float | None = None

    def to_json(self) -> dict:
        return {
            "R": self.R, "alpha": self.alpha, "eps_budget": self.eps_budget,
            "terms": [{"beta": t.beta, "bump": t.bump.to_json(),
                       "v_re": [c.real for c in t.v], "v_im": [c.imag for c in t.v]} for t in self.terms],
        }

    @classmethod
    def from_json(cls, d: dict) -> "TorusStage":
        terms = tuple(TorusTerm(float(t["beta"]), BumpFunction.from_json(t["bump"]),
                                tuple(complex(a, b) for a, b in zip(t["v_re"], t["v_im"])))
                      for t in d["terms"])
        return cls(float(d["R"]), int(d["alpha"]), terms, d.get("eps_budget"))


@dataclass(frozen=True)
class TorusCurveExpr(_ExpCurve):
    """Entire curve in C^n: base polynomials plus bump-power terms, one group per stage.

    Stage ``t`` adds ``sum_j (sqrt(beta_j) / alpha_t) * phi_j^alpha_t * v_j``.
    ``perturbation`` holds extra polynomials per component used when probing
    the stability of the verified inequalities.
    """

    n: int
    base: tuple[Polynomial, ...] = ()
    stages: tuple[TorusStage, ...] = ()
    lattice: Lattice | None = None
    perturbation: tuple[Polynomial, ...] = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise InvariantError("dimension must be positive")
        base = tuple(self.base) or tuple(Polynomial.zero() for _ in range(self.n))
        if len(base) != self.n:
            raise InvariantError("base curve needs one polynomial per coordinate")
        object.__setattr__(self, "base", base)
        if self.perturbation and len(self.perturbation) != self.n:
            raise InvariantError("perturbation needs one polynomial per coordinate")
        if self.lattice is not None and self.lattice.n != self.n:
            raise InvariantError("lattice dimension does not match the curve")
        prev_R = None
        for t, st in enumerate(self.stages, start=1):
            if st.alpha < 1:
                raise InvariantError(f"stage {t}: alpha must be a positive integer")
            betas = [term.beta for term in st.terms]
            if any(b < 0 for b in betas) or abs(sum(betas) - 1.0) > 1e-12:
                raise InvariantError(f"stage {t}: betas must be nonnegative and sum to 1")
            for term in st.terms:
                if len(term.v) != self.n or abs(np.linalg.norm(term.v) - 1.0) > 1e-12:
                    raise InvariantError(f"stage {t}: direction vectors must be unit vectors in C^{self.n}")
                if not math.isclose(abs(term.bump.center), st.R, rel_tol=1e-12):
                    raise InvariantError(f"stage {t}: bump centres must lie on the circle of radius R")
            centers = [term.bump.center for term in st.terms]
            for i in range(len(centers)):
                for j in range(i + 1, len(centers)):
                    if abs(centers[i] - centers[j]) <= 2.0:
                        raise InvariantError(f"stage {t}: bump unit discs overlap")
            if prev_R is not None and not math.isclose(st.R, 2 * prev_R, rel_tol=1e-12):
                raise InvariantError(f"stage {t}: radius must double")
            prev_R = st.R
        object.__setattr__(self, "_cache", {})

    @property
    def ncomp(self) -> int:
        return self.n

    @property
    def depth(self) -> int:
        return len(self.stages)

    def _rows(self, stage_index: int) -> list:
        st = self.stages[stage_index]
        rows = []
        for j, term in enumerate(st.terms):
            amp = math.sqrt(term.beta) / st.alpha * np.asarray(term.v, dtype=complex)
            rows.append((amp, term.bump, float(st.alpha), f"stage {stage_index + 1} term {j + 1}"))
        return rows

    def _terms(self, upto: int | None = None) -> _Terms:
        upto = self.depth if upto is None else upto
        key = ("terms", upto)
        if key not in self._cache:
            rows = [r for s in range(upto) for r in self._rows(s)]
            self._cache[key] = _stack_terms(rows, self.n)
        return self._cache[key]

    def _stage_terms(self, stage: int) -> _Terms:
        return _stack_terms(self._rows(stage - 1), self.n)

    def _polys(self) -> list[list[Polynomial]]:
        out = [[p] for p in self.base]
        for k, p in enumerate(self.perturbation):
            out[k].append(p)
        return out

    def _polys_upto(self, upto: int) -> list[list[Polynomial]]:
        return [[p] for p in self.base]

    def _stage_polys(self, stage: int) -> list[list[Polynomial]]:
        out = [[] for _ in range(self.n)]
        if stage == self.depth:
            for k, p in enumerate(self.perturbation):
                out[k].append(p)
        return out

    def truncated(self, depth: int) -> "TorusCurveExpr":
        return replace(self, stages=self.stages[:depth], perturbation=())

    def with_stage(self, stage: TorusStage) -> "TorusCurveExpr":
        return replace(self, stages=self.stages + (stage,), perturbation=())

    def perturbed(self, polys: Sequence[Polynomial]) -> "TorusCurveExpr":
        return replace(self, perturbation=tuple(polys))

    def project(self, z):
        """Point of the torus: the curve value reduced modulo the lattice, shape ``z.shape + (n,)``."""
        if self.lattice is None:
            raise InvariantError("projection needs the torus lattice")
        val = np.moveaxis(self.eval(z), 0, -1)
        return reduce_mod_lattice(val, self.lattice)

    def to_json(self) -> dict:
        doc = {
            "schema": TORUS_SCHEMA,
            "n": self.n,
            "base": [p.to_json() for p in self.base],
            "stages": [s.to_json() for s in self.stages],
        }
        if self.lattice is not None:
            doc["lattice"] = self.lattice.to_json()
        if self.perturbation:
            doc["perturbation"] = [p.to_json() for p in self.perturbation]
        return doc

    @classmethod
    def from_json(cls, d: dict) -> "TorusCurveExpr":
        if d.get("schema") != TORUS_SCHEMA:
            raise InvariantError(f"expected schema {TORUS_SCHEMA!r}, got {d.get('schema')!r}")
        return cls(
            n=int(d["n"]),
            base=tuple(Polynomial.from_json(p) for p in d["base"]),
            stages=tuple(TorusStage.from_json(s) for s in d["stages"]),
            lattice=Lattice.from_json(d["lattice"]) if "lattice" in d else None,
            perturbation=tuple(Polynomial.from_json(p) for p in d.get("perturbation", [])),
        )


# -- product -----------------------------------------------------------------


@dataclass(frozen=True)
class ProductStage:
    """One stage of a curve in C^2 projected to CP^1 x E.

    ``g_correction`` and ``h_correction`` are the polynomial corrections
    turning the previous stage into the auxiliary functions ``g*``, ``h*``;
    ``psi_terms`` (weights ``q``) are added to ``g`` and ``phi_terms``
    (weights ``p``) to ``h``.
    """

    R: float
    delta: float
    alpha: int
    g_correction: Polynomial
    h_correction: Polynomial
    psi_terms: tuple[tuple[float, BumpFunction], ...]
    phi_terms: tuple[tuple[float, BumpFunction], ...]
    eps_budget: float | None = None

    def to_json(self) -> dict:
        return {
            "R": self.R, "delta": self.delta, "alpha": self.alpha, "eps_budget": self.eps_budget,
            "g_star": self.g_correction.to_json(), "h_star": self.h_correction.to_json(),
            "psi_terms": [{"q": q, "bump": b.to_json()} for q, b in self.psi_terms],
            "phi_terms": [{"p": p, "bump": b.to_json()} for p, b in self.phi_terms],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ProductStage":
        return cls(
            float(d["R"]), float(d["delta"]), int(d["alpha"]),
            Polynomial.from_json(d["g_star"]), Polynomial.from_json(d["h_star"]),
            tuple((float(t["q"]), BumpFunction.from_json(t["bump"])) for t in d["psi_terms"]),
            tuple((float(t["p"]), BumpFunction.from_json(t["bump"])) for t in d["phi_terms"]),
            d.get("eps_budget"),
        )


@dataclass(frozen=True)
class ProductCurveExpr(_ExpCurve):
    """Entire curve ``(g, h)`` in C^2 with projection ``(wp(g), pi(h))`` to CP^1 x E.

    Stage ``t`` sets ``g_t = g_{t-1} + g_correction + sum_k q_k psi_k^alpha``
    and ``h_t = h_{t-1} + h_correction + sum_j p_j phi_j^alpha``.
    """

    lattice: Lattice
    base: tuple[Polynomial, Polynomial] = (Polynomial.zero(), Polynomial.zero())
    stages: tuple[ProductStage, ...] = ()
    R0: float = 8.0
    perturbation: tuple[Polynomial, ...] = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.lattice.n != 1:
            raise InvariantError("the elliptic factor needs a lattice in C")
        if len(self.base) != 2:
            raise InvariantError("the base curve has two coordinates")
        prev = self.R0
        for t, st in enumerate(self.stages, start=1):
            if st.alpha < 1:
                raise InvariantError(f"stage {t}: alpha must be a positive integer")
            for w, _ in st.psi_terms + st.phi_terms:
                if not 0.0 < w <= 1.0:
                    raise InvariantError(f"stage {t}: weights p, q must lie in (0, 1]")
            centers = [b.center for _, b in st.psi_terms + st.phi_terms]
            for c in centers:
                if not math.isclose(abs(c), st.R, rel_tol=1e-12):
                    raise InvariantError(f"stage {t}: bump centres must lie on the circle of radius R")
            for i in range(len(centers)):
                for j in range(i + 1, len(centers)):
                    if abs(centers[i] - centers[j]) <= 2.0:
                        raise InvariantError(f"stage {t}: bump unit discs overlap")
            count = len(centers)
            if not math.isclose(st.R, max(2 * prev, count), rel_tol=1e-12):
                raise InvariantError(f"stage {t}: R must equal max(2 R_prev, P + Q)")
            if not 0.0 < st.delta < 2.0**-t:
                raise InvariantError(f"stage {t}: delta must lie in (0, 2^-t)")
            prev = st.R
        object.__setattr__(self, "_cache", {})

    ncomp = 2

    @property
    def depth(self) -> int:
        return len(self.stages)

    def _rows(self, s: int) -> list:
        st = self.stages[s]
        rows = []
        for k, (q, b) in enumerate(st.psi_terms):
            rows.append((np.array([q, 0.0]), b, float(st.alpha), f"stage {s + 1} psi {k + 1}"))
        for j, (p, b) in enumerate(st.phi_terms):
            rows.append((np.array([0.0, p]), b, float(st.alpha), f"stage {s + 1} phi {j + 1}"))
        return rows

    def _terms(self, upto: int | None = None) -> _Terms:
        upto = self.depth if upto is None else upto
        key = ("terms", upto)
        if key not in self._cache:
            self._cache[key] = _stack_terms([r for s in range(upto) for r in self._rows(s)], 2)
        return self._cache[key]

    def _stage_terms(self, stage: int) -> _Terms:
        return _stack_terms(self._rows(stage - 1), 2)

    def _polys_upto(self, upto: int) -> list[list[Polynomial]]:
        g = [self.base[0]] + [s.g_correction for s in self.stages[:upto]]
        h = [self.base[1]] + [s.h_correction for s in self.stages[:upto]]
        return [g, h]

    def _polys(self) -> list[list[Polynomial]]:
        g, h = self._polys_upto(self.depth)
        if self.perturbation:
            g = g + [self.perturbation[0]]
            h = h + [self.perturbation[1]]
        return [g, h]

    def _stage_polys(self, stage: int) -> list[list[Polynomial]]:
        st = self.stages[stage - 1]
        out = [[st.g_correction], [st.h_correction]]
        if stage == self.depth and self.perturbation:
            out[0].append(self.perturbation[0])
            out[1].append(self.perturbation[1])
        return out

    def truncated(self, depth: int) -> "ProductCurveExpr":
        return replace(self, stages=self.stages[:depth], perturbation=())

    def with_stage(self, stage: ProductStage) -> "ProductCurveExpr":
        return replace(self, stages=self.stages + (stage,), perturbation=())

    def perturbed(self, polys: Sequence[Polynomial]) -> "ProductCurveExpr":
        return replace(self, perturbation=tuple(polys))

    @property
    def last_radius(self) -> float:
        return self.stages[-1].R if self.stages else self.R0

    def project(self, z, W: WeierstrassP | None = None):
        """``(wp(g(z)), pi(h(z)))``; ``wp`` values at lattice points are ``inf``."""
        W = WeierstrassP(self.lattice) if W is None else W
        g, h = self.eval(z)
        g = np.atleast_1d(g)
        _, u = W._reduce(g)
        pole = np.abs(u) < 1e-8
        wp = np.full(g.shape, complex(np.inf, 0.0))
        if np.any(~pole):
            wp[~pole] = W.wp(g[~pole])
        e = reduce_mod_lattice(np.atleast_1d(h), self.lattice)
        if np.ndim(z) == 0:
            return complex(wp[0]), complex(e[0])
        return wp, e

    def to_json(self) -> dict:
        doc = {
            "schema": PRODUCT_SCHEMA,
            "lattice": self.lattice.to_json(),
            "R0": self.R0,
            "base": {"g": self.base[0].to_json(), "h": self.base[1].to_json()},
            "stages": [s.to_json() for s in self.stages],
        }
        if self.perturbation:
            doc["perturbation"] = [p.to_json() for p in self.perturbation]
        return doc

    @classmethod
    def from_json(cls, d: dict) -> "ProductCurveExpr":
        if d.get("schema") != PRODUCT_SCHEMA:
            raise InvariantError(f"expected schema {PRODUCT_SCHEMA!r}, got {d.get('schema')!r}")
        return cls(
            lattice=Lattice.from_json(d["lattice"]),
            base=(Polynomial.from_json(d["base"]["g"]), Polynomial.from_json(d["base"]["h"])),
            stages=tuple(ProductStage.from_json(s) for s in d["stages"]),
            R0=float(d.get("R0", 8.0)),
            perturbation=tuple(Polynomial.from_json(p) for p in d.get("perturbation", [])),
        )


def curve_from_json(d: dict):
    schema = d.get("schema")
    if schema == TORUS_SCHEMA:
        return TorusCurveExpr.from_json(d)
    if schema == PRODUCT_SCHEMA:
        return ProductCurveExpr.from_json(d)
    raise InvariantError(f"unknown curve schema {schema!r}")


def affine_curve(v: Sequence[complex], c: Sequence[complex] | None = None) -> TorusCurveExpr:
    """The affine line ``z -> c + z v`` as a curve with no stages."""
    v = np.asarray(v, dtype=complex)
    c = np.zeros_like(v) if c is None else np.asarray(c, dtype=complex)
    base = tuple(Polynomial((c[k], v[k])) for k in range(v.size))
    return TorusCurveExpr(n=v.size, base=base)


def sup_norm_difference(curve, stage: int, r: float, samples: int = 4096, *,
                        with_error: bool = False):
    """Maximum of ``|F_t - F_{t-1}|`` over the closed disc of radius ``r``.

    The difference is holomorphic, so its modulus peaks on the boundary
    circle.  The circle is sampled at ``samples`` points and the best sample
    is refined on a finer local grid.  With ``with_error`` the result is a
    pair ``(value, bound)`` where ``bound`` is half the sample spacing times
    the largest sampled speed, the most a missed peak can exceed the samples.
    """
    if stage < 1 or stage > curve.depth:
        raise InvariantError("stage index out of range")
    t = np.arange(samples) * (2 * np.pi / samples)

    def norm_at(tt):
        d = curve.stage_increment(r * np.exp(1j * tt), stage)
        return np.sqrt(np.sum(np.abs(d) ** 2, axis=0))

    vals = norm_at(t)
    k = int(np.argmax(vals))
    step = 2 * np.pi / samples
    fine = norm_at(np.linspace(t[k] - step, t[k] + step, 257))
    value = float(max(vals[k], np.max(fine)))
    if not with_error:
        return value
    d = curve.stage_increment(r * np.exp(1j * t), stage, derivative=True)
    speed = float(np.max(np.sqrt(np.sum(np.abs(d) ** 2, axis=0))))
    return value, 0.5 * step * r * speed
