"""Lattices, constant (1,1)-forms, target currents and metrics.

A lattice of rank 2n in C^n is stored through its real generator matrix:
column ``k`` holds the real coordinates ``(Re g_k, Im g_k)`` of generator
``k``.  Points of C^n are reduced by solving for their real coordinates in
that basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InvariantError

_SNAP = 1e-11
_HERMITIAN_TOL = 1e-12
_PSD_TOL = 1e-12
_TRACE_TOL = 1e-12


def _as_complex_vector(z: Any) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=complex))


@dataclass(frozen=True)
class Lattice:
    """A full-rank lattice of rank 2n in C^n.

    Parameters
    ----------
    generators : sequence of 2n vectors in C^n
        Real-linearly independent generators.
    """

    generators: tuple[tuple[complex, ...], ...]
    _real_basis: np.ndarray = field(init=False, repr=False, compare=False)
    _real_inverse: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, generators: Sequence[Sequence[complex]] | Sequence[complex]):
        gens = [tuple(complex(c) for c in np.atleast_1d(np.asarray(g, dtype=complex)))
                for g in generators]
        if not gens:
            raise InvariantError("a lattice needs generators")
        n = len(gens[0])
        if any(len(g) != n for g in gens) or len(gens) != 2 * n:
            raise InvariantError(f"expected {2 * n} generators of length {n}, got {len(gens)}")
        arr = np.array(gens, dtype=complex).T  # n x 2n
        basis = np.vstack([arr.real, arr.imag])  # 2n x 2n
        if not np.all(np.isfinite(basis)):
            raise InvariantError("lattice generators must be finite")
        det = np.linalg.det(basis)
        scale = float(np.prod(np.linalg.norm(basis, axis=0)))
        if scale == 0.0 or abs(det) <= 1e-12 * scale:
            raise InvariantError("lattice generators are not real-linearly independent")
        object.__setattr__(self, "generators", tuple(gens))
        object.__setattr__(self, "_real_basis", basis)
        object.__setattr__(self, "_real_inverse", np.linalg.inv(basis))

    @classmethod
    def square(cls) -> "Lattice":
        """The Gaussian lattice Z + iZ."""
        return cls([[1.0], [1j]])

    @classmethod
    def from_periods(cls, omega1: complex, omega2: complex) -> "Lattice":
        return cls([[omega1], [omega2]])

    @property
    def n(self) -> int:
        return len(self.generators[0])

    @property
    def covolume(self) -> float:
        """Volume of a fundamental domain (its area when n = 1)."""
        return float(abs(np.linalg.det(self._real_basis)))

    @property
    def periods(self) -> tuple[complex, complex]:
        """Both generators as scalars; only meaningful when n = 1."""
        if self.n != 1:
            raise InvariantError("periods are defined for rank-2 lattices in C only")
        return self.generators[0][0], self.generators[1][0]

    def coordinates(self, z: Any) -> np.ndarray:
        """Real coordinates of points with respect to the generators.

        ``z`` has shape ``(n,)`` or ``(..., n)``; for ``n = 1`` scalars and
        arbitrary complex arrays are accepted and give shape ``z.shape + (2,)``.
        """
        z = np.asarray(z, dtype=complex)
        if self.n == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        real = np.concatenate([z.real, z.imag], axis=-1)
        return real @ self._real_inverse.T

    def from_coordinates(self, c: np.ndarray) -> np.ndarray:
        real = np.asarray(c, dtype=float) @ self._real_basis.T
        n = self.n
        return real[..., :n] + 1j * real[..., n:]

    def reduce(self, z: Any) -> Any:
        """Representative of ``z`` in the half-open fundamental parallelepiped."""
        return reduce_mod_lattice(z, self)

    def reduce_centered(self, z: Any) -> Any:
        """Representative with every real coordinate in [-1/2, 1/2)."""
        scalar = self.n == 1 and np.ndim(z) == 0
        c = self.coordinates(z)
        c = c - np.floor(c + 0.5)
        out = self.from_coordinates(c)
        if self.n == 1:
            out = out[..., 0]
            return complex(out) if scalar else out
        return out

    def distance(self, a: Any, b: Any) -> float:
        """Flat distance on C^n / lattice between the classes of ``a`` and ``b``."""
        d = self.coordinates(_as_complex_vector(a) - _as_complex_vector(b))
        d = d - np.floor(d + 0.5)
        base = self.from_coordinates(d)
        best = math.inf
        dim = 2 * self.n
        # neighbours of the centered representative cover the nearest translate
        for shift in np.ndindex(*([3] * dim)):
            s = np.array(shift, dtype=float) - 1.0
            cand = base - self.from_coordinates(s)
            best = min(best, float(np.linalg.norm(cand)))
        return best

    def to_json(self) -> dict:
        arr = np.array(self.generators, dtype=complex)
        return {"n": self.n, "generators_re": arr.real.tolist(), "generators_im": arr.imag.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Lattice":
        try:
            re = np.asarray(data["generators_re"], dtype=float)
            im = np.asarray(data["generators_im"], dtype=float)
            n = int(data["n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantError(f"malformed lattice document: {exc}") from exc
        if re.shape != im.shape:
            raise InvariantError("generators_re and generators_im differ in shape")
        gens = (re + 1j * im).reshape(2 * n, n) if re.size == 2 * n * n else None
        if gens is None:
            raise InvariantError(f"expected {2 * n} generators of dimension {n}")
        return cls(gens)


def reduce_mod_lattice(z: Any, lattice: Lattice) -> Any:
    """Map ``z`` to the fundamental domain spanned by the lattice generators.

    Real coordinates of the result lie in ``[0, 1)``.  Coordinates within a
    relative ``1e-11`` of an integer are snapped, so generators reduce to 0.
    """
    scalar = lattice.n == 1 and np.ndim(z) == 0
    c = lattice.coordinates(z)
    nearest = np.round(c)
    c = np.where(np.abs(c - nearest) <= _SNAP * np.maximum(1.0, np.abs(c)), nearest, c)
    frac = c - np.floor(c)
    frac = np.where(frac >= 1.0, 0.0, frac)
    out = lattice.from_coordinates(frac)
    if lattice.n == 1:
        out = out[..., 0]
        return complex(out) if scalar else out
    return out


@dataclass(frozen=True)
class ConstantForm:
    """The constant (1,1)-form sum xi[k, l] dz_k ^ dzbar_l."""

    xi: np.ndarray

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, dtype=complex))
        if xi.shape[0] != xi.shape[1] or not np.all(np.isfinite(xi)):
            raise InvariantError("form coefficients must be a finite square matrix")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def kahler(cls, n: int) -> "ConstantForm":
        """The flat Kaehler form (i/2) sum dz_k ^ dzbar_k."""
        return cls(0.5j * np.eye(n))

    @classmethod
    def elementary(cls, n: int, k: int, l: int) -> "ConstantForm":
        xi = np.zeros((n, n), dtype=complex)
        xi[k, l] = 1.0
        return cls(xi)

    def __add__(self, other: "ConstantForm") -> "ConstantForm":
        return ConstantForm(self.xi + other.xi)

    def __rmul__(self, scalar: complex) -> "ConstantForm":
        return ConstantForm(complex(scalar) * self.xi)


def affine_current_pairing(v: Sequence[complex], form: ConstantForm) -> complex:
    """Pairing of the affine current in direction ``v`` with a constant form.

    Equals ``-2i * v^T xi conj(v) / |v|^2``; it depends only on the complex
    line spanned by ``v``.
    """
    v = _as_complex_vector(v)
    norm2 = float(np.vdot(v, v).real)
    if norm2 == 0.0:
        raise InvariantError("direction vector must be nonzero")
    if form.xi.shape != (v.size, v.size):
        raise InvariantError("form dimension does not match the vector")
    return complex(-2j * (v @ form.xi @ v.conj()) / norm2)


@dataclass(frozen=True)
class TargetCurrent:
    """A Hermitian, positive semidefinite, trace-one n x n matrix."""

    H: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=complex)).copy()
        n = H.shape[0]
        if H.shape != (n, n):
            raise InvariantError("target current must be a square matrix")
        if not np.all(np.isfinite(H)):
            raise InvariantError("target current has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(H))))
        skew = float(np.max(np.abs(H - H.conj().T)))
        if skew > _HERMITIAN_TOL * scale:
            raise InvariantError(f"target current is not Hermitian (max |H - H*| = {skew:.3e})")
        H = 0.5 * (H + H.conj().T)
        lam = np.linalg.eigvalsh(H)
        if lam[0] < -_PSD_TOL * scale:
            raise InvariantError(f"target current is indefinite (smallest eigenvalue {lam[0]:.3e})")
        tr = float(np.trace(H).real)
        if abs(tr - 1.0) > _TRACE_TOL:
            raise InvariantError(f"target current trace is {tr!r}, expected 1")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @classmethod
    def rank_one(cls, v: Sequence[complex]) -> "TargetCurrent":
        v = _as_complex_vector(v)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    def to_json(self) -> dict:
        return {"n": self.n, "H_re": self.H.real.tolist(), "H_im": self.H.imag.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "TargetCurrent":
        try:
            H = np.asarray(data["H_re"], dtype=float) + 1j * np.asarray(data["H_im"], dtype=float)
            n = int(data["n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantError(f"malformed target current document: {exc}") from exc
        if H.shape != (n, n):
            raise InvariantError(f"target current matrix must be {n}x{n}")
        return cls(H)


@dataclass(frozen=True)
class SpectralDecomposition:
    betas: tuple[float, ...]
    directions: tuple[tuple[complex, ...], ...]

    def matrix(self) -> np.ndarray:
        V = np.array(self.directions, dtype=complex)
        return (V.T * np.array(self.betas)) @ V.conj()


def _jacobi_hermitian(A: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    total = float(np.linalg.norm(A))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= 1e-17 * max(total, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                tau = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # unitary acting on the (p, q) plane: phase fix then real rotation
                J = np.eye(n, dtype=complex)
                J[p, p] = c
                J[p, q] = s
                J[q, p] = -s * phase.conjugate()
                J[q, q] = c * phase.conjugate()
                A = J.conj().T @ A @ J
                A[p, q] = A[q, p] = 0.0
                V = V @ J
    return np.diag(A).real.copy(), V


def _fix_phase(v: np.ndarray) -> np.ndarray:
    for comp in v:
        if abs(comp) > 1e-12:
            return v * (abs(comp) / comp)
    return v


def spectral_decompose(target: TargetCurrent) -> SpectralDecomposition:
    """Eigen-decomposition ``H = sum beta_s v_s v_s^*`` with a canonical form.

    Eigenvalues are sorted in descending order, tiny negative values are
    clipped to zero, the first nonzero component of each direction is real
    positive, and equal eigenvalues are ordered lexicographically
    (descending) by the real and imaginary parts of their directions.
    """
    if not isinstance(target, TargetCurrent):
        target = TargetCurrent(target)
    lam, V = _jacobi_hermitian(target.H)
    lam = np.where(lam < 0.0, 0.0, lam)
    vecs = [_fix_phase(V[:, s]) for s in range(V.shape[1])]

    def key(s: int):
        parts = []
        for comp in vecs[s]:
            parts.extend([-round(comp.real, 12), -round(comp.imag, 12)])
        return (-round(float(lam[s]), 12), *parts)

    order = sorted(range(len(vecs)), key=key)
    return SpectralDecomposition(
        betas=tuple(float(lam[s]) for s in order),
        directions=tuple(tuple(complex(c) for c in vecs[s]) for s in order),
    )


def _normalize_cp1(p: Any) -> complex | None:
    if p is None:
        return None
    p = complex(p)
    if not (math.isfinite(p.real) and math.isfinite(p.imag)):
        return None
    return p


def chordal_distance(p: Any, q: Any) -> float:
    """Chordal distance on CP^1 in affine coordinates (``None`` or inf is infinity)."""
    p, q = _normalize_cp1(p), _normalize_cp1(q)
    if p is None and q is None:
        return 0.0
    if p is None:
        return 1.0 / math.hypot(1.0, abs(q))
    if q is None:
        return 1.0 / math.hypot(1.0, abs(p))
    # hypot keeps huge affine coordinates from overflowing
    return abs(p - q) / math.hypot(1.0, abs(p)) / math.hypot(1.0, abs(q))


def fs_distance(p: Any, q: Any) -> float:
    """Angular distance on CP^1: the arcsine of the chordal distance.

    Antipodal points are at distance pi/2.  This is half the great-circle
    distance on the unit sphere, a metric equal to the arc length of the
    projective line with its standard round metric.
    """
    return math.asin(min(1.0, chordal_distance(p, q)))


def fs_distance_array(p: np.ndarray, q: complex) -> np.ndarray:
    """Vectorised :func:`fs_distance` against one finite point ``q``."""
    p = np.asarray(p, dtype=complex)
    chord = np.abs(p - q) / np.hypot(1.0, np.abs(p)) / math.hypot(1.0, abs(q))
    return np.arcsin(np.minimum(1.0, chord))


def projective_distance(u: Sequence[float], w: Sequence[float]) -> float:
    """Angle between two nonnegative vectors viewed as points of RP^{m-1}."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape:
        raise InvariantError("vectors must have the same length")
    nu, nw = np.linalg.norm(u), np.linalg.norm(w)
    if nu == 0.0 or nw == 0.0:
        raise InvariantError("zero vector has no projective class")
    cos = float(np.dot(u, w) / (nu * nw))
    return math.acos(max(-1.0, min(1.0, cos)))
