"""Weierstrass elliptic function, its derivative and the pulled-back round metric.

Evaluation reduces the argument to the Voronoi cell of the lattice, sums the
lattice terms exactly over a small disc ``|lambda| <= N * l_min`` and adds the
far part of the sum through its Taylor expansion in ``z``.  The Taylor
coefficients are Eisenstein sums minus the near part; the Eisenstein sums come
from q-series (weights 4 and 6) and the Laurent recursion (higher weights).
The neglected far Taylor tail is bounded explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import InvariantError, PoleError
from .geometry import Lattice

POLE_RADIUS = 1e-8
LAURENT_RADIUS = 1e-3
_ROUNDING = 4e-16


def reduced_periods(lattice: Lattice) -> tuple[complex, complex]:
    """Gauss-reduced periods ``(w1, w2)`` with ``Im(w2 / w1) > 0``."""
    w1, w2 = lattice.periods
    if abs(w1) > abs(w2):
        w1, w2 = w2, w1
    for _ in range(200):
        mu = round((w2 * w1.conjugate()).real / abs(w1) ** 2)
        w2 = w2 - mu * w1
        if abs(w2) < abs(w1):
            w1, w2 = w2, w1
        else:
            break
    if (w2 / w1).imag < 0:
        w2 = -w2
    return complex(w1), complex(w2)


def _sigma(n: int, k: int) -> int:
    return sum(d**k for d in range(1, n + 1) if n % d == 0)


def eisenstein_sums(lattice: Lattice, kmax: int) -> np.ndarray:
    """Lattice sums ``G_{2k} = sum' lambda^{-2k}`` for ``k = 2 .. kmax``.

    Returns an array indexed by ``k`` (entries 0 and 1 unused).
    """
    w1, w2 = reduced_periods(lattice)
    tau = w2 / w1
    q = np.exp(2j * np.pi * tau)
    terms = 40
    e4 = 1.0 + 240.0 * sum(_sigma(n, 3) * q**n for n in range(1, terms))
    e6 = 1.0 - 504.0 * sum(_sigma(n, 5) * q**n for n in range(1, terms))
    G = np.zeros(kmax + 1, dtype=complex)
    G[2] = (np.pi**4 / 45.0) * e4 / w1**4
    G[3] = (2.0 * np.pi**6 / 945.0) * e6 / w1**6
    # Laurent coefficients a_n of wp - 1/z^2 with a_n = (2n+1) G_{2n+2}
    a = np.zeros(kmax, dtype=complex)
    a[1] = 3.0 * G[2]
    if kmax >= 3:
        a[2] = 5.0 * G[3]
    for n in range(3, kmax):
        s = sum(a[k] * a[n - 1 - k] for k in range(1, n - 1))
        a[n] = 3.0 * s / ((2 * n + 3) * (n - 2))
    for n in range(1, kmax):
        G[n + 1] = a[n] / (2 * n + 1)
    return G


def _lattice_points(w1: complex, w2: complex, radius: float) -> np.ndarray:
    """Nonzero lattice points with modulus at most ``radius``."""
    h = abs((w2 * w1.conjugate()).imag) / abs(w1)
    mmax = int(math.ceil(radius / h)) + 1
    nmax = int(math.ceil(radius / abs(w1) + mmax * abs(w2) / abs(w1))) + 1
    n, m = np.meshgrid(np.arange(-nmax, nmax + 1), np.arange(-mmax, mmax + 1))
    pts = (n * w1 + m * w2).ravel()
    keep = (np.abs(pts) <= radius) & (pts != 0)
    return pts[keep]


def _far_power_sum(w1: complex, w2: complex, inner: float, p: int, covolume: float,
                   cell_radius: float) -> float:
    """Upper bound on ``sum_{|lambda| > inner} |lambda|^{-p}``."""
    outer = 4.0 * inner + 4.0 * cell_radius
    pts = _lattice_points(w1, w2, outer)
    mod = np.abs(pts)
    near = float(np.sum(mod[mod > inner] ** (-float(p))))
    d = cell_radius
    tail = (1.0 + d / outer) ** p * 2.0 * np.pi / (covolume * (p - 2) * (outer - d) ** (p - 2))
    return near + tail


@dataclass(frozen=True)
class WeierstrassP:
    """Weierstrass function of a lattice in C with certified truncation.

    Parameters
    ----------
    lattice : Lattice
        Rank-2 lattice in C.
    N : int
        Exact summation radius in units of the shortest period.
    """

    lattice: Lattice
    N: int = 3
    terms: int = 24
    periods: tuple[complex, complex] = field(init=False)
    near_points: np.ndarray = field(init=False, repr=False)
    taylor: np.ndarray = field(init=False, repr=False)
    tail_bound: float = field(init=False)
    tail_bound_prime: float = field(init=False)
    cell_radius: float = field(init=False)

    def __post_init__(self):
        if self.lattice.n != 1:
            raise InvariantError("the Weierstrass function needs a lattice in C")
        if int(self.N) < 1:
            raise InvariantError("truncation radius must be a positive integer")
        w1, w2 = reduced_periods(self.lattice)
        object.__setattr__(self, "periods", (w1, w2))
        # covering radius of the Voronoi cell bounds |z| after reduction
        corners = [(w1 + w2) / 2, (w1 - w2) / 2]
        cell = max(abs(c) for c in corners)
        object.__setattr__(self, "cell_radius", float(cell))
        radius = self.N * abs(w1)
        near = _lattice_points(w1, w2, radius)
        object.__setattr__(self, "near_points", near)
        K = self.terms
        G = eisenstein_sums(self.lattice, K + 1)
        taylor = np.zeros(K + 1, dtype=complex)
        for k in range(1, K + 1):
            taylor[k] = (2 * k + 1) * (G[k + 1] - np.sum(near ** (-(2 * k + 2))))
        object.__setattr__(self, "taylor", taylor)
        mod = np.abs(_lattice_points(w1, w2, radius + 3 * abs(w2)))
        rho = float(np.min(mod[mod > radius * (1 + 1e-12)]))
        r0 = cell / rho
        if r0 >= 1.0:
            raise InvariantError("truncation radius too small for this lattice")
        M = 2 * K + 2
        rho_vol = self.lattice.covolume
        S_val = _far_power_sum(w1, w2, radius * (1 + 1e-12), M + 2, rho_vol, cell)
        S_der = _far_power_sum(w1, w2, radius * (1 + 1e-12), M + 3, rho_vol, cell)
        G_abs = float(sum((2 * k + 1) * abs(G[k + 1]) * cell ** (2 * k) for k in range(1, K + 1)))
        near_abs = float(np.sum(np.abs(near) ** -2.0)) * 3.0
        rounding = _ROUNDING * 10 * (G_abs + near_abs)
        tail = cell**M * (M + 1) / (1 - r0) ** 2 * S_val + rounding
        tail_p = cell ** (M - 1) * M * (M + 1) / (1 - r0) ** 3 * S_der + rounding * 4 / cell
        object.__setattr__(self, "tail_bound", float(tail))
        object.__setattr__(self, "tail_bound_prime", float(tail_p))

    # -- reduction -------------------------------------------------------
    def _reduce(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split ``z`` into (nearest lattice point, offset in the Voronoi cell)."""
        w1, w2 = self.periods
        det = (w1.conjugate() * w2).imag
        # real coordinates in the reduced basis
        a = (z * w2.conjugate()).imag / -det
        b = (z * w1.conjugate()).imag / det
        base = np.floor(a + 0.5) * w1 + np.floor(b + 0.5) * w2
        off = z - base
        best = off
        best_lat = base
        for shift in (w1, w2, w1 + w2, w1 - w2):
            for sgn in (1.0, -1.0):
                cand = off - sgn * shift
                better = np.abs(cand) < np.abs(best)
                best = np.where(better, cand, best)
                best_lat = np.where(better, base + sgn * shift, best_lat)
        return best_lat, best

    def _check_poles(self, lat: np.ndarray, u: np.ndarray) -> None:
        bad = np.abs(u) < POLE_RADIUS
        if np.any(bad):
            idx = int(np.flatnonzero(bad.ravel())[0])
            point = complex(lat.ravel()[idx])
            raise PoleError(f"argument within {POLE_RADIUS} of lattice point {point}", point)

    # -- regular parts ---------------------------------------------------
    def _regular(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``wp(u) - 1/u^2`` and ``wp'(u) + 2/u^3`` for ``u`` in the Voronoi cell."""
        lam = self.near_points
        val = np.zeros(u.shape, dtype=complex)
        der = np.zeros(u.shape, dtype=complex)
        inv_l2 = lam ** -2.0
        for lj, il2 in zip(lam, inv_l2):
            d = 1.0 / (u - lj)
            d2 = d * d
            val += d2 - il2
            der -= 2.0 * d2 * d
        u2 = u * u
        K = self.terms
        pv = np.zeros(u.shape, dtype=complex)
        pd = np.zeros(u.shape, dtype=complex)
        for k in range(K, 0, -1):
            pv = pv * u2 + self.taylor[k]
            pd = pd * u2 + 2 * k * self.taylor[k]
        val += pv * u2
        der += pd * u
        return val, der

    def evaluate(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(wp(z), wp'(z))`` for scalar or array ``z``."""
        z = np.asarray(z, dtype=complex)
        lat, u = self._reduce(z)
        self._check_poles(lat, u)
        reg, dreg = self._regular(u)
        val = 1.0 / (u * u) + reg
        der = -2.0 / (u * u * u) + dreg
        if val.ndim == 0:
            return complex(val), complex(der)
        return val, der

    def wp(self, z):
        return self.evaluate(z)[0]

    def wp_prime(self, z):
        return self.evaluate(z)[1]

    def density(self, z):
        """Density of the pulled-back round form: |wp'|^2 / (2 pi (1 + |wp|^2)^2).

        Total mass over a fundamental domain is 2.  Near lattice points the
        value is computed from the scaled Laurent form, which tends to 0.
        """
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        _, u = self._reduce(z)
        safe = np.where(np.abs(u) < POLE_RADIUS, POLE_RADIUS, u)
        reg, dreg = self._regular(safe)
        near = np.abs(u) < LAURENT_RADIUS
        out = np.empty(z.shape, dtype=float)
        # scaled Laurent form: s = u^2 wp, t = u^3 wp'
        if np.any(near):
            un = u[near]
            s = 1.0 + un * un * reg[near]
            t = -2.0 + un**3 * dreg[near]
            au2 = np.abs(un) ** 2
            out[near] = np.abs(t) ** 2 * au2 / (2 * np.pi * (au2 * au2 + np.abs(s) ** 2) ** 2)
        far = ~near
        if np.any(far):
            uf = u[far]
            val = 1.0 / (uf * uf) + reg[far]
            der = -2.0 / (uf * uf * uf) + dreg[far]
            out[far] = np.abs(der) ** 2 / (2 * np.pi * (1.0 + np.abs(val) ** 2) ** 2)
        return float(out[0]) if scalar else out

    def fundamental_grid(self, m: int, centered: bool = True) -> np.ndarray:
        """``m x m`` grid of cell centres of the fundamental parallelogram."""
        w1, w2 = self.lattice.periods
        s = (np.arange(m) + 0.5) / m
        if centered:
            s = s - 0.5
        S, T = np.meshgrid(s, s, indexing="ij")
        return S * w1 + T * w2

    def integrate_density(self, m: int = 256) -> tuple[float, float]:
        """Integral of the pulled-back round form over a fundamental domain.

        The integrand is smooth and periodic, so the periodic trapezoidal rule
        converges geometrically; the error estimate compares ``m`` against
        ``m / 2`` points per side.
        """
        area = self.lattice.covolume

        def trap(k: int) -> float:
            w1, w2 = self.lattice.periods
            s = np.arange(k) / k
            S, T = np.meshgrid(s, s, indexing="ij")
            z = S * w1 + T * w2
            return 2.0 * float(np.mean(self.density(z))) * area

        fine = trap(m)
        coarse = trap(m // 2)
        return fine, abs(fine - coarse)


def lattice_sum_wp(z: complex, lattice: Lattice, N: int, chunk: int = 2048) -> tuple[complex, complex, float]:
    """Direct symmetric lattice sum of wp over ``|lambda| <= N * l_min``.

    Independent of :class:`WeierstrassP`; used as a brute-force reference.
    Returns ``(value, derivative, tail_bound)`` where the bound covers the
    omitted part of the value sum.
    """
    w1, w2 = reduced_periods(lattice)
    radius = N * abs(w1)
    z = complex(z)
    h = abs((w2 * w1.conjugate()).imag) / abs(w1)
    mmax = int(math.ceil(radius / h)) + 1
    val = 1.0 / z**2
    der = -2.0 / z**3
    rows = np.arange(-mmax, mmax + 1)
    for start in range(0, rows.size, chunk):
        m = rows[start:start + chunk]
        # range of n for each row in the disc
        nspan = int(math.ceil(radius / abs(w1) + np.max(np.abs(m)) * abs(w2) / abs(w1))) + 1
        for mi in m:
            c = mi * w2
            # solve |n w1 + c| <= radius for real n
            proj = -(c * w1.conjugate()).real / abs(w1) ** 2
            perp2 = abs(c) ** 2 - (proj * abs(w1)) ** 2
            if perp2 > radius**2:
                continue
            half = math.sqrt(max(0.0, radius**2 - perp2)) / abs(w1)
            n = np.arange(math.floor(proj - half) - 1, math.ceil(proj + half) + 2)
            n = n[np.abs(n) <= nspan]
            lam = n * w1 + c
            lam = lam[(np.abs(lam) <= radius) & (lam != 0)]
            d = 1.0 / (z - lam)
            val += np.sum(d * d - lam ** -2.0)
            der += np.sum(-2.0 * d**3)
    cell = max(abs((w1 + w2) / 2), abs((w1 - w2) / 2))
    r = abs(z) / (radius - cell)
    s4 = (1 + cell / radius) ** 4 * np.pi / (lattice.covolume * (radius - cell) ** 2)
    tail = 3.0 * abs(z) ** 2 / (1 - r) ** 2 * s4
    return complex(val), complex(der), float(tail)


@dataclass(frozen=True)
class FSCohomology:
    """Periodic primitive relating the pulled-back round form to the flat form.

    On C, ``2 * density * dA = c * dA + d(theta)`` with ``c = 2 / covolume``
    and ``theta = d^c u`` for a lattice-periodic ``u`` solving
    ``Laplace(u) = 4 pi (2 * density - c)``.  The sup-norm of ``theta`` bounds
    the boundary correction when the round area of a holomorphic image is
    computed from its flat area.

    Attributes
    ----------
    c : float
        Flat-to-round cohomology constant ``2 / covolume``.
    theta_sup : float
        Upper bound for ``|theta|`` (pointwise operator norm).
    density_max : float
        Upper bound for the density.
    lipschitz : float
        Upper bound for ``|wp'| / (1 + |wp|^2)``, the Lipschitz constant of
        ``wp`` from the flat metric into the angular metric on CP^1.
    resolution_error : float
        Change of ``theta_sup`` between grid resolutions ``m / 2`` and ``m``.
    """

    c: float
    theta_sup: float
    density_max: float
    lipschitz: float
    resolution_error: float
    grid: int
    coefficients: np.ndarray = field(repr=False)
    dual: tuple[complex, complex] = field(repr=False)

    def grad_u(self, z) -> np.ndarray:
        """Gradient ``(u_x, u_y)`` of the periodic primitive, shape ``z.shape + (2,)``."""
        z = np.asarray(z, dtype=complex)
        m = self.coefficients.shape[0]
        freq = np.fft.fftfreq(m, 1.0 / m)
        k1, k2 = np.meshgrid(freq, freq, indexing="ij")
        d1, d2 = self.dual
        kappa = (k1 * d1 + k2 * d2).ravel()
        coef = self.coefficients.ravel() * 2j * np.pi
        flat = z.ravel()
        out = np.empty(flat.shape + (2,), dtype=float)
        for start in range(0, flat.size, 256):
            zz = flat[start:start + 256]
            phase = np.exp(2j * np.pi * (np.conj(kappa)[None, :] * zz[:, None]).real)
            out[start:start + 256, 0] = (phase @ (coef * kappa.real)).real
            out[start:start + 256, 1] = (phase @ (coef * kappa.imag)).real
        return out.reshape(z.shape + (2,))

    def theta(self, z) -> np.ndarray:
        """Coefficients ``(a, b)`` of ``theta = a dx + b dy`` at ``z``.

        With ``d^c = (i / 4 pi)(dbar - d)``, ``d^c u = (u_x dy - u_y dx) / (4 pi)``.
        """
        g = self.grad_u(z)
        return np.stack([-g[..., 1], g[..., 0]], axis=-1) / (4.0 * np.pi)


def _dual_basis(w1: complex, w2: complex) -> tuple[complex, complex]:
    """Vectors ``d1, d2`` with ``Re(conj(d_a) w_b) = delta_ab``."""
    A = np.array([[w1.real, w1.imag], [w2.real, w2.imag]])
    D = np.linalg.inv(A).T
    return complex(D[0, 0], D[0, 1]), complex(D[1, 0], D[1, 1])


def fs_cohomology(W: WeierstrassP, m: int = 256) -> FSCohomology:
    """Solve for the periodic primitive by FFT on an ``m x m`` grid."""
    w1, w2 = W.lattice.periods
    area = W.lattice.covolume
    c = 2.0 / area
    d1, d2 = _dual_basis(w1, w2)

    def solve(k: int):
        s = np.arange(k) / k
        S, T = np.meshgrid(s, s, indexing="ij")
        z = S * w1 + T * w2
        rho = W.density(z)
        f = 4.0 * np.pi * (2.0 * rho - c)
        fh = np.fft.fft2(f) / (k * k)
        freq = np.fft.fftfreq(k, 1.0 / k)
        k1, k2 = np.meshgrid(freq, freq, indexing="ij")
        kappa = k1 * d1 + k2 * d2
        lap = -4.0 * np.pi**2 * np.abs(kappa) ** 2
        lap[0, 0] = 1.0
        uh = fh / lap
        uh[0, 0] = 0.0
        # gradient on a 2x oversampled grid for a sharper sup estimate
        big = 2 * k
        pad = np.zeros((big, big), dtype=complex)
        idx = np.fft.fftfreq(k, 1.0 / k).astype(int)
        pad[np.ix_(idx % big, idx % big)] = uh
        freq_b = np.fft.fftfreq(big, 1.0 / big)
        b1, b2 = np.meshgrid(freq_b, freq_b, indexing="ij")
        kb = b1 * d1 + b2 * d2
        gx = np.fft.ifft2(pad * 2j * np.pi * kb.real) * big * big
        gy = np.fft.ifft2(pad * 2j * np.pi * kb.imag) * big * big
        grad = np.hypot(gx.real, gy.real)
        return float(np.max(grad)), uh, float(np.max(rho))

    sup_f, uh, rho_max_grid = solve(m)
    sup_c, _, _ = solve(m // 2)
    res_err = abs(sup_f - sup_c)
    theta_sup = (sup_f + res_err) / (4.0 * np.pi) * 1.02

    # density maximum refined by local optimisation from the best grid cells
    grid = W.fundamental_grid(64)
    vals = W.density(grid)
    best = np.argsort(vals.ravel())[-6:]

    def neg(p):
        return -W.density(complex(p[0], p[1]))

    dmax = float(np.max(vals))
    for idx in best:
        z0 = grid.ravel()[idx]
        res = optimize.minimize(neg, [z0.real, z0.imag], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14})
        dmax = max(dmax, -float(res.fun))
    dmax = max(dmax, rho_max_grid) * (1.0 + 1e-6)
    return FSCohomology(
        c=c,
        theta_sup=float(theta_sup),
        density_max=dmax,
        lipschitz=math.sqrt(2.0 * np.pi * dmax),
        resolution_error=res_err,
        grid=m,
        coefficients=uh,
        dual=(d1, d2),
    )
