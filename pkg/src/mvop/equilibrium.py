"""One-cut equilibrium measure on the rescaled interval ``[-1, 1]``.

With ``[a, b]`` the support for the external field ``v`` and ``x -> c x + d``
the affine map onto ``[-1, 1]``, everything here lives in the ``x`` variable:
``V(x) = v(c x + d)``, density ``psi(x) = h(x) sqrt(1 - x^2) / (2 pi)``,
``phi(z) = int_1^z h(s) (s^2 - 1)^{1/2} ds`` and ``phi = V + ell - 2 g``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import binom, roots_jacobi

from mvop.weight import Potential

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    pass


class DegenerateInterval(RuntimeError):
    pass


class RegularityError(ValueError):
    """Density is not strictly positive inside the support."""


class EllInconsistent(RuntimeError):
    """Two probe points give different Euler-Lagrange constants."""


@dataclass(frozen=True)
class SupportInterval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise DegenerateInterval(f"need a < b, got ({self.a}, {self.b})")

    @property
    def c(self) -> float:
        return (self.b - self.a) / 2

    @property
    def d(self) -> float:
        return (self.b + self.a) / 2

    @classmethod
    def from_cd(cls, c: float, d: float) -> "SupportInterval":
        return cls(d - c, d + c)


def _mrs_residual(v: Potential, a: float, b: float, nodes) -> np.ndarray:
    c, d = (b - a) / 2, (b + a) / 2
    dv = v.derivative()
    (u1, w1), (u2, w2) = nodes
    # (1+u)^{1/2}(1-u)^{-1/2} and its mirror
    i1 = c / (2 * np.pi) * np.dot(w1, npoly.polyval(d + c * u1, dv))
    i2 = c / (2 * np.pi) * np.dot(w2, npoly.polyval(d + c * u2, dv))
    return np.array([i1 - 1.0, i2 + 1.0])


def _monomial_halfwidth(m: int) -> float:
    # support of x^{2m}: c^{2m} = 2 (2m)!! / (2m (2m-1)!!)
    even = math.prod(range(2, 2 * m + 1, 2))
    odd = math.prod(range(1, 2 * m, 2))
    return (2.0 * even / (2 * m * odd)) ** (1.0 / (2 * m))


def solve_mrs(v: Potential, tol: float = 1e-13, max_iter: int = 100) -> SupportInterval:
    """Endpoints ``a < b`` of the one-cut support, by damped Newton on the MRS conditions."""
    n = v.degree + 2
    nodes = (roots_jacobi(n, -0.5, 0.5), roots_jacobi(n, 0.5, -0.5))
    b0 = _monomial_halfwidth(v.degree // 2)
    x = np.array([-b0, b0])
    res = _mrs_residual(v, *x, nodes)
    for it in range(max_iter):
        nrm = float(np.max(np.abs(res)))
        if nrm < tol:
            break
        J = np.empty((2, 2))
        for k in range(2):
            step = 1e-7 * max(1.0, abs(x[k]))
            xp = x.copy()
            xp[k] += step
            J[:, k] = (_mrs_residual(v, *xp, nodes) - res) / step
        try:
            dx = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular Jacobian in MRS Newton iteration") from None
        lam = 1.0
        while lam > 1e-6:
            xn = x + lam * dx
            if xn[1] - xn[0] > 0:
                rn = _mrs_residual(v, *xn, nodes)
                if np.max(np.abs(rn)) < nrm:
                    break
            lam /= 2
        else:
            raise NonConvergence(f"line search stalled at residual {nrm:.3e}")
        x, res = xn, rn
    else:
        raise NonConvergence(f"no convergence in {max_iter} iterations (residual {nrm:.3e})")
    if x[1] - x[0] < 1e-10:
        raise DegenerateInterval(f"support width {x[1] - x[0]:.3e}")
    log.debug("MRS converged in %d iterations: a=%.17g b=%.17g", it, x[0], x[1])
    return SupportInterval(float(x[0]), float(x[1]))


def mrs_residuals(v: Potential, supp: SupportInterval) -> tuple[float, float]:
    n = v.degree + 2
    nodes = (roots_jacobi(n, -0.5, 0.5), roots_jacobi(n, 0.5, -0.5))
    r = _mrs_residual(v, supp.a, supp.b, nodes)
    return float(r[0]), float(r[1])


def compute_h(v: Potential, supp: SupportInterval) -> np.ndarray:
    """Polynomial part of ``V'(x) / (x^2 - 1)^{1/2}``, ascending coefficients.

    Uses ``1/(x^2-1)^{1/2} = x^{-1} sum_k binom(2k, k) 4^{-k} x^{-2k}``.
    """
    p = npoly.polyder(v.rescaled(supp.c, supp.d))
    deg = len(p) - 1
    h = np.zeros(deg)
    for j, pj in enumerate(p):
        for k in range((j - 1) // 2 + 1):
            e = j - 1 - 2 * k
            if e >= 0:
                h[e] += pj * math.comb(2 * k, k) / 4.0**k
    return h


@dataclass(frozen=True)
class EquilibriumData:
    support: SupportInterval
    h_coeffs: np.ndarray
    ell: float
    potential: Potential

    @property
    def c(self) -> float:
        return self.support.c

    @property
    def d(self) -> float:
        return self.support.d

    @property
    def V_coeffs(self) -> np.ndarray:
        return self.potential.rescaled(self.c, self.d)

    def V(self, z):
        return npoly.polyval(z, self.V_coeffs)

    def h(self, x):
        return npoly.polyval(x, self.h_coeffs)

    def h_prime(self, x):
        return npoly.polyval(x, npoly.polyder(self.h_coeffs))


def psi_density(eq: EquilibriumData, x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("density is supported on [-1, 1]")
    return eq.h(x) * np.sqrt(1.0 - x * x) / (2 * np.pi)


def _cheb2(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, n + 1)
    t = k * np.pi / (n + 1)
    return np.cos(t), np.pi / (n + 1) * np.sin(t) ** 2


def psi_mass(h_coeffs, n: int = 200) -> float:
    s, w = _cheb2(n)
    return float(np.dot(w, npoly.polyval(s, h_coeffs)) / (2 * np.pi))


def _phi_from_parts(h_coeffs, z, R, logterm):
    # J_k = int s^k R ds from a zero of R, via
    # (k+2) J_k = z^{k-1} R^3 + (k-1) J_{k-2}
    J = []
    R3 = R**3
    for k in range(len(h_coeffs)):
        if k == 0:
            J.append((z * R - logterm) / 2)
        elif k == 1:
            J.append(R3 / 3)
        else:
            J.append((z ** (k - 1) * R3 + (k - 1) * J[k - 2]) / (k + 2))
    return sum(hk * Jk for hk, Jk in zip(h_coeffs, J))


def _R(z):
    z = complex(z)
    return np.sqrt(z - 1) * np.sqrt(z + 1)


def phi_fn(eq: EquilibriumData, z) -> complex:
    """``int_1^z h(s)(s^2-1)^{1/2} ds``, analytic off ``(-inf, 1]``."""
    z = complex(z)
    if z.imag == 0.0 and -1.0 < z.real < 1.0:
        raise ValueError("phi_fn is two-valued on (-1, 1); use phi_plus / phi_minus")
    R = _R(z)
    return complex(_phi_from_parts(eq.h_coeffs, z, R, np.log(z + R)))


def phi_plus(eq: EquilibriumData, x: float) -> complex:
    """Boundary value of ``phi`` from the upper half plane; purely imaginary on (-1, 1)."""
    if not -1.0 <= x <= 1.0:
        raise ValueError("phi_plus needs x in [-1, 1]")
    R = 1j * math.sqrt(1.0 - x * x)
    return complex(_phi_from_parts(eq.h_coeffs, x, R, 1j * math.acos(x)))


def phi_minus(eq: EquilibriumData, x: float) -> complex:
    return phi_plus(eq, x).conjugate()


def phi_tilde(eq: EquilibriumData, z) -> complex:
    """``int_{-1}^z h(s)(s^2-1)^{1/2} ds``, analytic off ``[-1, inf)``."""
    z = complex(z)
    if z.imag == 0.0 and z.real > -1.0:
        raise ValueError("phi_tilde has a cut on [-1, inf)")
    R = _R(z)
    return complex(_phi_from_parts(eq.h_coeffs, z, R, np.log(-(z + R))))


def g_fn(eq: EquilibriumData, z, tol: float = 1e-11, n0: int = 200, n_max: int = 200 * 2**10) -> complex:
    """``int log(z - s) psi(s) ds`` by Gauss-Chebyshev (second kind), doubling the order."""
    z = complex(z)
    if z.imag == 0.0 and z.real <= 1.0:
        raise ValueError("g_fn has a cut on (-inf, 1]")
    prev = None
    n = n0
    while n <= n_max:
        s, w = _cheb2(n)
        val = complex(np.dot(w * eq.h(s), np.log(z - s)) / (2 * np.pi))
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise NonConvergence(f"g quadrature did not settle at z={z}")


def ell_at(eq: EquilibriumData, z0) -> float:
    z0 = complex(z0)
    return float((phi_fn(eq, z0) + 2 * g_fn(eq, z0) - eq.V(z0)).real)


def ell_constant(eq: EquilibriumData) -> float:
    return eq.ell


def _taylor_shift(coeffs, s: float) -> np.ndarray:
    """Coefficients in ``t`` of ``p(s + t)``."""
    out = np.zeros(1)
    for cf in reversed(coeffs):
        out = npoly.polyadd(npoly.polymul(out, [s, 1.0]), [cf])
    return np.asarray(out, dtype=float)


_SERIES_TERMS = 60


def _local_series(h_coeffs, edge: float) -> np.ndarray:
    # h(edge + t) * sqrt(2 + edge * t) as a power series in t
    k = np.arange(_SERIES_TERMS)
    root = math.sqrt(2.0) * binom(0.5, k) * (edge / 2.0) ** k
    full = npoly.polymul(_taylor_shift(h_coeffs, edge), root)
    return np.asarray(full[:_SERIES_TERMS])


def _edge_map(h_coeffs, edge: float, t: complex) -> complex:
    ck = _local_series(h_coeffs, edge)
    S = npoly.polyval(t, ck / (np.arange(len(ck)) + 1.5))
    return complex((0.75 * S) ** (2.0 / 3.0))


def conformal_f(eq: EquilibriumData, z) -> complex:
    """``(3 phi / 4)^{2/3}`` continued analytically across ``z = 1``."""
    t = complex(z) - 1.0
    if abs(t) > 0.5:
        raise ValueError("conformal_f is only evaluated within 0.5 of z = 1")
    return t * _edge_map(eq.h_coeffs, 1.0, t)


def conformal_f_tilde(eq: EquilibriumData, z) -> complex:
    """``(3 phi~ / 4)^{2/3}`` near ``z = -1``; real with negative slope on the real line."""
    u = complex(z) + 1.0
    if abs(u) > 0.5:
        raise ValueError("conformal_f_tilde is only evaluated within 0.5 of z = -1")
    return -u * _edge_map(eq.h_coeffs, -1.0, u)


def check_regular(h_coeffs, n: int = 200) -> None:
    x = np.linspace(-1.0, 1.0, n)
    hv = npoly.polyval(x, h_coeffs)
    if np.min(hv) <= 0.0:
        raise RegularityError(f"h has min {np.min(hv):.3e} on [-1, 1]; not one-cut regular")


def equilibrium_data(v: Potential, tol: float = 1e-13, ell_tol: float = 1e-9) -> EquilibriumData:
    supp = solve_mrs(v, tol=tol)
    h = compute_h(v, supp)
    check_regular(h)
    eq = EquilibriumData(supp, h, float("nan"), v)
    ell = ell_at(eq, 2.0)
    ell3 = ell_at(eq, 3.0)
    if abs(ell - ell3) > ell_tol * max(1.0, abs(ell)):
        raise EllInconsistent(f"ell differs between probes: {ell!r} vs {ell3!r}")
    return EquilibriumData(supp, h, ell, v)
