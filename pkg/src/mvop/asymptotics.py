"""Large-N predictions for ``P_{N,N}``, ``B_{N,N}``, ``C_{N,N}`` and ``H_{N,N}``.

Everything is phrased on the rescaled interval ``[-1, 1]``: the Szego data
come from the matrix ``c A`` with the constant left factor ``e^{A d}``, and the
scalar data from :mod:`mvop.equilibrium`.  Quantities containing ``N`` in an
exponent are kept as ``(log_scale, matrix)`` pairs.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from mvop.airy import airy_ai
from mvop.equilibrium import (
    EquilibriumData,
    conformal_f,
    equilibrium_data,
    g_fn,
    phi_plus,
)
from mvop.szego import (
    SzegoBoundaryData,
    SzegoFactorization,
    eval_D,
    eval_D_plus,
    extract_boundary_data,
    phi_map,
    spectral_factorize,
)
from mvop.weight import MatrixWeight, NilpotentMatrix, Potential, exp_nilpotent

log = logging.getLogger(__name__)


class CutProximityError(ValueError):
    """Requested point is outside the region where a formula applies."""


@dataclass(frozen=True)
class AsymptoticContext:
    szego: SzegoFactorization
    eq: EquilibriumData
    boundary: SzegoBoundaryData
    weight: MatrixWeight
    fingerprint: str = field(default="")

    @property
    def r(self) -> int:
        return self.weight.r

    @property
    def c(self) -> float:
        return self.eq.c

    @property
    def d(self) -> float:
        return self.eq.d

    @property
    def D_inf(self) -> np.ndarray:
        return self.szego.D_infinity


def _hash(weight: MatrixWeight) -> str:
    return hashlib.sha256(weight.fingerprint().encode()).hexdigest()[:16]


def build_context(weight: MatrixWeight) -> AsymptoticContext:
    eq = equilibrium_data(weight.potential)
    A_eff = weight.A.scaled(eq.c)
    const_left = exp_nilpotent(weight.A, eq.d)
    sz = spectral_factorize(A_eff, const_left)
    bd = extract_boundary_data(sz)
    return AsymptoticContext(sz, eq, bd, weight, _hash(weight))


def check_context(ctx: AsymptoticContext) -> None:
    if ctx.fingerprint != _hash(ctx.weight):
        raise ValueError("context was built from a different weight")
    if not np.allclose(ctx.szego.A_eff.alpha, np.asarray(ctx.weight.A.alpha) * ctx.c, rtol=0, atol=1e-14):
        raise ValueError("Szego data do not match the equilibrium scaling")


# -- pointwise asymptotics ---------------------------------------------------


def _dist_to_cut(z: complex) -> float:
    x = min(max(z.real, -1.0), 1.0)
    return abs(z - x)


def outer_prefactor(z) -> complex:
    """``phi(z)^{1/2} / (sqrt(2) (z^2-1)^{1/4})`` written as one analytic square root."""
    z = complex(z)
    R = np.sqrt(z - 1) * np.sqrt(z + 1)
    return complex(np.sqrt(phi_map(z) / R) / math.sqrt(2.0))


def outer_leading(ctx: AsymptoticContext, z) -> np.ndarray:
    z = complex(z)
    if _dist_to_cut(z) <= 0.05:
        raise CutProximityError(f"z={z} is within 0.05 of [-1, 1]")
    if z == np.inf:
        return np.eye(ctx.r, dtype=complex)
    Dz = eval_D(ctx.szego, z)
    return outer_prefactor(z) * np.linalg.solve(Dz.T, ctx.D_inf.T).T


def inner_phase(ctx: AsymptoticContext, x: float, N: float) -> float:
    val = -0.5j * N * phi_plus(ctx.eq, x) + 0.5 * math.asin(x)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"phase has imaginary part {val.imag:.3e}")
    return float(val.real)


def _re_rotated(ctx: AsymptoticContext, x: float, angle: float) -> np.ndarray:
    Dinv = np.linalg.inv(eval_D_plus(ctx.szego, x))
    return np.real(np.exp(1j * angle) * Dinv)


def inner_leading(ctx: AsymptoticContext, x: float, N: float) -> np.ndarray:
    """``sqrt(2) (1-x^2)^{-1/4} D(inf) Re(e^{-i psi} D_+(x)^{-1})``.

    The rotation is ``e^{-i psi}``: adding the outer formula's boundary values
    from both sides gives ``(e^{-i psi} D_+^{-1} + e^{i psi} D_-^{-1}) / 2``,
    and ``D_- = conj(D_+)`` for real ``A``.  With ``e^{+i psi}`` the error
    against the direct solver does not decay for ``r > 1``.
    """
    if abs(x) > 0.9:
        raise CutProximityError(f"inner asymptotics need |x| <= 0.9, got {x}")
    pref = math.sqrt(2.0) / (1.0 - x * x) ** 0.25
    return pref * ctx.D_inf @ _re_rotated(ctx, x, -inner_phase(ctx, x, N))


def edge_leading(ctx: AsymptoticContext, x: float, N: float) -> np.ndarray:
    if not 0.8 < x < 1.0:
        raise CutProximityError(f"edge asymptotics need 0.8 < x < 1, got {x}")
    f = conformal_f(ctx.eq, x).real
    pref = math.sqrt(2 * math.pi) * abs(f) ** 0.25 / (1.0 - x * x) ** 0.25
    ai = airy_ai(N ** (2.0 / 3.0) * f)
    angle = math.pi / 4 - 0.5 * math.asin(x)
    return pref * ai * ctx.D_inf @ _re_rotated(ctx, x, angle)


# -- recurrence coefficients and norms ---------------------------------------


def predict_B(ctx: AsymptoticContext) -> np.ndarray:
    return ctx.d * np.eye(ctx.r, dtype=complex)


def C_first(ctx: AsymptoticContext) -> np.ndarray:
    eq, bd = ctx.eq, ctx.boundary
    inner = bd.L1 / eq.h(1.0) - bd.Lm1 / eq.h(-1.0)
    Dinf = ctx.D_inf
    return math.sqrt(2.0) * ctx.c**2 / 8.0 * Dinf @ np.linalg.solve(Dinf.T, inner.T).T


def predict_C(ctx: AsymptoticContext, N: float, order: int = 1) -> np.ndarray:
    out = ctx.c**2 / 4.0 * np.eye(ctx.r, dtype=complex)
    if order >= 1:
        out = out + C_first(ctx) / N
    return out


def H_first(ctx: AsymptoticContext) -> np.ndarray:
    """First correction in ``H_{N,N} ~ pi c^{2N+1} e^{N ell} D(inf) [I + H1/N] D(inf)^*``.

    Assembled from the residue terms at ``z = +-1``: each endpoint contributes
    ``(4h -+ 3h')/(24 h^2) I`` and ``+-L(2 sqrt2 I +- L)/(8h)``.
    """
    eq, bd = ctx.eq, ctx.boundary
    I = np.eye(ctx.r, dtype=complex)
    s2 = 2.0 * math.sqrt(2.0)
    hp, hm = eq.h(1.0), eq.h(-1.0)
    dp, dm = eq.h_prime(1.0), eq.h_prime(-1.0)
    out = (4 * hp - 3 * dp) / (24 * hp**2) * I + bd.L1 @ (s2 * I + bd.L1) / (8 * hp)
    out = out + (4 * hm + 3 * dm) / (24 * hm**2) * I - bd.Lm1 @ (s2 * I - bd.Lm1) / (8 * hm)
    return out


def H_first_displayed(ctx: AsymptoticContext) -> np.ndarray:
    """Variant with ``24 h^2`` under the ``L`` terms and ``+L_{-1}`` at ``z = -1``.

    Kept for comparison only; it disagrees with the residue computation and
    with direct norms whenever ``L_{+-1} != 0``.
    """
    eq, bd = ctx.eq, ctx.boundary
    I = np.eye(ctx.r, dtype=complex)
    s2 = 2.0 * math.sqrt(2.0)
    hp, hm = eq.h(1.0), eq.h(-1.0)
    dp, dm = eq.h_prime(1.0), eq.h_prime(-1.0)
    out = (4 * hp - 3 * dp) / (24 * hp**2) * I + bd.L1 @ (s2 * I + bd.L1) / (24 * hp**2)
    out = out + (4 * hm + 3 * dm) / (24 * hm**2) * I + bd.Lm1 @ (s2 * I - bd.Lm1) / (24 * hm**2)
    return out


@dataclass(frozen=True)
class LogScaled:
    """``exp(log_scale) * matrix``."""

    log_scale: float
    matrix: np.ndarray

    def value(self) -> np.ndarray:
        return math.exp(self.log_scale) * self.matrix


def predict_H_scaled(ctx: AsymptoticContext, N: float, order: int = 1) -> LogScaled:
    log_pref = math.log(math.pi) + (2 * N + 1) * math.log(ctx.c) + N * ctx.eq.ell
    core = np.eye(ctx.r, dtype=complex)
    if order >= 1:
        core = core + H_first(ctx) / N
    return LogScaled(log_pref, ctx.D_inf @ core @ ctx.D_inf.conj().T)


def predict_H(ctx: AsymptoticContext, N: float, order: int = 1):
    """Norm prediction as a matrix, or as :class:`LogScaled` if the prefactor is out of range."""
    s = predict_H_scaled(ctx, N, order)
    if abs(s.log_scale) > 700.0:
        return s
    return s.value()


# -- determinant of the inner leading term -----------------------------------


@lru_cache(maxsize=8)
def _hermite_eq() -> EquilibriumData:
    return equilibrium_data(Potential((0.0, 0.0, 1.0)))


def hermite_phase(N: float, x: float, eq: EquilibriumData | None = None) -> float:
    eq = _hermite_eq() if eq is None else eq
    val = -0.5j * N * phi_plus(eq, x) + 0.5 * math.asin(x)
    return float(val.real)


def det_inner_2x2(a: float, N: float, x: float, eq: EquilibriumData | None = None) -> float:
    """Closed-form ``det Re(e^{i psi} D_+(x)^{-1})`` for ``A = [[0, 0], [a, 0]]``.

    For ``r = 2`` the determinant is the same with ``e^{-i psi}``: the cross
    term between the real and imaginary parts of ``D_+^{-1}`` vanishes.
    """
    if not -1.0 < x < 1.0:
        raise ValueError("need |x| < 1")
    psi = hermite_phase(N, x, eq)
    a2 = a * a
    return (4 + a2 * (2 * x * x - 1) + (4 + a2) * math.cos(2 * psi)) / (2 * (4 + a2))


def det_inner_numeric(f: SzegoFactorization, N: float, x: float, eq: EquilibriumData | None = None) -> float:
    psi = hermite_phase(N, x, eq)
    Dinv = np.linalg.inv(eval_D_plus(f, x))
    return float(np.linalg.det(np.real(np.exp(-1j * psi) * Dinv)))


def detgrid(
    r: int,
    alpha,
    N: float,
    points: int = 2000,
    eq: EquilibriumData | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Samples of the determinant of the inner leading term's matrix factor on ``(-1, 1)``.

    Uses the closed form for ``r = 2`` and ``det Re(e^{-i psi} D_+^{-1})`` otherwise.

    ``alpha`` enters the Szego function as given (no rescaling by ``c``);
    the phase uses ``eq`` (default ``v = x^2``).
    """
    x = -1.0 + (2.0 * np.arange(points) + 1.0) / points
    alpha = tuple(float(a) for a in np.atleast_1d(alpha))
    if r == 2:
        vals = np.array([det_inner_2x2(alpha[0], N, xi, eq) for xi in x])
    else:
        f = spectral_factorize(NilpotentMatrix(r, alpha))
        vals = np.array([det_inner_numeric(f, N, xi, eq) for xi in x])
    return x, vals


def sign_changes(values, x=None, window: float | None = None) -> int:
    v = np.asarray(values)
    if window is not None:
        v = v[np.abs(np.asarray(x)) < window]
    s = np.sign(v)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


# -- comparison against direct computation -----------------------------------


def loglog_slope(Ns, errs) -> float:
    return float(np.polyfit(np.log(np.asarray(Ns, float)), np.log(np.asarray(errs, float)), 1)[0])


def scaled_P(ctx: AsymptoticContext, fam, N: int, x: float) -> np.ndarray:
    """``c^{-N} e^{-N (V(x) + ell)/2} P_{N,N}(c x + d)`` for real ``x``."""
    from mvop.direct import eval_P

    P = eval_P(fam, N, ctx.c * x + ctx.d)
    ls = -N * math.log(ctx.c) - 0.5 * N * (float(ctx.eq.V(x)) + ctx.eq.ell)
    return math.exp(ls) * P


def scaled_P_outer(ctx: AsymptoticContext, fam, N: int, z) -> np.ndarray:
    """``c^{-N} e^{-N g(z)} P_{N,N}(c z + d)``."""
    from mvop.direct import eval_P

    P = eval_P(fam, N, ctx.c * complex(z) + ctx.d)
    return np.exp(-N * math.log(ctx.c) - N * g_fn(ctx.eq, z)) * P


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b, 2) / np.linalg.norm(b, 2))


def error_report(
    weight: MatrixWeight,
    N_list,
    z_outer: complex = 2.0,
    x_inner: float = 0.3,
    x_edge: float = 0.98,
    nmax_extra: int = 1,
    threads: int = 1,
    ctx: AsymptoticContext | None = None,
) -> dict:
    """Errors of every prediction against the direct solver at each ``N``, plus log-log slopes."""
    from mvop.direct import compute_family

    ctx = build_context(weight) if ctx is None else ctx
    rows = []
    for N in N_list:
        N = int(N)
        fam = compute_family(weight, N, N + nmax_extra, threads=threads)
        H_pred1 = predict_H_scaled(ctx, N, 1)
        H_pred0 = predict_H_scaled(ctx, N, 0)
        H_dir = fam.H[N] * math.exp(-H_pred1.log_scale)
        row = {
            "N": N,
            "B": float(np.linalg.norm(fam.B[N] - predict_B(ctx), 2)),
            "C_leading": float(np.linalg.norm(fam.C[N] - predict_C(ctx, N, 0), 2)),
            "C": float(np.linalg.norm(fam.C[N] - predict_C(ctx, N, 1), 2)),
            "H_leading": _rel(H_dir, H_pred0.matrix),
            "H": _rel(H_dir, H_pred1.matrix),
            "outer": _rel(scaled_P_outer(ctx, fam, N, z_outer), outer_leading(ctx, z_outer)),
            "inner": _rel(scaled_P(ctx, fam, N, x_inner), inner_leading(ctx, x_inner, N)),
            "edge": _rel(N ** (-1.0 / 6.0) * scaled_P(ctx, fam, N, x_edge), edge_leading(ctx, x_edge, N)),
            "orth_residual": float(fam.orth_residual.max()),
        }
        rows.append(row)
    keys = ["B", "C_leading", "C", "H_leading", "H", "outer", "inner", "edge"]
    slopes = {}
    if len(rows) >= 2:
        Ns = [row["N"] for row in rows]
        for k in keys:
            errs = [row[k] for row in rows]
            slopes[k] = loglog_slope(Ns, errs) if all(e > 0 for e in errs) else float("nan")
    return {"config": weight.to_config(), "rows": rows, "slopes": slopes}
