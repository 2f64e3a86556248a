"""Constructive matrix Szego factorization for ``M(x) = e^{Ax} e^{A^* x}``.

On the unit circle ``x = (z + 1/z)/2`` turns ``M`` into a Laurent polynomial
``G_0(z) G_0(z)^*`` with ``G_0(z) = e^{A x(z)}``.  Poles of ``G_0`` at the
origin are cleared by a diagonal monomial factor, and the resulting zeros of
the determinant are removed one at a time by a constant unitary followed by
``z^{-1}`` in a single column.  The Szego function is ``D(z) = G(1/phi(z))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import linalg

from mvop.laurent import LaurentMatrixPolynomial
from mvop.weight import NilpotentMatrix, exp_nilpotent

log = logging.getLogger(__name__)


class FactorizationError(RuntimeError):
    pass


class NullVectorNotFound(FactorizationError):
    """The matrix at the origin is numerically nonsingular mid-algorithm."""


class NegativePowersRemain(FactorizationError):
    """The final factor is not analytic in the disc or not unimodular."""


class CutPointError(ValueError):
    """Evaluation requested on the cut ``[-1, 1]``."""


class BoundaryExtractionError(RuntimeError):
    """Richardson ladder for the expansion at ``z = +-1`` did not settle."""


def joukowski(z):
    if z == 0:
        raise ZeroDivisionError("Joukowski map is singular at z = 0")
    return (z + 1 / z) / 2


def _sqrt_z2m1(z):
    # branch ~ z at infinity, cut on [-1, 1]
    return np.sqrt(z - 1 + 0j) * np.sqrt(z + 1 + 0j)


def _on_cut(z, tol=0.0) -> bool:
    z = complex(z)
    return abs(z.imag) <= tol and -1.0 <= z.real <= 1.0


def phi_map(z):
    """``z + (z^2 - 1)^{1/2}``, conformal from the slit plane onto ``|w| > 1``."""
    if _on_cut(z):
        raise CutPointError(f"phi_map is two-valued on [-1, 1] (z={z})")
    return z + _sqrt_z2m1(z)


def phi_map_plus(x: float) -> complex:
    return complex(math.cos(math.acos(x)), math.sin(math.acos(x)))


def phi_map_minus(x: float) -> complex:
    return phi_map_plus(x).conjugate()


def build_G0(A: NilpotentMatrix) -> LaurentMatrixPolynomial:
    """``e^{A (z + 1/z)/2}`` as an exact Laurent polynomial."""
    r = A.r
    Ad = A.dense()
    terms: dict[int, np.ndarray] = {k: np.zeros((r, r)) for k in range(-(r - 1), r)}
    Ak = np.eye(r)
    for k in range(r):
        scale = 1.0 / (2.0**k * math.factorial(k))
        for i in range(k + 1):
            terms[k - 2 * i] = terms[k - 2 * i] + math.comb(k, i) * scale * Ak
        Ak = Ak @ Ad
    return LaurentMatrixPolynomial.from_dict(terms)


def _householder_completion(u: np.ndarray, j: int) -> np.ndarray:
    """Unitary matrix whose column ``j`` is the unit vector ``u``."""
    r = u.shape[0]
    phase = u[j] / abs(u[j]) if abs(u[j]) > 1e-300 else 1.0
    up = u / phase
    e = np.zeros(r, dtype=complex)
    e[j] = 1.0
    # reflect onto -e_j: up[j] >= 0, so w never cancels
    w = up + e
    H = np.eye(r, dtype=complex) - 2.0 * np.outer(w, w.conj()) / np.vdot(w, w).real
    D = np.eye(r, dtype=complex)
    D[j, j] = -phase
    return H @ D


def _qr_completion(u: np.ndarray, j: int, rng: np.random.Generator) -> np.ndarray:
    r = u.shape[0]
    X = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    X[:, 0] = u
    Q, R = np.linalg.qr(X)
    Q[:, 0] *= R[0, 0] / abs(R[0, 0])
    # Q[:, 0] == u now; move it to column j
    perm = list(range(1, r))
    perm.insert(j, 0)
    return Q[:, perm]


RETRY_TOL = 1e-13
EXTENDED_DPS = 60


def _initial_shift(A_eff: NilpotentMatrix) -> LaurentMatrixPolynomial:
    r = A_eff.r
    G = build_G0(A_eff)
    for j in range(r):
        G = G.shift_column(j, r - 1 - j)
    return G.drop_negative()[0]


def _remove_zeros(A_eff: NilpotentMatrix, completion: str, rng: np.random.Generator):
    r = A_eff.r
    G = _initial_shift(A_eff)
    ulog = []
    max_dropped = 0.0
    scale = max(1.0, float(np.max(np.abs(G.coeffs))))
    for j in range(r - 1):
        for _ in range(r - 1 - j):
            _, s, Vh = np.linalg.svd(G.coeff(0))
            if s[-1] > 1e-8 * max(1.0, s[0]):
                raise NullVectorNotFound(f"G(0) has smallest singular value {s[-1]:.3e} at column {j}")
            u = Vh[-1].conj()
            U = _householder_completion(u, j) if completion == "householder" else _qr_completion(u, j, rng)
            ulog.append((j, U))
            G, dropped = G.right_multiply(U).shift_column(j, -1).drop_negative()
            max_dropped = max(max_dropped, dropped)
    return G, ulog, max_dropped, scale


def _remove_zeros_extended(A_eff: NilpotentMatrix, dps: int):
    """The Householder variant of :func:`_remove_zeros` in ``dps``-digit arithmetic."""
    r = A_eff.r
    with mpmath.workdps(dps):
        # G_0(z) diag(z^{r-1}, ..., 1): column j of A^k / (2^k k!) times (z + 1/z)^k z^{r-1-j}
        terms: dict[int, mpmath.matrix] = {}
        Ad = mpmath.matrix(r, r)
        for j, a in enumerate(A_eff.alpha):
            Ad[j + 1, j] = mpmath.mpf(a)
        Ak = mpmath.eye(r)
        for k in range(r):
            scale_k = mpmath.mpf(1) / (2**k * math.factorial(k))
            for i in range(k + 1):
                for j in range(r):
                    p = k - 2 * i + r - 1 - j
                    if p < 0:
                        continue
                    M = terms.setdefault(p, mpmath.matrix(r, r))
                    for row in range(r):
                        M[row, j] += math.comb(k, i) * scale_k * Ak[row, j]
            Ak = Ak * Ad
        ulog = []
        max_dropped = mpmath.mpf(0)
        for j in range(r - 1):
            for _ in range(r - 1 - j):
                G0 = terms.get(0, mpmath.matrix(r, r))
                _, S, V = mpmath.svd_c(G0)
                k_min = min(range(r), key=lambda i: S[i])
                u = [mpmath.conj(V[k_min, i]) for i in range(r)]
                U = _householder_mp(u, j)
                ulog.append((j, np.array(U.tolist(), dtype=complex)))
                new: dict[int, mpmath.matrix] = {}
                for p, M in terms.items():
                    MU = M * U
                    for row in range(r):
                        MU_col = MU[row, j]
                        MU[row, j] = 0
                        if p - 1 >= 0:
                            new.setdefault(p - 1, mpmath.matrix(r, r))[row, j] += MU_col
                        else:
                            max_dropped = max(max_dropped, abs(MU_col))
                    new.setdefault(p, mpmath.matrix(r, r))
                    new[p] += MU
                terms = new
        kmax = max(terms)
        arr = np.zeros((kmax + 1, r, r), dtype=complex)
        for p, M in terms.items():
            arr[p] = np.array(M.tolist(), dtype=complex)
        return LaurentMatrixPolynomial(0, arr), ulog, float(max_dropped), 1.0


def _householder_mp(u: list, j: int) -> mpmath.matrix:
    r = len(u)
    phase = u[j] / abs(u[j]) if abs(u[j]) > 0 else mpmath.mpc(1)
    w = mpmath.matrix([x / phase for x in u])
    w[j] += 1
    nw = sum(abs(x) ** 2 for x in w)
    H = mpmath.eye(r) - 2 * (w * w.H) / nw
    for i in range(r):
        H[i, j] *= -phase
    return H


@dataclass(frozen=True)
class SzegoFactorization:
    """``M(x(z)) = G(z) G(z)^*`` on ``|z| = 1`` with ``G`` analytic and unimodular in the disc."""

    G: LaurentMatrixPolynomial
    A_eff: NilpotentMatrix
    const_left: np.ndarray
    D_infinity: np.ndarray
    unitary_log: tuple = field(default=())
    max_dropped: float = 0.0

    @property
    def r(self) -> int:
        return self.A_eff.r

    def G_at(self, w) -> np.ndarray:
        return self.G(w)

    def unitary_product(self) -> np.ndarray:
        """Product of the logged unitaries, including the final normalization."""
        out = np.eye(self.r, dtype=complex)
        for _, U in self.unitary_log:
            out = out @ U
        return out


def spectral_factorize(
    A_eff: NilpotentMatrix,
    const_left: np.ndarray | None = None,
    completion: str = "householder",
    seed: int = 0,
    tol: float = 1e-9,
) -> SzegoFactorization:
    """Factor ``e^{A x} e^{A^* x}`` on the circle, ``x = (z + 1/z)/2``.

    ``completion`` picks how a null vector is extended to a unitary matrix
    (``"householder"`` or ``"qr"``); the normalized result does not depend on it.
    """
    r = A_eff.r
    const_left = np.eye(r, dtype=complex) if const_left is None else np.asarray(const_left, dtype=complex)
    rng = np.random.default_rng(seed)
    if completion not in ("householder", "qr"):
        raise ValueError(f"unknown completion {completion!r}")
    try:
        G, ulog, max_dropped, scale = _remove_zeros(A_eff, completion, rng)
        clean = max_dropped <= RETRY_TOL * scale
    except NullVectorNotFound:
        clean = False
    if not clean:
        # nearly decoupled chains (some |alpha_j| tiny but nonzero) make the
        # null spaces ill-conditioned; redo the same steps with more digits
        log.info("double-precision factorization lost accuracy; retrying at %d digits", EXTENDED_DPS)
        G, ulog, max_dropped, scale = _remove_zeros_extended(A_eff, EXTENDED_DPS)
    if max_dropped > tol * scale:
        raise NegativePowersRemain(f"discarded coefficient of norm {max_dropped:.3e}")
    G = G.trimmed()
    # canonical representative: G(0) Hermitian positive definite
    Wp, _ = linalg.polar(G.coeff(0), side="left")
    G = G.right_multiply(Wp.conj().T)
    ulog.append((-1, Wp.conj().T))
    zs = np.exp(2j * np.pi * np.arange(16) / 16)
    dets = np.abs(np.linalg.det(G.evaluate_many(zs)))
    if np.max(np.abs(dets - 1.0)) > 1e-8:
        raise NegativePowersRemain(f"|det G| deviates from 1 by {np.max(np.abs(dets - 1)):.3e}")
    D_inf = const_left @ G.coeff(0)
    log.debug("factorized r=%d with %d unitary steps", r, len(ulog) - 1)
    return SzegoFactorization(G, A_eff, const_left, D_inf, tuple(ulog), max_dropped)


def factorization_residual(f: SzegoFactorization, n: int = 64) -> float:
    """Max Frobenius norm of ``G G^* - e^{A x} e^{A^* x}`` over ``n`` circle points."""
    zs = np.exp(2j * np.pi * np.arange(n) / n)
    Gz = f.G.evaluate_many(zs)
    worst = 0.0
    for z, g in zip(zs, Gz):
        x = joukowski(z).real
        E = exp_nilpotent(f.A_eff, x)
        worst = max(worst, float(np.linalg.norm(g @ g.conj().T - E @ E.conj().T)))
    return worst


def det_deviation(f: SzegoFactorization, n: int = 64) -> float:
    zs = np.exp(2j * np.pi * np.arange(n) / n)
    return float(np.max(np.abs(np.abs(np.linalg.det(f.G.evaluate_many(zs))) - 1.0)))


def eval_D(f: SzegoFactorization, z) -> np.ndarray:
    """Szego function ``D(z) = C G(1/phi(z))`` off ``[-1, 1]``."""
    if z == np.inf:
        return f.D_infinity.copy()
    return f.const_left @ f.G(1.0 / phi_map(z))


def _check_interior(x):
    if not -1.0 < x < 1.0:
        raise CutPointError(f"boundary values need -1 < x < 1, got {x}")


def eval_D_plus(f: SzegoFactorization, x: float) -> np.ndarray:
    _check_interior(x)
    return f.const_left @ f.G(phi_map_minus(x))


def eval_D_minus(f: SzegoFactorization, x: float) -> np.ndarray:
    _check_interior(x)
    return f.const_left @ f.G(phi_map_plus(x))


def _M_eff(f: SzegoFactorization, z) -> np.ndarray:
    E = exp_nilpotent(f.A_eff, z)
    Ec = exp_nilpotent(f.A_eff, np.conj(z))
    return E @ Ec.conj().T


def _D_eff(f: SzegoFactorization, z) -> np.ndarray:
    return f.G(1.0 / phi_map(z))


def eval_L(f: SzegoFactorization, z) -> np.ndarray:
    """``D(z)^{-1} e^{Az} e^{A^* z} D(conj z)^{-*}`` for the effective matrix.

    The constant left factor of ``D`` cancels against the matching factors of
    the shifted weight, so only ``G`` and ``A_eff`` enter.
    """
    D = _D_eff(f, z)
    Dc = _D_eff(f, np.conj(z))
    left = np.linalg.solve(D, _M_eff(f, z))
    return np.linalg.solve(Dc, left.conj().T).conj().T


def eval_F(f: SzegoFactorization, z) -> np.ndarray:
    """``D(z)^{-1} e^{A z}`` (effective matrix), unitary on the boundary."""
    return np.linalg.solve(_D_eff(f, z), exp_nilpotent(f.A_eff, z))


@dataclass(frozen=True)
class SzegoBoundaryData:
    L1: np.ndarray
    Lm1: np.ndarray
    D10: np.ndarray
    D11: np.ndarray
    Dm10: np.ndarray
    Dm11: np.ndarray
    branch_m1: str


LADDER_T0 = 1e-3
LADDER_LEVELS = 6


def _richardson_sqrt(samples: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Extrapolate ``E(s) = E0 + E1 s + E2 s^2 + ...`` sampled at ``s_k = s_0 2^{-k}``."""
    table = [samples[0]]
    prev_best = samples[0]
    change = np.inf
    for k in range(1, len(samples)):
        row = [samples[k]]
        for m in range(1, k + 1):
            f = 2.0**m
            row.append((f * row[m - 1] - table[m - 1]) / (f - 1.0))
        best = row[-1]
        change = float(np.max(np.abs(best - prev_best)))
        prev_best = best
        table = row
    return prev_best, change


def _ladder(func, origin: float, direction: float, tol: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Return the value at ``origin`` and the coefficient of ``sqrt(t)`` for ``func(origin + direction t)``."""
    ts = [LADDER_T0 * 4.0**-k for k in range(LADDER_LEVELS)]
    vals = [func(origin + direction * t) for t in ts]
    v0, c0 = _richardson_sqrt(vals)
    slopes = [(v - v0) / math.sqrt(t) for v, t in zip(vals, ts)]
    c1, c1_change = _richardson_sqrt(slopes)
    change = max(c0, c1_change)
    if change > tol:
        raise BoundaryExtractionError(f"ladder did not converge (last change {change:.3e})")
    return v0, c1, change


def extract_boundary_data(f: SzegoFactorization, tol: float = 1e-5) -> SzegoBoundaryData:
    """Coefficients of the square-root expansions of ``L`` and ``D^{-1} e^{Az}`` at ``z = +-1``.

    Both endpoints use the local variable ``(z^2 - 1)^{1/2} / sqrt(2)`` (branch
    ``~ z`` at infinity).  Sampling ``z = 1 + t`` it equals ``+sqrt(t)`` to
    leading order, and sampling ``z = -1 - t`` it equals ``-sqrt(t)``.  With
    this variable ``L_1`` and ``L_{-1}`` are both Hermitian and
    ``L_{+-1} = D_{+-1,0} D_{+-1,1}^* + D_{+-1,1} D_{+-1,0}^*``.
    """
    eye = np.eye(f.r)
    _, L1, _ = _ladder(lambda z: eval_L(f, z) - eye, 1.0, 1.0, tol)
    _, K, _ = _ladder(lambda z: eval_L(f, z) - eye, -1.0, -1.0, tol)
    D10, D11, _ = _ladder(lambda z: eval_F(f, z), 1.0, 1.0, tol)
    Dm10, KF, _ = _ladder(lambda z: eval_F(f, z), -1.0, -1.0, tol)
    return SzegoBoundaryData(L1, -K, D10, D11, Dm10, -KF, branch_m1="-sqrt(t)")


def factorization_to_json(f: SzegoFactorization) -> dict:
    def mat(m):
        return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m)]

    return {
        "r": f.r,
        "alpha_eff": list(f.A_eff.alpha),
        "coefficients": {str(k): mat(c) for k, c in f.G.to_dict().items()},
        "const_left": mat(f.const_left),
        "D_infinity": mat(f.D_infinity),
        "unitary_log": [{"column": j, "U": mat(U)} for j, U in f.unitary_log],
    }
