"""Monic matrix orthogonal polynomials by block Stieltjes iteration on a quadrature grid.

Polynomials are carried as their values at the grid nodes.  With
``<F, G> = int F(x) W(x) G(x)^* dx`` the monic family obeys
``x P_n = P_{n+1} + B_n P_n + C_n P_{n-1}`` with ``B_n = <x P_n, P_n> H_n^{-1}``
and ``C_n = H_n H_{n-1}^{-1}``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import roots_legendre

from mvop.weight import MatrixWeight, Potential, matrix_weight_on_grid

log = logging.getLogger(__name__)

TAIL_MARGIN = 45.0
PANEL_POINTS = 32


class OrthogonalityLoss(RuntimeError):
    pass


class SingularNorm(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    radius: float
    N: float
    lo: float
    hi: float


def _log_envelope(v: Potential, N: float, x, growth: float, r: int, c: float, d: float) -> np.ndarray:
    # log of e^{-N v(x)} (|x - d| + c)^{growth + 2(r-1)}; the extra power bounds ||M(x)||
    x = np.asarray(x, dtype=float)
    lx = np.log(np.abs(x - d) + c)
    return -N * v(x) + (growth + 2.0 * (r - 1)) * lx


def _tail_edge(v, N, start, direction, level, growth, r, c, d) -> float:
    step = 0.05
    x = start
    while _log_envelope(v, N, x, growth, r, c, d) >= level:
        x += direction * step
        step *= 1.1
    # refine the crossing by bisection on the last step
    lo, hi = x - direction * step / 1.1, x
    for _ in range(60):
        mid = (lo + hi) / 2
        if _log_envelope(v, N, mid, growth, r, c, d) >= level:
            lo = mid
        else:
            hi = mid
    return hi


def _plain_tail_edge(v: Potential, N: float, start: float, direction: float, level: float) -> float:
    x = start
    step = 0.05
    while N * v(x) <= level:
        x += direction * step
        step *= 1.1
    lo, hi = x - direction * step / 1.1, x
    for _ in range(60):
        mid = (lo + hi) / 2
        if N * v(mid) <= level:
            lo = mid
        else:
            hi = mid
    return hi


def build_grid(
    v: Potential,
    N: float,
    nodes_per_unit: int = 4,
    n_max: int = 0,
    r: int = 1,
    support: tuple[float, float] | None = None,
    pad: float = 0.0,
) -> QuadratureGrid:
    """Composite 32-point Gauss-Legendre panels over the numerically relevant interval.

    The interval contains the points where ``N v`` exceeds its value at the
    support edges by ``45``.  It is widened further until the envelope
    ``e^{-N v(x)} (|x - d| + c)^{2 n_max + 2(r-1)}``, which bounds every integrand
    of degree up to ``n_max``, has dropped by ``e^{-45}`` relative to its peak.
    ``pad`` (in units of ``c``) widens both ends further.
    """
    if N <= 0:
        raise ValueError("N must be positive")
    if support is None:
        from mvop.equilibrium import solve_mrs

        s = solve_mrs(v)
        a, b = s.a, s.b
    else:
        a, b = support
    c, d = (b - a) / 2, (b + a) / 2
    lo = _plain_tail_edge(v, N, a, -1.0, N * v(a) + TAIL_MARGIN)
    hi = _plain_tail_edge(v, N, b, 1.0, N * v(b) + TAIL_MARGIN)
    growth = 2.0 * n_max
    probe = np.linspace(lo, hi, 4001)
    peak = float(np.max(_log_envelope(v, N, probe, growth, r, c, d)))
    level = peak - TAIL_MARGIN
    lo = min(lo, _tail_edge(v, N, lo, -1.0, level, growth, r, c, d))
    hi = max(hi, _tail_edge(v, N, hi, 1.0, level, growth, r, c, d))
    lo, hi = lo - pad * c, hi + pad * c
    width = c / nodes_per_unit
    npan = max(1, math.ceil((hi - lo) / width))
    edges = np.linspace(lo, hi, npan + 1)
    t, w = roots_legendre(PANEL_POINTS)
    half = (edges[1:] - edges[:-1]) / 2
    mid = (edges[1:] + edges[:-1]) / 2
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureGrid(nodes, weights, max(abs(lo - d), abs(hi - d)), float(N), lo, hi)


def _pairwise_sum(parts: list[np.ndarray]) -> np.ndarray:
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _fsum_matrix(terms: np.ndarray) -> np.ndarray:
    r1, r2 = terms.shape[1:]
    out = np.empty((r1, r2), dtype=complex)
    for i in range(r1):
        for j in range(r2):
            col = terms[:, i, j]
            out[i, j] = complex(math.fsum(col.real), math.fsum(col.imag))
    return out


class _Reducer:
    """Sum of node-wise terms, optionally compensated and split over threads."""

    def __init__(self, extended: bool, threads: int):
        self.extended = extended
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def _one(self, terms: np.ndarray) -> np.ndarray:
        return _fsum_matrix(terms) if self.extended else terms.sum(axis=0)

    def __call__(self, terms: np.ndarray) -> np.ndarray:
        if self._pool is None:
            return self._one(terms)
        chunks = np.array_split(terms, self.threads)
        return _pairwise_sum(list(self._pool.map(self._one, chunks)))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


@dataclass(frozen=True)
class MVOPFamily:
    r: int
    N: float
    n_max: int
    H: np.ndarray
    B: np.ndarray
    C: np.ndarray
    C_inner: np.ndarray
    X_sub: np.ndarray
    mom_n: np.ndarray
    mom_n1: np.ndarray
    orth_residual: np.ndarray
    grid: QuadratureGrid
    extended: bool


def _inner(red: _Reducer, w: np.ndarray, F: np.ndarray, WG: np.ndarray) -> np.ndarray:
    # sum_k w_k F_k (W_k G_k^*), with WG already holding W_k G_k^*
    return red(w[:, None, None] * (F @ WG))


TAIL_RATIO = math.exp(-TAIL_MARGIN)
MAX_WIDEN = 12


def compute_family(
    w: MatrixWeight,
    N: float,
    n_max: int,
    nodes_per_unit: int = 4,
    grid: QuadratureGrid | None = None,
    extended: bool | None = None,
    threads: int = 1,
    orth_tol: float = 1e-6,
) -> MVOPFamily:
    """Recurrence data, norms and diagnostics for degrees ``0..n_max``.

    Without an explicit ``grid`` the interval is widened until, at every
    degree, the outermost panels carry less than ``e^{-45}`` of ``||H_n||``.
    The envelope in :func:`build_grid` cannot see the actual size of
    ``P_n`` near the support edges, so this check is what sets the cut.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if extended is None:
        extended = N > 32 or n_max > 48
    if grid is not None:
        return _stieltjes(w, N, n_max, grid, extended, threads, orth_tol, abort_tail=None)[0]
    pad = 0.0
    for _ in range(MAX_WIDEN):
        g = build_grid(w.potential, N, nodes_per_unit, n_max=n_max + 1, r=w.r, pad=pad)
        fam, tail = _stieltjes(w, N, n_max, g, extended, threads, orth_tol, abort_tail=TAIL_RATIO)
        if fam is not None:
            return fam
        log.debug("tail ratio %.2e on [%g, %g]; widening", tail, g.lo, g.hi)
        pad += 0.25
    raise OrthogonalityLoss(f"quadrature tail did not fall below e^-45 (last {tail:.2e})")


def _stieltjes(w, N, n_max, grid, extended, threads, orth_tol, abort_tail) -> tuple[MVOPFamily | None, float]:
    r = w.r
    x, wq = grid.nodes, grid.weights
    Wx = matrix_weight_on_grid(w, x, N)
    I = np.eye(r, dtype=complex)
    red = _Reducer(extended, threads)
    K = len(x)
    edge = np.r_[0:PANEL_POINTS, K - PANEL_POINTS:K]
    P = np.zeros((n_max + 1, K, r, r), dtype=complex)
    P[0] = I
    H = np.zeros((n_max + 1, r, r), dtype=complex)
    B = np.zeros((n_max + 1, r, r), dtype=complex)
    C = np.zeros((n_max + 1, r, r), dtype=complex)
    C_in = np.zeros((n_max + 1, r, r), dtype=complex)
    X = np.zeros((n_max + 2, r, r), dtype=complex)
    mom_n = np.zeros((n_max + 1, r, r), dtype=complex)
    mom_n1 = np.zeros((n_max + 1, r, r), dtype=complex)
    xs = x[:, None, None]
    tail = 0.0
    try:
        for n in range(n_max + 1):
            WP = Wx @ np.conj(np.transpose(P[n], (0, 2, 1)))
            terms = wq[:, None, None] * (P[n] @ WP)
            H[n] = red(terms)
            hnorm = np.linalg.norm(H[n], 2)
            xt = np.maximum(1.0, np.abs(x[edge]))[:, None, None]
            tail = max(tail, float(np.sum(np.abs(terms[edge]) * xt)) / hnorm)
            if abort_tail is not None and tail >= abort_tail:
                return None, tail
            try:
                linalg.cholesky((H[n] + H[n].conj().T) / 2, lower=True)
            except linalg.LinAlgError:
                raise SingularNorm(f"H_{n} is not positive definite") from None
            if np.linalg.cond(H[n]) > 1e14:
                raise SingularNorm(f"H_{n} is numerically singular (cond {np.linalg.cond(H[n]):.2e})")
            S = red(xs * terms)
            B[n] = linalg.solve(H[n], S.conj().T, assume_a="her").conj().T
            X[n + 1] = X[n] - B[n]
            # moments <P_n, s^n I> and <P_n, s^{n+1} I>
            Wsn = Wx * (x**n)[:, None, None]
            mom_n[n] = red(wq[:, None, None] * (P[n] @ Wsn))
            mom_n1[n] = red(wq[:, None, None] * (P[n] @ (Wsn * xs)))
            if n >= 1:
                C[n] = linalg.solve(H[n - 1], H[n].conj().T, assume_a="her").conj().T
                WPm = Wx @ np.conj(np.transpose(P[n - 1], (0, 2, 1)))
                T = _inner(red, wq, xs * P[n], WPm)
                C_in[n] = linalg.solve(H[n - 1], T.conj().T, assume_a="her").conj().T
            if n < n_max:
                nxt = xs * P[n] - B[n][None] @ P[n]
                if n >= 1:
                    nxt = nxt - C[n][None] @ P[n - 1]
                P[n + 1] = nxt
        orth = _orthogonality(red, wq, Wx, P, H)
    finally:
        red.close()
    bad = np.nonzero(orth > orth_tol)[0]
    if bad.size:
        raise OrthogonalityLoss(
            f"orthogonality residual {orth[bad[0]]:.2e} at degree {bad[0]}; "
            "use more nodes or a smaller n_max"
        )
    log.info("family r=%d N=%g n_max=%d on %d nodes, max residual %.2e", r, N, n_max, K, orth.max())
    fam = MVOPFamily(r, float(N), n_max, H, B, C, C_in, X, mom_n, mom_n1, orth, grid, extended)
    return fam, tail


def _orthogonality(red, wq, Wx, P, H) -> np.ndarray:
    """Per degree ``n``: max over ``m < n`` of ``||<P_n, P_m>|| / sqrt(||H_n|| ||H_m||)``."""
    nn = P.shape[0]
    out = np.zeros(nn)
    hn = np.array([np.linalg.norm(h, 2) for h in H])
    for m in range(nn):
        WPm = Wx @ np.conj(np.transpose(P[m], (0, 2, 1)))
        for n in range(m + 1, nn):
            G = _inner(red, wq, P[n], WPm)
            out[n] = max(out[n], np.linalg.norm(G, 2) / math.sqrt(hn[n] * hn[m]))
    return out


def eval_P(fam: MVOPFamily, n: int, z) -> np.ndarray:
    """``P_n(z)`` by forward recurrence."""
    if not 0 <= n <= fam.n_max:
        raise IndexError(f"degree {n} outside 0..{fam.n_max}")
    z = complex(z)
    I = np.eye(fam.r, dtype=complex)
    prev, cur = np.zeros_like(I), I
    for k in range(n):
        nxt = z * cur - fam.B[k] @ cur
        if k >= 1:
            nxt = nxt - fam.C[k] @ prev
        prev, cur = cur, nxt
    return cur


def y_blocks(fam: MVOPFamily, n: int) -> dict[str, np.ndarray]:
    """First two coefficient blocks of the Riemann-Hilbert solution at infinity.

    ``Y1_12`` and ``Y2_12`` come from the grid moments ``int P_n W s^n`` and
    ``int P_n W s^{n+1}``; ``Y1_11`` and ``Y1_21`` from the recurrence data.
    """
    if not 1 <= n < fam.n_max:
        raise IndexError(f"y_blocks needs 1 <= n < {fam.n_max}, got {n}")
    tpi = 2j * np.pi
    return {
        "Y1_11": fam.X_sub[n].copy(),
        "Y1_12": -fam.mom_n[n] / tpi,
        "Y1_21": -tpi * np.linalg.inv(fam.H[n - 1]),
        "Y2_12": -fam.mom_n1[n] / tpi,
    }


def verify_B_reformulation(fam: MVOPFamily, n: int) -> float:
    """``|| (Y1_11 - Y2_12^* Y1_12^{-1}) - (X_{n,n-1} - X_{n+1,n}) ||``."""
    y = y_blocks(fam, n)
    lhs = y["Y1_11"] - y["Y2_12"].conj().T @ np.linalg.inv(y["Y1_12"])
    rhs = fam.X_sub[n] - fam.X_sub[n + 1]
    return float(np.linalg.norm(lhs - rhs, 2))


def family_rows(fam: MVOPFamily) -> list[list[float]]:
    """CSV rows: ``n``, then re/im of ``B_n``, ``C_n``, ``H_n`` row-major, then the residual."""
    rows = []
    for n in range(fam.n_max + 1):
        row: list[float] = [n]
        for M in (fam.B[n], fam.C[n], fam.H[n]):
            for v in M.ravel():
                row.extend([v.real, v.imag])
        row.append(fam.orth_residual[n])
        rows.append(row)
    return rows


def family_header(r: int) -> list[str]:
    cols = ["n"]
    for name in ("B", "C", "H"):
        for i in range(r):
            for j in range(r):
                cols.extend([f"{name}_{i}{j}_re", f"{name}_{i}{j}_im"])
    cols.append("orth_residual")
    return cols


__all__ = [
    "MVOPFamily",
    "OrthogonalityLoss",
    "QuadratureGrid",
    "SingularNorm",
    "build_grid",
    "compute_family",
    "eval_P",
    "verify_B_reformulation",
    "y_blocks",
]
