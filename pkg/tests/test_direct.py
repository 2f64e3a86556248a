import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvop.direct import compute_family, eval_P, family_header, family_rows, verify_B_reformulation, y_blocks
from mvop.weight import weight_from_config


def hermite(r=1, a=1.0):
    return weight_from_config({"r": r, "alpha": [a] * (r - 1), "v": [0.0, 0.0, 1.0]})


def exact_hermite_recurrence(nmax):
    """Monic orthogonal polynomials for e^{-x^2} by Gram-Schmidt on exact moments / sqrt(pi)."""

    def mom(k):
        if k % 2:
            return Fraction(0)
        m = k // 2
        return Fraction(math.prod(range(1, 2 * m, 2)), 2**m)

    def inner(p, q):
        return sum(pi * qj * mom(i + j) for i, pi in enumerate(p) for j, qj in enumerate(q))

    P = [[Fraction(1)]]
    for n in range(1, nmax + 2):
        p = [Fraction(0)] * n + [Fraction(1)]
        for q in P:
            c = inner(p, q) / inner(q, q)
            p = [pi - c * (q[i] if i < len(q) else 0) for i, pi in enumerate(p)]
        P.append(p)
    H = [inner(p, p) for p in P]
    B = [P[n][n - 1] - P[n + 1][n] if n else -P[1][0] for n in range(nmax + 1)]
    C = [H[n] / H[n - 1] if n else Fraction(0) for n in range(nmax + 1)]
    return B, C, H


def test_scalar_hermite_exact_gram_schmidt():
    B, C, H = exact_hermite_recurrence(4)
    fam = compute_family(hermite(), 1.0, 5)
    sp = math.sqrt(math.pi)
    for n in range(5):
        assert fam.B[n][0, 0] == pytest.approx(float(B[n]), abs=1e-14)
        assert fam.H[n][0, 0].real == pytest.approx(sp * float(H[n]), rel=1e-13)
        if n:
            assert fam.C[n][0, 0].real == pytest.approx(float(C[n]), rel=1e-13)
    assert fam.H[1][0, 0].real == pytest.approx(sp / 2, rel=1e-14)


def block_moment_oracle(a, N, nmax, dps=40):
    """B_n, C_n, H_n from exact moments of e^{-N x^2} [[1, a x], [a x, 1 + a^2 x^2]]."""
    with mpmath.workdps(dps):
        a, N = mpmath.mpf(a), mpmath.mpf(N)

        def g(k):  # int x^k e^{-N x^2}
            return mpmath.mpf(0) if k % 2 else mpmath.gamma((k + 1) / mpmath.mpf(2)) / N ** ((k + 1) / mpmath.mpf(2))

        def M(k):
            return mpmath.matrix([[g(k), a * g(k + 1)], [a * g(k + 1), g(k) + a * a * g(k + 2)]])

        coeffs, H = [], []
        for n in range(nmax + 2):
            if n == 0:
                c = []
            else:
                big = mpmath.matrix(2 * n, 2 * n)
                rhs = mpmath.matrix(2, 2 * n)
                for m in range(n):
                    Mnm = M(n + m)
                    for i in range(2):
                        for j in range(2):
                            rhs[i, 2 * m + j] = -Mnm[i, j]
                    for k in range(n):
                        Mkm = M(k + m)
                        for i in range(2):
                            for j in range(2):
                                big[2 * k + i, 2 * m + j] = Mkm[i, j]
                sol = rhs * mpmath.inverse(big)
                c = [sol[:, 2 * k : 2 * k + 2] for k in range(n)]
            Hn = M(2 * n)
            for k, ck in enumerate(c):
                Hn = Hn + ck * M(k + n)
            coeffs.append(c)
            H.append(Hn)
        to_np = lambda m: np.array(m.tolist(), dtype=complex)
        B, C = [], []
        for n in range(nmax + 1):
            sub_n = coeffs[n][n - 1] if n else mpmath.zeros(2)
            B.append(to_np(sub_n - coeffs[n + 1][n]))
            C.append(to_np(H[n] * mpmath.inverse(H[n - 1])) if n else np.zeros((2, 2)))
        return B, C, [to_np(h) for h in H[: nmax + 1]]


@pytest.mark.parametrize("a,N", [(1.0, 1.0), (0.7, 3.0), (2.0, 10.0)])
def test_matrix_weight_against_exact_moments(a, N):
    B, C, H = block_moment_oracle(a, N, 4)
    fam = compute_family(hermite(2, a), N, 5)
    for n in range(5):
        scale = np.linalg.norm(H[n])
        np.testing.assert_allclose(fam.H[n], H[n], atol=1e-13 * scale)
        np.testing.assert_allclose(fam.B[n], B[n], atol=1e-12)
        if n:
            np.testing.assert_allclose(fam.C[n], C[n], atol=1e-12 * max(1, np.linalg.norm(C[n])))


def test_H0_closed_form():
    a, N = 1.3, 7.0
    fam = compute_family(hermite(2, a), N, 2)
    s = math.sqrt(math.pi / N)
    np.testing.assert_allclose(fam.H[0], np.diag([s, s * (1 + a * a / (2 * N))]), rtol=1e-14, atol=1e-16)


def test_grid_refinement_and_precision_agree():
    w = weight_from_config({"r": 3, "alpha": [0.8, -1.2], "v": [0.0, 0.3, -0.5, 0.0, 1.0]})
    f1 = compute_family(w, 6.0, 14)
    f2 = compute_family(w, 6.0, 14, nodes_per_unit=8)
    f3 = compute_family(w, 6.0, 14, extended=True)
    for g in (f2, f3):
        for n in range(1, 15):
            assert np.linalg.norm(g.B[n] - f1.B[n]) < 1e-12
            assert np.linalg.norm(g.C[n] - f1.C[n]) < 1e-12 * np.linalg.norm(f1.C[n])


def test_threads_are_deterministic():
    w = hermite(2, 1.0)
    f1 = compute_family(w, 16.0, 20, threads=3)
    f2 = compute_family(w, 16.0, 20, threads=3)
    f0 = compute_family(w, 16.0, 20)
    assert np.array_equal(f1.H, f2.H) and np.array_equal(f1.B, f2.B)
    np.testing.assert_allclose(f1.C, f0.C, atol=1e-14)


def test_eval_P_matches_grid_orthogonality():
    fam = compute_family(hermite(2, 0.9), 4.0, 6)
    g = fam.grid
    W = np.array([np.exp(-4 * x * x) * np.array([[1, 0.9 * x], [0.9 * x, 1 + 0.81 * x * x]]) for x in g.nodes])
    P3 = np.array([eval_P(fam, 3, x) for x in g.nodes])
    P1 = np.array([eval_P(fam, 1, x) for x in g.nodes])
    G = np.einsum("k,kij,kjl,kml->im", g.weights, P3, W, P1.conj())
    assert np.abs(G).max() < 1e-13
    with pytest.raises(IndexError):
        eval_P(fam, 7, 0.0)


@settings(max_examples=12, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(0.5, 12.0))
def test_B_from_Y_blocks(a, N):
    fam = compute_family(hermite(2, a), N, 11)
    assert max(verify_B_reformulation(fam, n) for n in range(1, 11)) < 1e-9
    Y = y_blocks(fam, 3)
    np.testing.assert_allclose(Y["Y1_21"] @ fam.H[2], -2j * math.pi * np.eye(2), atol=1e-12)


def test_rows_and_header():
    fam = compute_family(hermite(2, 1.0), 2.0, 3)
    rows, header = family_rows(fam), family_header(2)
    assert len(header) == 1 + 3 * 8 + 1
    assert all(len(row) == len(header) for row in rows)
    assert [row[0] for row in rows] == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        compute_family(hermite(), 1.0, 0)
