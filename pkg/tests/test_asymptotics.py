import math

import numpy as np
import pytest

from mvop.asymptotics import (
    CutProximityError,
    LogScaled,
    H_first,
    H_first_displayed,
    C_first,
    _re_rotated,
    build_context,
    check_context,
    det_inner_2x2,
    det_inner_numeric,
    detgrid,
    edge_leading,
    error_report,
    hermite_phase,
    inner_leading,
    inner_phase,
    loglog_slope,
    outer_leading,
    predict_B,
    predict_C,
    predict_H,
    predict_H_scaled,
    sign_changes,
)
from mvop.direct import compute_family
from mvop.szego import eval_D_plus, spectral_factorize
from mvop.weight import NilpotentMatrix, weight_from_config


@pytest.fixture(scope="module")
def ctx2():
    return build_context(weight_from_config({"r": 2, "alpha": [1.0], "v": [0.0, 0.0, 1.0]}))


@pytest.fixture(scope="module")
def ctx1():
    return build_context(weight_from_config({"r": 1, "alpha": [], "v": [0.0, 0.0, 1.0]}))


def test_context_scaling(ctx2):
    # support [-sqrt2, sqrt2]: the Szego data use alpha * c
    assert ctx2.c == pytest.approx(math.sqrt(2), abs=1e-13)
    assert ctx2.szego.A_eff.alpha[0] == pytest.approx(math.sqrt(2))
    s = math.sqrt(2 + 4)
    np.testing.assert_allclose(ctx2.D_inf, np.diag([2 / s, s / 2]), atol=1e-13)
    check_context(ctx2)


def test_predict_B_is_center():
    ctx = build_context(weight_from_config({"r": 2, "alpha": [0.5], "v": [2.25, -3.0, 1.0]}))
    np.testing.assert_allclose(predict_B(ctx), 1.5 * np.eye(2), atol=1e-12)


def test_scalar_norm_against_stirling(ctx1):
    # e^{-N x^2}: h_n = sqrt(pi) n! / (2^n N^{n+1/2}); at n = N the 1/N term is Stirling's 1/12
    assert H_first(ctx1)[0, 0].real == pytest.approx(1 / 12, abs=1e-12)
    for N in (10, 40, 160):
        log_exact = 0.5 * math.log(math.pi) + math.lgamma(N + 1) - N * math.log(2) - (N + 0.5) * math.log(N)
        pred = predict_H_scaled(ctx1, N, 1)
        rel = math.exp(log_exact - pred.log_scale) / pred.matrix[0, 0].real - 1
        assert abs(rel) < 1.0 / (200 * N * N)


def test_scalar_recurrence_has_no_correction(ctx1):
    assert abs(C_first(ctx1)[0, 0]) < 1e-12
    np.testing.assert_allclose(predict_C(ctx1, 20), [[0.5]], atol=1e-12)


def test_C_first_matches_exact_recurrence(ctx2):
    # for this weight C_{N,N} = I/2 + C1/N with no further terms; the residual is extraction noise
    np.testing.assert_allclose(C_first(ctx2), np.diag([-1 / 6, 1 / 6]), atol=1e-10)
    w = weight_from_config({"r": 2, "alpha": [1.0], "v": [0.0, 0.0, 1.0]})
    for N in (8, 16, 32):
        fam = compute_family(w, N, N + 1)
        assert np.linalg.norm(fam.C[N] - predict_C(ctx2, N), 2) < 1e-10


def test_H_first_residue_form_beats_displayed_form(ctx2):
    w = weight_from_config({"r": 2, "alpha": [1.0], "v": [0.0, 0.0, 1.0]})
    N = 24
    fam = compute_family(w, N, N + 1)
    s = predict_H_scaled(ctx2, N, 1)
    direct = fam.H[N] * math.exp(-s.log_scale)
    D = ctx2.D_inf
    disp = D @ (np.eye(2) + H_first_displayed(ctx2) / N) @ D.conj().T
    err = np.linalg.norm(direct - s.matrix) / np.linalg.norm(direct)
    err_disp = np.linalg.norm(direct - disp) / np.linalg.norm(direct)
    assert err < 1e-3 < err_disp


def test_predict_H_large_N_stays_log_scaled(ctx2):
    out = predict_H(ctx2, 5000)
    assert isinstance(out, LogScaled)
    small = predict_H(ctx2, 10)
    np.testing.assert_allclose(small, predict_H_scaled(ctx2, 10).value())


def test_outer_normalized_at_infinity(ctx2):
    np.testing.assert_allclose(outer_leading(ctx2, 1e7), np.eye(2), atol=1e-6)
    with pytest.raises(CutProximityError):
        outer_leading(ctx2, 0.5 + 0.01j)


def test_guards(ctx2):
    with pytest.raises(CutProximityError):
        inner_leading(ctx2, 0.95, 10)
    with pytest.raises(CutProximityError):
        edge_leading(ctx2, 0.5, 10)


def test_inner_is_mean_of_outer_boundary_values(ctx2):
    # Re(e^{-i psi} D_+^{-1}) averages the two outer boundary values
    x, N = 0.3, 12.0
    psi = inner_phase(ctx2, x, N)
    Dp = eval_D_plus(ctx2.szego, x)
    mean = 0.5 * (np.exp(-1j * psi) * np.linalg.inv(Dp) + np.exp(1j * psi) * np.linalg.inv(Dp.conj()))
    pref = math.sqrt(2) / (1 - x * x) ** 0.25
    np.testing.assert_allclose(inner_leading(ctx2, x, N), pref * ctx2.D_inf @ mean, atol=1e-13)


def test_edge_inner_overlap_shrinks_toward_edge(ctx2):
    def inner_unguarded(x, N):
        return math.sqrt(2) / (1 - x * x) ** 0.25 * ctx2.D_inf @ _re_rotated(ctx2, x, -inner_phase(ctx2, x, N))

    worst = {}
    for x in (0.85, 0.95, 0.99, 0.998):
        amp = math.sqrt(2) / (1 - x * x) ** 0.25
        worst[x] = max(
            np.linalg.norm(edge_leading(ctx2, x, N) - N ** (-1 / 6) * inner_unguarded(x, N), 2) / (N ** (-1 / 6) * amp)
            for N in np.linspace(2e5, 2.1e5, 25)
        )
        assert worst[x] < 1.2 * math.sqrt(1 - x)
    assert worst[0.998] < worst[0.95] < worst[0.85]


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_det_closed_form_against_numeric(a):
    f = spectral_factorize(NilpotentMatrix(2, (a,)))
    for N in (10, 11, 37):
        for x in (-0.77, -0.1, 0.0, 0.42, 0.93):
            assert det_inner_2x2(a, N, x) == pytest.approx(det_inner_numeric(f, N, x), abs=1e-12)
            # the determinant does not depend on the sign of the rotation for r = 2
            psi = hermite_phase(N, x)
            plus = np.linalg.det(np.real(np.exp(1j * psi) * np.linalg.inv(eval_D_plus(f, x))))
            assert det_inner_2x2(a, N, x) == pytest.approx(plus, abs=1e-12)


def test_detgrid_shape_and_bounds():
    x, vals = detgrid(2, [2.0], 10, 500)
    assert x.shape == vals.shape == (500,)
    assert x[0] > -1 and x[-1] < 1
    assert vals.min() >= -4 / 8 - 1e-12 and vals.max() <= 1 + 1e-12
    x3, vals3 = detgrid(3, [1.0, 1.0], 10, 400)
    assert np.all(np.isfinite(vals3)) and sign_changes(vals3, x3, 0.95) > 0


def test_small_helpers():
    assert loglog_slope([8, 16, 32], [1.0, 0.25, 0.0625]) == pytest.approx(-2.0)
    assert sign_changes([1, -1, 0, -2, 3]) == 2
    assert sign_changes([1, -1, 1], x=[-0.99, 0.0, 0.99], window=0.5) == 0


def test_error_report_structure():
    w = weight_from_config({"r": 2, "alpha": [0.5], "v": [0.0, 0.0, 1.0]})
    rep = error_report(w, [6, 12])
    assert [row["N"] for row in rep["rows"]] == [6, 12]
    assert set(rep["slopes"]) == {"B", "C_leading", "C", "H_leading", "H", "outer", "inner", "edge"}
    assert rep["rows"][1]["H"] < rep["rows"][0]["H"]
