import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from mvop.weight import (
    ConfigError,
    NilpotentMatrix,
    Potential,
    eval_M,
    eval_W,
    exp_nilpotent,
    load_weight_config,
    matrix_weight_on_grid,
    weight_from_config,
)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=5).flatmap(
        lambda r: st.tuples(
            st.just(r),
            st.lists(st.floats(-3, 3), min_size=r - 1, max_size=r - 1),
            st.floats(-4, 4),
        )
    )
)
def test_exp_nilpotent_matches_expm(args):
    r, alpha, x = args
    A = NilpotentMatrix(r, tuple(alpha))
    np.testing.assert_allclose(exp_nilpotent(A, x), expm(A.dense() * x), rtol=1e-12, atol=1e-12)


def test_2x2_weight_closed_form():
    w = weight_from_config({"r": 2, "alpha": [1.5], "v": [0, 0, 1]})
    x = 0.7
    M = np.array([[1, 1.5 * x], [1.5 * x, 1 + 2.25 * x * x]])
    np.testing.assert_allclose(eval_M(w, x), M, atol=1e-15)
    np.testing.assert_allclose(eval_W(w, x, 3.0), math.exp(-3 * x * x) * M, rtol=1e-14)


def test_grid_matches_pointwise_and_underflows_to_zero():
    w = weight_from_config({"r": 3, "alpha": [0.4, -1.1], "v": [0, 0.5, -1, 0, 1]})
    xs = np.array([-2.0, -0.3, 0.0, 1.25, 40.0])
    stack = matrix_weight_on_grid(w, xs, 5.0)
    for k, x in enumerate(xs[:-1]):
        np.testing.assert_allclose(stack[k], eval_W(w, x, 5.0), rtol=1e-13)
    assert np.all(stack[-1] == 0)


def test_weight_is_hermitian_positive():
    w = weight_from_config({"r": 4, "alpha": [1, -2, 0.5], "v": [0, 0, 1]})
    for x in np.linspace(-3, 3, 13):
        M = eval_M(w, x)
        np.testing.assert_allclose(M, M.conj().T, atol=1e-13)
        assert np.linalg.eigvalsh(M).min() > 0


def test_potential_shift_and_rescale():
    v = Potential((1.0, -2.0, 0.5, 0.0, 1.0))
    s, c, d = 0.7, 1.3, -0.4
    for x in (-1.0, 0.2, 2.5):
        assert v.shifted(s)(x) == pytest.approx(v(x - s), rel=1e-13)
        assert np.polynomial.polynomial.polyval(x, v.rescaled(c, d)) == pytest.approx(v(c * x + d), rel=1e-13)


@pytest.mark.parametrize(
    "cfg",
    [
        {"r": 2, "alpha": [1.0]},
        {"r": 2, "alpha": [1.0], "v": [0, 0, 1], "extra": 1},
        {"r": 2, "alpha": [1.0, 2.0], "v": [0, 0, 1]},
        {"r": 2, "alpha": [1.0], "v": [0, 0, 2]},
        {"r": 2, "alpha": [1.0], "v": [0, 0, 0, 1]},
        {"r": 2, "alpha": [float("nan")], "v": [0, 0, 1]},
        {"r": "2", "alpha": [1.0], "v": [0, 0, 1]},
        [1, 2],
    ],
)
def test_bad_configs_rejected(cfg):
    with pytest.raises(ConfigError):
        weight_from_config(cfg)


def test_config_roundtrip(tmp_path):
    cfg = {"r": 3, "alpha": [0.5, 1.5], "v": [0.0, 0.0, 1.0]}
    p = tmp_path / "w.json"
    p.write_text(json.dumps(cfg))
    w = load_weight_config(p)
    assert w.to_config() == cfg
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_weight_config(tmp_path / "bad.json")
