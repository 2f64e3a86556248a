"""Airy function ``Ai`` on the real line and the coefficients ``u_k, v_k`` of its expansions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath

# switch points between the Maclaurin series and the asymptotic expansions
POS_SWITCH = 6.0
NEG_SWITCH = -9.0
_EXACT_LIMIT = 30
_WORK_DPS = 50


@dataclass(frozen=True)
class AiryCoeffs:
    k: int
    u: Fraction | float
    v: Fraction | float


def uk_coeffs(k: int) -> AiryCoeffs:
    """``u_k = (2k+1)(2k+3)...(6k-1) / (216^k k!)`` and ``v_k = (6k+1)/(1-6k) u_k``.

    Exact rationals up to ``k = 30``, floats beyond.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    num = math.prod(range(2 * k + 1, 6 * k, 2))
    u = Fraction(num, 216**k * math.factorial(k))
    v = Fraction(6 * k + 1, 1 - 6 * k) * u
    if k > _EXACT_LIMIT:
        return AiryCoeffs(k, float(u), float(v))
    return AiryCoeffs(k, u, v)


def _maclaurin(x: float) -> float:
    with mpmath.workdps(_WORK_DPS):
        X = mpmath.mpf(x)
        c1 = 1 / (mpmath.cbrt(9) * mpmath.gamma(mpmath.mpf(2) / 3))
        c2 = 1 / (mpmath.cbrt(3) * mpmath.gamma(mpmath.mpf(1) / 3))
        x3 = X**3
        f, g = mpmath.mpf(1), X
        tf, tg = mpmath.mpf(1), X
        eps = mpmath.mpf(10) ** (-_WORK_DPS + 5)
        k = 0
        while True:
            tf = tf * x3 / ((3 * k + 2) * (3 * k + 3))
            tg = tg * x3 / ((3 * k + 3) * (3 * k + 4))
            f += tf
            g += tg
            k += 1
            if abs(tf) + abs(tg) < eps * (abs(f) + abs(g)) and k > 2:
                break
        return float(c1 * f - c2 * g)


def _u_float(n: int) -> list[float]:
    return [float(uk_coeffs(k).u) for k in range(n)]


_U = _u_float(60)


def _asymptotic_positive(x: float) -> float:
    zeta = 2.0 / 3.0 * x**1.5
    total, term_prev = 0.0, math.inf
    for k, u in enumerate(_U):
        term = (-1) ** k * u / zeta**k
        if abs(term) > term_prev:
            break
        total += term
        term_prev = abs(term)
    return math.exp(-zeta) / (2 * math.sqrt(math.pi) * x**0.25) * total


def _asymptotic_negative(x: float) -> float:
    y = -x
    zeta = 2.0 / 3.0 * y**1.5
    even = odd = 0.0
    prev = math.inf
    for k in range(len(_U) // 2):
        te = (-1) ** k * _U[2 * k] / zeta ** (2 * k)
        to = (-1) ** k * _U[2 * k + 1] / zeta ** (2 * k + 1)
        if max(abs(te), abs(to)) > prev:
            break
        even += te
        odd += to
        prev = max(abs(te), abs(to))
    ph = zeta - math.pi / 4
    return (math.cos(ph) * even + math.sin(ph) * odd) / (math.sqrt(math.pi) * y**0.25)


def airy_ai(x: float) -> float:
    x = float(x)
    if x > POS_SWITCH:
        return _asymptotic_positive(x)
    if x < NEG_SWITCH:
        return _asymptotic_negative(x)
    return _maclaurin(x)
