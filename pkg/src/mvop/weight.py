"""Matrix weights ``W_N(x) = exp(-N v(x)) M(x)`` with ``M(x) = e^{Ax} e^{A^* x}``."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

# exp(x) underflows to a subnormal below this; treat as exact zero
_LOG_TINY = -745.0


class ConfigError(ValueError):
    """Raised for a malformed or inconsistent weight configuration."""


@dataclass(frozen=True)
class NilpotentMatrix:
    """Strictly lower bidiagonal matrix with subdiagonal ``alpha``."""

    r: int
    alpha: tuple[float, ...] = ()

    def __post_init__(self):
        if self.r < 1:
            raise ConfigError(f"matrix size must be >= 1, got {self.r}")
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) != self.r - 1:
            raise ConfigError(
                f"need {self.r - 1} subdiagonal entries for r={self.r}, got {len(self.alpha)}"
            )

    def dense(self) -> np.ndarray:
        out = np.zeros((self.r, self.r))
        for j, a in enumerate(self.alpha):
            out[j + 1, j] = a
        return out

    def scaled(self, factor: float) -> "NilpotentMatrix":
        return NilpotentMatrix(self.r, tuple(factor * a for a in self.alpha))

    @property
    def is_zero(self) -> bool:
        return all(a == 0.0 for a in self.alpha)


@dataclass(frozen=True)
class Potential:
    """Monic even-degree polynomial ``v``; ``coeffs`` are ascending ``v_0 .. v_{2m}``."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        deg = len(coeffs) - 1
        if deg < 2 or deg % 2:
            raise ConfigError(f"potential degree must be even and >= 2, got {deg}")
        if coeffs[-1] != 1.0:
            raise ConfigError(f"potential must be monic, leading coefficient is {coeffs[-1]}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_even(self) -> bool:
        return all(c == 0.0 for c in self.coeffs[1::2])

    def __call__(self, x):
        return npoly.polyval(x, self.coeffs)

    def derivative(self) -> np.ndarray:
        return npoly.polyder(np.asarray(self.coeffs))

    def shifted(self, s: float) -> "Potential":
        """Return ``x -> v(x - s)``."""
        p = np.zeros(1)
        for c in reversed(self.coeffs):
            p = npoly.polyadd(npoly.polymul(p, [-s, 1.0]), [c])
        p = np.asarray(p, dtype=float)
        p[-1] = 1.0
        return Potential(tuple(p))

    def rescaled(self, c: float, d: float) -> np.ndarray:
        """Ascending coefficients of ``V(x) = v(c x + d)``."""
        p = np.zeros(1)
        for coef in reversed(self.coeffs):
            p = npoly.polyadd(npoly.polymul(p, [d, c]), [coef])
        return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class MatrixWeight:
    potential: Potential
    A: NilpotentMatrix

    @property
    def r(self) -> int:
        return self.A.r

    def to_config(self) -> dict:
        return {"r": self.r, "alpha": list(self.A.alpha), "v": list(self.potential.coeffs)}

    def fingerprint(self) -> str:
        return json.dumps(self.to_config(), sort_keys=True)


def exp_nilpotent(A: NilpotentMatrix, x) -> np.ndarray:
    """Exact ``e^{Ax}`` as the finite sum of ``(Ax)^k / k!`` for ``k < r``."""
    Ax = A.dense() * x
    term = np.eye(A.r, dtype=complex)
    out = term.copy()
    for k in range(1, A.r):
        term = term @ Ax / k
        out = out + term
    return out


def eval_M(w: MatrixWeight, x) -> np.ndarray:
    """``e^{Ax} e^{A^* x}``, continued analytically to complex ``x``."""
    E = exp_nilpotent(w.A, x)
    Ec = exp_nilpotent(w.A, np.conj(x))
    return E @ Ec.conj().T


def log_scalar_weight(v: Potential, x, N: float):
    return -N * v(x)


def eval_W(w: MatrixWeight, x: float, N: float) -> np.ndarray:
    logw = log_scalar_weight(w.potential, x, N)
    if logw < _LOG_TINY:
        return np.zeros((w.r, w.r), dtype=complex)
    return math.exp(logw) * eval_M(w, x)


def matrix_weight_on_grid(w: MatrixWeight, x: np.ndarray, N: float) -> np.ndarray:
    """Stack of ``W_N(x_k)``, shape ``(len(x), r, r)``."""
    x = np.asarray(x, dtype=float)
    logw = log_scalar_weight(w.potential, x, N)
    scal = np.where(logw < _LOG_TINY, 0.0, np.exp(np.maximum(logw, _LOG_TINY)))
    A = w.A.dense()
    r = w.r
    # E[k] = e^{A x_k}, built with the same finite sum as exp_nilpotent
    term = np.broadcast_to(np.eye(r), (len(x), r, r)).astype(float)
    E = term.copy()
    for k in range(1, r):
        term = term @ (A[None] * x[:, None, None]) / k
        E = E + term
    M = E @ np.transpose(E, (0, 2, 1))
    return (scal[:, None, None] * M).astype(complex)


def weight_from_config(cfg: dict) -> MatrixWeight:
    if not isinstance(cfg, dict):
        raise ConfigError("weight config must be a JSON object")
    unknown = set(cfg) - {"r", "alpha", "v"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"r", "alpha", "v"} - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    r = cfg["r"]
    if isinstance(r, bool) or not isinstance(r, int):
        raise ConfigError("'r' must be an integer")
    try:
        alpha = [float(a) for a in cfg["alpha"]]
        v = [float(c) for c in cfg["v"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric config entry: {exc}") from None
    if not all(math.isfinite(a) for a in alpha + v):
        raise ConfigError("config entries must be finite")
    return MatrixWeight(Potential(tuple(v)), NilpotentMatrix(r, tuple(alpha)))


def load_weight_config(path) -> MatrixWeight:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return weight_from_config(cfg)
