"""Dense Laurent polynomials with square matrix coefficients."""

from __future__ import annotations

import numpy as np

TRIM_TOL = 1e-15


class LaurentMatrixPolynomial:
    """``sum_k C_k z^k`` for ``kmin <= k <= kmax``.

    Coefficients live in one array of shape ``(kmax - kmin + 1, r, r)``.
    Column operations (right multiplication by a constant or by a diagonal
    monomial matrix) are the only transformations the factorization needs.
    """

    def __init__(self, kmin: int, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]:
            raise ValueError("coefficients must have shape (n, r, r)")
        self.kmin = int(kmin)
        self.coeffs = coeffs

    @classmethod
    def from_dict(cls, terms: dict[int, np.ndarray]) -> "LaurentMatrixPolynomial":
        kmin, kmax = min(terms), max(terms)
        r = np.asarray(next(iter(terms.values()))).shape[0]
        arr = np.zeros((kmax - kmin + 1, r, r), dtype=complex)
        for k, c in terms.items():
            arr[k - kmin] = c
        return cls(kmin, arr)

    @property
    def r(self) -> int:
        return self.coeffs.shape[1]

    @property
    def kmax(self) -> int:
        return self.kmin + self.coeffs.shape[0] - 1

    def coeff(self, k: int) -> np.ndarray:
        if self.kmin <= k <= self.kmax:
            return self.coeffs[k - self.kmin]
        return np.zeros((self.r, self.r), dtype=complex)

    def to_dict(self) -> dict[int, np.ndarray]:
        return {self.kmin + i: c for i, c in enumerate(self.coeffs)}

    def copy(self) -> "LaurentMatrixPolynomial":
        return LaurentMatrixPolynomial(self.kmin, self.coeffs.copy())

    def __call__(self, z) -> np.ndarray:
        z = complex(z)
        # Horner from the top exponent, then a single power for the offset
        acc = np.zeros((self.r, self.r), dtype=complex)
        for c in self.coeffs[::-1]:
            acc = acc * z + c
        if self.kmin:
            acc = acc * z ** self.kmin
        return acc

    def evaluate_many(self, zs) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        acc = np.zeros((len(zs), self.r, self.r), dtype=complex)
        for c in self.coeffs[::-1]:
            acc = acc * zs[:, None, None] + c
        if self.kmin:
            acc = acc * (zs ** self.kmin)[:, None, None]
        return acc

    def right_multiply(self, U: np.ndarray) -> "LaurentMatrixPolynomial":
        return LaurentMatrixPolynomial(self.kmin, self.coeffs @ U)

    def shift_column(self, j: int, power: int) -> "LaurentMatrixPolynomial":
        """Multiply column ``j`` by ``z**power``."""
        if power == 0:
            return self.copy()
        n = self.coeffs.shape[0]
        kmin = self.kmin + min(power, 0)
        kmax = self.kmax + max(power, 0)
        arr = np.zeros((kmax - kmin + 1, self.r, self.r), dtype=complex)
        off = self.kmin - kmin
        arr[off:off + n] = self.coeffs
        col = self.coeffs[:, :, j]
        arr[:, :, j] = 0.0
        arr[off + power:off + power + n, :, j] = col
        return LaurentMatrixPolynomial(kmin, arr)

    def negative_part_norm(self) -> float:
        if self.kmin >= 0:
            return 0.0
        neg = self.coeffs[: -self.kmin]
        return float(max(np.linalg.norm(c) for c in neg))

    def trimmed(self, tol: float = TRIM_TOL) -> "LaurentMatrixPolynomial":
        """Drop leading/trailing coefficient blocks with norm below ``tol``."""
        norms = np.array([np.linalg.norm(c) for c in self.coeffs])
        keep = np.nonzero(norms >= tol)[0]
        if keep.size == 0:
            return LaurentMatrixPolynomial(0, np.zeros((1, self.r, self.r)))
        lo, hi = keep[0], keep[-1]
        return LaurentMatrixPolynomial(self.kmin + lo, self.coeffs[lo:hi + 1].copy())

    def drop_negative(self) -> tuple["LaurentMatrixPolynomial", float]:
        """Discard negative exponents, returning the largest discarded norm."""
        if self.kmin >= 0:
            return self.copy(), 0.0
        dropped = self.negative_part_norm()
        return LaurentMatrixPolynomial(0, self.coeffs[-self.kmin:].copy()), dropped

    def conj_reflect(self) -> "LaurentMatrixPolynomial":
        """``z -> G(1/conj(z))^*``, i.e. coefficient ``C_k^*`` at ``z^{-k}``."""
        arr = np.conj(np.transpose(self.coeffs[::-1], (0, 2, 1)))
        return LaurentMatrixPolynomial(-self.kmax, arr)
