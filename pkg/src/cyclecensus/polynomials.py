"""Dense bivariate polynomials on the total-degree simplex.

Coefficients are stored in a flat triangular array ordered by total degree
ascending, then by the x-exponent ascending.  This order is load-bearing:
samplers draw coefficients in exactly this order so that a lower-degree
sample is a prefix of a higher-degree one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import lgamma
from typing import Mapping

import numpy as np

# Memory for the coefficient triangle grows like degree**2; higher degrees
# are only ever needed as univariate reductions elsewhere.
MAX_DEGREE = 2000


def triangle_size(degree: int) -> int:
    """Number of monomials x^j y^k with j + k <= degree."""
    return (degree + 1) * (degree + 2) // 2


def triangle_index(j: int, k: int) -> int:
    """Flat index of the coefficient of x^j y^k."""
    m = j + k
    return m * (m + 1) // 2 + j


def log_multinomial(degree: int, alpha: tuple[int, ...]) -> float:
    """log of degree! / prod(alpha_i!), computed in log space to avoid
    overflow past degree ~170."""
    if sum(alpha) != degree or any(a < 0 for a in alpha):
        raise ValueError(f"multi-index {alpha} does not sum to degree {degree}")
    return lgamma(degree + 1) - sum(lgamma(a + 1) for a in alpha)


@dataclass(frozen=True, eq=False)
class BivariatePolynomial:
    """Polynomial sum_{j+k<=d} c[j,k] x^j y^k with dense triangular storage.

    ``coeffs`` is the flat triangular array (total degree ascending, then j
    ascending).  Instances are immutable; the coefficient array is marked
    read-only on construction.
    """

    degree: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [0, {MAX_DEGREE}], got {self.degree}")
        arr = np.ascontiguousarray(self.coeffs, dtype=float)
        if arr.shape != (triangle_size(self.degree),):
            raise ValueError(
                f"coefficient array has length {arr.shape}, expected "
                f"({triangle_size(self.degree)},) for degree {self.degree}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, degree: int = 0) -> "BivariatePolynomial":
        return cls(degree, np.zeros(triangle_size(degree)))

    @classmethod
    def monomial(cls, j: int, k: int, coefficient: float = 1.0,
                 degree: int | None = None) -> "BivariatePolynomial":
        d = max(j + k, degree or 0)
        arr = np.zeros(triangle_size(d))
        arr[triangle_index(j, k)] = coefficient
        return cls(d, arr)

    @classmethod
    def from_coeff_dict(cls, entries: Mapping[tuple[int, int], float],
                        degree: int | None = None) -> "BivariatePolynomial":
        d = max((j + k for j, k in entries), default=0)
        d = max(d, degree or 0)
        arr = np.zeros(triangle_size(d))
        for (j, k), c in entries.items():
            arr[triangle_index(j, k)] = c
        return cls(d, arr)

    # -- access ------------------------------------------------------------

    def coeff(self, j: int, k: int) -> float:
        if j < 0 or k < 0 or j + k > self.degree:
            return 0.0
        return float(self.coeffs[triangle_index(j, k)])

    @cached_property
    def _blocks(self) -> list[np.ndarray]:
        """Coefficient slices grouped by total degree."""
        out = []
        pos = 0
        for m in range(self.degree + 1):
            out.append(self.coeffs[pos:pos + m + 1])
            pos += m + 1
        return out

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x, y):
        """Evaluate at scalar or array arguments.

        Powers are built by iterated products and the sum is accumulated one
        total-degree block at a time, from the highest degree down, which
        keeps the relative error bounded for |v| = O(1) at large degree.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        scalar = x.ndim == 0 and y.ndim == 0
        x, y = np.atleast_1d(x), np.atleast_1d(y)
        x, y = np.broadcast_arrays(x, y)
        d = self.degree
        xp = np.empty(x.shape + (d + 1,))
        yp = np.empty(y.shape + (d + 1,))
        xp[..., 0] = 1.0
        yp[..., 0] = 1.0
        for i in range(1, d + 1):
            xp[..., i] = xp[..., i - 1] * x
            yp[..., i] = yp[..., i - 1] * y
        total = np.zeros(x.shape)
        blocks = self._blocks
        for m in range(d, -1, -1):
            c = blocks[m]
            if not c.any():
                continue
            # within degree m the k-powers run m, m-1, ..., 0 as j ascends
            total += (xp[..., : m + 1] * yp[..., m::-1]) @ c
        return float(total[()]) if scalar else total

    # -- calculus and arithmetic --------------------------------------------

    def partial_x(self) -> "BivariatePolynomial":
        d = self.degree
        if d == 0:
            return BivariatePolynomial.zero(0)
        out = np.zeros(triangle_size(d - 1))
        for m in range(1, d + 1):
            src = self._blocks[m]
            base = (m - 1) * m // 2
            j = np.arange(1, m + 1)
            out[base + j - 1] += j * src[1:]
        return BivariatePolynomial(d - 1, out)

    def partial_y(self) -> "BivariatePolynomial":
        d = self.degree
        if d == 0:
            return BivariatePolynomial.zero(0)
        out = np.zeros(triangle_size(d - 1))
        for m in range(1, d + 1):
            src = self._blocks[m]
            base = (m - 1) * m // 2
            j = np.arange(0, m)
            out[base + j] += (m - j) * src[:-1]
        return BivariatePolynomial(d - 1, out)

    def scaled(self, factor: float) -> "BivariatePolynomial":
        return BivariatePolynomial(self.degree, self.coeffs * factor)

    def padded(self, degree: int) -> "BivariatePolynomial":
        if degree < self.degree:
            raise ValueError("cannot pad to a smaller degree")
        arr = np.zeros(triangle_size(degree))
        arr[: self.coeffs.size] = self.coeffs
        return BivariatePolynomial(degree, arr)

    def __add__(self, other: "BivariatePolynomial") -> "BivariatePolynomial":
        d = max(self.degree, other.degree)
        arr = np.zeros(triangle_size(d))
        arr[: self.coeffs.size] += self.coeffs
        arr[: other.coeffs.size] += other.coeffs
        return BivariatePolynomial(d, arr)

    def __sub__(self, other: "BivariatePolynomial") -> "BivariatePolynomial":
        return self + other.scaled(-1.0)

    def __neg__(self) -> "BivariatePolynomial":
        return self.scaled(-1.0)

    # -- homogenization ------------------------------------------------------

    def homogenize(self) -> dict[tuple[int, int, int], float]:
        """Trivariate homogeneous coefficients of total degree ``self.degree``.

        The affine monomial x^j y^k maps to x^j y^k z^(d-j-k).
        """
        d = self.degree
        out: dict[tuple[int, int, int], float] = {}
        pos = 0
        for m in range(d + 1):
            for j in range(m + 1):
                c = self.coeffs[pos]
                pos += 1
                if c != 0.0:
                    out[(j, m - j, d - m)] = float(c)
        return out


def eval_poly(p: BivariatePolynomial, v) -> float:
    """Evaluate ``p`` at a point v = (x, y)."""
    x, y = v
    return p(x, y)


def fischer_norm(coefficients: Mapping[tuple[int, int, int], float],
                 degree: int) -> float:
    """Norm of a homogeneous trivariate polynomial under the inner product
    that makes sqrt(multinomial)-weighted monomials orthonormal.

    ``coefficients`` maps multi-indices (a1, a2, a3) with a1+a2+a3 == degree
    to monomial coefficients.  Raises ValueError on any mismatched index.
    """
    total = 0.0
    for alpha, c in coefficients.items():
        if len(alpha) != 3:
            raise ValueError(f"expected trivariate multi-index, got {alpha}")
        total += c * c * np.exp(-log_multinomial(degree, tuple(alpha)))
    return float(np.sqrt(total))


def kostlan_covariance(v1, v2, degree: int) -> float:
    """Two-point covariance (1 + <v1, v2>)^degree of the rotation-invariant
    Gaussian polynomial ensemble."""
    x1, y1 = v1
    x2, y2 = v2
    return float((1.0 + x1 * x2 + y1 * y2) ** degree)


@dataclass(frozen=True, eq=False)
class PlanarField:
    """A planar polynomial vector field (P, Q).

    When built through :meth:`center_focus`, the field is
    (y + eps*p, -x + eps*q) and the perturbation data is retained so that
    polar return-map machinery can use it directly.
    """

    P: BivariatePolynomial
    Q: BivariatePolynomial
    epsilon: float | None = None
    perturbation: tuple[BivariatePolynomial, BivariatePolynomial] | None = None

    @property
    def form(self) -> str:
        return "center_focus" if self.epsilon is not None else "general"

    @classmethod
    def center_focus(cls, p: BivariatePolynomial, q: BivariatePolynomial,
                     epsilon: float) -> "PlanarField":
        if epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        P = BivariatePolynomial.monomial(0, 1) + p.scaled(epsilon)
        Q = BivariatePolynomial.monomial(1, 0, -1.0) + q.scaled(epsilon)
        return cls(P, Q, epsilon=epsilon, perturbation=(p, q))

    def eval(self, x, y):
        return self.P(x, y), self.Q(x, y)

    __call__ = eval

    @cached_property
    def _partials(self):
        return (self.P.partial_x(), self.P.partial_y(),
                self.Q.partial_x(), self.Q.partial_y())

    def jacobian(self, x, y) -> np.ndarray:
        """Jacobian matrices, shape (..., 2, 2)."""
        px, py, qx, qy = self._partials
        x = np.asarray(x, float)
        out = np.empty(np.broadcast(x, np.asarray(y, float)).shape + (2, 2))
        out[..., 0, 0] = px(x, y)
        out[..., 0, 1] = py(x, y)
        out[..., 1, 0] = qx(x, y)
        out[..., 1, 1] = qy(x, y)
        return out
