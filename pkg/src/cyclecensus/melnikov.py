"""First-order displacement integral for the perturbed linear center.

For the field (y + eps*p, -x + eps*q), the radial displacement of the return
map over one revolution is eps*A(r)/r + O(eps^2), with

    A(r) = integral_0^{2pi} [p(r cos t, r sin t) r cos t
                             + q(r cos t, r sin t) r sin t] dt.

Only odd total degrees of (p, q) contribute, giving the even power series
A(r) = sum_m c[m] r^(2m+2).  Zeros of A in r > 0 are zeros of
f(s) = A(sqrt(s))/s in s = r^2 > 0, which is the univariate polynomial this
module counts roots of.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DegenerateSeriesError
from .ensembles import SeededRng, sample_uniform_cube
from .polynomials import BivariatePolynomial

# Zeros below this radius are excluded from cycle counts: the displacement
# integral vanishes like r^2 at the origin, so the equilibrium would
# otherwise register as a spurious near-zero.
R_MIN = 1e-3

# Largest series degree for which the exact integer Sturm count is used;
# beyond it the sign-change grid takes over (cross-validated in tests).
EXACT_COUNT_MAX_DEGREE = 64


# -- closed-form circle integrals -------------------------------------------

def _log_double_factorial(n: int) -> float:
    """log(n!!) with (-1)!! = 0!! = 1, in log space for large n."""
    if n <= 0:
        return 0.0
    if n % 2 == 0:
        h = n // 2
        return h * math.log(2.0) + math.lgamma(h + 1.0)
    h = (n - 1) // 2
    return math.lgamma(n + 1.0) - h * math.log(2.0) - math.lgamma(h + 1.0)


@lru_cache(maxsize=4096)
def _circle_moment_weights(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights (w_p[j], w_q[j]) over j = 0..2m+1 (k = 2m+1-j) such that the
    contribution of the degree-(2m+1) coefficients of (p, q) to the series
    coefficient of r^(2m+2) is sum_j a[j,k] w_p[j] + b[j,k] w_q[j].

    w_p[j] = circle average of cos^(j+1) sin^k, w_q[j] of cos^j sin^(k+1);
    both vanish unless the two exponents are even.
    """
    n = 2 * m + 1
    j = np.arange(n + 1)
    k = n - j
    log_norm = _log_double_factorial(2 * m + 2)
    w_p = np.zeros(n + 1)
    w_q = np.zeros(n + 1)
    odd_j = (j % 2) == 1
    for idx in np.nonzero(odd_j)[0]:
        w_p[idx] = 2.0 * math.pi * math.exp(
            _log_double_factorial(int(j[idx]))
            + _log_double_factorial(int(k[idx]) - 1) - log_norm)
    for idx in np.nonzero(~odd_j)[0]:
        w_q[idx] = 2.0 * math.pi * math.exp(
            _log_double_factorial(int(j[idx]) - 1)
            + _log_double_factorial(int(k[idx])) - log_norm)
    return w_p, w_q


@dataclass(frozen=True)
class MelnikovSeries:
    """Coefficients of f(s): entry m multiplies s^m, i.e. r^(2m+2) in the
    displacement integral."""

    coeffs: np.ndarray
    max_m: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.coeffs, float)
        if arr.shape != (self.max_m + 1,):
            raise ValueError("coefficient length must be max_m + 1")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    def displacement(self, r):
        """Reconstruct A(r) = r^2 * f(r^2)."""
        r = np.asarray(r, float)
        s = r * r
        return s * np.polynomial.polynomial.polyval(s, self.coeffs)


def melnikov_quadrature(p: BivariatePolynomial, q: BivariatePolynomial,
                        r: float, quad_n: int) -> float:
    """A(r) by uniform trapezoid quadrature on the circle.

    The integrand is a trigonometric polynomial of degree max(deg p, deg q)+1,
    so the rule is exact (to round-off) once quad_n exceeds that; the
    precondition enforces the stricter threshold 2*(d+2).
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    d = max(p.degree, q.degree)
    if quad_n < 2 * (d + 2):
        raise ValueError(f"quad_n must be at least 2*(d+2) = {2 * (d + 2)}")
    t = np.linspace(0.0, 2.0 * math.pi, quad_n, endpoint=False)
    x = r * np.cos(t)
    y = r * np.sin(t)
    vals = p(x, y) * x + q(x, y) * y
    return float(vals.mean() * 2.0 * math.pi)


def melnikov_series(p: BivariatePolynomial,
                    q: BivariatePolynomial) -> MelnikovSeries:
    """Exact series coefficients from the closed-form circle integrals.

    Even total degrees integrate to zero by symmetry and are skipped.
    """
    d = max(p.degree, q.degree)
    max_m = max((d - 1) // 2, 0)
    coeffs = np.zeros(max_m + 1)
    for m in range(max_m + 1):
        n = 2 * m + 1
        w_p, w_q = _circle_moment_weights(m)
        a = np.array([p.coeff(j, n - j) for j in range(n + 1)])
        b = np.array([q.coeff(j, n - j) for j in range(n + 1)])
        coeffs[m] = a @ w_p + b @ w_q
    return MelnikovSeries(coeffs, max_m)


# -- real-zero counting -------------------------------------------------------

def _trimmed(coeffs: np.ndarray) -> np.ndarray:
    arr = np.asarray(coeffs, float)
    nz = np.nonzero(arr)[0]
    if nz.size == 0:
        raise DegenerateSeriesError("all series coefficients are zero")
    return arr[: nz[-1] + 1]


def _primitive(poly: list[int]) -> list[int]:
    g = 0
    for v in poly:
        g = math.gcd(g, abs(v))
    g = g or 1
    return [v // g for v in poly]


def _pseudo_remainder(f: list[int], g: list[int]) -> list[int]:
    f = list(f)
    dg = len(g) - 1
    lg = g[-1]
    while len(f) - 1 >= dg:
        if f[-1] == 0:
            f.pop()
            continue
        lf = f[-1]
        f = [v * lg for v in f]
        shift = len(f) - 1 - dg
        for i, gv in enumerate(g):
            f[i + shift] -= lf * gv
        while f and f[-1] == 0:
            f.pop()
        if not f:
            break
    return f


def _sturm_chain(ints: list[int]) -> list[list[int]]:
    chain = [_primitive(ints)]
    deriv = [i * v for i, v in enumerate(ints)][1:]
    chain.append(_primitive(deriv))
    while len(chain[-1]) > 1:
        r = _pseudo_remainder(chain[-2], chain[-1])
        if not any(r):
            break
        chain.append([-v for v in _primitive(r)])
    return chain


def _sign_variations_at(chain: list[list[int]], x: float) -> int:
    fr = Fraction(x)
    num, den = fr.numerator, fr.denominator
    signs = []
    for poly in chain:
        deg = len(poly) - 1
        acc = 0
        # homogenized Horner: value * den^deg, sign-preserving
        powers = [1]
        for _ in range(deg):
            powers.append(powers[-1] * den)
        for i in range(deg, -1, -1):
            acc = acc * num + poly[i] * powers[deg - i]
        if acc != 0:
            signs.append(1 if acc > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def _count_zeros_sturm(coeffs: np.ndarray, lo: float, hi: float,
                       scale_bits: int = 64) -> int:
    """Exact Sturm count on the polynomial with coefficients scaled to unit
    max-norm and rounded to (1 << scale_bits) integer precision."""
    arr = _trimmed(coeffs)
    if arr.size == 1:
        return 0
    scaled = arr / np.max(np.abs(arr)) * float(1 << scale_bits)
    ints = [int(round(v)) for v in scaled.tolist()]
    while ints and ints[-1] == 0:
        ints.pop()
    if len(ints) <= 1:
        return 0
    chain = _sturm_chain(ints)
    return _sign_variations_at(chain, lo) - _sign_variations_at(chain, hi)


def _sign_change_grid(lo: float, hi: float, base_n: int = 2048) -> np.ndarray:
    """Evaluation grid on (lo, hi] that clusters dyadically toward s = 1,
    where real zeros of the implemented ensembles accumulate."""
    pts = [np.linspace(lo, hi, base_n)]
    if hi / max(lo, 1e-300) > 1e3:
        pts.append(np.geomspace(max(lo, 1e-300), hi, base_n // 2))
    if lo < 1.0 < hi * (1 + 1e-12) or abs(hi - 1.0) < 1e-12:
        gap = np.geomspace(1e-15, 1.0, 1024)
        pts.append(np.clip(1.0 - gap, lo, hi))
        pts.append(np.clip(1.0 + gap, lo, hi))
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= lo) & (grid <= hi)]


def _count_zeros_grid(coeffs: np.ndarray, lo: float, hi: float) -> int:
    """Sign-change count on a clustered grid, with one midpoint refinement
    pass to catch zero pairs at half-grid scale."""
    arr = _trimmed(coeffs)
    grid = _sign_change_grid(lo, hi)
    mids = 0.5 * (grid[:-1] + grid[1:])
    full = np.sort(np.concatenate([grid, mids]))
    vals = np.polynomial.polynomial.polyval(full, arr)
    signs = np.sign(vals)
    signs = signs[signs != 0]
    return int(np.sum(signs[:-1] != signs[1:]))


def count_real_zeros(series, interval: tuple[float, float],
                     method: str = "auto") -> int:
    """Distinct real zeros of f(s) in the open interval (s_lo, s_hi).

    ``series`` is a :class:`MelnikovSeries` or a plain ascending coefficient
    array.  Exact Sturm counting (integer arithmetic on unit-max-norm-scaled
    coefficients) is used up to degree ``EXACT_COUNT_MAX_DEGREE``; beyond it
    a dyadically refined sign-change grid takes over.  ``s_hi`` may be
    ``inf``, in which case zeros above 1 are counted through the reversed
    polynomial so evaluations stay on (0, 1].
    """
    s_lo, s_hi = interval
    if s_lo <= 0:
        raise ValueError("interval must satisfy s_lo > 0")
    if s_hi <= s_lo:
        raise ValueError("interval must satisfy s_hi > s_lo")
    coeffs = series.coeffs if isinstance(series, MelnikovSeries) else np.asarray(series, float)
    arr = _trimmed(coeffs)
    degree = arr.size - 1
    if method == "auto":
        method = "sturm" if degree <= EXACT_COUNT_MAX_DEGREE and np.isfinite(s_hi) \
            else "grid"
    if method == "sturm":
        if not np.isfinite(s_hi):
            raise ValueError("exact counting requires a finite interval")
        return _count_zeros_sturm(arr, s_lo, s_hi)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    rev = arr[::-1]
    if not np.isfinite(s_hi):
        below = _count_zeros_grid(arr, s_lo, 1.0) if s_lo < 1.0 else 0
        above = _count_zeros_grid(rev, 1e-15, min(1.0 - 1e-15, 1.0 / s_lo))
        return below + above
    if s_hi <= 1.0:
        return _count_zeros_grid(arr, s_lo, s_hi)
    if s_lo >= 1.0:
        # keep evaluations on (0, 1] via the reversed polynomial
        return _count_zeros_grid(rev, 1.0 / s_hi, 1.0 / s_lo)
    return (_count_zeros_grid(arr, s_lo, 1.0)
            + _count_zeros_grid(rev, 1.0 / s_hi, 1.0 - 1e-15))


# -- coefficient variance ------------------------------------------------------

def sigma_m_squared(m: int, coeff_variance: float = 1.0) -> float:
    """Variance of the order-m series coefficient when the perturbation
    coefficients are i.i.d. with the given variance."""
    if m < 0:
        raise ValueError("m must be non-negative")
    w_p, w_q = _circle_moment_weights(m)
    return float(coeff_variance * (np.sum(w_p ** 2) + np.sum(w_q ** 2)))


def power_law_sigma(max_m: int, gamma: float) -> np.ndarray:
    """Standard deviations c_(2m+1) * sigma_m for m = 0..max_m, where
    c_m = m^(gamma/2) is the per-degree weight."""
    out = np.empty(max_m + 1)
    for m in range(max_m + 1):
        out[m] = (2 * m + 1) ** (gamma / 2.0) * math.sqrt(sigma_m_squared(m))
    return out


# -- truncated center-focus limit statistic ------------------------------------

def sample_X_rho(rho: float, truncation_degree: int, rng: SeededRng,
                 tail_tol: float = 1e-9,
                 r_min: float = R_MIN) -> int:
    """Zero count in (r_min^2, rho^2) of the displacement series built from a
    uniform-cube sample truncated at the given degree.

    The truncation must be deep enough that the sup-norm tail bound
    R^(2D)/(1-R)^2 at R = (1+rho)/2 is below ``tail_tol``, so the count has
    stabilized in the coupling sense.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    R = 0.5 * (1.0 + rho)
    tail = R ** (2 * truncation_degree) / (1.0 - R) ** 2
    if tail > tail_tol:
        raise ValueError(
            f"truncation degree {truncation_degree} leaves tail bound "
            f"{tail:.3g} above tolerance {tail_tol:g}")
    p = sample_uniform_cube(truncation_degree, rng.child(0))
    q = sample_uniform_cube(truncation_degree, rng.child(1))
    series = melnikov_series(p, q)
    try:
        return count_real_zeros(series, (r_min ** 2, rho ** 2))
    except DegenerateSeriesError:
        # probability zero for continuous coefficients
        return 0
