"""Expected-zero computations for the displacement integral of Kostlan
perturbations of the linear center.

The two-point correlation of the displacement integral depends on the two
radii (r, t) only through their product s = rt and reduces to the single
circle integral

    K(s) = 2*pi * integral_0^{2pi} (1 + s cos u)^d  s cos u  du.

The expected zero count on (0, rho) is (1/pi) * integral_0^rho sqrt(D(tau))
dtau with D(tau) = L'(s) + s L''(s) at s = tau^2, L = log K.  Everything here
is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NumericalFailureError

# Relative size of the leading correction below which the small-s series for
# the density is at least as accurate as the quadrature path.
_SERIES_SWITCH = 3e-3


def _quad_n_floor(d: int) -> int:
    return 4 * (d + 2)


@dataclass(frozen=True)
class KernelEval:
    """Kernel value and its first two s-derivatives from one quadrature grid.

    The true values are ``K * exp(log_scale)`` and likewise for the
    derivatives; ``log_scale`` is zero whenever the unscaled value fits
    comfortably in float64 and is reported separately at large degree, where
    (1 + s)^d overflows.
    """

    s: float
    d: int
    K: float
    dK_ds: float
    d2K_ds2: float
    log_scale: float = 0.0

    @property
    def value(self) -> float:
        return self.K * math.exp(self.log_scale)

    @property
    def d1_value(self) -> float:
        return self.dK_ds * math.exp(self.log_scale)

    @property
    def d2_value(self) -> float:
        return self.d2K_ds2 * math.exp(self.log_scale)


def _scaled_circle_integrals(s: float, d: int, quad_n: int):
    """(I1, I2, I3, M) where Ik = exp(-M) * integral (1+s cos u)^(d-k+1)
    cos^k u du and M = d*log(1+s).

    All three integrands are trigonometric polynomials of degree <= d+1, so
    the uniform trapezoid rule is exact once quad_n > d+1.  For s > 1 the
    base 1 + s cos u changes sign and integer powers are taken as written.
    """
    u = np.linspace(0.0, 2.0 * math.pi, quad_n, endpoint=False)
    c = np.cos(u)
    base = 1.0 + s * c
    M = d * math.log1p(s)
    with np.errstate(divide="ignore"):
        logabs = np.log(np.abs(base))
    logabs[~np.isfinite(logabs)] = -np.inf
    sign = np.where(base >= 0.0, 1.0, -1.0)

    def scaled_power(e: int) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            w = np.exp(e * logabs - M)
        w[~np.isfinite(w)] = 0.0
        if e % 2 == 1:
            w = w * sign
        return w

    two_pi = 2.0 * math.pi
    i1 = float(np.mean(scaled_power(d) * c) * two_pi)
    i2 = float(np.mean(scaled_power(d - 1) * c * c) * two_pi)
    i3 = float(np.mean(scaled_power(d - 2) * c ** 3) * two_pi)
    return i1, i2, i3, M


def kernel_K(s: float, d: int, quad_n: int | None = None) -> KernelEval:
    """Kernel and first two s-derivatives by differentiation under the
    integral sign, all on the same quadrature grid."""
    if s < 0:
        raise ValueError("s must be non-negative")
    if d < 1:
        raise ValueError("degree must be positive")
    if quad_n is None:
        quad_n = _quad_n_floor(d)
    elif quad_n < _quad_n_floor(d):
        raise ValueError(f"quad_n must be at least 4*(d+2) = {_quad_n_floor(d)}")
    if s == 0.0:
        return KernelEval(s=0.0, d=d, K=0.0, dK_ds=0.0,
                          d2K_ds2=float(4.0 * math.pi ** 2 * d), log_scale=0.0)
    i1, i2, i3, M = _scaled_circle_integrals(s, d, quad_n)
    two_pi = 2.0 * math.pi
    k = two_pi * s * i1
    dk = two_pi * (i1 + s * d * i2)
    d2k = two_pi * (2.0 * d * i2 + s * d * (d - 1) * i3)
    if M < 600.0:
        scale = math.exp(M)
        return KernelEval(s=s, d=d, K=k * scale, dK_ds=dk * scale,
                          d2K_ds2=d2k * scale, log_scale=0.0)
    return KernelEval(s=s, d=d, K=k, dK_ds=dk, d2K_ds2=d2k, log_scale=M)


def kernel_laplace_ratio(s: float, d: int, quad_n: int | None = None) -> float:
    """K(s) divided by its large-degree closed form
    2*pi*(1+s)^d*sqrt(2*pi*s*(s+1)/d); the exponential factors cancel so the
    ratio is computable at any degree."""
    if quad_n is None:
        quad_n = _quad_n_floor(d)
    i1, _, _, _ = _scaled_circle_integrals(s, d, quad_n)
    mantissa = 2.0 * math.pi * s * i1
    return mantissa / (2.0 * math.pi * math.sqrt(2.0 * math.pi * s * (s + 1.0) / d))


def _series_alphas(d: int) -> tuple[float, float, float]:
    """Leading correction coefficients of K(s) = 2*pi^2*d*s^2*(1 + a1 s^2 +
    a2 s^4 + a3 s^6 + ...), from the circle moments of cos^(2n)."""
    a1 = (d - 1) * (d - 2) / 8.0
    binom5 = math.exp(math.lgamma(d + 1) - math.lgamma(6) - math.lgamma(d - 4)) \
        if d >= 5 else 0.0
    binom7 = math.exp(math.lgamma(d + 1) - math.lgamma(8) - math.lgamma(d - 6)) \
        if d >= 7 else 0.0
    a2 = 5.0 * binom5 / (8.0 * d)
    a3 = 35.0 * binom7 / (64.0 * d)
    return a1, a2, a3


def log_kernel_density(tau: float, d: int, quad_n: int | None = None) -> float:
    """D(tau) = L'(s) + s L''(s) at s = tau^2, with L = log K.

    Below the crossover where the quartic correction of the small-s series is
    negligible, the series branch avoids the 0/0 behaviour of log-derivatives
    at the s^2 zero of K; above it, the quadrature branch uses the exact
    ratio identity D = d*(R2 + s*(d-1)*R3 - s*d*R2^2) with Rk = Ik/I1.
    """
    if d < 1:
        raise ValueError("degree must be positive")
    s = tau * tau
    a1, a2, a3 = _series_alphas(d)
    if a1 > 0 and a1 * s * s < _SERIES_SWITCH:
        g = a1 * s ** 2 + a2 * s ** 4 + a3 * s ** 6
        g1 = 2 * a1 * s + 4 * a2 * s ** 3 + 6 * a3 * s ** 5
        g2 = 2 * a1 + 12 * a2 * s ** 2 + 30 * a3 * s ** 4
        h1 = g1 / (1.0 + g)
        h2 = g2 / (1.0 + g) - h1 * h1
        return h1 + s * h2
    if s == 0.0:
        return 0.0
    if quad_n is None:
        quad_n = _quad_n_floor(d)
    i1, i2, i3, _ = _scaled_circle_integrals(s, d, quad_n)
    r2 = i2 / i1
    r3 = i3 / i1
    return d * (r2 + s * (d - 1) * r3 - s * d * r2 * r2)


def expected_zeros(d: int, rho: float, quad_n: int | None = None) -> float:
    """Expected number of zeros of the displacement integral on (0, rho) for
    degree-d Kostlan perturbations: (1/pi) * integral of sqrt(D(tau)).

    Degrees 1 and 2 carry no odd content beyond the leading s^2 factor, so
    the density vanishes identically and the count is zero.
    """
    if d < 1:
        raise ValueError("degree must be positive")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if d <= 2:
        return 0.0

    def integrand(tau: float) -> float:
        dens = log_kernel_density(tau, d, quad_n)
        if dens < 0.0:
            if dens < -1e-9 * d:
                raise NumericalFailureError(
                    f"density {dens:.3g} negative beyond round-off at "
                    f"tau={tau:.6g}, d={d}; increase quad_n")
            dens = 0.0
        return math.sqrt(dens)

    a1, _, _ = _series_alphas(d)
    tau_switch = (_SERIES_SWITCH / a1) ** 0.25 if a1 > 0 else rho
    breaks = [tau_switch] if 0.0 < tau_switch < rho else None
    val, _ = integrate.quad(integrand, 0.0, rho, points=breaks,
                            epsabs=1e-10, epsrel=1e-10, limit=400)
    return val / math.pi


def asymptotic_expected_zeros(d: int, rho: float) -> float:
    """Large-degree closed form sqrt(d) * arctan(rho) / pi."""
    return math.sqrt(d) * math.atan(rho) / math.pi


def kernel_double_quadrature(r: float, t: float, d: int, n: int = 256) -> float:
    """Kernel from its defining double circle integral, for cross-checking
    the reduced form at small degree."""
    th1 = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    th2 = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    dth = th1[:, None] - th2[None, :]
    integrand = (1.0 + r * t * np.cos(dth)) ** d * (r * t * np.cos(dth))
    return float(integrand.mean() * (2.0 * math.pi) ** 2)
