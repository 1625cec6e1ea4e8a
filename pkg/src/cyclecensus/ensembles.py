"""Seeded samplers for the random vector-field models.

Every sampler is a pure function of ``(parameters, SeededRng)``.  Streams are
derived from a counter-based seed sequence so trials are reproducible and
independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import lgamma
from typing import Callable

import numpy as np

from .errors import TruncationError
from .polynomials import BivariatePolynomial, triangle_size

_ENSEMBLE_KINDS = ("kostlan", "uniform_cube", "power_law", "bargmann_fock")

# Above this degree the largest Kostlan coefficient weight overflows float64.
_KOSTLAN_DEGREE_LIMIT = 1280


@dataclass(frozen=True)
class SeededRng:
    """Deterministic RNG handle: (master_seed, stream_index) plus an optional
    lineage of sub-stream indices for components drawn within one trial.

    Identical handles yield bit-identical draws; distinct stream indices give
    statistically independent streams.
    """

    master_seed: int
    stream_index: int = 0
    lineage: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.stream_index, *self.lineage),
        )
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "SeededRng":
        """Independent sub-stream, e.g. one per field component."""
        return replace(self, lineage=self.lineage + (index,))


@dataclass(frozen=True)
class EnsembleSpec:
    """Which random model to sample, and its parameters.

    ``degree`` is the polynomial degree for the polynomial kinds and the
    truncation order for ``bargmann_fock``.  ``gamma`` must be present exactly
    when ``kind == "power_law"``.
    """

    kind: str
    degree: int | None = None
    gamma: float | None = None
    coefficient_distribution: str = "gaussian"

    def __post_init__(self):
        if self.kind not in _ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if (self.gamma is not None) != (self.kind == "power_law"):
            raise ValueError("gamma must be given iff kind == 'power_law'")
        if self.coefficient_distribution not in ("gaussian", "uniform_pm1"):
            raise ValueError(
                f"unknown coefficient distribution {self.coefficient_distribution!r}")
        if self.degree is not None and self.degree < 0:
            raise ValueError("degree must be non-negative")


def _degree_blocks_flat(d: int) -> np.ndarray:
    """Total degree of each flat triangular index."""
    return np.repeat(np.arange(d + 1), np.arange(1, d + 2))


def sample_kostlan(d: int, rng: SeededRng) -> BivariatePolynomial:
    """Gaussian polynomial with coefficient of x^j y^k distributed
    N(0, d!/((d-j-k)! j! k!))."""
    if d < 0:
        raise ValueError("degree must be non-negative")
    if d > _KOSTLAN_DEGREE_LIMIT:
        raise ValueError(
            f"Kostlan coefficient weights overflow float64 beyond degree "
            f"{_KOSTLAN_DEGREE_LIMIT}")
    gen = rng.generator()
    z = gen.standard_normal(triangle_size(d))
    # log-space multinomial weights, one per flat index
    m = _degree_blocks_flat(d)
    j = np.concatenate([np.arange(mm + 1) for mm in range(d + 1)])
    k = m - j
    lg = np.vectorize(lgamma)
    logw = 0.5 * (lgamma(d + 1) - lg(d - m + 1.0) - lg(j + 1.0) - lg(k + 1.0))
    return BivariatePolynomial(d, z * np.exp(logw))


def sample_uniform_cube(d: int, rng: SeededRng) -> BivariatePolynomial:
    """Coefficients of x^j y^k for 1 <= j+k <= d i.i.d. Uniform[-1, 1]; no
    constant term.

    Draw order is total degree ascending then j ascending, so for a fixed
    seed the degree-d1 sample is coefficientwise the truncation of the
    degree-d2 sample whenever d1 < d2.
    """
    if d < 1:
        raise ValueError("uniform-cube sampling requires degree >= 1")
    gen = rng.generator()
    arr = np.zeros(triangle_size(d))
    arr[1:] = gen.uniform(-1.0, 1.0, size=arr.size - 1)
    return BivariatePolynomial(d, arr)


def sample_power_law(d: int, gamma: float, dist: str,
                     rng: SeededRng) -> BivariatePolynomial:
    """Independent mean-zero, unit-variance coefficients scaled by m^(gamma/2)
    on each total-degree-m monomial; no constant term."""
    if d < 1:
        raise ValueError("power-law sampling requires degree >= 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    gen = rng.generator()
    n = triangle_size(d)
    if dist == "gaussian":
        xi = gen.standard_normal(n - 1)
    elif dist == "uniform_pm1":
        xi = gen.integers(0, 2, size=n - 1).astype(float) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown coefficient distribution {dist!r}")
    m = _degree_blocks_flat(d)[1:].astype(float)
    arr = np.zeros(n)
    arr[1:] = m ** (gamma / 2.0) * xi
    return BivariatePolynomial(d, arr)


class BargmannFockComponent:
    """One truncated sample of the translation-invariant Gaussian analytic
    field: exp(-|v|^2/2) * sum_{j,k<=M} a_jk x^j y^k / sqrt(j! k!).

    Evaluation is only certified inside the radius where the deterministic
    series tail (see :meth:`tail_bound`) stays below ``tail_tol``; beyond it
    ``eval`` raises :class:`TruncationError`.
    """

    def __init__(self, scaled_coeffs: np.ndarray, truncation: int,
                 tail_tol: float = 1e-8):
        self.coeffs = np.asarray(scaled_coeffs, float)
        self.truncation = truncation
        self.tail_tol = tail_tol
        self.safe_radius = self._solve_safe_radius(tail_tol)
        jj = np.arange(truncation + 1)
        self._dx = self.coeffs[1:, :] * jj[1:, None]   # d/dx of the raw series
        self._dy = self.coeffs[:, 1:] * jj[None, 1:]

    # -- truncation control -------------------------------------------------

    @staticmethod
    def _series_sum(r: float, start: int = 0, stop: int | None = None) -> float:
        """sum_{j=start}^{stop} r^j / sqrt(j!), summed until terms vanish."""
        if stop is None:
            stop = max(int(4 * r * r) + 200, start + 200)
        j = np.arange(start, stop + 1, dtype=float)
        with np.errstate(divide="ignore"):
            logt = np.where(j == 0, 0.0, j * np.log(max(r, 1e-300)))
        logt = logt - 0.5 * np.array([lgamma(v + 1.0) for v in j])
        return float(np.exp(logt).sum())

    def tail_bound(self, r: float) -> float:
        """Deterministic bound on the coefficient-free series tail over the
        disk of radius r: exp(-r^2/2) * sum_{j>M or k>M} r^(j+k)/sqrt(j!k!)."""
        full = self._series_sum(r)
        head = self._series_sum(r, 0, self.truncation)
        return float(np.exp(-0.5 * r * r) * max(full * full - head * head, 0.0))

    def _solve_safe_radius(self, tol: float) -> float:
        lo, hi = 0.0, 1.0
        while self.tail_bound(hi) < tol and hi < 64.0:
            lo, hi = hi, hi * 2.0
        if hi >= 64.0:
            return hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.tail_bound(mid) < tol:
                lo = mid
            else:
                hi = mid
        return lo

    # -- evaluation -----------------------------------------------------------

    def _check_radius(self, x: np.ndarray, y: np.ndarray):
        r2 = float(np.max(x * x + y * y))
        if r2 > self.safe_radius ** 2:
            raise TruncationError(
                f"evaluation radius {np.sqrt(r2):.3f} exceeds certified "
                f"radius {self.safe_radius:.3f} for truncation "
                f"{self.truncation} at tolerance {self.tail_tol:g}")

    def _powers(self, v: np.ndarray) -> np.ndarray:
        M = self.truncation
        p = np.empty(v.shape + (M + 1,))
        p[..., 0] = 1.0
        for i in range(1, M + 1):
            p[..., i] = p[..., i - 1] * v
        return p

    def eval(self, x, y):
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        x, y = np.broadcast_arrays(x, y)
        self._check_radius(x, y)
        xp, yp = self._powers(x), self._powers(y)
        raw = np.einsum("...j,jk,...k->...", xp, self.coeffs, yp)
        out = np.exp(-0.5 * (x * x + y * y)) * raw
        return out if out.shape else float(out)

    __call__ = eval

    def grad(self, x, y):
        """(d/dx, d/dy) of the normalized field, from the exact series
        derivative plus the Gaussian-prefactor product rule."""
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        x, y = np.broadcast_arrays(x, y)
        self._check_radius(x, y)
        xp, yp = self._powers(x), self._powers(y)
        raw = np.einsum("...j,jk,...k->...", xp, self.coeffs, yp)
        raw_dx = np.einsum("...j,jk,...k->...", xp[..., :-1], self._dx, yp)
        raw_dy = np.einsum("...j,jk,...k->...", xp, self._dy, yp[..., :-1])
        pref = np.exp(-0.5 * (x * x + y * y))
        return pref * (raw_dx - x * raw), pref * (raw_dy - y * raw)


def sample_bargmann_fock(M: int, rng: SeededRng,
                         tail_tol: float = 1e-8) -> BargmannFockComponent:
    """Sample one component of the truncated analytic field."""
    if M < 0:
        raise ValueError("truncation order must be non-negative")
    gen = rng.generator()
    raw = gen.standard_normal((M + 1, M + 1))
    logf = np.array([lgamma(j + 1.0) for j in range(M + 1)])
    scale = np.exp(-0.5 * (logf[:, None] + logf[None, :]))
    return BargmannFockComponent(raw * scale, M, tail_tol)


class BargmannFockField:
    """A pair of independent analytic-field components as a planar field."""

    def __init__(self, f: BargmannFockComponent, g: BargmannFockComponent):
        self.f = f
        self.g = g

    def eval(self, x, y):
        return self.f.eval(x, y), self.g.eval(x, y)

    __call__ = eval

    def jacobian(self, x, y) -> np.ndarray:
        fx, fy = self.f.grad(x, y)
        gx, gy = self.g.grad(x, y)
        out = np.empty(np.shape(fx) + (2, 2))
        out[..., 0, 0] = fx
        out[..., 0, 1] = fy
        out[..., 1, 0] = gx
        out[..., 1, 1] = gy
        return out


def sample_bargmann_fock_field(M: int, rng: SeededRng,
                               tail_tol: float = 1e-8) -> BargmannFockField:
    return BargmannFockField(
        sample_bargmann_fock(M, rng.child(0), tail_tol),
        sample_bargmann_fock(M, rng.child(1), tail_tol),
    )


def sample_perturbation_pair(spec: EnsembleSpec, d: int, rng: SeededRng):
    """Sample the two polynomial components (p, q) of the chosen ensemble."""
    samplers: dict[str, Callable[[int, SeededRng], BivariatePolynomial]] = {
        "kostlan": sample_kostlan,
        "uniform_cube": sample_uniform_cube,
    }
    if spec.kind in samplers:
        f = samplers[spec.kind]
        return f(d, rng.child(0)), f(d, rng.child(1))
    if spec.kind == "power_law":
        return (
            sample_power_law(d, spec.gamma, spec.coefficient_distribution, rng.child(0)),
            sample_power_law(d, spec.gamma, spec.coefficient_distribution, rng.child(1)),
        )
    raise ValueError(f"{spec.kind!r} does not sample polynomial pairs")
