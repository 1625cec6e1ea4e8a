"""Return maps, tangency counts, equilibria, and transverse-annulus
machinery for planar fields.

The perturbed-center return map is integrated in polar form.  With the
clockwise angle phi (the flow of (y, -x) runs clockwise), the orbit radius
satisfies

    dr/dphi = eps * (x p + y q) / (r * (1 + eps * (y p - x q) / r^2))

at (x, y) = (r cos phi, -r sin phi).  The denominator is monitored against a
floor; a violation aborts the polar route so the caller can fall back to
Cartesian integration or reject the trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import qmc

from .errors import (DegenerateFamilyError, DegenerateTangencyError,
                     TrialInvalidError)
from .polynomials import BivariatePolynomial, PlanarField, fischer_norm

DENOMINATOR_FLOOR = 0.5
RETURN_SCAN_R_MIN = 1e-3


class _DenominatorVanished(Exception):
    pass


class _RadiusCollapsed(Exception):
    pass


@dataclass(frozen=True)
class ReturnMapResult:
    r0: float
    r1: float
    status: str  # ok | denominator_vanished | step_failure

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class EllipticalAnnulus:
    """Region between two concentric, coaligned ellipses.

    ``angle`` orients the major axes; semi-axes are (major, minor) pairs.
    ``asymmetry_margin`` records how far the fitted concentric boundaries may
    sit from the exact mapped boundaries (used to pad certification).
    """

    center: tuple[float, float]
    angle: float
    inner_semi_axes: tuple[float, float]
    outer_semi_axes: tuple[float, float]
    asymmetry_margin: float = 0.0

    def __post_init__(self):
        ai, bi = self.inner_semi_axes
        ao, bo = self.outer_semi_axes
        if min(ai, bi, ao, bo) <= 0:
            raise ValueError("semi-axes must be positive")
        if not (ao > ai and bo > bi):
            raise ValueError("outer semi-axes must strictly dominate inner ones")

    # -- geometry helpers ---------------------------------------------------

    def _frame(self):
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def boundary_points(self, which: str, n: int) -> np.ndarray:
        """n points on the chosen boundary, shape (n, 2)."""
        a, b = self.inner_semi_axes if which == "inner" else self.outer_semi_axes
        phi = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        local = np.stack([a * np.cos(phi), b * np.sin(phi)], axis=1)
        return local @ self._frame().T + np.asarray(self.center)

    def inward_normals(self, which: str, n: int) -> np.ndarray:
        """Unit normals at :meth:`boundary_points`, pointing into the annulus."""
        a, b = self.inner_semi_axes if which == "inner" else self.outer_semi_axes
        phi = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        local = np.stack([np.cos(phi) / a, np.sin(phi) / b], axis=1)
        local /= np.linalg.norm(local, axis=1, keepdims=True)
        if which == "outer":
            local = -local
        return local @ self._frame().T

    def contains(self, points: np.ndarray, inflate: float = 0.0) -> np.ndarray:
        """Membership test, with the band optionally widened by ``inflate``
        on both sides."""
        pts = np.atleast_2d(points) - np.asarray(self.center)
        local = pts @ self._frame()
        ai, bi = self.inner_semi_axes
        ao, bo = self.outer_semi_axes
        ai, bi = max(ai - inflate, 1e-300), max(bi - inflate, 1e-300)
        ao, bo = ao + inflate, bo + inflate
        inner = (local[:, 0] / ai) ** 2 + (local[:, 1] / bi) ** 2
        outer = (local[:, 0] / ao) ** 2 + (local[:, 1] / bo) ** 2
        return (inner >= 1.0) & (outer <= 1.0)

    def max_curvature(self, which: str) -> float:
        a, b = self.inner_semi_axes if which == "inner" else self.outer_semi_axes
        return max(a / (b * b), b / (a * a))


# -- polar return map ---------------------------------------------------------


def _require_center_focus(field: PlanarField):
    if field.form != "center_focus":
        raise ValueError("operation requires a field in center-focus form")


def _polar_rhs(field: PlanarField):
    eps = field.epsilon
    p, q = field.perturbation

    def rhs(phi: float, r: np.ndarray) -> np.ndarray:
        if np.any(r <= 1e-12):
            raise _RadiusCollapsed
        x = r * math.cos(phi)
        y = -r * math.sin(phi)
        pv = p(x, y)
        qv = q(x, y)
        den = 1.0 + eps * (y * pv - x * qv) / (r * r)
        if np.any(den < DENOMINATOR_FLOOR):
            raise _DenominatorVanished
        return eps * (x * pv + y * qv) / (r * den)

    return rhs


def _integrate_radii(field: PlanarField, radii: np.ndarray,
                     tol: float) -> np.ndarray:
    """One revolution of the polar radius equation for a batch of initial
    radii; raises the internal sentinels on floor/step failures."""
    rhs = _polar_rhs(field)
    sol = solve_ivp(rhs, (0.0, 2.0 * math.pi), np.asarray(radii, float),
                    method="RK45", rtol=tol, atol=tol * 1e-3)
    if not sol.success:
        raise _RadiusCollapsed
    return sol.y[:, -1]


def poincare_return(field: PlanarField, r0: float,
                    tol: float = 1e-10) -> ReturnMapResult:
    """Radius after one revolution of the orbit starting on the positive
    x-axis at radius r0.

    For eps == 0 the radial equation is identically zero and r0 is returned
    exactly.  Denominator-floor violations and integrator failures are
    reported through the status field rather than raised.
    """
    _require_center_focus(field)
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if field.epsilon == 0.0:
        return ReturnMapResult(r0, r0, "ok")
    try:
        r1 = float(_integrate_radii(field, np.array([r0]), tol)[0])
    except _DenominatorVanished:
        return ReturnMapResult(r0, math.nan, "denominator_vanished")
    except _RadiusCollapsed:
        return ReturnMapResult(r0, math.nan, "step_failure")
    if not (r1 > 0 and math.isfinite(r1)):
        return ReturnMapResult(r0, math.nan, "step_failure")
    return ReturnMapResult(r0, r1, "ok")


def poincare_return_cartesian(field: PlanarField, r0: float,
                              tol: float = 1e-10) -> ReturnMapResult:
    """Return map by direct (x, y) integration with section-crossing
    detection; the fallback route when the polar denominator degenerates."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")

    def rhs(t, state):
        x, y = state
        px, qx = field.eval(x, y)
        return [float(px), float(qx)]

    def section(t, state):
        return state[1]

    # the clockwise orbit re-crosses y = 0 downward at x > 0 once per loop;
    # advance a quarter turn first so the event does not fire at the start
    section.terminal = True
    section.direction = -1.0
    lead = solve_ivp(rhs, (0.0, 0.5 * math.pi), [r0, 0.0], method="RK45",
                     rtol=tol, atol=tol * 1e-3, max_step=0.2)
    if not lead.success:
        return ReturnMapResult(r0, math.nan, "step_failure")
    sol = solve_ivp(rhs, (0.5 * math.pi, 8.0 * math.pi), lead.y[:, -1],
                    method="RK45", rtol=tol, atol=tol * 1e-3, events=section,
                    max_step=0.2)
    if sol.t_events[0].size == 0 or not sol.success:
        return ReturnMapResult(r0, math.nan, "step_failure")
    x_cross = float(sol.y_events[0][0][0])
    if x_cross <= 0:
        return ReturnMapResult(r0, math.nan, "step_failure")
    return ReturnMapResult(r0, x_cross, "ok")


def count_return_fixed_points(field: PlanarField, rho: float,
                              grid_n: int | None = None,
                              tol: float = 1e-6,
                              integrator_tol: float = 1e-10,
                              r_min: float = RETURN_SCAN_R_MIN):
    """Count fixed points of the return map on (r_min, rho).

    The displacement D(r) is scanned on a grid dense enough to resolve the
    zero spacing of the displacement integral, sign changes are bracketed,
    and each bracket is bisected to radius tolerance ``tol``.  Returns
    (count, refined radii).
    """
    _require_center_focus(field)
    if field.epsilon == 0.0:
        raise DegenerateFamilyError(
            "eps == 0: every orbit is periodic, fixed points are not isolated")
    if rho <= r_min:
        raise ValueError("rho must exceed the inner scan floor")
    if grid_n is None:
        d = max(p.degree for p in field.perturbation)
        grid_n = max(200, int(math.ceil(20.0 * math.sqrt(d))))
    radii = np.linspace(r_min, rho, grid_n, endpoint=False)
    try:
        disp = _integrate_radii(field, radii, integrator_tol) - radii
    except (_DenominatorVanished, _RadiusCollapsed) as exc:
        raise TrialInvalidError(f"return-map scan failed: {type(exc).__name__}")
    signs = np.sign(disp)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    lo = radii[flips].copy()
    hi = radii[flips + 1].copy()
    lo_sign = signs[flips].copy()
    while lo.size and np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        try:
            mid_disp = _integrate_radii(field, mid, integrator_tol) - mid
        except (_DenominatorVanished, _RadiusCollapsed) as exc:
            raise TrialInvalidError(f"bisection failed: {type(exc).__name__}")
        mid_sign = np.sign(mid_disp)
        same = mid_sign == lo_sign
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    roots = 0.5 * (lo + hi)
    return int(roots.size), sorted(float(v) for v in roots)


# -- tangency counting ----------------------------------------------------------


def count_tangencies(field, r: float, grid_n: int = 512) -> int:
    """Number of points on the circle of radius r where the field is tangent
    to it, counted as circular sign changes of <F, position>.

    One midpoint refinement pass catches zero pairs at half-grid scale.  The
    count is even for every nondegenerate trial because the sign pattern
    closes up around the circle.
    """
    if grid_n < 4:
        raise ValueError("grid_n must be at least 4")
    if r <= 0:
        raise ValueError("r must be positive")
    phi = np.linspace(0.0, 2.0 * math.pi, 2 * grid_n, endpoint=False)
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    px, qx = field.eval(x, y)
    g = x * px + y * qx
    field_scale = max(float(np.max(np.abs(px))), float(np.max(np.abs(qx))), 1e-300)
    if float(np.max(np.abs(g))) < 1e-11 * r * field_scale:
        raise DegenerateTangencyError(
            "tangency functional is below the resolution floor everywhere")
    signs = np.sign(g)
    nz = signs[signs != 0]
    if nz.size == 0:
        raise DegenerateTangencyError("no resolvable signs on the circle")
    flips = int(np.sum(nz[:-1] != nz[1:])) + int(nz[-1] != nz[0])
    return flips


# -- equilibria -------------------------------------------------------------------


def _halton_disk(n: int, radius: float) -> np.ndarray:
    sampler = qmc.Halton(d=2, scramble=False)
    u = sampler.random(n)
    rr = radius * np.sqrt(u[:, 0])
    th = 2.0 * math.pi * u[:, 1]
    return np.stack([rr * np.cos(th), rr * np.sin(th)], axis=1)


def _newton_batch(field, starts: np.ndarray, tol: float,
                  max_iter: int = 60,
                  escape: tuple[np.ndarray, float] | None = None,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized damped Newton on F = 0; returns (points, converged mask).

    With ``escape=(center, radius)``, iterates that leave the disk are
    dropped: their limits are not of interest to the caller.
    """
    pts = np.array(starts, float)
    converged = np.zeros(len(pts), dtype=bool)
    escaped = np.zeros(len(pts), dtype=bool)
    fx, fy = field.eval(pts[:, 0], pts[:, 1])
    fnorm = np.hypot(fx, fy)
    field_scale = max(float(np.median(fnorm)), 1e-300)
    for _ in range(max_iter):
        if escape is not None:
            center, radius = escape
            escaped |= np.hypot(*(pts - center).T) > radius
        active = ~converged & ~escaped
        if not np.any(active):
            break
        jac = field.jacobian(pts[active, 0], pts[active, 1])
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        bad = ~np.isfinite(det) | (np.abs(det) < 1e-300)
        det = np.where(bad, 1.0, det)
        fa = np.stack([np.atleast_1d(fx)[active], np.atleast_1d(fy)[active]], axis=1)
        step = np.empty_like(fa)
        step[:, 0] = (jac[:, 1, 1] * fa[:, 0] - jac[:, 0, 1] * fa[:, 1]) / det
        step[:, 1] = (-jac[:, 1, 0] * fa[:, 0] + jac[:, 0, 0] * fa[:, 1]) / det
        step[bad] = 0.0
        lam = np.ones(len(step))
        base = pts[active]
        ref = fnorm[active]
        for _ in range(6):
            cand = base - lam[:, None] * step
            cx, cy = field.eval(cand[:, 0], cand[:, 1])
            cn = np.hypot(cx, cy)
            worse = cn > ref
            if not np.any(worse):
                break
            lam = np.where(worse, lam * 0.5, lam)
        cand = base - lam[:, None] * step
        pts[active] = cand
        fx, fy = field.eval(pts[:, 0], pts[:, 1])
        fnorm = np.hypot(np.atleast_1d(fx), np.atleast_1d(fy))
        stepnorm_active = np.linalg.norm(lam[:, None] * step, axis=1)
        stepnorm_active[bad] = np.inf  # a stuck point must not pass as converged
        stepnorm = np.full(len(pts), np.inf)
        stepnorm[active] = stepnorm_active
        converged |= active & (stepnorm < 0.05 * tol)
    # reject converged points whose residual is not actually near zero
    fx, fy = field.eval(pts[:, 0], pts[:, 1])
    res = np.hypot(np.atleast_1d(fx), np.atleast_1d(fy))
    converged &= res <= 1e-7 * field_scale
    return pts, converged


def find_equilibria(field, R: float, multistart_n: int = 64,
                    newton_tol: float = 1e-10) -> list[tuple[float, float]]:
    """Distinct zeros of the field found inside the disk of radius R by
    damped Newton from quasi-random starts.

    Best-effort: completeness is probabilistic in ``multistart_n``.
    """
    if multistart_n < 1:
        raise ValueError("multistart_n must be at least 1")
    starts = _halton_disk(multistart_n, R)
    pts, ok = _newton_batch(field, starts, newton_tol)
    roots: list[np.ndarray] = []
    for pt in pts[ok]:
        if math.hypot(pt[0], pt[1]) > R:
            continue
        if any(np.hypot(*(pt - r)) <= 10.0 * newton_tol for r in roots):
            continue
        roots.append(pt)
    return [(float(p[0]), float(p[1])) for p in roots]


# -- barrier construction -----------------------------------------------------------


def barrier_mixing_constant(d: int) -> float:
    """Normalizing constant weighing the radial part of the barrier against
    its rotational part; converges to 3 + sqrt(6) + sqrt(2) as d grows."""
    if d < 3:
        raise ValueError("the barrier construction requires degree >= 3")
    w = 1.0 / ((1.0 - 1.0 / d) * (1.0 - 2.0 / d))
    return 3.0 + math.sqrt(2.0 * w) + math.sqrt(6.0 * w)


def build_barrier_field(d: int, r: float, xi: float, eta: float) -> PlanarField:
    """Explicit trapping field for the origin-centered annulus of radii
    (d^-1/2, 2 d^-1/2), distorted by a = sqrt(1+r^2) to anticipate the
    projective displacement to radius r.

    Each component is normalized to unit Fischer norm at homogenization
    degree d, so it can stand as an element of an orthonormal basis.
    """
    if d < 3:
        raise ValueError("the barrier construction requires degree >= 3")
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    a = math.sqrt(1.0 + r * r)
    vd = barrier_mixing_constant(d)
    sd = math.sqrt(float(d))
    pre = 1.0 / (1.0 + a)
    radial = float(d)  # coefficient of the cubic radial cutoff 3 - d*(x^2+y^2)
    b1 = BivariatePolynomial.from_coeff_dict({
        (0, 1): -pre * sd * a,
        (1, 0): pre * sd / vd * 3.0,
        (3, 0): -pre * sd / vd * radial,
        (1, 2): -pre * sd / vd * radial,
    }, degree=d)
    b2 = BivariatePolynomial.from_coeff_dict({
        (1, 0): pre * sd,
        (0, 1): pre * sd / vd * a * 3.0,
        (0, 3): -pre * sd / vd * a * radial,
        (2, 1): -pre * sd / vd * a * radial,
    }, degree=d)
    b1 = b1.scaled(1.0 / fischer_norm(b1.homogenize(), d))
    b2 = b2.scaled(1.0 / fischer_norm(b2.homogenize(), d))
    return PlanarField(b1.scaled(xi), b2.scaled(eta))


# -- annulus geometry ----------------------------------------------------------------


def map_annulus(d: int, r: float, theta: float) -> EllipticalAnnulus:
    """Elliptical annulus obtained by carrying the circular annulus
    d^-1/2 < |v| < 2 d^-1/2 to the point (r cos theta, r sin theta) by the
    projective rotation.

    Each boundary becomes an ellipse aligned with the displacement
    direction: minor semi-axes keep the original radii and the major
    semi-axes are stretched by a = sqrt(1 + r^2).  The two image centers
    differ by O(1/d); the fitted concentric representation uses their
    midpoint and records the offset in ``asymmetry_margin``.
    """
    if d < 1:
        raise ValueError("degree must be positive")
    rho_in = 1.0 / math.sqrt(d)
    rho_out = 2.0 / math.sqrt(d)
    if abs(r) * rho_out >= 1.0:
        raise ValueError("annulus image is unbounded for r * (2/sqrt(d)) >= 1")
    a = math.sqrt(1.0 + r * r)

    def boundary_center(rho: float) -> float:
        return r * (1.0 + rho * rho) / (1.0 - (r * rho) ** 2)

    c_in = boundary_center(rho_in)
    c_out = boundary_center(rho_out)
    c_mid = 0.5 * (c_in + c_out)
    return EllipticalAnnulus(
        center=(c_mid * math.cos(theta), c_mid * math.sin(theta)),
        angle=theta,
        inner_semi_axes=(a * rho_in, rho_in),
        outer_semi_axes=(a * rho_out, rho_out),
        asymmetry_margin=0.5 * abs(c_out - c_in),
    )


# -- transversality certification -------------------------------------------------------


def _jacobian_norms(field, points: np.ndarray) -> np.ndarray:
    jac = field.jacobian(points[:, 0], points[:, 1])
    return np.sqrt(np.sum(jac * jac, axis=(-2, -1)))


def certify_transverse_annulus(field, annulus: EllipticalAnnulus,
                               boundary_n: int = 256,
                               interior_n: int = 64) -> bool:
    """Numerical certificate that the annulus traps the flow.

    True requires: a single strict sign of <F, inward normal> on each
    boundary (same orientation on both, so the field crosses inward on both
    or outward on both), with every sampled value exceeding a local
    Lipschitz padding term (Lipschitz constant taken as 3x the max Jacobian
    norm sampled on a 2x refinement grid around each gap, plus the
    normal-rotation term); and no interior point where |F| drops below its
    local padded floor nor any Newton root inside the annulus (membership
    widened by ``asymmetry_margin``).  Padding is applied per sample gap
    because the field scale can vary by orders of magnitude along one
    boundary.  True is a certificate at this resolution, not a proof; False
    only means certification failed.
    """
    if boundary_n < 64 or interior_n < 64:
        raise ValueError("sample counts must be at least 64")

    orientations = []
    for which in ("inner", "outer"):
        pts = annulus.boundary_points(which, boundary_n)
        normals = annulus.inward_normals(which, boundary_n)
        fx, fy = field.eval(pts[:, 0], pts[:, 1])
        g = fx * normals[:, 0] + fy * normals[:, 1]
        if np.all(g > 0):
            orientations.append(1)
        elif np.all(g < 0):
            orientations.append(-1)
        else:
            return False
        # refinement grid interleaves the sample points with gap midpoints
        fine = annulus.boundary_points(which, 2 * boundary_n)
        jn = _jacobian_norms(field, fine)
        fmag = np.hypot(fx, fy)
        kappa = annulus.max_curvature(which)
        gaps = np.linalg.norm(np.diff(pts, axis=0, append=pts[:1]), axis=1)
        # per gap i: endpoints 2i, 2i+2 (mod) and midpoint 2i+1 of the fine grid
        seg_j = np.maximum(jn[0::2], np.maximum(jn[1::2], np.roll(jn[0::2], -1)))
        seg_f = np.maximum(fmag, np.roll(fmag, -1))
        lip_seg = 3.0 * seg_j + seg_f * kappa
        # tent bound: inside a gap, |g| >= (|g_i| + |g_{i+1}|)/2 - lip*h/2
        seg_margin = 0.5 * (np.abs(g) + np.roll(np.abs(g), -1))
        if np.any(seg_margin <= lip_seg * 0.5 * gaps):
            return False
    if orientations[0] != orientations[1]:
        return False

    # interior: the |F| floor runs on an 8x refinement of the interior grid
    # (a genuine covering), Newton on the interior samples themselves
    samples = _interior_grid(annulus, interior_n)[0]
    fine_pts, h_cover = _interior_grid(annulus, 8 * interior_n)
    fx, fy = field.eval(fine_pts[:, 0], fine_pts[:, 1])
    fmag = np.hypot(fx, fy)
    lip_local = 3.0 * _jacobian_norms(field, fine_pts)
    if np.any(fmag <= lip_local * h_cover):
        return False
    scale = max(annulus.outer_semi_axes)
    center = np.asarray(annulus.center)
    escape = 4.0 * scale
    roots, ok = _newton_batch(field, samples, tol=1e-9 * scale,
                              max_iter=30, escape=(center, escape))
    if np.any(ok):
        inside = annulus.contains(roots[ok], inflate=annulus.asymmetry_margin)
        if np.any(inside):
            return False
    return True


def _interior_grid(annulus: EllipticalAnnulus, n: int):
    """Structured covering of the band: returns (points, covering radius).

    The grid balances radial and angular gaps so the covering radius shrinks
    like 1/sqrt(n) regardless of the band's aspect ratio.
    """
    ai, bi = annulus.inner_semi_axes
    ao, bo = annulus.outer_semi_axes
    aspect = (ao - ai) / (2.0 * math.pi * ao)
    n_rad = max(4, int(round(math.sqrt(n * aspect))))
    n_ang = max(16, n // n_rad)
    t = (np.arange(n_rad) + 0.5) / n_rad
    phi = np.linspace(0.0, 2.0 * math.pi, n_ang, endpoint=False)
    aa = ai + (ao - ai) * t[:, None]
    bb = bi + (bo - bi) * t[:, None]
    local = np.stack([
        (aa * np.cos(phi)[None, :]).ravel(),
        (bb * np.sin(phi)[None, :]).ravel(),
    ], axis=1)
    pts = local @ annulus._frame().T + np.asarray(annulus.center)
    radial_gap = max((ao - ai) / n_rad, (bo - bi) / n_rad)
    arc_gap = 2.0 * math.pi * max(ao, bo) / n_ang
    return pts, 0.5 * math.hypot(radial_gap, arc_gap)
