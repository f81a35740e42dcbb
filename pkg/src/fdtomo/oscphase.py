"""Oscillatory-phase machinery behind the reconstruction estimates.

Three layers: a generic 1D stationary-phase evaluator with certified
curvature preconditions; the two phase functions that govern the forward
asymptotics (phi1, transverse to a chord) and the multiple-scattering
reconstruction error (phi2, over the data variables), with closed-form
derivatives built on the boundary-map jacobians; and the beta kernel, the
oscillatory (s, theta) integral whose decay in omega quantifies how the
regularized inverse damps multiple scattering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import fresnel, roots_legendre

from .errors import PhaseConditionError, ResolutionError
from .fields import PhaseFunction, ScalarField, optical_length
from .geometry import (DiskDomain, GeometryError, boundary_jacobians,
                       boundary_points, chi, perp_vector, unit_vector)
from .xray import FilterSpec, _dense_filter_table

_TWO_PI = 2.0 * np.pi


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v**2, axis=-1))


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


# ---------------------------------------------------------------------------
# generic 1D stationary phase


@dataclass(frozen=True)
class PhaseModel1D:
    """A 1D oscillatory integrand int f(x) e^{i omega phi(x)} dx.

    phase/dphase/d2phase/amplitude are vectorized callables on the support
    interval; curvature_bounds = (m, M) declares 0 < m <= |phi''| <= M on
    the support, which certifies a unique stationary point and the validity
    of the leading-order formula.
    """

    phase: Callable[[np.ndarray], np.ndarray]
    dphase: Callable[[np.ndarray], np.ndarray]
    d2phase: Callable[[np.ndarray], np.ndarray]
    amplitude: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    curvature_bounds: tuple[float, float]

    def __post_init__(self) -> None:
        lo, hi = self.support
        if not lo < hi:
            raise ValueError("support must be a nonempty interval")
        m, big = self.curvature_bounds
        if not (0 < m <= big):
            raise ValueError("curvature bounds must satisfy 0 < m <= M")


def stationary_phase_1d(model: PhaseModel1D, omega: float,
                        points_per_wavelength: float = 30.0,
                        check_nodes: int = 4096,
                        gl_nodes: int = 12) -> tuple[complex, complex, complex]:
    """(I, I0, I - I0) for I = int f e^{i omega phi} over the support.

    The curvature declaration is spot-checked on a fine grid (violation
    raises PhaseConditionError), the unique stationary point X is located
    by bisection on the monotone dphase and polished by Newton, I is
    computed by composite Gauss-Legendre panels short enough to resolve the
    oscillation, and

        I0 = e^{i sgn(phi'') pi/4} sqrt(2 pi/(omega K)) e^{i omega phi(X)} f(X)

    with K = |phi''(X)|.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    lo, hi = model.support
    m_decl, big_decl = model.curvature_bounds
    grid = np.linspace(lo, hi, check_nodes)
    curv = model.d2phase(grid)
    if np.any(curv > 0) and np.any(curv < 0):
        raise PhaseConditionError("phase curvature changes sign on the support")
    mag = np.abs(curv)
    tol = 1e-9 * big_decl
    if np.min(mag) < m_decl - tol or np.max(mag) > big_decl + tol:
        raise PhaseConditionError(
            "phase curvature leaves the declared bounds: "
            f"observed [{np.min(mag):.6g}, {np.max(mag):.6g}], declared "
            f"[{m_decl:.6g}, {big_decl:.6g}]")

    flo = float(model.dphase(lo))
    fhi = float(model.dphase(hi))
    if flo == 0.0:
        x_star = lo
    elif fhi == 0.0:
        x_star = hi
    elif flo * fhi > 0:
        raise PhaseConditionError("no stationary point inside the support")
    else:
        a, b = lo, hi
        fa = flo
        for _ in range(80):
            mid = 0.5 * (a + b)
            fm = float(model.dphase(mid))
            if fa * fm <= 0:
                b = mid
            else:
                a, fa = mid, fm
        x_star = 0.5 * (a + b)
        for _ in range(4):
            x_star = x_star - float(model.dphase(x_star)) / float(
                model.d2phase(x_star))
        x_star = min(max(x_star, lo), hi)

    # panel length resolving both the oscillation and the amplitude
    slope = float(np.max(np.abs(model.dphase(grid))))
    wavelength = _TWO_PI / (omega * max(slope, 1e-30))
    panel = min(wavelength * gl_nodes / points_per_wavelength,
                (hi - lo) / 64.0)
    n_panels = int(math.ceil((hi - lo) / panel))
    nodes, weights = roots_legendre(gl_nodes)
    edges = np.linspace(lo, hi, n_panels + 1)
    a_e = edges[:-1][:, None]
    b_e = edges[1:][:, None]
    x = (a_e + b_e) / 2.0 + (b_e - a_e) / 2.0 * nodes[None, :]
    w = (b_e - a_e) / 2.0 * weights[None, :]
    total = 0.0 + 0.0j
    chunk = max(1, 4_000_000 // gl_nodes)
    xf = x.ravel()
    wf = w.ravel()
    for i in range(0, xf.size, chunk):
        xi = xf[i : i + chunk]
        total += np.sum(wf[i : i + chunk] * model.amplitude(xi)
                        * np.exp(1j * omega * model.phase(xi)))

    curv_star = float(model.d2phase(x_star))
    sgn = 1.0 if curv_star > 0 else -1.0
    kappa = abs(curv_star)
    lead = (np.exp(1j * sgn * np.pi / 4.0)
            * math.sqrt(_TWO_PI / (omega * kappa))
            * np.exp(1j * omega * float(model.phase(x_star)))
            * complex(model.amplitude(np.asarray(x_star))))
    total = complex(total)
    lead = complex(lead)
    return total, lead, total - lead


def gaussian_quadratic_model() -> PhaseModel1D:
    """Reference family int e^{-x^2} e^{i omega x^2/2} dx with known value."""
    return PhaseModel1D(
        phase=lambda x: x**2 / 2.0,
        dphase=lambda x: np.asarray(x, dtype=float),
        d2phase=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        amplitude=lambda x: np.exp(-np.asarray(x, dtype=float) ** 2),
        support=(-8.0, 8.0),
        curvature_bounds=(1.0, 1.0))


def gaussian_quadratic_oracle(omega: float) -> complex:
    """Closed form sqrt(pi / (1 - i omega/2)) for the reference family."""
    return complex(np.sqrt(np.pi / (1.0 - 0.5j * omega)))


def fresnel_F(u, sign: int = 1) -> np.ndarray:
    """F_sigma(u) = int_{-inf}^u e^{i sigma t^2/2} dt for sigma = +-1.

    Via the standard Fresnel functions: int_0^u e^{i sigma t^2/2} dt
    = sqrt(pi) (C(u/sqrt(pi)) + i sigma S(u/sqrt(pi))), plus the half-line
    value sqrt(2 pi) e^{i sigma pi/4} / 2. Uniformly bounded (sup < 3).
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    u = np.asarray(u, dtype=float)
    ss, cc = fresnel(u / math.sqrt(np.pi))
    half = math.sqrt(_TWO_PI) * np.exp(1j * sign * np.pi / 4.0) / 2.0
    return half + math.sqrt(np.pi) * (cc + 1j * sign * ss)


# ---------------------------------------------------------------------------
# phi1: transverse phase along a chord


@dataclass(frozen=True)
class Phase1Model:
    """Chord-frame phase phi1(u, v) = d0 - |x-x0| - |x-xc|.

    The frame is anchored at y with direction theta: x = y + u theta_hat
    + v theta_perp, while the chord endpoints x0, xc belong to the chord
    through y (offset s = y . theta_perp, admissible when |s| <= r - D).
    phi1 is even in v with the unique transverse critical point v = 0 on
    the chord.
    """

    y: tuple[float, float]
    theta: float
    domain: DiskDomain

    def __post_init__(self) -> None:
        s = self._offset()
        if abs(s) > self.domain.band_radius:
            raise GeometryError(
                "chord offset |y . theta_perp| must be at most r - D")

    def _offset(self) -> float:
        sp = perp_vector(self.theta)
        return float(np.asarray(self.y) @ sp)

    def _along(self) -> float:
        e0 = unit_vector(self.theta)
        return float(np.asarray(self.y) @ e0)

    def _legs(self, u, v):
        """Along-chord distances a (to x0) and c (to xc), and v."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        s = self._offset()
        half = math.sqrt(self.domain.r**2 - s**2)
        a = self._along() + u + half
        c = half - (self._along() + u)
        return a, c, v

    def _check_inside(self, u, v) -> None:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        s = self._offset()
        t = self._along() + u
        rr = (s + v) ** 2 + t**2
        if np.any(rr > (self.domain.band_radius) ** 2 * (1 + 1e-12)):
            raise GeometryError("scattering point must lie in B_{r-D}")

    def phi1(self, u, v) -> np.ndarray:
        self._check_inside(u, v)
        a, c, v = self._legs(u, v)
        return (a + c) - np.sqrt(a**2 + v**2) - np.sqrt(c**2 + v**2)

    def d2phi1_dv2(self, u, v) -> np.ndarray:
        """Transverse curvature -[a^2/(a^2+v^2)^{3/2} + c^2/(c^2+v^2)^{3/2}].

        On admissible chords with x in B_{r-D} this lies in
        [-2/D, -D/(4 r^2)]; on the chord (v = 0) it equals
        -d0 * rho(x)^2 with rho the geometric weight.
        """
        self._check_inside(u, v)
        a, c, v = self._legs(u, v)
        return -(a**2 / (a**2 + v**2) ** 1.5 + c**2 / (c**2 + v**2) ** 1.5)


def phi1_second_derivative(model: Phase1Model, u, v) -> np.ndarray:
    return model.d2phi1_dv2(u, v)


def phi1_curvature_range(domain: DiskDomain) -> tuple[float, float]:
    """The guaranteed transverse-curvature window [-2/D, -D/(4 r^2)]."""
    return -2.0 / domain.D, -domain.D / (4.0 * domain.r**2)


# ---------------------------------------------------------------------------
# phi2: data-variable phase of the multiple-scattering kernel


@dataclass(frozen=True)
class Phi2Derivatives:
    ds: np.ndarray
    dtheta: np.ndarray
    dss: np.ndarray
    dstheta: np.ndarray
    dthetatheta: np.ndarray


@dataclass(frozen=True)
class Phase2Model:
    """Phase phi2(s, theta) = d0 - |x0 - x1| - |xc - xm|.

    x1 is the first and xm the last scattering vertex; both must lie in the
    admissible support ball B_{r-2D}. All derivative formulas are exact,
    assembled from the closed-form boundary-map jacobians and the gradient/
    curvature of the Euclidean distance.
    """

    x1: tuple[float, float]
    xm: tuple[float, float]
    domain: DiskDomain

    def __post_init__(self) -> None:
        for p in (self.x1, self.xm):
            if math.hypot(p[0], p[1]) > self.domain.support_radius * (1 + 1e-12):
                raise GeometryError(
                    "scattering vertices must lie in the support ball B_{r-2D}")

    @property
    def separation(self) -> float:
        return math.dist(self.x1, self.xm)

    @property
    def theta_1m(self) -> float:
        """Angle of the chord through x1 and xm (direction x1 -> xm)."""
        if self.separation == 0.0:
            raise GeometryError("theta_1m is undefined for coincident vertices")
        d = np.asarray(self.xm, dtype=float) - np.asarray(self.x1, dtype=float)
        return float(np.mod(math.atan2(d[1], d[0]), _TWO_PI))

    @property
    def critical_angles(self) -> tuple[float, float]:
        t = self.theta_1m
        return t, float(np.mod(t + np.pi, _TWO_PI))

    def _check_band(self, s) -> None:
        if np.any(np.abs(np.asarray(s, dtype=float)) > self.domain.band_radius
                  * (1 + 1e-12)):
            raise GeometryError("phi2 is defined on the band |s| <= r - D")

    def phi2(self, s, theta) -> np.ndarray:
        self._check_band(s)
        pair = boundary_points(s, theta, self.domain)
        x1 = np.asarray(self.x1, dtype=float)
        xm = np.asarray(self.xm, dtype=float)
        return pair.d0 - _norm(pair.x0 - x1) - _norm(pair.xc - xm)

    def derivatives(self, s, theta) -> Phi2Derivatives:
        """All first and second partials of phi2, exact closed forms.

        Each distance leg contributes grad|x_p - q| = w . dx_p and
        hess = (dx_p . dx_p' - (w . dx_p)(w . dx_p'))/|x_p - q|
        + w . d2x_p with w the unit vector from the vertex to the
        boundary point.
        """
        self._check_band(s)
        s_arr = np.asarray(s, dtype=float)
        pair = boundary_points(s_arr, theta, self.domain)
        jac = boundary_jacobians(s_arr, theta, self.domain)
        r = self.domain.r
        s_b = np.broadcast_to(s_arr, pair.d0.shape)
        half = np.sqrt(r**2 - s_b**2)
        d0_s = -2.0 * s_b / half
        d0_ss = -2.0 * r**2 / half**3

        def leg(xp, q, d_s, d_th, d_ss, d_sth, d_thth):
            w = xp - np.asarray(q, dtype=float)
            dist = _norm(w)
            u = w / dist[..., None]
            gs = _dot(u, d_s)
            gth = _dot(u, d_th)
            hss = (_dot(d_s, d_s) - gs * gs) / dist + _dot(u, d_ss)
            hsth = (_dot(d_s, d_th) - gs * gth) / dist + _dot(u, d_sth)
            hthth = (_dot(d_th, d_th) - gth * gth) / dist + _dot(u, d_thth)
            return gs, gth, hss, hsth, hthth

        g0 = leg(pair.x0, self.x1, jac.dx0_ds, jac.dx0_dth, jac.d2x0_ds2,
                 jac.d2x0_dsdth, jac.d2x0_dth2)
        gc = leg(pair.xc, self.xm, jac.dxc_ds, jac.dxc_dth, jac.d2xc_ds2,
                 jac.d2xc_dsdth, jac.d2xc_dth2)
        return Phi2Derivatives(
            ds=d0_s - g0[0] - gc[0],
            dtheta=-g0[1] - gc[1],
            dss=d0_ss - g0[2] - gc[2],
            dstheta=-g0[3] - gc[3],
            dthetatheta=-g0[4] - gc[4],
        )


def phi2_derivatives(model: Phase2Model, s, theta) -> Phi2Derivatives:
    return model.derivatives(s, theta)


def phi2_curvature_range(domain: DiskDomain) -> tuple[float, float]:
    """The guaranteed s-curvature window [-8r/D^2, -2D/r^2]."""
    return -8.0 * domain.r / domain.D**2, -2.0 * domain.D / domain.r**2


def critical_curve_sigma(model: Phase2Model, theta) -> np.ndarray:
    """The unique root sigma(theta) of d(phi2)/ds = 0.

    The root is bracketed by the offsets of the two vertices (by the sign
    structure of the derivative) and the s-curvature is strictly negative,
    so bisection plus a Newton polish is certified. For coincident vertices
    the root is the common offset x1 . theta_perp exactly.
    """
    th = np.asarray(theta, dtype=float)
    sp = perp_vector(th)
    x1 = np.asarray(model.x1, dtype=float)
    xm = np.asarray(model.xm, dtype=float)
    s1 = sp @ x1
    sm = sp @ xm
    lo = np.minimum(s1, sm)
    hi = np.maximum(s1, sm)
    if model.separation == 0.0:
        return s1

    flo = model.derivatives(lo, th).ds
    fhi = model.derivatives(hi, th).ds
    wide = (hi - lo) > 1e-13
    if np.any((flo * fhi > 0) & wide):
        raise AssertionError("critical-offset bracket violated")
    a = lo.copy() if isinstance(lo, np.ndarray) else np.asarray(lo, dtype=float)
    b = hi.copy() if isinstance(hi, np.ndarray) else np.asarray(hi, dtype=float)
    a = np.atleast_1d(np.array(a, dtype=float))
    b = np.atleast_1d(np.array(b, dtype=float))
    th_flat = np.broadcast_to(th, a.shape)
    fa = np.atleast_1d(model.derivatives(a, th_flat).ds)
    for _ in range(60):
        mid = 0.5 * (a + b)
        fm = np.atleast_1d(model.derivatives(mid, th_flat).ds)
        take_right = fa * fm > 0
        a = np.where(take_right, mid, a)
        fa = np.where(take_right, fm, fa)
        b = np.where(take_right, b, mid)
    root = 0.5 * (a + b)
    for _ in range(3):
        der = model.derivatives(root, th_flat)
        root = root - der.ds / der.dss
        root = np.clip(root, lo, hi)
    residual = np.max(np.abs(np.atleast_1d(model.derivatives(root, th_flat).ds)))
    if residual > 1e-12:
        raise AssertionError(
            f"critical-offset residual {residual:.3e} exceeds 1e-12")
    return root.reshape(np.shape(theta)) if np.shape(theta) else float(root[0])


def s2_profile(model: Phase2Model, theta):
    """(S2, S2', S2'') along the critical curve.

    S2(theta) = phi2(sigma(theta), theta); its first derivative is the
    theta-partial at the root, and the second is det H / d2phi2_ss there
    (the curvature of the constrained profile).
    """
    sig = critical_curve_sigma(model, theta)
    der = model.derivatives(sig, theta)
    s2 = model.phi2(sig, theta)
    det = der.dss * der.dthetatheta - der.dstheta**2
    return s2, der.dtheta, det / der.dss


def s2_second_derivative_aligned(model: Phase2Model, theta_c: float) -> float:
    """Closed-form S2'' at a critical angle.

    With the chord through the two vertices, S2'' =
    -sign((xm - x1) . theta_hat) |x1 - xm| |x0 - xc| / (|x1-x0| + |xc-xm|).
    """
    if model.separation == 0.0:
        return 0.0
    e0 = unit_vector(theta_c)
    sp = perp_vector(theta_c)
    x1 = np.asarray(model.x1, dtype=float)
    xm = np.asarray(model.xm, dtype=float)
    s_c = float(x1 @ sp)
    pair = boundary_points(s_c, theta_c, model.domain)
    l0 = float(_norm(pair.x0 - x1))
    lc = float(_norm(pair.xc - xm))
    sign = 1.0 if float((xm - x1) @ e0) > 0 else -1.0
    return -sign * model.separation * float(pair.d0) / (l0 + lc)


@dataclass(frozen=True)
class MarginReport:
    """Measured lower-margin constants of the critical profile."""

    separation: float
    delta0: float
    c1: float
    c2: float
    c2_reference: float
    c2_ok: bool


def lemma_S_margins(model: Phase2Model, delta0: float = np.pi / 8,
                    sample_count: int = 4096) -> MarginReport:
    """Margins of S2 around the critical angles.

    Outside the delta0/2 neighborhoods of the two critical angles,
    |S2'| >= c1 * separation; inside the delta0 neighborhoods,
    |S2''| >= c2 * separation. c1 and c2 are the largest constants valid
    on the sampled grid; c2 is compared against the closed-form candidate
    (1/8) sqrt(2 D / r).
    """
    ref = 0.125 * math.sqrt(2.0 * model.domain.D / model.domain.r)
    sep = model.separation
    if sep == 0.0:
        return MarginReport(separation=0.0, delta0=delta0, c1=0.0, c2=0.0,
                            c2_reference=ref, c2_ok=False)
    theta = (np.arange(sample_count) + 0.5) * (_TWO_PI / sample_count)
    t1, t2 = model.critical_angles
    dist = np.minimum(_circ_dist(theta, t1), _circ_dist(theta, t2))
    _, s2p, s2pp = s2_profile(model, theta)
    outer = dist >= delta0 / 2.0
    inner = dist <= delta0
    c1 = float(np.min(np.abs(s2p[outer])) / sep) if np.any(outer) else 0.0
    c2 = float(np.min(np.abs(s2pp[inner])) / sep) if np.any(inner) else 0.0
    return MarginReport(separation=sep, delta0=delta0, c1=c1, c2=c2,
                        c2_reference=ref, c2_ok=bool(c2 >= ref))


def _circ_dist(a, b):
    d = np.abs(np.mod(a - b, _TWO_PI))
    return np.minimum(d, _TWO_PI - d)


# ---------------------------------------------------------------------------
# beta kernel


def beta_kernel(y, x1, x2, xm1, xm, omega: float, spec: FilterSpec,
                sigma: ScalarField, phi: PhaseFunction, domain: DiskDomain,
                points_per_wavelength: float = 10.0,
                min_stationary_points: int = 8) -> complex:
    """The reconstruction-error kernel at image point y.

    beta = int int e^{i omega phi2(s,theta)} w_b(y . theta_perp - s)
           alpha(s, theta) chi(s) ds dtheta,

    where alpha collects the de-phased inverse amplitude, the attenuation
    and geometry factors of the first and last path legs, and the two
    scattering-kernel values that involve those legs (x2 and xm1 are the
    second and second-to-last path vertices). Midpoint grids resolve both
    the omega-oscillation and the filter scale; the width of the
    stationary bumps of the theta-profile is checked against the grid and
    under-resolution is refused.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if points_per_wavelength < 4:
        raise ResolutionError("beta kernel needs >= 4 points per wavelength")
    pts = [np.asarray(p, dtype=float) for p in (y, x1, x2, xm1, xm)]
    y, x1, x2, xm1, xm = pts
    for p in pts:
        if math.hypot(p[0], p[1]) > domain.band_radius * (1 + 1e-12):
            raise GeometryError("beta kernel points must lie in B_{r-D}")

    r, D = domain.r, domain.D
    band = domain.band_radius
    model = Phase2Model(tuple(x1), tuple(xm), domain)

    # slope bounds: |d phi2/ds| <= 2(r-D)/sqrt(D(2r-D)) + 2 r/sqrt(D(2r-D)),
    # |d phi2/dtheta| <= 2r; the filter scale adds pi/b in s
    root = math.sqrt(D * (2.0 * r - D))
    slope_s = (2.0 * band + 2.0 * r) / root
    n_s = max(int(math.ceil(2.0 * band * omega * slope_s
                            * points_per_wavelength / _TWO_PI)),
              int(math.ceil(2.0 * band * spec.b * points_per_wavelength
                            / np.pi)), 256)
    n_th = max(int(math.ceil(_TWO_PI * omega * 2.0 * r
                             * points_per_wavelength / _TWO_PI)), 512)
    dth = _TWO_PI / n_th
    if model.separation > 0.0:
        for t_c in model.critical_angles:
            s2pp = s2_second_derivative_aligned(model, t_c)
            if s2pp != 0.0:
                width = math.sqrt(_TWO_PI / (omega * abs(s2pp)))
                if width / dth < min_stationary_points:
                    raise ResolutionError(
                        "theta grid under-resolves the stationary bump at "
                        f"separation {model.separation:.3g} (width {width:.3g}"
                        f", spacing {dth:.3g})")

    s_nodes = -band + (np.arange(n_s) + 0.5) * (2.0 * band / n_s)
    ds = 2.0 * band / n_s
    tab_u, tab_w = _dense_filter_table(spec, math.ceil(2.0 * (2.0 * r)) / 2.0)
    chi_s = chi(s_nodes, domain)
    v12 = (x2 - x1) / (np.linalg.norm(x2 - x1) or 1.0)
    vm1 = (xm - xm1) / (np.linalg.norm(xm - xm1) or 1.0)
    amp_const = (math.sqrt(_TWO_PI) * np.exp(-1j * np.pi / 4.0)
                 / math.sqrt(2.0) / r**2 * phi.forward_value)

    total = 0.0 + 0.0j
    # quadrature attenuation materializes per-node sample points, so keep
    # chunks small when sigma has no closed-form line integral
    budget = 4_000_000 if sigma.exact_line is not None else 8_000
    chunk = max(1, budget // n_s)
    for j0 in range(0, n_th, chunk):
        th = (np.arange(j0, min(j0 + chunk, n_th)) + 0.5) * dth
        pair = boundary_points(s_nodes[None, :], th[:, None], domain)
        leg0 = pair.x0 - x1
        legc = pair.xc - xm
        l0 = _norm(leg0)
        lc = _norm(legc)
        phi2 = pair.d0 - l0 - lc
        depth_chord = optical_length(pair.x0, pair.xc, sigma)
        half2 = r**2 - s_nodes[None, :] ** 2
        a_dephased = amp_const * np.exp(-depth_chord) * half2**0.75
        att = np.exp(-optical_length(pair.x0, np.broadcast_to(x1, pair.x0.shape), sigma)
                     - optical_length(np.broadcast_to(xm, pair.xc.shape), pair.xc, sigma))
        nu0 = np.abs(_dot(-leg0, pair.x0)) / (r * l0)
        nuc = np.abs(_dot(legc, pair.xc)) / (r * lc)
        phi_a = phi.eval_cos(_dot(-leg0, v12) / l0)
        phi_b = phi.eval_cos(_dot(legc, vm1) / lc)
        sp = perp_vector(th)
        offs = (sp @ y)[:, None] - s_nodes[None, :]
        w_vals = np.interp(np.abs(offs), tab_u, tab_w)
        integrand = (np.exp(1j * omega * phi2) * w_vals * chi_s[None, :]
                     * att * nu0 * nuc * phi_a * phi_b
                     / (a_dephased * l0 * lc))
        total += np.sum(integrand)
    return complex(total * ds * dth)
