"""Disk geometry for parallel-beam transport measurements.

Everything in this module is elementary geometry on the disk B_r: entry and
exit points of an oriented chord, the measurement grid, the smooth data
cutoff, and closed-form derivatives of the boundary maps that the
oscillatory-phase analysis needs.

Conventions. A chord is addressed by parallel coordinates (s, theta): the
unit direction is theta_hat = (cos theta, sin theta), the signed offset s is
taken along theta_perp = (-sin theta, cos theta). The entry point is
x0 = s*theta_perp - sqrt(r^2-s^2)*theta_hat, the exit point is
xc = s*theta_perp + sqrt(r^2-s^2)*theta_hat, and the chord length is
d0 = 2*sqrt(r^2-s^2).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GeometryError(ValueError):
    """Raised when coordinates violate a geometric precondition."""


@dataclass(frozen=True)
class DiskDomain:
    """The disk B_r with a scattering-free safety margin D.

    Admissible scatterers are supported in B_{r-2D}; boundary data are used
    on the band |s| <= r - D. The constraint 0 < D < r/2 keeps the support
    ball nonempty and every chord-to-support distance at least D.
    """

    r: float = 1.0
    D: float = 0.2

    def __post_init__(self) -> None:
        if not (self.r > 0):
            raise GeometryError(f"disk radius must be positive, got r={self.r}")
        if not (0 < self.D < self.r / 2):
            raise GeometryError(
                f"margin must satisfy 0 < D < r/2, got D={self.D}, r={self.r}"
            )

    @property
    def support_radius(self) -> float:
        """Radius r - 2D of the admissible scatterer support."""
        return self.r - 2.0 * self.D

    @property
    def band_radius(self) -> float:
        """Radius r - D of the usable data band in s."""
        return self.r - self.D

    @property
    def diameter(self) -> float:
        return 2.0 * self.r


def unit_vector(theta):
    """theta_hat = (cos theta, sin theta), stacked along the last axis."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def perp_vector(theta):
    """theta_perp = (-sin theta, cos theta), a +90 degree rotation."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)


@dataclass(frozen=True)
class BoundaryPair:
    """Entry/exit data of one or more chords.

    Attributes
    ----------
    x0, xc : ndarray, shape (..., 2)
        Entry and exit points on the circle of radius r.
    e0 : ndarray, shape (..., 2)
        Chord direction theta_hat (from x0 towards xc).
    d0 : ndarray, shape (...)
        Chord length |xc - x0| = 2 sqrt(r^2 - s^2).
    """

    x0: np.ndarray
    xc: np.ndarray
    e0: np.ndarray
    d0: np.ndarray


def boundary_points(s, theta, domain: DiskDomain) -> BoundaryPair:
    """Entry and exit points of the chord (s, theta).

    s and theta broadcast against each other. Requires |s| < r.
    """
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(s) >= domain.r):
        raise GeometryError("chord offset must satisfy |s| < r")
    s, theta = np.broadcast_arrays(s, theta)
    half = np.sqrt(domain.r**2 - s**2)
    e0 = unit_vector(theta)
    sp = perp_vector(theta)
    x0 = s[..., None] * sp - half[..., None] * e0
    xc = s[..., None] * sp + half[..., None] * e0
    return BoundaryPair(x0=x0, xc=xc, e0=e0, d0=2.0 * half)


def _smoothstep(t):
    # quintic 6t^5 - 15t^4 + 10t^3, clamped; C^2 across both ends
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def chi(s, domain: DiskDomain):
    """C^2 cutoff in the offset variable.

    Equal to 1 for |s| <= r - 2D, 0 for |s| >= r - D, and a quintic ramp in
    between. Data multiplied by chi therefore keep every chord that can meet
    the scatterer support, while the amplitude weights stay bounded.
    """
    s = np.asarray(s, dtype=float)
    return _smoothstep((domain.band_radius - np.abs(s)) / domain.D)


@dataclass(frozen=True)
class BoundaryJacobians:
    """First and second derivatives of x0(s, theta) and xc(s, theta).

    All arrays have shape (..., 2). The closed forms follow from
    x0 = s*theta_perp - sqrt(r^2-s^2)*theta_hat and the rotation structure
    of (theta_hat, theta_perp); note d(xc)/dtheta = sqrt(r^2-s^2) d(xc)/ds
    while d(x0)/dtheta = -sqrt(r^2-s^2) d(x0)/ds.
    """

    dx0_ds: np.ndarray
    dx0_dth: np.ndarray
    dxc_ds: np.ndarray
    dxc_dth: np.ndarray
    d2x0_ds2: np.ndarray
    d2x0_dsdth: np.ndarray
    d2x0_dth2: np.ndarray
    d2xc_ds2: np.ndarray
    d2xc_dsdth: np.ndarray
    d2xc_dth2: np.ndarray


def boundary_jacobians(s, theta, domain: DiskDomain) -> BoundaryJacobians:
    """Closed-form chord-endpoint derivatives.

    Intended for |s| <= r - D where the formulas are uniformly
    well-conditioned; offsets with |s| >= r - D/2 are rejected because the
    1/sqrt(r^2-s^2) factors degenerate at the tangent lines.
    """
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(s) >= domain.r - domain.D / 2):
        raise GeometryError("boundary_jacobians requires |s| < r - D/2")
    s, theta = np.broadcast_arrays(s, theta)
    r = domain.r
    half = np.sqrt(r**2 - s**2)
    e0 = unit_vector(theta)
    sp = perp_vector(theta)
    pair = boundary_points(s, theta, domain)

    w = (s / half)[..., None]
    dx0_ds = sp + w * e0
    dxc_ds = sp - w * e0
    dx0_dth = -half[..., None] * dx0_ds
    dxc_dth = half[..., None] * dxc_ds

    curv = (r**2 / half**3)[..., None]
    d2x0_ds2 = curv * e0
    d2xc_ds2 = -curv * e0
    d2x0_dth2 = -pair.x0
    d2xc_dth2 = -pair.xc
    d2x0_dsdth = pair.x0 / half[..., None]
    d2xc_dsdth = -pair.xc / half[..., None]

    return BoundaryJacobians(
        dx0_ds=dx0_ds,
        dx0_dth=dx0_dth,
        dxc_ds=dxc_ds,
        dxc_dth=dxc_dth,
        d2x0_ds2=d2x0_ds2,
        d2x0_dsdth=d2x0_dsdth,
        d2x0_dth2=d2x0_dth2,
        d2xc_ds2=d2xc_ds2,
        d2xc_dsdth=d2xc_dsdth,
        d2xc_dth2=d2xc_dth2,
    )


@dataclass(frozen=True)
class SinogramGrid:
    """Midpoint grid on the measurement band [-(r-D), r-D] x [0, 2pi).

    s_i = -(r-D) + (i+1/2) ds with ds = 2(r-D)/n_s, theta_j = j dtheta with
    dtheta = 2pi/n_theta. The midpoint convention keeps every node strictly
    inside the band, away from the tangent-line degeneracy.
    """

    n_s: int
    n_theta: int
    domain: DiskDomain

    def __post_init__(self) -> None:
        if self.n_s < 1 or self.n_theta < 1:
            raise GeometryError("grid sizes must be positive")

    @property
    def ds(self) -> float:
        return 2.0 * self.domain.band_radius / self.n_s

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @cached_property
    def s(self) -> np.ndarray:
        i = np.arange(self.n_s)
        return -self.domain.band_radius + (i + 0.5) * self.ds

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @cached_property
    def s_mesh(self) -> np.ndarray:
        return np.broadcast_to(self.s[:, None], (self.n_s, self.n_theta))

    @cached_property
    def theta_mesh(self) -> np.ndarray:
        return np.broadcast_to(self.theta[None, :], (self.n_s, self.n_theta))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_s, self.n_theta)
