"""Curvature data of closed surfaces of revolution.

A surface is generated by a profile (r(theta), z(theta)), theta in [0, pi],
revolved about the z-axis, with r(0) = r(pi) = 0. The outward normal in the
meridian half-plane is n = (-z', r') / s, s = sqrt(r'^2 + z'^2). Principal
curvatures follow the convention that the unit sphere has both equal to +1:

    meridian   lam_m = -(r' z'' - z' r'') / s^3
    parallel   lam_p = -z' / (r s)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Profile1D = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SurfacePoint:
    position: np.ndarray
    normal: np.ndarray
    kappa: float
    gauss: float
    principal: tuple[float, float]

    def weingarten_defect(self) -> float:
        """kappa^2/4 - K, which equals (lam' - lam'')^2 / 4."""
        return self.kappa**2 / 4 - self.gauss


@dataclass(frozen=True)
class TubularWeight:
    s: Optional[int]
    t: float
    value: float


@dataclass(frozen=True)
class RevolutionProfile:
    """Generatrix of a surface of revolution with first and second derivatives.

    ``pole_curvature`` gives the (umbilic) curvature at theta = 0 and pi, where
    the parallel curvature formula is 0/0.
    """

    name: str
    r: Profile1D
    z: Profile1D
    dr: Profile1D
    dz: Profile1D
    d2r: Profile1D
    d2z: Profile1D
    pole_curvature: tuple[float, float]
    area: Optional[float] = None
    params: dict = field(default_factory=dict)

    def principal(self, theta) -> tuple[np.ndarray, np.ndarray]:
        th = np.asarray(theta, dtype=float)
        r, dr, dz = self.r(th), self.dr(th), self.dz(th)
        d2r, d2z = self.d2r(th), self.d2z(th)
        s = np.sqrt(dr * dr + dz * dz)
        lam_m = -(dr * d2z - dz * d2r) / s**3
        with np.errstate(divide="ignore", invalid="ignore"):
            lam_p = np.where(np.abs(r) > 1e-12, -dz / (r * s), np.nan)
        at_north = np.isclose(th, 0.0, atol=1e-14)
        at_south = np.isclose(th, np.pi, atol=1e-14)
        lam_p = np.where(at_north, self.pole_curvature[0], lam_p)
        lam_p = np.where(at_south, self.pole_curvature[1], lam_p)
        lam_m = np.where(at_north, self.pole_curvature[0], lam_m)
        lam_m = np.where(at_south, self.pole_curvature[1], lam_m)
        return lam_m, lam_p

    def metric(self, theta) -> np.ndarray:
        """sqrt(g_theta_theta) = |d(r, z)/d theta|."""
        return np.hypot(self.dr(theta), self.dz(theta))

    def normal_rz(self, theta) -> tuple[np.ndarray, np.ndarray]:
        dr, dz = self.dr(theta), self.dz(theta)
        s = np.hypot(dr, dz)
        return -dz / s, dr / s

    def normal_derivative_rz(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """d n / d theta in the meridian plane: lam_m * s * tangent."""
        lam_m, _ = self.principal(theta)
        return lam_m * self.dr(theta), lam_m * self.dz(theta)

    def point(self, theta: float, phi: float = 0.0) -> SurfacePoint:
        r, z = float(self.r(theta)), float(self.z(theta))
        nr, nz = (float(v) for v in self.normal_rz(theta))
        lam_m, lam_p = (float(v) for v in self.principal(theta))
        c, s = math.cos(phi), math.sin(phi)
        return SurfacePoint(
            position=np.array([r * c, r * s, z]),
            normal=np.array([nr * c, nr * s, nz]),
            kappa=lam_m + lam_p,
            gauss=lam_m * lam_p,
            principal=(lam_m, lam_p),
        )


def sphere_profile(R: float = 1.0) -> RevolutionProfile:
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    return RevolutionProfile(
        name="sphere",
        r=lambda t: R * np.sin(t),
        z=lambda t: R * np.cos(t),
        dr=lambda t: R * np.cos(t),
        dz=lambda t: -R * np.sin(t),
        d2r=lambda t: -R * np.sin(t),
        d2z=lambda t: -R * np.cos(t),
        pole_curvature=(1.0 / R, 1.0 / R),
        area=4.0 * math.pi * R * R,
        params={"R": R},
    )


def _spheroid_area(a: float, c: float) -> float:
    if math.isclose(a, c):
        return 4.0 * math.pi * a * a
    if c < a:
        e = math.sqrt(1 - c * c / (a * a))
        return 2 * math.pi * a * a * (1 + (1 - e * e) / e * math.atanh(e))
    e = math.sqrt(1 - a * a / (c * c))
    return 2 * math.pi * a * a * (1 + c / (a * e) * math.asin(e))


def spheroid_profile(a: float, c: float) -> RevolutionProfile:
    """x = (a sin t cos phi, a sin t sin phi, c cos t)."""
    if not (a > 0 and c > 0):
        raise ValueError(f"semi-axes must be positive, got a={a}, c={c}")
    pole = c / (a * a)
    return RevolutionProfile(
        name="spheroid",
        r=lambda t: a * np.sin(t),
        z=lambda t: c * np.cos(t),
        dr=lambda t: a * np.cos(t),
        dz=lambda t: -c * np.sin(t),
        d2r=lambda t: -a * np.sin(t),
        d2z=lambda t: -c * np.cos(t),
        pole_curvature=(pole, pole),
        area=_spheroid_area(a, c),
        params={"a": a, "c": c},
    )


def custom_profile(r: Profile1D, z: Profile1D, name: str = "custom",
                   step: float = 1e-4) -> RevolutionProfile:
    """Profile from callables only; derivatives by centred differences.

    Pole curvatures are taken from the meridian curvature at the poles, which
    coincides with the parallel one for any smooth closed surface.
    """
    h = step

    def d1(f):
        return lambda t: (f(t + h) - f(t - h)) / (2 * h)

    def d2(f):
        return lambda t: (f(t + h) - 2 * f(t) + f(t - h)) / (h * h)

    dr, dz, d2r, d2z = d1(r), d1(z), d2(r), d2(z)

    def lam_m(t):
        s = math.hypot(dr(t), dz(t))
        return float(-(dr(t) * d2z(t) - dz(t) * d2r(t)) / s**3)

    return RevolutionProfile(name, r, z, dr, dz, d2r, d2z,
                             pole_curvature=(lam_m(0.0), lam_m(math.pi)))


def sphere_point(R: float, theta: float, phi: float) -> SurfacePoint:
    """Point of the sphere of radius R; kappa = 2/R, K = 1/R^2."""
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    x = R * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    return SurfacePoint(x, x / R, 2.0 / R, 1.0 / R**2, (1.0 / R, 1.0 / R))


def spheroid_point(a: float, c: float, theta: float, phi: float) -> SurfacePoint:
    """Point of the spheroid x = (a sin t cos phi, a sin t sin phi, c cos t).

    At the poles both principal curvatures equal c/a^2 (analytic limit).
    """
    return spheroid_profile(a, c).point(theta, phi)


def tubular_weight(p: SurfacePoint, t: float, s: Optional[int] = None) -> TubularWeight:
    """1 - t kappa + t^2 K = det(Id - t L) at distance t inside the surface."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return TubularWeight(s, float(t), 1.0 - t * p.kappa + t * t * p.gauss)


@dataclass(frozen=True)
class SurfaceGrid:
    """Staggered polar grid theta_j = (j - 1/2) pi / N, j = 1..N.

    Node j represents the band between theta = (j-1) pi/N and j pi/N; its
    area weight is the exact lateral area of the revolved trapezoid (conical
    frustum) joining the profile points at the band edges.
    """

    profile: RevolutionProfile
    n_theta: int
    m_max: int = 8

    def __post_init__(self):
        if self.n_theta < 4:
            raise ValueError("n_theta must be at least 4")
        if self.m_max < 0:
            raise ValueError("m_max must be nonnegative")

    @property
    def dtheta(self) -> float:
        return math.pi / self.n_theta

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    @property
    def theta_edges(self) -> np.ndarray:
        return np.arange(self.n_theta + 1) * self.dtheta

    @property
    def points(self) -> list[SurfacePoint]:
        return [self.profile.point(t) for t in self.theta]

    def curvatures(self) -> tuple[np.ndarray, np.ndarray]:
        """(kappa, K) at the nodes."""
        lam_m, lam_p = self.profile.principal(self.theta)
        return lam_m + lam_p, lam_m * lam_p

    @property
    def weights(self) -> np.ndarray:
        te = self.theta_edges
        r = np.abs(self.profile.r(te))
        r[0] = r[-1] = 0.0
        z = self.profile.z(te)
        slant = np.hypot(np.diff(r), np.diff(z))
        return math.pi * (r[:-1] + r[1:]) * slant

    def total_area(self) -> float:
        return float(np.sum(self.weights))

    def gauss_bonnet(self) -> float:
        """sum K dGamma, which should approach 4 pi."""
        _, K = self.curvatures()
        return float(np.sum(K * self.weights))

    def to_csv(self, path) -> None:
        kappa, K = self.curvatures()
        th = self.theta
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "r", "z", "kappa", "K", "dGamma"])
            for row in zip(th, self.profile.r(th), self.profile.z(th), kappa, K, self.weights):
                w.writerow([f"{v:.12e}" for v in row])


def curvature_bound_defect(grid: SurfaceGrid) -> float:
    """min over nodes of kappa^2/4 - K = (lam' - lam'')^2/4 (never negative)."""
    lam_m, lam_p = grid.profile.principal(grid.theta)
    return float(np.min((lam_m - lam_p) ** 2 / 4))
