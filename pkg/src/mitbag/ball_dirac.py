"""MIT bag Dirac operator on the ball B(0, R).

Separation of variables writes an eigenspinor of angular type kappa_D as
psi = (g(r) Omega_{kappa}, i f(r) Omega_{-kappa}) and the radial pair
(u, v) = (r g, r f) solves

    u' + kappa u / r = (E + m) v,      v' - kappa v / r = -(E - m) u,

with u(0) = v(0) = 0. The MIT condition B psi = psi reduces to v(R) = -u(R);
flipping B -> -B gives v(R) = +u(R). Two independent routes are provided:
Bessel matching (route A) and a staggered finite-difference pencil (route B).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .numerics import (
    EigenDecomposition,
    bessel_i_sequence_scaled,
    bessel_j_sequence,
    eig_tridiag_pencil,
    find_root,
    simpson,
)

log = logging.getLogger(__name__)

# Calibrated conventions (see tests/test_ball_dirac.py::test_convention_table):
# lower radial component f = sign(kappa) * k / (E + m) * j_{l_lower}(k r) for a
# regular upper component g = j_{l_upper}(k r); MIT condition v(R) = MIT_RATIO * u(R).
CONVENTIONS = {
    "lower_component_sign": "sign(kappa)",
    "mit_ratio": -1.0,
    "fdm_boundary_penalty": 1.0,
}
MIT_RATIO = CONVENTIONS["mit_ratio"]
MERGE_TOL = 1e-9
DEFAULT_PROFILE_POINTS = 4000


class CutoffError(ValueError):
    """Channel cutoff too small to certify completeness of the window."""


@dataclass(frozen=True)
class RadialChannel:
    """Angular sector labelled by the Dirac quantum number kappa_D != 0."""

    kappa_dirac: int

    def __post_init__(self):
        if int(self.kappa_dirac) != self.kappa_dirac or self.kappa_dirac == 0:
            raise ValueError(f"kappa_dirac must be a nonzero integer, got {self.kappa_dirac!r}")

    @property
    def l_upper(self) -> int:
        k = self.kappa_dirac
        return k if k > 0 else -k - 1

    @property
    def l_lower(self) -> int:
        k = self.kappa_dirac
        return k - 1 if k > 0 else -k

    @property
    def degeneracy(self) -> int:
        return 2 * abs(self.kappa_dirac)


@dataclass
class BallMode:
    energy: float
    mass: float
    radius: float
    channel: RadialChannel
    r: np.ndarray
    radial_u: np.ndarray
    radial_v: np.ndarray
    solver: str
    boundary: int = 1

    def norm(self) -> float:
        return simpson(self.radial_u**2 + self.radial_v**2, self.r[1] - self.r[0])

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.r, self.radial_u, self.radial_v]),
                   delimiter=",", header="r,u,v", comments="", fmt="%.12e")


@dataclass
class SpectrumResult:
    mass: float
    radius: float
    window: tuple[float, float]
    channel_cutoff: int
    channels: dict[int, list[float]]
    levels: list[tuple[float, int, tuple[int, ...]]] = field(default_factory=list)
    boundary: int = 1

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([lv[0] for lv in self.levels])

    @property
    def multiplicities(self) -> list[int]:
        return [lv[1] for lv in self.levels]

    def positive_sequence(self) -> np.ndarray:
        """Positive eigenvalues of H repeated according to multiplicity."""
        return np.repeat(self.eigenvalues, self.multiplicities)

    def abs_sequence(self) -> np.ndarray:
        """Eigenvalues of |H| with multiplicity, i.e. the sequence mu_n(m).

        The spectrum of H is symmetric (charge conjugation maps E to -E), so
        every positive level counts twice in |H|.
        """
        return np.repeat(self.eigenvalues, [2 * k for k in self.multiplicities])

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "radius": self.radius,
            "window": list(self.window),
            "boundary": self.boundary,
            "channel_cutoff": self.channel_cutoff,
            "channels": [
                {"kappa": k, "eigenvalues": list(v), "degeneracy": 2 * abs(k)}
                for k, v in sorted(self.channels.items())
            ],
            "merged": [
                {"energy": e, "multiplicity": mult, "kappas": list(ks)}
                for e, mult, ks in self.levels
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_geometry(m: float, R: float) -> None:
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    if not math.isfinite(m):
        raise ValueError("mass must be finite")


# ---------------------------------------------------------------------------
# Route A: Bessel matching
# ---------------------------------------------------------------------------

def _log_double_factorial(l: int) -> float:
    # log (2l+1)!!
    return math.lgamma(2 * l + 2) - l * math.log(2.0) - math.lgamma(l + 1)


def _phi_hat(ls: Iterable[int], y: np.ndarray) -> np.ndarray:
    """(2l+1)!! j_l(x) / x^l at y = x^2 >= 0, rows for each l in ``ls``.

    This is an entire function of y equal to 1 at y = 0. Power series for
    small y, Bessel sequence otherwise.
    """
    ls = list(ls)
    y = np.asarray(y, dtype=float)
    out = np.empty((len(ls),) + y.shape)
    lmin = min(ls)
    small = y <= 2 * lmin + 3
    for row, l in enumerate(ls):
        ys = y[small]
        term = np.ones_like(ys)
        acc = np.ones_like(ys)
        for k in range(1, 80):
            term = term * (-ys / 2.0) / (k * (2 * l + 2 * k + 1))
            acc = acc + term
            if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
                break
        out[row][small] = acc
    if np.any(~small):
        x = np.sqrt(y[~small])
        seq = bessel_j_sequence(max(ls), x)
        for row, l in enumerate(ls):
            out[row][~small] = seq[l] * np.exp(_log_double_factorial(l) - l * np.log(x))
    return out


def mit_matching_function(channel: RadialChannel, m: float, R: float, E,
                          boundary: int = 1):
    """Real function of E whose zeros are the eigenvalues in ``channel``.

    Above the gap (E^2 > m^2) it is (2l+1)!! F with F = (g + b f)(R) built from
    j_l; inside the gap (in-gap modes of negative mass) the same expression is
    continued through modified Bessel functions and divided by the positive
    quantity i_l(chi R)/(chi R)^l. The normalization is continuous across
    E = |m| and never overflows. ``boundary`` b = +1 is the MIT condition,
    b = -1 the flipped condition -B.
    """
    _check_geometry(m, R)
    Ea = np.atleast_1d(np.asarray(E, dtype=float))
    if np.any(Ea <= 0):
        raise ValueError("energy must be positive")
    b = float(boundary)
    k = channel.kappa_dirac
    l = channel.l_upper
    y = (Ea * Ea - m * m) * R * R
    out = np.empty_like(Ea)
    up = y >= 0
    if np.any(up):
        Eu = Ea[up]
        if k < 0:
            ph = _phi_hat([l, l + 1], y[up])
            out[up] = ph[0] - b * (Eu - m) * R * ph[1] / (2 * l + 3)
        else:
            ph = _phi_hat([l - 1, l], y[up])
            out[up] = (Eu + m) * R * ph[1] + b * (2 * l + 1) * ph[0]
    if np.any(~up):
        Eg = Ea[~up]
        x = np.sqrt(-y[~up])
        seq = bessel_i_sequence_scaled(l + 1, x)
        if k < 0:
            ratio = seq[l + 1] / (x * seq[l])
            out[~up] = 1.0 - b * (Eg - m) * R * ratio
        else:
            ratio = x * seq[l - 1] / seq[l]
            out[~up] = (Eg + m) * R + b * ratio
    return float(out[0]) if np.ndim(E) == 0 else out


def _scan_grid(m: float, R: float, e_lo: float, e_hi: float) -> np.ndarray:
    k_max = math.sqrt(max(e_hi * e_hi - m * m, 0.0))
    step_above = min(math.pi / (4 * R * max(1.0, k_max)),
                     math.pi**2 / (8 * R * R * max(abs(m), 1.0)))
    step_gap = math.pi / (8 * R)
    pieces = []
    gap_top = min(abs(m), e_hi)
    if gap_top > e_lo:
        n = max(int(math.ceil((gap_top - e_lo) / step_gap)), 2)
        pieces.append(np.linspace(e_lo, gap_top, n + 1))
    start = max(e_lo, abs(m))
    if e_hi > start:
        n = max(int(math.ceil((e_hi - start) / step_above)), 2)
        pieces.append(np.linspace(start, e_hi, n + 1))
    return np.unique(np.concatenate(pieces))


def _bessel_profile(channel: RadialChannel, m: float, R: float, E: float,
                    boundary: int, n_points: int):
    """Normalized (r, u, v) for an eigenvalue E of route A."""
    l, k = channel.l_upper, channel.kappa_dirac
    r = np.linspace(0.0, R, n_points + 1)
    rp = r[1:]
    y = E * E - m * m
    if y >= 0:
        # work with (2l+1)!! j_l(q r)/q^l = r^l phi_l, rescaled by R^l
        s = rp / R
        yr = y * rp * rp
        if k < 0:
            ph = _phi_hat([l, l + 1], yr)
            g = s**l * ph[0]
            f = -(E - m) * R * s ** (l + 1) * ph[1] / (2 * l + 3)
        else:
            ph = _phi_hat([l - 1, l], yr)
            g = (E + m) * R * s**l * ph[1]
            f = (2 * l + 1) * s ** (l - 1) * ph[0]
    else:
        chi = math.sqrt(-y)
        seq = bessel_i_sequence_scaled(l + 1, chi * rp)
        damp = np.exp(chi * (rp - R))
        if k < 0:
            g = seq[l] * damp
            f = -(E - m) / chi * seq[l + 1] * damp
        else:
            g = (E + m) * seq[l] * damp
            f = chi * seq[l - 1] * damp
    u = np.concatenate([[0.0], rp * g])
    v = np.concatenate([[0.0], rp * f])
    nrm = math.sqrt(simpson(u * u + v * v, R / n_points))
    sgn = 1.0 if u[-1] >= 0 else -1.0
    return r, sgn * u / nrm, sgn * v / nrm


def _root_brackets(channel, m, R, window, boundary):
    e_lo, e_hi = map(float, window)
    if not 0 <= e_lo < e_hi or not math.isfinite(e_hi):
        raise ValueError(f"invalid window {window}")
    e_lo = max(e_lo, 1e-9 * max(1.0, e_hi))
    grid = _scan_grid(m, R, e_lo, e_hi)
    vals = mit_matching_function(channel, m, R, grid, boundary)
    # a grid point hitting a root exactly is reported as a degenerate bracket
    change = np.nonzero((vals[:-1] * vals[1:] < 0) | (vals[:-1] == 0))[0]
    return [(float(grid[i]), float(grid[i + 1]), float(vals[i])) for i in change]


def count_roots_bessel(channel: RadialChannel, m: float, R: float,
                       window: tuple[float, float], boundary: int = 1) -> int:
    """Number of sign changes of the matching function in the window."""
    return len(_root_brackets(channel, m, R, window, boundary))


def solve_channel_bessel(channel: RadialChannel, m: float, R: float,
                         window: tuple[float, float], boundary: int = 1,
                         n_points: int = DEFAULT_PROFILE_POINTS,
                         profiles: bool = True,
                         check_fdm: Optional[int] = None,
                         max_roots: Optional[int] = None) -> list[BallMode]:
    """All eigenvalues of ``channel`` in the open window, by sign-change scan
    of :func:`mit_matching_function` followed by Brent refinement.

    With ``check_fdm=N`` the number of roots is compared with the Sturm count
    of the finite-difference pencil on N cells; a mismatch raises.
    ``max_roots`` keeps only the lowest roots.
    """
    _check_geometry(m, R)
    brackets = _root_brackets(channel, m, R, window, boundary)
    if check_fdm:
        expected = fdm_count(channel, m, R, window, check_fdm, boundary)
        if expected != len(brackets):
            raise RuntimeError(
                f"channel {channel.kappa_dirac}: Bessel scan found {len(brackets)} roots, "
                f"finite-difference Sturm count is {expected}; refine the scan")
    if max_roots is not None:
        brackets = brackets[:max_roots]
    F = lambda e: mit_matching_function(channel, m, R, e, boundary)
    energies = []
    for x0, x1, f0 in brackets:
        energies.append(x0 if f0 == 0.0 else find_root(F, x0, x1, tol=0.0).value)
    modes = []
    for E in energies:
        if profiles:
            r, u, v = _bessel_profile(channel, m, R, E, boundary, n_points)
        else:
            r = u = v = np.zeros(0)
        modes.append(BallMode(E, m, R, channel, r, u, v, "bessel", boundary))
    return modes


# ---------------------------------------------------------------------------
# Route B: staggered finite differences
# ---------------------------------------------------------------------------

def fdm_pencil(channel: RadialChannel, m: float, R: float, N: int, boundary: int = 1):
    """Tridiagonal pencil (diag, offdiag, mass) of the radial Dirac form.

    Unknowns are interleaved as v_{1/2}, u_1, v_{3/2}, u_2, ..., v_{N-1/2}, u_N
    (u on integer nodes, v on half nodes). The form

        m (|u|^2 - |v|^2) + 2 v (u' + kappa u / r) + b |u(R)|^2

    has v(R) = -b u(R) as natural boundary condition, so the MIT condition
    enters weakly and the pencil is exactly symmetric.
    """
    _check_geometry(m, R)
    if N < 2:
        raise ValueError("need at least two cells")
    h = R / N
    kap = channel.kappa_dirac
    rhalf = (np.arange(N) + 0.5) * h
    diag = np.empty(2 * N)
    mass = np.empty(2 * N)
    diag[0::2] = -m * h
    diag[1::2] = m * h
    diag[-1] = m * h / 2 + boundary * CONVENTIONS["fdm_boundary_penalty"]
    mass[0::2] = h
    mass[1::2] = h
    mass[-1] = h / 2
    c = h * kap / (2 * rhalf)
    off = np.empty(2 * N - 1)
    off[0::2] = 1.0 + c  # v_{i+1/2} -- u_{i+1}
    off[1::2] = -1.0 + c[1:]  # u_i -- v_{i+1/2}
    return diag, off, mass


def fdm_count(channel, m, R, window, N, boundary=1) -> int:
    """Sturm count of the pencil in [lo, hi), minus the spurious origin mode.

    For kappa < 0 the pencil carries exactly one grid mode at E = -m that is
    glued to r = 0 (see solve_channel_fdm); it is not counted.
    """
    from .numerics import _Tridiag  # local: internal helper

    d, e, M = fdm_pencil(channel, m, R, N, boundary)
    s = 1.0 / np.sqrt(M)
    t = _Tridiag(d * s * s, e * s[:-1] * s[1:])
    lo, hi = window
    n = t.count(hi) - t.count(lo)
    if channel.kappa_dirac < 0:
        tol = 1e-9 * max(1.0, abs(m))
        a, b = max(lo, -m - tol), min(hi, -m + tol)
        if a < b:
            n -= min(1, t.count(b) - t.count(a))
    return n


def _sign_changes(x: np.ndarray) -> int:
    s = np.sign(x[np.abs(x) > 1e-12 * np.max(np.abs(x))])
    return int(np.count_nonzero(s[1:] != s[:-1]))


ORIGIN_CELLS = 20


def _origin_fraction(vec: np.ndarray) -> float:
    w = vec * vec
    return float(np.sum(w[: 2 * ORIGIN_CELLS]) / np.sum(w))


def solve_channel_fdm(channel: RadialChannel, m: float, R: float, grid_size: int,
                      window: tuple[float, float], boundary: int = 1,
                      vectors: bool = True) -> list[BallMode]:
    """Eigenvalues of the staggered pencil inside ``window``.

    Eigenvectors oscillating at grid scale (more than N/2 sign changes) are
    discarded as spurious and logged, as are modes with most of their mass in
    the first ORIGIN_CELLS cells: the centrifugal term kappa/r admits discrete
    modes at E = -m supported next to r = 0 that have no continuum analogue.
    """
    N = int(grid_size)
    if N < 200:
        raise ValueError("grid_size must be at least 200")
    d, e, M = fdm_pencil(channel, m, R, N, boundary)
    dec: EigenDecomposition = eig_tridiag_pencil(d, e, M, interval=window, vectors=True)
    h = R / N
    r = np.linspace(0.0, R, N + 1)
    modes = []
    for lam, vec in zip(dec.eigenvalues, dec.eigenvectors.T):
        vh = vec[0::2]
        un = np.concatenate([[0.0], vec[1::2]])
        if _sign_changes(un) > N // 2 or _origin_fraction(vec) > 0.5:
            log.warning("discarding spurious mode E=%.6g in channel %d", lam, channel.kappa_dirac)
            continue
        vn = np.empty(N + 1)
        vn[0] = 0.0
        vn[1:-1] = 0.5 * (vh[:-1] + vh[1:])
        vn[-1] = 1.5 * vh[-1] - 0.5 * vh[-2]
        sgn = 1.0 if un[-1] >= 0 else -1.0
        nrm = math.sqrt(h * (np.sum(un[1:-1] ** 2) + 0.5 * un[-1] ** 2) + h * np.sum(vh**2))
        modes.append(BallMode(float(lam), m, R, channel, r,
                              sgn * un / nrm, sgn * vn / nrm, "fdm", boundary))
    return modes


def fdm_extrapolated(channel: RadialChannel, m: float, R: float, grid_size: int,
                     window: tuple[float, float], boundary: int = 1) -> np.ndarray:
    """Richardson extrapolation (second order) of the FDM eigenvalues from N and 2N.

    The window is widened slightly so that boundary-adjacent eigenvalues are
    matched index by index at both resolutions.
    """
    lo, hi = window
    pad = 0.05 * (hi - lo)
    wide = (max(lo - pad, 0.0), hi + pad)
    coarse = [md.energy for md in solve_channel_fdm(channel, m, R, grid_size, wide, boundary, False)]
    fine = [md.energy for md in solve_channel_fdm(channel, m, R, 2 * grid_size, wide, boundary, False)]
    n = min(len(coarse), len(fine))
    ext = (4.0 * np.array(fine[:n]) - np.array(coarse[:n])) / 3.0
    return ext[(ext > lo) & (ext < hi)]


# ---------------------------------------------------------------------------
# Spectrum assembly
# ---------------------------------------------------------------------------

def _merge_levels(channels: dict[int, list[float]]):
    items = sorted((E, k) for k, es in channels.items() for E in es)
    levels = []
    for E, k in items:
        if levels and abs(E - levels[-1][0]) <= MERGE_TOL * max(1.0, abs(E)):
            e0, mult, ks = levels[-1]
            levels[-1] = (e0, mult + 2 * abs(k), ks + (k,))
        else:
            levels.append((E, 2 * abs(k), (k,)))
    return levels


def assemble_spectrum(m: float, R: float, E_max: float, kappa_max: int,
                      boundary: int = 1, solver: str = "bessel",
                      grid_size: int = 2000) -> SpectrumResult:
    """Positive spectrum of H_m on B(0, R) in (0, E_max), merged over
    channels |kappa_D| <= kappa_max with degeneracy 2|kappa_D|.

    Raises CutoffError unless both channels at |kappa_D| = kappa_max have no
    eigenvalue in the window.
    """
    _check_geometry(m, R)
    if kappa_max < 1:
        raise ValueError("kappa_max must be >= 1")
    window = (0.0, float(E_max))
    channels: dict[int, list[float]] = {}
    for a in range(1, kappa_max + 1):
        for kap in (-a, a):
            ch = RadialChannel(kap)
            if solver == "bessel":
                es = [md.energy for md in solve_channel_bessel(ch, m, R, window, boundary, profiles=False)]
            elif solver == "fdm":
                es = list(fdm_extrapolated(ch, m, R, grid_size, window, boundary))
            else:
                raise ValueError(f"unknown solver {solver!r}")
            channels[kap] = es
    if channels[kappa_max] or channels[-kappa_max]:
        raise CutoffError(
            f"channels with |kappa| = {kappa_max} still have eigenvalues below {E_max}; "
            "increase kappa_max")
    return SpectrumResult(float(m), float(R), window, int(kappa_max), channels,
                          _merge_levels(channels), boundary)


def lowest_eigenvalue(channel: RadialChannel, m: float, R: float, boundary: int = 1) -> float:
    """Smallest positive eigenvalue of one channel (window grown until found)."""
    e_hi = abs(m) + 4.0 * (abs(channel.kappa_dirac) + 2) / R
    while True:
        modes = solve_channel_bessel(channel, m, R, (0.0, e_hi), boundary,
                                     profiles=False, max_roots=1)
        if modes:
            return modes[0].energy
        e_hi *= 2.0


def required_kappa_max(m: float, R: float, E_max: float, boundary: int = 1) -> int:
    """Smallest cutoff whose outermost channels lie entirely above E_max."""
    a = 1
    while True:
        if not any(count_roots_bessel(RadialChannel(k), m, R, (0.0, E_max), boundary)
                   for k in (a, -a)):
            return a
        a += 1


# ---------------------------------------------------------------------------
# Identities and localization
# ---------------------------------------------------------------------------

def _deriv4(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform grid."""
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def verify_square_identities(mode: BallMode, tol_norm: float = 1e-8) -> tuple[float, float]:
    """Relative residuals of the two quadratic-form identities for ``mode``.

    residual1: E^2 |psi|^2 vs |alpha.grad psi|^2 + m |psi|^2_{boundary} + m^2 |psi|^2
    residual2: |alpha.grad psi|^2 vs |grad psi|^2 + (1/2) int kappa |psi|^2,
    with kappa = 2/R on the sphere. All integrals are radial; derivatives are
    taken numerically from the sampled profile.
    """
    r, u, v = mode.r, mode.radial_u, mode.radial_v
    if r.size < 5:
        raise ValueError("mode has no sampled profile")
    h = r[1] - r[0]
    nrm = simpson(u * u + v * v, h)
    if abs(nrm - 1.0) > tol_norm:
        raise ValueError(f"mode is not normalized (norm = {nrm})")
    ch, E, m, R = mode.channel, mode.energy, mode.mass, mode.radius
    kap, lu, ll = ch.kappa_dirac, ch.l_upper, ch.l_lower
    du, dv = _deriv4(u, h), _deriv4(v, h)
    inv_r = np.zeros_like(r)
    inv_r[1:] = 1.0 / r[1:]
    a_up = du + kap * u * inv_r
    a_lo = dv - kap * v * inv_r
    dirac = a_up**2 + a_lo**2
    grad = ((du - u * inv_r) ** 2 + lu * (lu + 1) * (u * inv_r) ** 2
            + (dv - v * inv_r) ** 2 + ll * (ll + 1) * (v * inv_r) ** 2)
    dirac[0] = grad[0] = 0.0
    dirac_norm = simpson(dirac, h)
    grad_norm = simpson(grad, h)
    boundary_sq = u[-1] ** 2 + v[-1] ** 2
    lhs1 = E * E * nrm
    rhs1 = dirac_norm + m * boundary_sq + m * m * nrm
    res1 = abs(lhs1 - rhs1) / max(abs(lhs1), abs(rhs1))
    rhs2 = grad_norm + 0.5 * (2.0 / R) * boundary_sq
    res2 = abs(dirac_norm - rhs2) / max(dirac_norm, rhs2)
    return res1, res2


def agmon_decay_profile(mode: BallMode, eps0: float = 0.5) -> tuple[float, float]:
    """(slope, boundary_mass_fraction) of an in-gap mode of the negative-mass
    operator.

    slope is the least-squares slope of log(u^2 + v^2) over (R/4, 3R/4);
    boundary_mass_fraction is the mass in the layer (R - 4/|m|, R).
    """
    m, E, R = mode.mass, mode.energy, mode.radius
    if m >= 0:
        raise ValueError("Agmon profile is defined for the negative-mass operator")
    M = -m
    if not 0 < E <= M * math.sqrt(1 - eps0):
        raise ValueError(f"mode E={E} is not in the gap window (0, {M * math.sqrt(1 - eps0)}]")
    r, dens = mode.r, mode.radial_u**2 + mode.radial_v**2
    sel = (r > R / 4) & (r < 3 * R / 4) & (dens > 0)
    slope = float(np.polyfit(r[sel], np.log(dens[sel]), 1)[0])
    return slope, boundary_mass_fraction(mode, 4.0 / M)


def boundary_mass_fraction(mode: BallMode, width: float) -> float:
    r, dens = mode.r, mode.radial_u**2 + mode.radial_v**2
    h = r[1] - r[0]
    total = simpson(dens, h)
    cut = mode.radius - width
    # trapezoid on cells inside the layer, linear interpolation in the cut cell
    j = int(np.searchsorted(r, cut))
    outer = float(np.sum(0.5 * (dens[j + 1:] + dens[j:-1]) * np.diff(r[j:])))
    if 0 < j < r.size:
        t = (r[j] - cut) / h
        d_cut = dens[j] - t * (dens[j] - dens[j - 1])
        outer += 0.5 * (r[j] - cut) * (dens[j] + d_cut)
    return float(outer / total)


def agmon_rate_bound(mode: BallMode, margin: float = 0.05) -> float:
    """Lower bound 2 gamma |m| for the log-slope, gamma = sqrt(1-(E/m)^2) - margin."""
    M = abs(mode.mass)
    gamma = math.sqrt(max(1.0 - (mode.energy / M) ** 2, 0.0)) - margin
    return 2.0 * gamma * M
