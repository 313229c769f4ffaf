"""Effective boundary operator L^Gamma - kappa^2/4 + K on surfaces of revolution.

Fields are constrained pointwise to ker(B(n) - 1) by the parametrization
psi = P_n (xi, 0) with xi in C^2, and L^Gamma is the operator of the form
int |grad_s psi|^2 dGamma (componentwise surface gradient of the C^4 field).

Rotations about the axis act on spinors by U(phi) = exp(-i phi sigma_3 / 2)
(blockwise on C^4), and P_{R n} = U P_n U^{-1}. Fields of the form

    psi(theta, phi) = U(phi) P_{n0(theta)} (exp(i mu phi) c(theta), 0)

with half-integer mu (so psi is 2 pi periodic) therefore decouple, and on
each such block the form reads

    2 pi int [ |d_theta(P c)|^2 / g + |(mu - Sigma_3/2) P c|^2 / r^2 ] r sqrt(g) dtheta.

c lives on the staggered polar nodes; theta-derivatives are taken at band
edges, which keeps every block banded (two 2x2 neighbours).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .clifford import SIGMA, boundary_matrix, diagonalizer, diagonalizer_derivative
from .numerics import eig_hermitian
from .surface_geometry import SurfaceGrid

SIGMA3_4 = np.kron(np.eye(2), SIGMA[2])  # diag(sigma_3, sigma_3)
PSD_TOL = 1e-8
NYQUIST_FACTOR = 4


class ModeBudgetError(ValueError):
    """Azimuthal cutoff too small for the requested spectral window."""


def mode_label(m_phi: int) -> float:
    """Half-integer azimuthal label mu = m_phi + 1/2."""
    return m_phi + 0.5


def _node_frames(grid: SurfaceGrid, theta: np.ndarray, fd: bool):
    prof = grid.profile
    nr, nz = prof.normal_rz(theta)
    if fd:
        # centred differences of the normal along theta with step = grid step
        h = grid.dtheta
        ar, az = prof.normal_rz(theta + h)
        br, bz = prof.normal_rz(theta - h)
        dnr, dnz = (ar - br) / (2 * h), (az - bz) / (2 * h)
    else:
        dnr, dnz = prof.normal_derivative_rz(theta)
    n = np.stack([nr, np.zeros_like(nr), nz], axis=1)
    dn = np.stack([dnr, np.zeros_like(dnr), dnz], axis=1)
    return n, dn


def check_nyquist(grid: SurfaceGrid, m_phi: int) -> None:
    if abs(mode_label(m_phi)) * NYQUIST_FACTOR > grid.n_theta:
        raise ValueError(
            f"grid with n_theta={grid.n_theta} too coarse for azimuthal mode {m_phi}; "
            f"need n_theta >= {NYQUIST_FACTOR} |m_phi + 1/2|")


BAND = 3  # upper bandwidth of an interleaved block-tridiagonal 2x2 pencil


@dataclass
class EffectivePencil:
    """Banded Hermitian pencil of one azimuthal block.

    ``gradient_band`` discretizes int |grad_s psi|^2 in LAPACK upper band
    storage (entry (i, j), i <= j, at [BAND + i - j, j]); ``potential`` is the
    diagonal of (-kappa^2/4 + K) times the area weight and ``mass`` the area
    weight. Unknowns are c = (c_1, c_2) per node, interleaved.
    """

    m_phi: int
    gradient_band: np.ndarray
    potential: np.ndarray
    mass: np.ndarray

    @property
    def size(self) -> int:
        return self.mass.size

    @property
    def gradient(self) -> np.ndarray:
        n = self.size
        G = np.zeros((n, n), dtype=complex)
        for d in range(BAND + 1):
            vals = self.gradient_band[BAND - d, d:]
            G[np.arange(n - d), np.arange(d, n)] = vals
            if d:
                G[np.arange(d, n), np.arange(n - d)] = vals.conj()
        return G

    @property
    def stiffness(self) -> np.ndarray:
        return self.gradient + np.diag(self.potential)

    def band(self, a: float = 1.0, b: float = 0.0) -> np.ndarray:
        """mass^{-1/2} (a gradient + potential + b mass) mass^{-1/2}, banded."""
        s = 1.0 / np.sqrt(self.mass)
        out = a * self.gradient_band.copy()
        out[BAND] += self.potential + b * self.mass
        for d in range(BAND + 1):
            out[BAND - d, d:] *= s[: self.size - d] * s[d:]
        return out

    def hermiticity_defect(self) -> float:
        g = self.gradient
        return float(np.max(np.abs(g - g.conj().T)) / max(np.max(np.abs(g)), 1e-300))


def _sigma_dot_many(v: np.ndarray) -> np.ndarray:
    return np.einsum("ni,iab->nab", v, SIGMA)


def _add_blocks(band: np.ndarray, starts: np.ndarray, blocks: np.ndarray) -> None:
    size = blocks.shape[1]
    for p in range(size):
        for q in range(p, size):
            band[BAND - (q - p), starts + q] += blocks[:, p, q]


def assemble_effective_form(grid: SurfaceGrid, m_phi: int,
                            connection: Optional[str] = None) -> EffectivePencil:
    """Hermitian pencil of L^Gamma - kappa^2/4 + K on the block m_phi.

    ``connection`` selects how d P_n / d theta is obtained: "analytic" from the
    exact normal derivative (default for sphere and spheroid) or "fd" for
    centred differences (default for other profiles).
    """
    check_nyquist(grid, m_phi)
    if connection is None:
        connection = "analytic" if grid.profile.name in ("sphere", "spheroid") else "fd"
    if connection not in ("analytic", "fd"):
        raise ValueError(f"unknown connection mode {connection!r}")
    fd = connection == "fd"
    prof = grid.profile
    N, h = grid.n_theta, grid.dtheta
    mu = mode_label(m_phi)
    th = grid.theta
    W = grid.weights
    r = prof.r(th)
    kappa, K = grid.curvatures()
    band = np.zeros((BAND + 1, 2 * N), dtype=complex)
    I2 = np.eye(2)
    rt2 = math.sqrt(2.0)

    # azimuthal term: (mu - Sigma_3/2) P_n restricted to the first two columns
    n_nodes, _ = _node_frames(grid, th, fd)
    Gm = mu * I2 - 0.5 * SIGMA[2]
    top = np.broadcast_to(Gm / rt2, (N, 2, 2))
    bot = np.einsum("ab,nbc->nac", Gm, 1j * _sigma_dot_many(n_nodes)) / rt2
    G = np.concatenate([top, bot], axis=1)
    blocks = np.einsum("nka,nkb->nab", G.conj(), G) * (W / r**2)[:, None, None]
    _add_blocks(band, 2 * np.arange(N), blocks)

    # theta term at band edges: D = dP (c_j + c_{j+1})/2 + P (c_{j+1} - c_j)/h
    tm = np.arange(1, N) * h
    n_mid, dn_mid = _node_frames(grid, tm, fd)
    w_mid = 2 * math.pi * prof.r(tm) / prof.metric(tm) * h
    M = N - 1
    sn, sdn = 1j * _sigma_dot_many(n_mid), 1j * _sigma_dot_many(dn_mid)
    A = np.concatenate([np.broadcast_to(-I2 / h, (M, 2, 2)), 0.5 * sdn - sn / h], axis=1) / rt2
    B = np.concatenate([np.broadcast_to(I2 / h, (M, 2, 2)), 0.5 * sdn + sn / h], axis=1) / rt2
    AB = np.concatenate([A, B], axis=2)  # (M, 4, 4) acting on (c_j, c_{j+1})
    blocks = np.einsum("nka,nkb->nab", AB.conj(), AB) * w_mid[:, None, None]
    _add_blocks(band, 2 * np.arange(M), blocks)
    band[BAND] = band[BAND].real
    pot = np.repeat((-kappa**2 / 4 + K) * W, 2)
    mass = np.repeat(W, 2)
    return EffectivePencil(m_phi, band, pot, mass)


def pencil_eigenvalues(pencil: EffectivePencil, a: float = 1.0, b: float = 0.0,
                       k: Optional[int] = None, upper: Optional[float] = None) -> np.ndarray:
    """Eigenvalues of a * gradient + potential + b * mass against mass.

    Either the ``k`` smallest or all those <= ``upper``, from the Hermitian
    band matrix obtained by scaling with mass^{-1/2}.
    """
    band = pencil.band(a, b)
    if np.all(band.imag == 0):
        band = band.real
    if upper is not None:
        # the full band solve is cheaper than LAPACK's value-range selection here
        vals = scipy.linalg.eigvals_banded(band, lower=False)
        vals = vals[vals.real <= upper]
    else:
        k = pencil.size if k is None else min(int(k), pencil.size)
        if k >= pencil.size // 8:
            vals = np.sort(scipy.linalg.eigvals_banded(band, lower=False).real)[:k]
        else:
            vals = scipy.linalg.eigvals_banded(band, lower=False, select="i",
                                               select_range=(0, k - 1))
    return np.sort(vals.real)


def largest_eigenvalue(pencil: EffectivePencil) -> float:
    n = pencil.size
    return float(scipy.linalg.eigvals_banded(pencil.band(), lower=False, select="i",
                                             select_range=(n - 1, n - 1))[0])


@dataclass
class EffectiveSpectrum:
    eigenvalues: np.ndarray
    multiplicities: list[int]
    levels: list[float]
    geometry: dict
    modes: dict[int, list[float]]
    grid_sizes: tuple[int, int]
    coarse: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fine: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry,
            "grid_sizes": list(self.grid_sizes),
            "modes": [{"m_phi": m, "mu": mode_label(m), "eigenvalues": list(v)}
                      for m, v in sorted(self.modes.items())],
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "levels": [float(x) for x in self.levels],
            "multiplicities": list(self.multiplicities),
            "extrapolated": [float(x) for x in self.eigenvalues],
            "coarse": [float(x) for x in self.coarse],
            "fine": [float(x) for x in self.fine],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _mode_range(m_max: int) -> list[int]:
    # mu = m_phi + 1/2 ranges over -m_max-1/2 .. m_max+1/2
    return list(range(-m_max - 1, m_max + 1))


def _block_eigs(grid: SurfaceGrid, m_phi: int, count: Optional[int],
                upper: Optional[float], a: float = 1.0, b: float = 0.0):
    return pencil_eigenvalues(assemble_effective_form(grid, m_phi), a, b, k=count, upper=upper)


def _extrapolate(coarse: np.ndarray, fine: np.ndarray) -> np.ndarray:
    n = min(len(coarse), len(fine))
    return (4.0 * fine[:n] - coarse[:n]) / 3.0


def _cluster(values: np.ndarray, rtol: float):
    levels, mults = [], []
    for v in values:
        if levels and abs(v - levels[-1]) <= rtol * max(1.0, abs(levels[-1])):
            mults[-1] += 1
        else:
            levels.append(float(v))
            mults.append(1)
    return levels, mults


def effective_spectrum(grid: SurfaceGrid, m_phi_max: Optional[int] = None,
                       k: int = 10, upper: Optional[float] = None,
                       cluster_rtol: float = 1e-3) -> EffectiveSpectrum:
    """Lowest eigenvalues of L^Gamma - kappa^2/4 + K merged over azimuthal blocks.

    Computed on ``grid`` and on the grid with n_theta doubled, combined by
    second-order Richardson extrapolation per block. With ``upper`` set, all
    eigenvalues below it are returned instead of the k lowest. Raises
    ModeBudgetError if one of the outermost blocks still has an eigenvalue
    inside the window.
    """
    m_max = grid.m_max if m_phi_max is None else int(m_phi_max)
    fine_grid = SurfaceGrid(grid.profile, 2 * grid.n_theta, m_max)
    per_mode: dict[int, list[float]] = {}
    coarse_all, fine_all = [], []
    for mp in _mode_range(m_max):
        if upper is None:
            c = _block_eigs(grid, mp, k, None)
            f = _block_eigs(fine_grid, mp, k, None)
        else:
            # pad so that eigenvalues near the cut are matched at both resolutions
            c = _block_eigs(grid, mp, None, 1.1 * upper + 1.0)
            f = _block_eigs(fine_grid, mp, None, 1.1 * upper + 1.0)
        ext = _extrapolate(c, f)
        per_mode[mp] = [float(x) for x in ext]
        coarse_all.extend(c[: len(ext)])
        fine_all.extend(f[: len(ext)])
    allv = np.sort(np.concatenate([np.asarray(v) for v in per_mode.values()]))
    if upper is None:
        vals = allv[:k]
        cut = vals[-1]
    else:
        vals = allv[allv <= upper]
        cut = upper
    outer = [per_mode[-m_max - 1], per_mode[m_max]]
    if any(len(v) and v[0] <= cut for v in outer):
        raise ModeBudgetError(
            f"outermost azimuthal blocks (|mu| = {m_max + 0.5}) reach eigenvalue "
            f"{min(v[0] for v in outer if len(v)):.6g} <= {cut:.6g}; increase m_phi_max")
    levels, mults = _cluster(vals, cluster_rtol)
    geom = {"profile": grid.profile.name, **grid.profile.params}
    return EffectiveSpectrum(vals, mults, levels, geom, per_mode,
                             (grid.n_theta, fine_grid.n_theta),
                             np.sort(coarse_all)[: len(vals)], np.sort(fine_all)[: len(vals)])


def verify_form_lower_bound(grid: SurfaceGrid, trials: int = 100, seed: int = 0,
                            m_phi_max: Optional[int] = None) -> float:
    """Smallest relative eigenvalue of the pencil Q^Gamma - (kappa^2/4 - K).

    Returns min over blocks of lambda_min / ||gradient||, after also checking
    the form on ``trials`` random constrained fields per block (the minimum
    of both is returned). Nonnegative up to round-off when the pointwise
    inequality kappa^2/4 >= K and the form bound hold.
    """
    m_max = grid.m_max if m_phi_max is None else int(m_phi_max)
    rng = np.random.default_rng(seed)
    worst = math.inf
    for mp in _mode_range(m_max):
        pen = assemble_effective_form(grid, mp)
        scale = abs(largest_eigenvalue(pen))
        lam = pencil_eigenvalues(pen, k=1)[0]
        worst = min(worst, lam / scale)
        A = pen.stiffness
        for _ in range(trials):
            c = rng.standard_normal(A.shape[0]) + 1j * rng.standard_normal(A.shape[0])
            q = float(np.real(np.vdot(c, A @ c)))
            nrm = float(np.sum(pen.mass * np.abs(c) ** 2))
            worst = min(worst, q / nrm / scale)
    return worst


def dense_block_eigenvalues(grid: SurfaceGrid, m_phi: int, k: int) -> np.ndarray:
    """Same block eigenvalues through the dense generalized solver (cross-check)."""
    pen = assemble_effective_form(grid, m_phi)
    return eig_hermitian(pen.stiffness, np.diag(pen.mass).astype(complex), k).eigenvalues


def uniform_potential(pencil: EffectivePencil, tol: float = 1e-12) -> Optional[float]:
    """v0 if the potential equals v0 * mass (e.g. on a sphere), else None."""
    dens = pencil.potential / pencil.mass
    v0 = float(np.mean(dens))
    return v0 if np.max(np.abs(dens - v0)) <= tol * max(1.0, abs(v0)) else None


def sandwich_operators(grid: SurfaceGrid, m: float, C: float, k: Optional[int] = None,
                       upper: Optional[float] = None, m_phi_max: Optional[int] = None,
                       cache: Optional[dict] = None):
    """(lower, upper) lists mu^-_n(m), mu^+_n(m) from the perturbed pencils

        lower:  ((1 - C m^{-1/2}) L^Gamma - kappa^2/4 + K - C/m)_+^{1/2}
        upper:  ((1 + C m^{-1/2}) L^Gamma - kappa^2/4 + K + C/m)^{1/2}

    sorted with multiplicity. Either the ``k`` lowest entries or all whose
    upper inner eigenvalue is <= ``upper`` are returned. When the curvature
    potential is a constant multiple of the mass the perturbed pencils are
    affine functions of the gradient pencil and its eigenvalues are mapped
    directly; ``cache`` (a dict) then keeps them across calls with other m, C.
    """
    if not m > 0 or C < 0:
        raise ValueError("need m > 0 and C >= 0")
    m_max = grid.m_max if m_phi_max is None else int(m_phi_max)
    a_lo, b_lo = 1.0 - C / math.sqrt(m), -C / m
    a_hi, b_hi = 1.0 + C / math.sqrt(m), C / m
    cut = None if upper is None else upper
    lows, highs = [], []
    for mp in _mode_range(m_max):
        key = (grid.profile.name, tuple(sorted(grid.profile.params.items())), grid.n_theta, mp)
        if cache is not None and key in cache:
            base, v0 = cache[key]
        else:
            pen = assemble_effective_form(grid, mp)
            v0 = uniform_potential(pen)
            if v0 is not None:
                zero = EffectivePencil(mp, pen.gradient_band, np.zeros_like(pen.potential), pen.mass)
                base = pencil_eigenvalues(zero)
            else:
                base = pen
            if cache is not None:
                cache[key] = (base, v0)
        if v0 is not None:
            lo = a_lo * base + v0 + b_lo
            hi = a_hi * base + v0 + b_hi
        else:
            lo = pencil_eigenvalues(base, a_lo, b_lo)
            hi = pencil_eigenvalues(base, a_hi, b_hi)
        if cut is not None:
            keep = hi <= cut
            lo, hi = lo[keep], hi[keep]
        elif k is not None:
            lo, hi = lo[:k], hi[:k]
        lows.extend(lo)
        highs.extend(hi)
    lows, highs = np.sort(lows), np.sort(highs)
    if highs.size and highs[0] < -PSD_TOL * max(1.0, abs(highs[-1])):
        raise ArithmeticError(f"upper inner operator is not PSD (lowest eigenvalue {highs[0]:.3e})")
    if k is not None and upper is None:
        lows, highs = lows[:k], highs[:k]
    return np.sqrt(np.maximum(lows, 0.0)), np.sqrt(np.maximum(highs, 0.0))


def reconstruct_field(grid: SurfaceGrid, m_phi: int, c: np.ndarray, phi: float = 0.0) -> np.ndarray:
    """4-spinor values psi(theta_j, phi) of the block field with amplitudes c."""
    th = grid.theta
    nr, nz = grid.profile.normal_rz(th)
    mu = mode_label(m_phi)
    U = np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])
    Uhat = np.kron(np.eye(2), U)
    out = np.empty((grid.n_theta, 4), dtype=complex)
    for j in range(grid.n_theta):
        n0 = np.array([nr[j], 0.0, nz[j]])
        ct = np.concatenate([c[2 * j:2 * j + 2] * np.exp(1j * mu * phi), [0, 0]])
        out[j] = Uhat @ diagonalizer(n0) @ ct
    return out


def constraint_defect(grid: SurfaceGrid, m_phi: int, c: np.ndarray, phi: float = 0.0) -> float:
    """max_j |B(n) psi - psi| for the reconstructed field at azimuth phi."""
    psi = reconstruct_field(grid, m_phi, c, phi)
    th = grid.theta
    nr, nz = grid.profile.normal_rz(th)
    worst = 0.0
    for j in range(grid.n_theta):
        n = np.array([nr[j] * math.cos(phi), nr[j] * math.sin(phi), nz[j]])
        worst = max(worst, float(np.max(np.abs(boundary_matrix(n) @ psi[j] - psi[j]))))
    return worst


def azimuthal_leakage(grid: SurfaceGrid, m_phis: Sequence[int], n_phi: int = 32,
                      seed: int = 0) -> tuple[float, float]:
    """Independent 2D evaluation of the gradient form on fields of several blocks.

    Fields are built directly as P_{n(theta, phi)} (xi, 0) on a (theta, phi)
    grid, with xi = U(phi) exp(i mu phi) c(theta), using the rotated normals
    rather than the block reduction; phi-derivatives are spectral and
    theta-derivatives use the same staggered rule as the block pencils. Returns (leakage, consistency): the largest
    off-block coupling relative to the diagonal, and the largest relative
    mismatch of the diagonal against the block pencils.
    """
    rng = np.random.default_rng(seed)
    prof = grid.profile
    N, h = grid.n_theta, grid.dtheta
    th = grid.theta
    tm = np.arange(1, N) * h
    phis = 2 * math.pi * np.arange(n_phi) / n_phi
    freqs = np.fft.fftfreq(n_phi, d=1.0 / n_phi)
    W = grid.weights
    r = prof.r(th)
    w_mid = 2 * math.pi * prof.r(tm) / prof.metric(tm) * h
    nr, nz = prof.normal_rz(th)
    n_mid, dn_mid = _node_frames(grid, tm, grid.profile.name not in ("sphere", "spheroid"))
    rot = [np.array([[math.cos(p), -math.sin(p), 0], [math.sin(p), math.cos(p), 0], [0, 0, 1]])
           for p in phis]
    P_mid = [[diagonalizer(R @ n) for n in n_mid] for R in rot]
    dP_mid = [[diagonalizer_derivative(R @ n, R @ dn) for n, dn in zip(n_mid, dn_mid)] for R in rot]
    coeffs, fields = [], []
    for mp in m_phis:
        check_nyquist(grid, mp)
        mu = mode_label(mp)
        c = rng.standard_normal(2 * N) + 1j * rng.standard_normal(2 * N)
        xi = np.zeros((N, n_phi, 4), dtype=complex)
        psi = np.empty((N, n_phi, 4), dtype=complex)
        dpsi = np.empty((N - 1, n_phi, 4), dtype=complex)
        for k, ph in enumerate(phis):
            U = np.diag([np.exp(-0.5j * ph), np.exp(0.5j * ph)])
            for j in range(N):
                xi[j, k, :2] = U @ c[2 * j:2 * j + 2] * np.exp(1j * mu * ph)
                psi[j, k] = diagonalizer(rot[k] @ np.array([nr[j], 0.0, nz[j]])) @ xi[j, k]
            for j in range(N - 1):
                dpsi[j, k] = (dP_mid[k][j] @ (0.5 * (xi[j, k] + xi[j + 1, k]))
                              + P_mid[k][j] @ ((xi[j + 1, k] - xi[j, k]) / h))
        coeffs.append(c)
        fields.append((psi, dpsi))

    def form(a, b):
        (pa, dpa), (pb, dpb) = a, b
        t1 = np.einsum("j,jkc,jkc->", w_mid, dpa.conj(), dpb) / n_phi
        fa = np.fft.ifft(1j * freqs[None, :, None] * np.fft.fft(pa, axis=1), axis=1)
        fb = np.fft.ifft(1j * freqs[None, :, None] * np.fft.fft(pb, axis=1), axis=1)
        t2 = np.einsum("j,jkc,jkc->", W / r**2, fa.conj(), fb) / n_phi
        return t1 + t2

    G = np.array([[form(a, b) for b in fields] for a in fields])
    diag = np.abs(np.diag(G))
    off = np.abs(G - np.diag(np.diag(G)))
    leakage = float(np.max(off) / np.max(diag)) if len(fields) > 1 else 0.0
    consistency = 0.0
    for i, mp in enumerate(m_phis):
        pen = assemble_effective_form(grid, mp)
        ref = np.real(np.vdot(coeffs[i], pen.gradient @ coeffs[i]))
        consistency = max(consistency, abs(G[i, i].real - ref) / abs(ref))
    return leakage, consistency
