"""Weighted Robin Laplacian on (0, 1/hbar), the normal fibre of the tube model.

The operator is -a^{-1} (a u')' in L^2(a dtau) with

    a(tau) = 1 - hbar^2 kappa tau + hbar^4 K tau^2,

Robin condition u'(0) = (-1 + hbar^2 kappa / 2) u(0) imposed weakly through
the form  int a |u'|^2 + (-1 + hbar^2 kappa/2) |u(0)|^2, and u(1/hbar) = 0.
Discretization: P1 elements, element stiffness with the exact integral of a,
lumped (trapezoid) mass weighted by a. Second order; Richardson optional.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import eig_tridiag_pencil

HBAR_SWEEP = (0.4, 0.2, 0.1, 0.05)
DEFAULT_STEP = 1e-3  # target cell size in tau
BO_STEP = 1e-3


@dataclass(frozen=True)
class ModelParams:
    hbar: float
    kappa: float = 0.0
    gauss: float = 0.0
    bound: float = 10.0
    flat: bool = False  # a == 1 and Robin coefficient -1 (curvature switched off)

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not (abs(self.kappa) < self.bound and abs(self.gauss) < self.bound):
            raise ValueError(f"|kappa|, |K| must be below the bound {self.bound}")
        lo, _ = self.weight_range()
        if lo <= 0:
            raise ValueError(f"weight a(tau) reaches {lo:.3g} <= 0 on (0, 1/hbar)")

    @property
    def length(self) -> float:
        return 1.0 / self.hbar

    def weight(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if self.flat:
            return np.ones_like(tau)
        h2 = self.hbar**2
        return 1.0 - h2 * self.kappa * tau + h2 * h2 * self.gauss * tau * tau

    def weight_range(self) -> tuple[float, float]:
        L = self.length
        cand = [0.0, L]
        if not self.flat and self.gauss != 0:
            t = self.kappa / (2 * self.hbar**2 * self.gauss)
            if 0 < t < L:
                cand.append(t)
        vals = self.weight(np.array(cand))
        return float(vals.min()), float(vals.max())

    @property
    def in_regime(self) -> bool:
        """True when a stays in (1/2, 3/2), the small-curvature regime."""
        lo, hi = self.weight_range()
        return lo > 0.5 and hi < 1.5

    @property
    def robin(self) -> float:
        return -1.0 if self.flat else -1.0 + self.hbar**2 * self.kappa / 2

    @property
    def predicted(self) -> float:
        """-1 + hbar^4 (K - kappa^2/4)."""
        return -1.0 + self.hbar**4 * (self.gauss - self.kappa**2 / 4)

    def shifted(self, dkappa: float = 0.0, dK: float = 0.0) -> "ModelParams":
        return ModelParams(self.hbar, self.kappa + dkappa, self.gauss + dK, self.bound, self.flat)


@dataclass
class ModelEigenpair:
    lambda_: float
    tau: np.ndarray
    u: np.ndarray  # nodal values including u(1/hbar) = 0
    weight: np.ndarray

    def norm(self) -> float:
        return float(np.sum(_lumped(self.tau, self.weight) * self.u**2))

    def robin_defect(self, robin: float) -> float:
        """(u' - robin u)(0) with a one-sided second-order derivative."""
        h = self.tau[1] - self.tau[0]
        du0 = (-3 * self.u[0] + 4 * self.u[1] - self.u[2]) / (2 * h)
        return float(du0 - robin * self.u[0])


def _lumped(tau: np.ndarray, a: np.ndarray) -> np.ndarray:
    h = np.diff(tau)
    w = np.zeros_like(tau)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w * a


def default_grid_size(hbar: float, step: float = DEFAULT_STEP) -> int:
    return max(500, int(math.ceil(1.0 / (hbar * step))))


def assemble(params: ModelParams, N: int):
    """(diag, offdiag, mass, tau) of the pencil on nodes 0..N-1 (node N is Dirichlet)."""
    if N < 500:
        raise ValueError("grid_size must be at least 500")
    L = params.length
    tau = np.linspace(0.0, L, N + 1)
    h = L / N
    a = params.weight(tau)
    a_mid = params.weight(0.5 * (tau[:-1] + tau[1:]))
    elem = (a[:-1] + 4 * a_mid + a[1:]) / 6.0  # exact mean of the quadratic weight
    k = elem / h
    diag = np.zeros(N + 1)
    diag[:-1] += k
    diag[1:] += k
    diag[0] += params.robin
    off = -k
    mass = _lumped(tau, a)
    return diag[:-1], off[:-1], mass[:-1], tau


def _solve(params: ModelParams, N: int, k: int):
    d, e, M, tau = assemble(params, N)
    dec = eig_tridiag_pencil(d, e, M, k, vectors=True, rtol=1e-4)
    a = params.weight(tau)
    stiff = -e  # element stiffness k_e for elements 0..N-2; the last touches the Dirichlet node
    k_last = d[-1] - stiff[-1]
    pairs = []
    for v in dec.eigenvectors.T:
        u = np.concatenate([v, [0.0]])
        if u[0] < 0:
            u = -u
        u /= math.sqrt(np.sum(M * v * v))
        # Rayleigh quotient from differences avoids cancellation in v.T @ T @ v
        du = np.diff(u)
        energy = np.sum(stiff * du[:-1] ** 2) + k_last * du[-1] ** 2 + params.robin * u[0] ** 2
        pairs.append(ModelEigenpair(float(energy), tau, u, a))
    pairs.sort(key=lambda p: p.lambda_)
    return pairs


def solve_model(params: ModelParams, grid_size: Optional[int] = None, k: int = 2,
                richardson: bool = True) -> list[ModelEigenpair]:
    """k lowest eigenpairs; with ``richardson`` eigenvalues are extrapolated
    from N and 2N and eigenfunctions come from the finer grid."""
    N = default_grid_size(params.hbar) if grid_size is None else int(grid_size)
    coarse = _solve(params, N, k)
    if not richardson:
        return coarse
    fine = _solve(params, 2 * N, k)
    out = []
    for c, f in zip(coarse, fine):
        lam = (4.0 * f.lambda_ - c.lambda_) / 3.0
        out.append(ModelEigenpair(lam, f.tau, f.u, f.weight))
    return out


def refinement_ratios(params: ModelParams, N: int, levels: int = 3) -> list[float]:
    """|lam(2N) - lam(N)| / |lam(4N) - lam(2N)|, ... (4 for a second-order scheme)."""
    lams = [_solve(params, N * 2**j, 1)[0].lambda_ for j in range(levels + 1)]
    diffs = [abs(b - a) for a, b in zip(lams[:-1], lams[1:])]
    return [d0 / d1 for d0, d1 in zip(diffs[:-1], diffs[1:])]


def ground_state_distance(params: ModelParams, grid_size: Optional[int] = None,
                          pair: Optional[ModelEigenpair] = None) -> float:
    """||u - sqrt(2) e^{-tau}||_{H^1(a dtau)} for the normalized ground state, u(0) > 0."""
    if pair is None:
        pair = solve_model(params, grid_size, k=1)[0]
    tau, u = pair.tau, pair.u
    psi0 = math.sqrt(2.0) * np.exp(-tau)
    w = _lumped(tau, pair.weight)
    l2 = np.sum(w * (u - psi0) ** 2)
    h = np.diff(tau)
    mid = 0.5 * (tau[:-1] + tau[1:])
    du = np.diff(u) / h
    # exact cell average of psi0' keeps the comparison second order
    dpsi = np.diff(psi0) / h
    h1 = np.sum(h * params.weight(mid) * (du - dpsi) ** 2)
    return float(math.sqrt(l2 + h1))


def born_oppenheimer_correction(params: ModelParams, dkappa: float = BO_STEP,
                                dK: float = BO_STEP, grid_size: Optional[int] = None,
                                rtol: float = 0.05) -> float:
    """||d_kappa u + d_K u||^2 in L^2(a dtau), central differences.

    Unit surface gradients of kappa and K are assumed, so this is a proxy for
    the Born-Oppenheimer term. The estimate is repeated with halved steps; a
    relative change above ``rtol`` means the response is not in its linear
    regime and raises ValueError.
    """
    N = default_grid_size(params.hbar) if grid_size is None else int(grid_size)

    def estimate(sk, sK):
        up = _solve(params.shifted(sk, sK), N, 1)[0]
        dn = _solve(params.shifted(-sk, -sK), N, 1)[0]
        base = _solve(params, N, 1)[0]
        deriv = (up.u - dn.u) / 2.0  # derivative along (1, 1) times step
        step = max(sk, sK)
        w = _lumped(base.tau, base.weight)
        return float(np.sum(w * (deriv / step) ** 2))

    if params.flat:
        return estimate(dkappa, dK)
    v1 = estimate(dkappa, dK)
    v2 = estimate(dkappa / 2, dK / 2)
    scale = max(abs(v1), abs(v2))
    if scale > 1e-28 and abs(v1 - v2) > rtol * scale:
        raise ValueError(f"finite-difference step too large: {v1:.3e} vs {v2:.3e} at half step")
    return v2


@dataclass
class SweepRow:
    hbar: float
    kappa: float
    gauss: float
    lambda1: float
    lambda2: float
    predicted: float
    residual: float
    h1_distance: float
    bo: float
    in_regime: bool = True

    def as_list(self):
        return [self.hbar, self.kappa, self.gauss, self.lambda1, self.lambda2,
                self.predicted, self.residual, self.h1_distance, self.bo]


CSV_HEADER = ["hbar", "kappa", "K", "lambda1", "lambda2", "predicted", "residual",
              "h1_distance", "bo_correction"]


def sweep(kappa: float, gauss: float, hbars: Sequence[float] = HBAR_SWEEP,
          with_bo: bool = True) -> list[SweepRow]:
    if list(hbars) != sorted(hbars, reverse=True):
        raise ValueError("hbar sweep must be descending")
    rows = []
    for hb in hbars:
        p = ModelParams(hb, kappa, gauss)
        pairs = solve_model(p, k=2)
        dist = ground_state_distance(p, pair=pairs[0])
        bo = born_oppenheimer_correction(p) if with_bo else float("nan")
        rows.append(SweepRow(hb, kappa, gauss, pairs[0].lambda_, pairs[1].lambda_,
                             p.predicted, abs(pairs[0].lambda_ - p.predicted), dist, bo,
                             p.in_regime))
    return rows


def write_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([repr(float(v)) for v in r.as_list()])


def check_expansion(kappa: float, gauss: float, hbars: Sequence[float] = HBAR_SWEEP,
                    min_order: float = 5.5, with_bo: bool = False):
    """AsymptoticReport for |lambda_1 - (-1 + hbar^4 (K - kappa^2/4))| over the sweep."""
    from .asymptotics import AsymptoticReport, fit_order

    rows = sweep(kappa, gauss, hbars, with_bo=with_bo)
    xs = [r.hbar for r in rows]
    res = [r.residual for r in rows]
    fit = fit_order(xs, res)
    gap_ok = rows[-1].lambda2 >= -0.5
    h1_ratio = [r.h1_distance / r.hbar**2 for r in rows]
    checks = {
        "order": {"value": fit.order, "threshold": min_order, "pass": fit.order >= min_order},
        "lambda2_at_smallest_hbar": {"value": rows[-1].lambda2, "threshold": -0.5, "pass": gap_ok},
        "h1_distance_over_hbar2_max": {"value": max(h1_ratio), "pass": bool(np.all(np.isfinite(h1_ratio)))},
    }
    return AsymptoticReport(
        theorem="robin-model",
        variable="hbar",
        sweep=xs,
        residuals=res,
        order=fit.order,
        constant=fit.constant,
        checks=checks,
        tolerances={"min_order": min_order, "residual_floor": fit.floor},
        inputs={"kappa": kappa, "K": gauss, "hbar": list(xs)},
        notes=fit.notes,
        extra={"rows": [dict(zip(CSV_HEADER, r.as_list())) for r in rows]},
    )
