"""Numerical kernels: spherical Bessel functions, bracketed roots, eigensolvers
and composite Simpson quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

L_MAX = 400
ROOT_TOL = 1e-12
EIG_RESIDUAL_TOL = 1e-10
ROOT_MAXITER = 200


class NonConvergenceError(RuntimeError):
    """An iterative kernel ran out of its iteration budget."""


@dataclass(frozen=True)
class BracketedRoot:
    lo: float
    hi: float
    value: float
    residual: float
    iterations: int = 0


@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray]
    residual_norm: float


# ---------------------------------------------------------------------------
# Spherical Bessel functions
# ---------------------------------------------------------------------------

def _check_order(l: int) -> int:
    if int(l) != l or l < 0:
        raise ValueError(f"order must be a nonnegative integer, got {l!r}")
    if l > L_MAX:
        raise OverflowError(f"order {l} exceeds supported range l <= {L_MAX}")
    return int(l)


def _miller_start(lmax: int, xmax: float) -> int:
    return int(max(lmax, 1.2 * xmax)) + 40 + int(2.0 * math.sqrt(xmax + 1.0))


def bessel_j_sequence(lmax: int, x) -> np.ndarray:
    """j_0..j_lmax at positive x (array), shape (lmax + 1,) + x.shape.

    Miller's downward recurrence normalized by the sum rule
    sum_l (2l+1) j_l(x)^2 = 1, sign fixed by the closed forms of j_0 and j_1.
    """
    lmax_req = _check_order(lmax)
    lmax = max(lmax_req, 1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise ValueError("bessel_j_sequence requires x > 0")
    if x.size == 1:
        seq = _j_sequence_scalar(lmax, float(x.flat[0]))[: lmax_req + 1]
        return np.array(seq).reshape((lmax_req + 1,) + x.shape)
    start = _miller_start(lmax, float(x.max()))
    out = np.zeros((lmax + 1,) + x.shape)
    f_hi = np.zeros_like(x)
    f = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for l in range(start, 0, -1):
        if l <= lmax:
            out[l] = f
        norm += (2 * l + 1) * f * f
        f_lo = (2 * l + 1) / x * f - f_hi
        f_hi, f = f, f_lo
        big = np.abs(f) > 1e120
        if np.any(big):
            f[big] *= 1e-120
            f_hi[big] *= 1e-120
            norm[big] *= 1e-240
            out[:, big] *= 1e-120
    out[0] = f
    norm += f * f
    scale = 1.0 / np.sqrt(norm)
    j0 = np.sin(x) / x
    j1 = (j0 - np.cos(x)) / x
    ref = np.where(np.abs(j0) >= np.abs(j1), j0 * out[0], j1 * out[1])
    scale = np.where(ref < 0, -scale, scale)
    return (out * scale)[: lmax_req + 1]


def _j_sequence_scalar(lmax: int, x: float) -> list:
    # same algorithm as bessel_j_sequence, on plain floats (fast for one point)
    start = _miller_start(lmax, x)
    out = [0.0] * (lmax + 1)
    f_hi, f, norm = 0.0, 1e-30, 0.0
    for l in range(start, 0, -1):
        if l <= lmax:
            out[l] = f
        norm += (2 * l + 1) * f * f
        f_hi, f = f, (2 * l + 1) / x * f - f_hi
        if abs(f) > 1e120:
            f *= 1e-120
            f_hi *= 1e-120
            norm *= 1e-240
            for j in range(l, lmax + 1):
                out[j] *= 1e-120
    out[0] = f
    norm += f * f
    scale = 1.0 / math.sqrt(norm)
    j0 = math.sin(x) / x
    j1 = (j0 - math.cos(x)) / x
    ref = j0 * out[0] if abs(j0) >= abs(j1) else j1 * out[1]
    if ref < 0:
        scale = -scale
    return [v * scale for v in out]


def _i_sequence_scalar(lmax: int, x: float) -> list:
    start = _miller_start(lmax, x)
    out = [0.0] * (lmax + 1)
    f_hi, f = 0.0, 1e-300
    for l in range(start, 0, -1):
        if l <= lmax:
            out[l] = f
        f_hi, f = f, f_hi + (2 * l + 1) / x * f
        if f > 1e200:
            f *= 1e-200
            f_hi *= 1e-200
            for j in range(l, lmax + 1):
                out[j] *= 1e-200
    out[0] = f
    i0 = -math.expm1(-2.0 * x) / (2.0 * x)
    return [v * (i0 / f) for v in out]


def bessel_i_sequence_scaled(lmax: int, x) -> np.ndarray:
    """exp(-x) i_l(x) for l = 0..lmax at positive x, shape (lmax + 1,) + x.shape.

    i_l is the minimal solution of its recurrence, so the downward direction is
    stable; normalization by exp(-x) i_0(x) = (1 - exp(-2x)) / (2x).
    """
    lmax = _check_order(lmax)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise ValueError("bessel_i_sequence_scaled requires x > 0")
    if x.size == 1:
        seq = _i_sequence_scalar(lmax, float(x.flat[0]))
        return np.array(seq).reshape((lmax + 1,) + x.shape)
    start = _miller_start(lmax, float(x.max()))
    out = np.zeros((lmax + 1,) + x.shape)
    f_hi = np.zeros_like(x)
    f = np.full_like(x, 1e-300)
    for l in range(start, 0, -1):
        if l <= lmax:
            out[l] = f
        f_lo = f_hi + (2 * l + 1) / x * f
        f_hi, f = f, f_lo
        big = f > 1e200
        if np.any(big):
            f[big] *= 1e-200
            f_hi[big] *= 1e-200
            out[:, big] *= 1e-200
    out[0] = f
    i0 = -np.expm1(-2.0 * x) / (2.0 * x)
    return out * (i0 / out[0])


def _bessel_at(seq_fn, l: int, x, at_zero: float):
    l = _check_order(l)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("argument must be nonnegative")
    flat = np.atleast_1d(xa).ravel()
    res = np.full(flat.shape, at_zero if l == 0 else 0.0)
    pos = flat > 0
    if np.any(pos):
        res[pos] = seq_fn(l, flat[pos])[l]
    res = res.reshape(xa.shape)
    return float(res) if res.ndim == 0 else res


def spherical_bessel_j(l: int, x):
    """Spherical Bessel function j_l(x) for x >= 0 (scalar or array)."""
    return _bessel_at(bessel_j_sequence, l, x, 1.0)


def spherical_bessel_i(l: int, x, scaled: bool = False):
    """Modified spherical Bessel function i_l(x) = i^{-l} j_l(ix).

    With ``scaled=True`` returns exp(-x) i_l(x), which stays finite for large
    arguments; the unscaled value raises OverflowError when it would overflow.
    """
    val = _bessel_at(bessel_i_sequence_scaled, l, x, 1.0)
    if scaled:
        return val
    xa = np.asarray(x, dtype=float)
    if np.any(xa > 700.0):
        raise OverflowError("i_l(x) overflows for x > 700; use scaled=True")
    return val * np.exp(xa) if isinstance(val, np.ndarray) else val * math.exp(float(xa))


def log_spherical_bessel_i(l: int, x):
    """log i_l(x) for x > 0, valid far beyond the overflow range."""
    xa = np.asarray(x, dtype=float)
    return np.log(spherical_bessel_i(l, xa, scaled=True)) + xa


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def find_root(f: Callable[[float], float], lo: float, hi: float,
              tol: float = ROOT_TOL, maxiter: int = ROOT_MAXITER) -> BracketedRoot:
    """Brent's method on a sign-changing bracket [lo, hi].

    Stops when |f| <= tol or the bracket is narrower than tol * max(1, |x|).
    """
    a, b = float(lo), float(hi)
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return BracketedRoot(a, a, a, 0.0)
    if fb == 0.0:
        return BracketedRoot(b, b, b, 0.0)
    if fa * fb > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]: f = {fa:.3e}, {fb:.3e}")
    c, fc = a, fa
    d = e = b - a
    for it in range(1, maxiter + 1):
        if fb * fc > 0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        width_tol = 2.0 * np.finfo(float).eps * abs(b) + 0.5 * tol * max(1.0, abs(b))
        m = 0.5 * (c - b)
        if abs(fb) <= tol or abs(m) <= width_tol:
            lo_, hi_ = sorted((b, c))
            return BracketedRoot(lo_, hi_, b, abs(fb), it)
        if abs(e) >= width_tol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p, q = 2.0 * m * s, 1.0 - s
            else:
                q, r = fa / fc, fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * m * q - abs(width_tol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b += d if abs(d) > width_tol else math.copysign(width_tol, m)
        fb = f(b)
    raise NonConvergenceError(f"find_root: no convergence after {maxiter} iterations")


def scan_roots(f: Callable[[float], float], grid: Sequence[float],
               tol: float = ROOT_TOL) -> list[BracketedRoot]:
    """All sign changes of f on consecutive grid points, refined by find_root."""
    xs = list(grid)
    vals = [f(x) for x in xs]
    roots = []
    for x0, x1, f0, f1 in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if f0 == 0.0:
            roots.append(BracketedRoot(x0, x0, x0, 0.0))
        elif f0 * f1 < 0:
            roots.append(find_root(f, x0, x1, tol))
    return roots


# ---------------------------------------------------------------------------
# Eigensolvers
# ---------------------------------------------------------------------------

def sturm_count(diag, offdiag_sq, x: float, pivmin: float = 1e-300) -> int:
    """Number of eigenvalues of the symmetric tridiagonal matrix below x.

    ``offdiag_sq`` holds squared off-diagonal entries. Counts negative pivots
    of the LDL^T factorization of T - x I.
    """
    q = diag[0] - x
    if q == 0.0:
        q = -pivmin
    count = 1 if q < 0 else 0
    for d, e2 in zip(diag[1:], offdiag_sq):
        q = d - x - e2 / q
        if q == 0.0:
            q = -pivmin
        if q < 0:
            count += 1
    return count


class _Tridiag:
    def __init__(self, diag, offdiag):
        self.d = np.asarray(diag, dtype=float)
        self.e = np.asarray(offdiag, dtype=float)
        n = self.d.size
        if self.e.size != max(n - 1, 0):
            raise ValueError(f"offdiag must have length {n - 1}, got {self.e.size}")
        self.n = n
        self._dl = self.d.tolist()
        self._e2 = (self.e * self.e).tolist()
        radius = np.zeros(n)
        radius[:-1] += np.abs(self.e)
        radius[1:] += np.abs(self.e)
        self.lower = float(np.min(self.d - radius))
        self.upper = float(np.max(self.d + radius))
        self.norm = max(abs(self.lower), abs(self.upper), 1e-300)
        self.pivmin = max(1e-300, float(np.max(self._e2, initial=0.0)) * 1e-300)

    def count(self, x: float) -> int:
        return sturm_count(self._dl, self._e2, x, self.pivmin)

    def matvec(self, v):
        out = self.d * v
        out[:-1] += self.e * v[1:]
        out[1:] += self.e * v[:-1]
        return out

    def solve_shifted(self, sigma: float, b):
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.e
        ab[1] = self.d - sigma
        ab[2, :-1] = self.e
        return scipy.linalg.solve_banded((1, 1), ab, b, check_finite=False)


def _bisect_indices(t: _Tridiag, indices, tol: float, maxiter: int = 200):
    """Brackets [lo, hi] with count(lo) <= j < count(hi) for each index j."""
    pad = 1e-12 * t.norm + 1e-300
    brackets = {j: [t.lower - pad, t.upper + pad] for j in indices}
    for j in indices:
        lo, hi = brackets[j]
        for _ in range(maxiter):
            if hi - lo <= tol * max(1.0, abs(lo), abs(hi)):
                break
            mid = 0.5 * (lo + hi)
            c = t.count(mid)
            for k, br in brackets.items():
                if c <= k:
                    br[0] = max(br[0], mid)
                else:
                    br[1] = min(br[1], mid)
            lo, hi = brackets[j]
        else:
            raise NonConvergenceError("Sturm bisection did not converge")
    return brackets


def eig_sym_tridiag(diag, offdiag, k: Optional[int] = None, *,
                    interval: Optional[tuple[float, float]] = None,
                    vectors: bool = False, rtol: float = 1e-7,
                    maxiter: int = 50) -> EigenDecomposition:
    """Eigenpairs of a real symmetric tridiagonal matrix.

    Selects either the ``k`` smallest eigenvalues or all eigenvalues in the
    half-open ``interval`` [lo, hi). Sturm bisection isolates each eigenvalue
    to relative width ``rtol``; shifted inverse iteration then yields the
    eigenvector and the Rayleigh quotient refines the eigenvalue to
    working precision (falling back to full bisection if it escapes the
    bracket).
    """
    t = _Tridiag(diag, offdiag)
    if interval is not None:
        lo, hi = map(float, interval)
        indices = list(range(t.count(lo), t.count(hi)))
    else:
        k = t.n if k is None else int(k)
        if not 0 <= k <= t.n:
            raise ValueError(f"k = {k} outside [0, {t.n}]")
        indices = list(range(k))
    if not indices:
        return EigenDecomposition(np.zeros(0), np.zeros((t.n, 0)) if vectors else None, 0.0)
    brackets = _bisect_indices(t, indices, rtol)
    vals = np.empty(len(indices))
    vecs = np.empty((t.n, len(indices)))
    rng = np.random.default_rng(12345)
    worst = 0.0
    for pos, j in enumerate(indices):
        lo, hi = brackets[j]
        sigma = 0.5 * (lo + hi)
        v = rng.standard_normal(t.n)
        lam = sigma
        for it in range(maxiter):
            try:
                w = t.solve_shifted(sigma, v)
            except (np.linalg.LinAlgError, ValueError):
                sigma += 1e-3 * (hi - lo)
                continue
            for q in range(pos):
                if abs(vals[q] - lam) < 1e-6 * t.norm:
                    w -= vecs[:, q] * (vecs[:, q] @ w)
            v = w / np.linalg.norm(w)
            lam = float(v @ t.matvec(v))
            res = np.linalg.norm(t.matvec(v) - lam * v)
            # the residual test alone is relative to ||T||; a few extra
            # Rayleigh steps make small eigenvectors accurate too
            if res <= 0.1 * EIG_RESIDUAL_TOL * t.norm and it >= 2:
                break
            if lo <= lam <= hi:
                sigma = lam
        else:
            raise NonConvergenceError(f"inverse iteration failed for eigenvalue #{j}")
        if not lo - 1e-12 * t.norm <= lam <= hi + 1e-12 * t.norm:
            fine = _bisect_indices(t, [j], 4 * np.finfo(float).eps)[j]
            lam = 0.5 * (fine[0] + fine[1])
            res = np.linalg.norm(t.matvec(v) - lam * v)
        vals[pos] = lam
        vecs[:, pos] = v
        worst = max(worst, res / t.norm)
    order = np.argsort(vals, kind="stable")
    return EigenDecomposition(vals[order], vecs[:, order] if vectors else None, worst)


def eig_tridiag_pencil(diag, offdiag, mass, k: Optional[int] = None, *,
                       interval=None, vectors: bool = False,
                       rtol: float = 1e-7) -> EigenDecomposition:
    """Generalized problem T v = lam M v with M diagonal positive.

    Reduced to the standard tridiagonal problem M^{-1/2} T M^{-1/2}; returned
    eigenvectors are M-orthonormal.
    """
    mass = np.asarray(mass, dtype=float)
    if np.any(mass <= 0):
        raise ValueError("mass matrix must be positive definite")
    s = 1.0 / np.sqrt(mass)
    d = np.asarray(diag, dtype=float) * s * s
    e = np.asarray(offdiag, dtype=float) * s[:-1] * s[1:]
    dec = eig_sym_tridiag(d, e, k, interval=interval, vectors=vectors, rtol=rtol)
    if vectors:
        dec.eigenvectors = dec.eigenvectors * s[:, None]
    return dec


def eig_hermitian(a, b=None, k: Optional[int] = None) -> EigenDecomposition:
    """k smallest eigenpairs of A v = lam B v (B = I when absent).

    Dense LAPACK driver; B must be Hermitian positive definite.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A must be square")
    n = a.shape[0]
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a - a.conj().T)) > 1e-12 * scale:
        raise ValueError("A is not Hermitian")
    if b is not None:
        b = np.asarray(b)
        if b.shape != a.shape:
            raise ValueError(f"dimension mismatch: A {a.shape}, B {b.shape}")
        try:
            np.linalg.cholesky(b)
        except np.linalg.LinAlgError as exc:
            raise ValueError("B is not positive definite") from exc
    k = n if k is None else int(k)
    if not 0 < k <= n:
        raise ValueError(f"k = {k} outside [1, {n}]")
    vals, vecs = scipy.linalg.eigh(a, b, subset_by_index=(0, k - 1))
    bv = vecs if b is None else b @ vecs
    res = np.linalg.norm(a @ vecs - bv * vals, axis=0)
    return EigenDecomposition(vals, vecs, float(np.max(res)) / scale)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on n + 1 equispaced nodes (n even)."""
    if n < 2 or n % 2:
        raise ValueError(f"Simpson's rule needs an even number of intervals, got {n}")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def simpson(y, h: float) -> float:
    y = np.asarray(y)
    return float(simpson_weights(y.shape[0] - 1, h) @ y)


def integrate(f: Callable, a: float, b: float, n: int = 1000) -> float:
    """Composite Simpson approximation of the integral of f over [a, b]."""
    if not a < b:
        raise ValueError("integrate requires a < b")
    x = np.linspace(a, b, n + 1)
    try:
        y = np.asarray(f(x), dtype=float)
        if y.shape != x.shape:
            raise ValueError
    except (TypeError, ValueError):
        y = np.array([f(float(t)) for t in x])
    return simpson(y, (b - a) / n)
