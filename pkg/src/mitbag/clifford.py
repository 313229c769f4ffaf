"""4x4 Dirac algebra in the standard representation.

beta = diag(1_2, -1_2), gamma5 and alpha_k are block off-diagonal with blocks
1_2 and sigma_k. Everything here is exact up to double-precision round-off and
acts as the algebraic ground truth for the other modules.
"""
from __future__ import annotations

import numpy as np

IDENTITY_TOL = 1e-13
UNIT_TOL = 1e-14

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

BETA = np.block([[I2, _Z2], [_Z2, -I2]])
GAMMA5 = np.block([[_Z2, I2], [I2, _Z2]])
ALPHA = np.array([np.block([[_Z2, s], [s, _Z2]]) for s in SIGMA])


def check_unit(n, tol: float = UNIT_TOL) -> np.ndarray:
    """Return ``n`` as a float array, raising ValueError unless |n| = 1."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {n.shape}")
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"normal must have unit length, |n| = {norm!r}")
    return n


def sigma_dot(x) -> np.ndarray:
    x = np.asarray(x)
    return np.tensordot(x, SIGMA, axes=(0, 0))


def alpha_dot(x) -> np.ndarray:
    """sum_j alpha_j x_j; Hermitian for real x."""
    x = np.asarray(x)
    return np.tensordot(x, ALPHA, axes=(0, 0))


def boundary_matrix(n) -> np.ndarray:
    """MIT bag boundary matrix B(n) = -i beta (alpha . n)."""
    n = check_unit(n)
    return -1j * BETA @ alpha_dot(n)


def diagonalizer(n) -> np.ndarray:
    """Unitary P_n with P_n^{-1} B(n) P_n = beta.

    The first two columns span ker(B(n) - 1), the last two ker(B(n) + 1).
    """
    n = check_unit(n)
    isn = 1j * sigma_dot(n)
    return np.block([[I2, isn], [isn, I2]]) / np.sqrt(2.0)


def diagonalizer_derivative(n, dn) -> np.ndarray:
    """Directional derivative of P_n when the normal moves with velocity dn."""
    isdn = 1j * sigma_dot(dn)
    return np.block([[_Z2, isdn], [isdn, _Z2]]) / np.sqrt(2.0)


def projector_plus(n) -> np.ndarray:
    """(1 - B(n))/2, the formula printed for the boundary projection P_+.

    Note that this projects onto ker(B + 1), i.e. it annihilates the MIT
    subspace ker(B - 1). Use :func:`mit_projector` for the projection onto
    ker(B - 1).
    """
    return 0.5 * (I4 - boundary_matrix(n))


def projector_minus(n) -> np.ndarray:
    """(1 + B(n))/2; complementary to :func:`projector_plus`."""
    return 0.5 * (I4 + boundary_matrix(n))


def mit_projector(n) -> np.ndarray:
    """Orthogonal projection onto ker(B(n) - 1), the MIT boundary subspace."""
    return projector_minus(n)


def discrete_symmetry(which: str, psi) -> np.ndarray:
    """Apply C (charge conjugation), T (time reversal) or CT to a 4-spinor."""
    psi = np.asarray(psi, dtype=complex)
    if which == "C":
        return 1j * BETA @ ALPHA[1] @ psi.conj()
    if which == "T":
        return -1j * GAMMA5 @ ALPHA[1] @ psi.conj()
    if which == "CT":
        return BETA @ GAMMA5 @ psi
    raise ValueError(f"unknown symmetry {which!r}; expected 'C', 'T' or 'CT'")


def _check_frame(n, n1, n2, tol: float = 1e-12):
    frame = np.array([n, n1, n2], dtype=float)
    if frame.shape != (3, 3):
        raise ValueError("frame must consist of three 3-vectors")
    if np.max(np.abs(frame @ frame.T - np.eye(3))) > tol:
        raise ValueError("frame is not orthonormal")
    if np.max(np.abs(np.cross(n2, n1) + n)) > tol:
        raise ValueError("frame must satisfy n'' x n' = -n")
    return frame


def curvature_commutator_core(frame, lam1: float, lam2: float) -> np.ndarray:
    """lam1 (alpha.n'')(alpha.n') - lam2 (alpha.n')(alpha.n'').

    ``frame`` is (n, n', n'') with n', n'' principal directions carrying the
    principal curvatures lam1, lam2. The result equals
    -i (lam1 + lam2) gamma5 (alpha . n), see :func:`curvature_commutator_closed_form`.
    """
    n, n1, n2 = _check_frame(*frame)
    a1, a2 = alpha_dot(n1), alpha_dot(n2)
    return lam1 * a2 @ a1 - lam2 * a1 @ a2


def curvature_commutator_closed_form(n, lam1: float, lam2: float) -> np.ndarray:
    return -1j * (lam1 + lam2) * GAMMA5 @ alpha_dot(n)


def random_frame(rng: np.random.Generator) -> np.ndarray:
    """Random orthonormal (n, n', n'') with n'' x n' = -n.

    QR of a Gaussian 3x3 matrix, with the sign of the last column flipped when
    needed to fix the handedness.
    """
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    n, n1, n2 = q.T
    if np.dot(np.cross(n2, n1), n) > 0:
        n2 = -n2
    return np.array([n, n1, n2])


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def is_hermitian(a: np.ndarray, tol: float = IDENTITY_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def is_unitary(a: np.ndarray, tol: float = IDENTITY_TOL) -> bool:
    return bool(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))) <= tol)
