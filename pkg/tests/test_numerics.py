import math
from fractions import Fraction

import numpy as np
import pytest

from mitbag.numerics import (
    L_MAX, NonConvergenceError, eig_hermitian, eig_sym_tridiag, eig_tridiag_pencil,
    find_root, integrate, log_spherical_bessel_i, scan_roots, simpson,
    spherical_bessel_i, spherical_bessel_j, sturm_count,
)


def _double_factorial(n):
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def series_j(l, x, terms=50):
    """Exact rational Taylor series of j_l at rational x."""
    x = Fraction(x)
    acc = Fraction(0)
    for k in range(terms):
        acc += Fraction((-1) ** k) * (x * x / 2) ** k / (math.factorial(k) * _double_factorial(2 * l + 2 * k + 1))
    return float(acc * x**l)


def series_i(l, x, terms=60):
    x = Fraction(x)
    acc = Fraction(0)
    for k in range(terms):
        acc += (x * x / 2) ** k / (math.factorial(k) * _double_factorial(2 * l + 2 * k + 1))
    return float(acc * x**l)


def test_j_closed_forms():
    assert abs(spherical_bessel_j(0, math.pi)) <= 1e-12
    x = math.pi / 2
    assert spherical_bessel_j(1, x) == pytest.approx(4 / math.pi**2, rel=1e-13)
    assert spherical_bessel_j(0, 0.0) == 1.0
    assert spherical_bessel_j(3, 0.0) == 0.0


def test_j_series_oracle():
    assert spherical_bessel_j(5, 10.0) == pytest.approx(series_j(5, 10, 60), rel=1e-12)
    for l in (0, 1, 7, 20):
        for x in (Fraction(1, 2), 3, 12):
            assert spherical_bessel_j(l, float(x)) == pytest.approx(series_j(l, x, 80), rel=1e-12, abs=1e-300)


def test_j_closed_form_grid():
    x = np.linspace(0.05, 100, 3001)
    j0 = np.sin(x) / x
    j1 = (np.sin(x) / x - np.cos(x)) / x
    assert np.max(np.abs(spherical_bessel_j(0, x) - j0)) <= 1e-14
    assert np.max(np.abs(spherical_bessel_j(1, x) - j1)) <= 1e-14


@pytest.mark.parametrize("x", [0.5, 1.0, 5.0, 20.0])
def test_j_recurrence(x):
    j = [spherical_bessel_j(l, x) for l in range(22)]
    for l in range(1, 21):
        lhs = j[l - 1] + j[l + 1]
        rhs = (2 * l + 1) / x * j[l]
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), abs(j[l - 1]))


def test_i_values():
    assert spherical_bessel_i(0, 1.0) == pytest.approx(math.sinh(1.0), rel=1e-13)
    assert spherical_bessel_i(1, 0.0) == 0.0
    assert spherical_bessel_i(2, 3.0) == pytest.approx(series_i(2, 3), rel=1e-12)
    for l in (0, 4, 15):
        for x in (Fraction(1, 10), 2, 9):
            assert spherical_bessel_i(l, float(x)) == pytest.approx(series_i(l, x, 90), rel=1e-10)


def test_i_scaled_and_log():
    x = 150.0
    # i_0(x) e^{-x} = (1 - e^{-2x})/(2x)
    assert spherical_bessel_i(0, x, scaled=True) == pytest.approx(1 / (2 * x), rel=1e-14)
    assert log_spherical_bessel_i(0, 800.0) == pytest.approx(800 - math.log(1600), rel=1e-14)
    with pytest.raises(OverflowError):
        spherical_bessel_i(0, 800.0)
    # asymptotics i_l(x) e^{-x} -> 1/(2x) (1 - l(l+1)/(2x) + ...)
    l = 3
    x = 200.0
    two_terms = 1 - l * (l + 1) / (2 * x) + (l - 1) * l * (l + 1) * (l + 2) / (8 * x * x)
    assert spherical_bessel_i(l, x, scaled=True) * 2 * x == pytest.approx(two_terms, abs=1e-5)


def test_order_errors():
    with pytest.raises(OverflowError):
        spherical_bessel_j(L_MAX + 1, 1.0)
    with pytest.raises(ValueError):
        spherical_bessel_j(-1, 1.0)
    with pytest.raises(ValueError):
        spherical_bessel_j(1, -1.0)


def _bisect(f, lo, hi, n=200):
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_find_root_examples():
    r = find_root(lambda x: spherical_bessel_j(0, x), 3.0, 3.3)
    assert r.value == pytest.approx(math.pi, abs=1e-11)
    assert r.lo <= r.value <= r.hi
    assert find_root(lambda x: x - 1, 0, 2).value == pytest.approx(1.0, abs=1e-12)
    f = lambda x: math.tan(x) - x / (1 - x)
    oracle = _bisect(f, 1.8, 2.2)
    r = find_root(f, 1.8, 2.2, tol=0.0)
    assert r.value == pytest.approx(oracle, abs=1e-12)
    assert r.value == pytest.approx(2.04279, abs=1e-5)


def test_find_root_errors():
    with pytest.raises(ValueError):
        find_root(lambda x: x * x + 1, -1, 1)
    with pytest.raises(NonConvergenceError):
        find_root(lambda x: math.exp(x) - 1.3, 0, 1, tol=0.0, maxiter=2)


def test_scan_roots():
    roots = scan_roots(math.sin, np.linspace(0.5, 10, 40))
    assert [r.value for r in roots] == pytest.approx([math.pi, 2 * math.pi, 3 * math.pi], abs=1e-11)


def test_tridiag_small():
    dec = eig_sym_tridiag([2.0, 2, 2], [-1.0, -1], vectors=True)
    assert dec.eigenvalues == pytest.approx([2 - math.sqrt(2), 2, 2 + math.sqrt(2)], abs=1e-13)
    dec = eig_sym_tridiag(np.ones(6), np.zeros(5))
    assert dec.eigenvalues == pytest.approx(np.ones(6), abs=1e-14)
    assert sturm_count([2.0, 2, 2], [1.0, 1], 2.5) == 2


def test_tridiag_laplacian():
    N = 1000
    h = 1.0 / N
    n = N - 1
    dec = eig_sym_tridiag(np.full(n, 2 / h**2), np.full(n - 1, -1 / h**2), 3, vectors=True)
    exact = 4 * N**2 * np.sin(np.arange(1, 4) * math.pi / (2 * N)) ** 2
    assert dec.eigenvalues == pytest.approx(exact, rel=1e-11)
    assert abs(dec.eigenvalues[0] - math.pi**2) <= 1e-3 * math.pi**2
    V = dec.eigenvectors
    assert np.max(np.abs(V.T @ V - np.eye(3))) <= 1e-10
    assert dec.residual_norm <= 1e-10


def test_tridiag_interval_and_pencil():
    rng = np.random.default_rng(4)
    d, e, M = rng.standard_normal(50), rng.standard_normal(49), rng.uniform(0.5, 2, 50)
    A = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    ref = np.linalg.eigvalsh(A)
    dec = eig_sym_tridiag(d, e, interval=(-0.5, 0.5))
    assert dec.eigenvalues == pytest.approx(ref[(ref >= -0.5) & (ref < 0.5)], abs=1e-12)
    S = np.diag(1 / np.sqrt(M))
    ref = np.linalg.eigvalsh(S @ A @ S)
    dec = eig_tridiag_pencil(d, e, M, 5, vectors=True)
    assert dec.eigenvalues == pytest.approx(ref[:5], abs=1e-12)
    V = dec.eigenvectors
    assert np.max(np.abs(V.T @ np.diag(M) @ V - np.eye(5))) <= 1e-10


def test_eig_hermitian_examples():
    assert eig_hermitian(np.diag([3.0, 1, 2])).eigenvalues == pytest.approx([1, 2, 3])
    rng = np.random.default_rng(5)
    X = rng.standard_normal((4, 4))
    B = X @ X.T + 4 * np.eye(4)
    assert eig_hermitian(B, B).eigenvalues == pytest.approx(np.ones(4), abs=1e-12)


def test_eig_hermitian_char_poly_oracle():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    A = X + X.conj().T
    roots = np.sort(np.roots(np.poly(A)).real)
    dec = eig_hermitian(A)
    assert dec.eigenvalues == pytest.approx(roots, abs=1e-8)
    X = rng.standard_normal((50, 50)) + 1j * rng.standard_normal((50, 50))
    A = X + X.conj().T
    Y = rng.standard_normal((50, 50))
    B = Y @ Y.T + 50 * np.eye(50)
    dec = eig_hermitian(A, B, 10)
    V = dec.eigenvectors
    assert np.max(np.abs(V.conj().T @ B @ V - np.eye(10))) <= 1e-10
    assert dec.residual_norm <= 1e-10


def test_eig_hermitian_errors():
    with pytest.raises(ValueError):
        eig_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        eig_hermitian(np.eye(2), -np.eye(2))
    with pytest.raises(ValueError):
        eig_hermitian(np.eye(2), np.eye(3))


def test_integrate():
    assert integrate(lambda x: x**2, 0, 1, 10) == pytest.approx(1 / 3, rel=1e-14)
    assert integrate(lambda t: 2 * np.exp(-2 * t), 0, 20, 4000) == pytest.approx(1.0, abs=1e-10)
    assert integrate(lambda r: math.sin(math.pi * r) ** 2, 0, 1, 200) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        simpson(np.ones(4), 0.1)


def test_simpson_order():
    errs = [abs(integrate(np.sin, 0, math.pi, n) - 2.0) for n in (8, 16, 32, 64)]
    orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    assert min(orders) >= 3.8
