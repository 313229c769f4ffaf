import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mitbag.ball_dirac import (
    CONVENTIONS, CutoffError, RadialChannel, agmon_decay_profile, agmon_rate_bound,
    assemble_spectrum, boundary_mass_fraction, count_roots_bessel, fdm_count,
    fdm_extrapolated, fdm_pencil, lowest_eigenvalue, mit_matching_function,
    required_kappa_max, solve_channel_bessel, solve_channel_fdm, verify_square_identities,
)
from mitbag.numerics import spherical_bessel_j

MASSLESS_GROUND = 2.042786942738  # root of tan x = x / (1 - x)


def massless_root():
    # independent oracle: bisection on j0(x) - j1(x)
    f = lambda x: spherical_bessel_j(0, x) - spherical_bessel_j(1, x)
    lo, hi = 1.5, 2.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_channel_indices():
    ch = RadialChannel(-1)
    assert (ch.l_upper, ch.l_lower, ch.degeneracy) == (0, 1, 2)
    ch = RadialChannel(2)
    assert (ch.l_upper, ch.l_lower, ch.degeneracy) == (2, 1, 4)
    with pytest.raises(ValueError):
        RadialChannel(0)


def test_convention_table():
    """Frozen sign conventions reproduce the three calibration targets."""
    assert CONVENTIONS == {"lower_component_sign": "sign(kappa)", "mit_ratio": -1.0,
                           "fdm_boundary_penalty": 1.0}
    root = massless_root()
    assert root == pytest.approx(MASSLESS_GROUND, abs=1e-11)
    assert lowest_eigenvalue(RadialChannel(-1), 0.0, 1.0) == pytest.approx(root, abs=1e-10)
    assert math.tan(root) == pytest.approx(root / (1 - root), rel=1e-9)
    # Dirichlet limit: k R -> pi as m grows
    E = lowest_eigenvalue(RadialChannel(-1), 100.0, 1.0)
    assert math.sqrt(E * E - 100.0**2) == pytest.approx(math.pi, rel=2e-2)
    fd = fdm_extrapolated(RadialChannel(-1), 0.0, 1.0, 1000, (0.1, 3.0))
    assert fd[0] == pytest.approx(root, abs=1e-6)


def test_massless_matching_proportional():
    ch = RadialChannel(-1)
    E = np.linspace(0.3, 9.0, 40)
    F = mit_matching_function(ch, 0.0, 1.0, E)
    G = spherical_bessel_j(0, E) - spherical_bessel_j(1, E)
    # nonvanishing factor: same sign everywhere and roots shared
    assert np.all(np.sign(F) == np.sign(G))


def test_massless_second_root_and_kappa_plus():
    modes = solve_channel_bessel(RadialChannel(-1), 0.0, 1.0, (0.0, 6.0), profiles=False)
    assert modes[1].energy == pytest.approx(5.396, abs=1e-3)
    assert lowest_eigenvalue(RadialChannel(1), 0.0, 1.0) == pytest.approx(3.8115386478, abs=1e-8)


def test_matching_continuous_across_threshold():
    ch = RadialChannel(-2)
    m = 7.0
    eps = 1e-7
    lo = mit_matching_function(ch, m, 1.0, m - eps)
    hi = mit_matching_function(ch, m, 1.0, m + eps)
    at = mit_matching_function(ch, m, 1.0, m)
    assert abs(lo - hi) <= 1e-5 * max(1.0, abs(at))
    assert abs(lo - at) <= 1e-5 * max(1.0, abs(at))


def test_matching_rejects_bad_input():
    ch = RadialChannel(1)
    with pytest.raises(ValueError):
        mit_matching_function(ch, 0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        mit_matching_function(ch, 0.0, 1.0, -1.0)


@pytest.mark.parametrize("m", [0.0, 10.0, -10.0])
@pytest.mark.parametrize("kappa", [-2, -1, 1, 2])
def test_cross_solver_agreement(m, kappa):
    ch = RadialChannel(kappa)
    window = (0.0, abs(m) + 8.0)
    bessel = [md.energy for md in solve_channel_bessel(ch, m, 1.0, window, profiles=False)]
    fdm = fdm_extrapolated(ch, m, 1.0, 1000, window)
    assert len(bessel) == len(fdm) > 0
    for a, b in zip(bessel, fdm):
        assert abs(a - b) <= 1e-6 * max(1.0, abs(a))


def test_scan_count_matches_sturm():
    ch = RadialChannel(-3)
    for m in (0.0, 15.0, -15.0):
        window = (0.0, abs(m) + 12.0)
        assert count_roots_bessel(ch, m, 1.0, window) == fdm_count(ch, m, 1.0, window, 800)
    modes = solve_channel_bessel(ch, -15.0, 1.0, (0.0, 20.0), check_fdm=800, profiles=False)
    assert modes


def test_fdm_pencil_symmetric_positive_mass():
    d, e, M = fdm_pencil(RadialChannel(-1), 3.0, 1.0, 300)
    assert d.shape[0] == e.shape[0] + 1 == M.shape[0]
    assert np.all(M > 0)
    with pytest.raises(ValueError):
        solve_channel_fdm(RadialChannel(-1), 0.0, 1.0, 100, (0.0, 5.0))


def test_fdm_spurious_origin_modes_dropped():
    # kappa < 0 admits grid modes at E = -m glued to the origin; with m < 0 they
    # would land at E = |m| inside the window
    m = -6.0
    modes = solve_channel_fdm(RadialChannel(-2), m, 1.0, 600, (0.0, 12.0))
    energies = [md.energy for md in modes]
    assert all(abs(E - abs(m)) > 1e-6 for E in energies)
    ref = [md.energy for md in solve_channel_bessel(RadialChannel(-2), m, 1.0, (0.0, 12.0), profiles=False)]
    assert len(energies) == len(ref)


def test_charge_conjugation_relation():
    """Negative spectrum of channel (kappa, m) equals minus the positive one of (-kappa, m)."""
    m, R, W = 4.0, 1.0, 14.0
    for kappa in (-2, -1, 1, 2):
        neg = solve_channel_fdm(RadialChannel(kappa), m, R, 800, (-W, 0.0), vectors=False)
        neg = sorted(-md.energy for md in neg)
        pos = [md.energy for md in solve_channel_fdm(RadialChannel(-kappa), m, R, 800, (0.0, W), vectors=False)]
        assert len(neg) == len(pos)
        assert np.allclose(neg, pos, atol=1e-8)


def test_gamma5_equivalence():
    """mu_n(-m) from H_{-m} equals the spectrum of H_m with B -> -B."""
    k = required_kappa_max(-10.0, 1.0, 14.0)
    a = assemble_spectrum(-10.0, 1.0, 14.0, k)
    b = assemble_spectrum(10.0, 1.0, 14.0, k, boundary=-1)
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)
    assert a.multiplicities == b.multiplicities


def test_spectrum_massless_start_and_even_multiplicity():
    res = assemble_spectrum(0.0, 1.0, 5.0, 6)
    assert res.eigenvalues[0] == pytest.approx(MASSLESS_GROUND, abs=1e-9)
    assert res.multiplicities[0] == 2
    assert all(k % 2 == 0 for k in res.multiplicities)
    assert np.all(np.diff(res.eigenvalues) > 0)
    for es in res.channels.values():
        assert np.all(np.diff(es) > 0)
    assert res.abs_sequence().size == 2 * res.positive_sequence().size


def test_cutoff_error():
    with pytest.raises(CutoffError):
        assemble_spectrum(0.0, 1.0, 8.0, 2)
    k = required_kappa_max(0.0, 1.0, 8.0)
    assemble_spectrum(0.0, 1.0, 8.0, k)


def test_fdm_assembly_matches_bessel():
    a = assemble_spectrum(2.0, 1.0, 6.0, 4)
    b = assemble_spectrum(2.0, 1.0, 6.0, 4, solver="fdm", grid_size=800)
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-6)


def test_spectrum_json_roundtrip_deterministic():
    a = assemble_spectrum(1.0, 1.0, 6.0, 5)
    b = assemble_spectrum(1.0, 1.0, 6.0, 5)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert set(d) >= {"mass", "radius", "window", "channels", "merged"}
    assert d["merged"][0]["energy"] == pytest.approx(a.eigenvalues[0])


def test_positive_mass_large_m_dirichlet():
    m = 50.0
    E = lowest_eigenvalue(RadialChannel(-1), m, 1.0)
    assert E - m == pytest.approx(math.pi**2 / (2 * m), rel=0.1)


def test_negative_mass_first_level_near_one():
    E = lowest_eigenvalue(RadialChannel(-1), -50.0, 1.0)
    assert 1.0 < E < 1.05


def test_mode_normalization_and_csv(tmp_path):
    md = solve_channel_bessel(RadialChannel(-1), 3.0, 1.0, (0.0, 6.0))[0]
    assert md.norm() == pytest.approx(1.0, abs=1e-10)
    assert md.radial_u[0] == 0.0 and md.radial_v[0] == 0.0
    # MIT condition v(R) = -u(R)
    assert md.radial_v[-1] == pytest.approx(-md.radial_u[-1], rel=1e-9)
    path = tmp_path / "mode.csv"
    md.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (md.r.size, 3)


@pytest.mark.parametrize("m,kappa", [(0.0, -1), (10.0, -1), (-20.0, 2), (20.0, 1)])
def test_square_identities(m, kappa):
    md = solve_channel_bessel(RadialChannel(kappa), m, 1.0, (0.0, abs(m) + 8.0))[0]
    r1, r2 = verify_square_identities(md)
    assert r1 <= 1e-6 and r2 <= 1e-6


def test_square_identities_fdm_mode_consistent():
    """The Bessel mode at doubled profile resolution gives the same residual level."""
    md = solve_channel_bessel(RadialChannel(-1), 10.0, 1.0, (0.0, 16.0), n_points=8000)[0]
    r1, r2 = verify_square_identities(md)
    assert r1 <= 1e-8 and r2 <= 1e-8


def test_square_identities_reject_unnormalized():
    md = solve_channel_bessel(RadialChannel(-1), 0.0, 1.0, (0.0, 3.0))[0]
    md.radial_u = 2 * md.radial_u
    with pytest.raises(ValueError):
        verify_square_identities(md)


def test_agmon_localization_and_rate():
    slopes = {}
    for M in (20.0, 40.0, 80.0):
        md = solve_channel_bessel(RadialChannel(-1), -M, 1.0, (0.0, M / 2), max_roots=1)[0]
        slope, frac = agmon_decay_profile(md)
        slopes[M] = slope
        assert slope >= agmon_rate_bound(md) * 0.95
        if M >= 40:
            assert frac >= 0.99
    assert 1.7 <= slopes[80.0] / slopes[40.0] <= 2.3
    assert 1.7 <= slopes[40.0] / slopes[20.0] <= 2.3


def test_agmon_positive_mass_contrast():
    md = solve_channel_bessel(RadialChannel(-1), 40.0, 1.0, (0.0, 45.0), max_roots=1)[0]
    assert boundary_mass_fraction(md, 4.0 / 40.0) < 0.5
    with pytest.raises(ValueError):
        agmon_decay_profile(md)


def test_agmon_rejects_out_of_gap_mode():
    md = solve_channel_bessel(RadialChannel(-1), -5.0, 1.0, (0.0, 20.0))[-1]
    assert md.energy > 5.0
    with pytest.raises(ValueError):
        agmon_decay_profile(md)


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=-4, max_value=4).filter(lambda k: k != 0),
       st.floats(min_value=-12.0, max_value=12.0))
def test_roots_are_zeros_of_matching(kappa, m):
    ch = RadialChannel(kappa)
    modes = solve_channel_bessel(ch, m, 1.0, (0.0, abs(m) + 6.0), profiles=False)
    for md in modes:
        dE = 1e-7 * max(1.0, md.energy)
        a = mit_matching_function(ch, m, 1.0, md.energy - dE)
        b = mit_matching_function(ch, m, 1.0, md.energy + dE)
        assert a * b <= 0
