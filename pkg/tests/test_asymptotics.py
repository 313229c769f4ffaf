import json
import math

import numpy as np
import pytest

from mitbag.asymptotics import (
    AsymptoticReport, bessel_zero, check_theorem_negative, check_theorem_positive,
    dirichlet_levels, fit_order, sphere_ladder, first_correction_reference, first_correction_value,
)
from mitbag.numerics import spherical_bessel_j


def test_fit_order_exact_powers():
    xs = [0.4, 0.2, 0.1, 0.05]
    f = fit_order(xs, [x**2 for x in xs])
    assert f.order == pytest.approx(2.0, abs=1e-12)
    f = fit_order(xs, [3 * x**6 for x in xs])
    assert f.order == pytest.approx(6.0, abs=1e-10)
    assert f.constant == pytest.approx(3.0, rel=1e-9)


def test_fit_order_floor_and_errors():
    f = fit_order([1, 2, 3, 4], [1.0, 0.5, 0.0, -1.0])
    assert f.used == 2 and len(f.notes) == 2
    with pytest.raises(ValueError):
        fit_order([1, 2], [1, 2])
    with pytest.raises(ValueError):
        fit_order([1, 2, -3], [1, 2, 3])


def test_bessel_zeros_oracle():
    assert bessel_zero(0, 1) == pytest.approx(math.pi, abs=1e-12)
    assert bessel_zero(0, 2) == pytest.approx(2 * math.pi, abs=1e-12)
    z = bessel_zero(1, 1)
    assert z == pytest.approx(4.493409457909, abs=1e-10)
    assert math.tan(z) == pytest.approx(z, rel=1e-9)  # j1 zero solves tan x = x
    assert abs(spherical_bessel_j(2, bessel_zero(2, 1))) < 1e-13


def test_dirichlet_levels():
    lv = dirichlet_levels(1.0, 3)
    assert [mult for _, mult in lv] == [1, 3, 5]
    assert lv[1][0] == pytest.approx(4.493409457909**2, rel=1e-11)
    assert dirichlet_levels(2.0, 1)[0][0] == pytest.approx(math.pi**2 / 4)


def test_sphere_ladder():
    assert list(sphere_ladder(6)) == [1, 1, 1, 1, 2, 2]


def test_first_correction_reference_by_quadrature():
    # |d_n u_1|^2 integrated over the unit sphere for u_1 = sin(pi r)/(r sqrt(2 pi))
    r = 1.0
    h = 1e-6
    u = lambda s: math.sin(math.pi * s) / (s * math.sqrt(2 * math.pi))
    du = (u(r + h) - u(r - h)) / (2 * h)
    integral = 4 * math.pi * du * du
    assert integral == pytest.approx(2 * math.pi**2, rel=1e-8)
    assert first_correction_reference() == pytest.approx(-integral / 2)
    # normalization of u_1
    s = np.linspace(1e-9, 1, 20001)
    assert np.trapezoid(4 * math.pi * s * s * np.vectorize(u)(s) ** 2, s) == pytest.approx(1.0, rel=1e-6)


def test_first_correction_negative_and_converging():
    vals = [first_correction_value(m) for m in (20.0, 40.0, 80.0)]
    assert all(v < 0 for v in vals)
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_check_theorem_positive_report():
    rep = check_theorem_positive((10.0, 20.0, 40.0))
    for n in (1, 2, 3):
        assert rep.checks[f"n{n}_monotone"]["pass"]
        assert rep.checks[f"n{n}_order"]["value"] > 0.3
    assert rep.checks["first_correction_sign"]["pass"]
    d = json.loads(rep.to_json())
    assert d["pass"] == rep.passed
    assert d["input_sha256"] == rep.input_hash
    with pytest.raises(ValueError):
        check_theorem_positive((10.0, 20.0))


def test_check_theorem_negative_small():
    rep = check_theorem_negative((10.0, 20.0, 40.0), n_theta=128)
    assert all(v["pass"] for k, v in rep.checks.items() if k.startswith("sandwich"))
    assert all(v["pass"] for k, v in rep.checks.items() if k.startswith("semiclassical"))
    assert rep.checks["mu1_monotone"]["pass"]


def test_report_deterministic():
    kw = dict(theorem="t", variable="x", sweep=[1.0, 0.5], residuals=[1.0, 0.25], order=2.0,
              constant=1.0, checks={"a": {"pass": True}}, tolerances={}, inputs={"m": [1, 2]})
    a, b = AsymptoticReport(**kw), AsymptoticReport(**kw)
    assert a.to_json() == b.to_json()
    assert a.passed
    kw["checks"] = {"a": {"pass": True}, "b": {"pass": False, "value": float("nan")}}
    c = AsymptoticReport(**kw)
    assert not c.passed
    assert '"nan"' in c.to_json()
