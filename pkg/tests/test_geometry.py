import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from motility.geometry import (
    BoundaryShape,
    DegenerateDomainError,
    ModelParams,
    PolarField,
    PolarGrid,
    angular_derivative,
    area,
    boundary_map,
    cosine_coefficients,
    curvature,
    cutoff,
    from_cosine_coefficients,
    map_derivatives,
    map_jacobian,
    recenter,
)

coeff_lists = st.lists(st.floats(-0.08, 0.08), min_size=1, max_size=6)


def test_params_validation_and_density():
    p = ModelParams.with_density(1.1, 2.0, 2.1, 0.75, k_e=0.3)
    assert p.density(2.0) == pytest.approx(1.1, rel=1e-14)
    assert p.dp_eff == -0.3
    with pytest.raises(ValueError):
        ModelParams(zeta=0.0, gamma=1.0, p_h=1.0)
    with pytest.raises(ValueError):
        ModelParams(zeta=1.0, gamma=1.0, p_h=1.0, k_e=-1.0)


def test_circle_curvature_and_area():
    s = BoundaryShape(1.7)
    assert np.allclose(curvature(s, np.linspace(0, 6, 9)), 1 / 1.7)
    assert area(s) == pytest.approx(math.pi * 1.7**2)


@given(coeff_lists)
def test_area_matches_polygon(coeffs):
    s = BoundaryShape(1.0, coeffs)
    t = np.linspace(0, 2 * np.pi, 4001)[:-1]
    r = s.radius(t)
    x, y = r * np.cos(t), r * np.sin(t)
    poly = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    assert area(s) == pytest.approx(poly, rel=1e-5)


@given(coeff_lists)
def test_total_turning_is_two_pi(coeffs):
    s = BoundaryShape(1.0, coeffs)
    t = 2 * np.pi * np.arange(2048) / 2048
    P, d1 = s.radius(t), s.rho(t, 1)
    arc = np.sqrt(P * P + d1 * d1)
    assert np.mean(curvature(s, t) * arc) * 2 * np.pi == pytest.approx(2 * np.pi, rel=1e-8)


def test_degenerate_shape():
    with pytest.raises(DegenerateDomainError):
        BoundaryShape(1.0, [0.0, 0.0, 1.5]).check()
    with pytest.raises(DegenerateDomainError):
        BoundaryShape(-1.0)


def test_recenter_moves_mode_one():
    s = recenter(BoundaryShape(1.0, [0.0, 0.1, 0.02], Xc=0.5))
    assert s.Xc == pytest.approx(0.6)
    assert s.rho_cos[1] == 0.0


def test_from_samples_rejects_sine():
    t = 2 * np.pi * np.arange(32) / 32
    BoundaryShape.from_samples(1.0, 0.1 * np.cos(2 * t))
    with pytest.raises(ValueError):
        BoundaryShape.from_samples(1.0, 0.1 * np.sin(2 * t))


def test_json_roundtrip():
    s = BoundaryShape(1.3, [0.01, 0.0, -0.02], Xc=0.2)
    back = BoundaryShape.from_json(s.to_json())
    assert back.R == s.R and back.Xc == s.Xc and np.array_equal(back.rho_cos, s.rho_cos)


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_cosine_roundtrip(coeffs):
    c = np.array(coeffs)
    vals = from_cosine_coefficients(c, 16)
    assert np.allclose(cosine_coefficients(vals), c, atol=1e-12)


def test_angular_derivative_spectral():
    t = 2 * np.pi * np.arange(32) / 32
    assert np.allclose(angular_derivative(np.cos(3 * t)), -3 * np.sin(3 * t), atol=1e-12)
    assert np.allclose(angular_derivative(np.cos(3 * t), 2), -9 * np.cos(3 * t), atol=1e-11)


def test_cutoff_profile():
    R = 1.0
    assert cutoff(0.4, R) == 0.0 and cutoff(0.7, R) == 1.0
    r, h = np.linspace(0.5, 2 / 3, 41), 1e-6
    num = (cutoff(r + h, R) - cutoff(r - h, R)) / (2 * h)
    assert np.allclose(num, cutoff(r, R, 1), atol=1e-6)


def test_map_fixes_inner_disk_and_hits_boundary():
    s = BoundaryShape(1.0, [0.02, 0.0, 0.05, -0.01])
    t = np.linspace(0, 2 * np.pi, 17)
    x, y = boundary_map(s, 1.0, 0.3, t)
    assert np.allclose(x, 0.3 * np.cos(t)) and np.allclose(y, 0.3 * np.sin(t))
    x, y = boundary_map(s, 1.0, 1.0, t)
    assert np.allclose(np.hypot(x, y), s.radius(t), atol=1e-13)


def test_map_derivatives_and_jacobian():
    s = BoundaryShape(1.0, [0.0, 0.0, 0.06, 0.02])
    r, t, h = 0.8, 0.7, 1e-6
    xr, xp, yr, yp = map_derivatives(s, 1.0, r, t)
    xa, ya = boundary_map(s, 1.0, r + h, t)
    xb, yb = boundary_map(s, 1.0, r - h, t)
    assert xr == pytest.approx((xa - xb) / (2 * h), abs=1e-8)
    assert yr == pytest.approx((ya - yb) / (2 * h), abs=1e-8)
    xa, ya = boundary_map(s, 1.0, r, t + h)
    xb, yb = boundary_map(s, 1.0, r, t - h)
    assert xp == pytest.approx((xa - xb) / (2 * h), abs=1e-8)
    assert map_jacobian(s, 1.0, r, t) == pytest.approx(xr * yp - xp * yr, rel=1e-12)


def test_grid_integrates_constant_and_quadratic():
    g = PolarGrid(1.5, 64, 16)
    assert g.integrate(np.ones((65, 16))) == pytest.approx(math.pi * 1.5**2, rel=1e-12)
    r2 = np.repeat(g.r[:, None] ** 2, 16, axis=1)
    assert g.integrate(r2) == pytest.approx(math.pi * 1.5**4 / 2, rel=1e-3)


def test_field_validation_and_csv():
    g = PolarGrid(1.0, 4, 4)
    with pytest.raises(ValueError):
        PolarField(g, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        PolarGrid(1.0, 8, 5)
    f = PolarField(g, np.arange(20.0).reshape(5, 4))
    back = PolarField.from_csv(f.to_csv())
    assert np.array_equal(back.values, f.values)
