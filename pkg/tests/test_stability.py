import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from motility.geometry import ModelParams
from motility.stability import (
    NonphysicalError,
    assemble_operator_mode,
    assemble_tw_operator,
    classify,
    compliant_params,
    critical_radius_fixed_density,
    full_spectrum,
    hypothesis_report,
    mode_spectrum,
    neumann_eigenvalue,
    phi1_profile,
    phi1_slope,
    q_closed_form,
    q_functional,
    radial_steady_state,
    rayleigh_inequality_check,
    tw_mass_eigenvector_check,
)


def slope_oracle(R, m0, zeta):
    x = R * math.sqrt(zeta - m0)
    return m0 / (zeta - m0) * (x * special.ivp(1, x) / special.iv(1, x) - 1.0)


def q_oracle(R, zeta):
    # minimizer of the energy is A I0(k r) + B with zero mean and value 1 at r = R
    k = math.sqrt(zeta)
    mean_i0 = 2 * special.iv(1, k * R) / (k * R)
    A = 1.0 / (special.iv(0, k * R) - mean_i0)
    B = -A * mean_i0

    def density(r):
        w = A * special.iv(0, k * r) + B
        dw = A * k * special.iv(1, k * r)
        return (dw * dw + zeta * w * w) * r

    return 2 * math.pi * integrate.quad(density, 0, R, epsabs=0, epsrel=1e-13)[0]


def test_steady_state_residuals():
    p = ModelParams.with_density(1.1, 2.0, 2.1, 0.75, k_e=0.3)
    st_ = radial_steady_state(2.0, p)
    assert st_.m0 == pytest.approx(1.1, rel=1e-14)
    assert st_.phi0 == pytest.approx(-0.75 / (2.1 * 2.0))
    assert max(st_.residuals().values()) < 1e-14
    assert st_.mass == pytest.approx(1.1 * math.pi * 4.0)


def test_nonphysical_density():
    with pytest.raises(NonphysicalError):
        radial_steady_state(0.1, ModelParams(zeta=2.0, gamma=1.0, p_h=1.0))
    with pytest.raises(ValueError):
        radial_steady_state(-1.0, ModelParams(zeta=2.0, gamma=1.0, p_h=1.0))


@given(st.floats(0.2, 4.0), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_phi1_slope_matches_reference(R, m0, gap):
    zeta = m0 + gap
    assert phi1_slope(R, m0, zeta) == pytest.approx(slope_oracle(R, m0, zeta), rel=1e-11)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_phi1_slope_increases_with_radius(m0, gap):
    zeta = m0 + gap
    R = np.linspace(0.2, 4.0, 40)
    s = [phi1_slope(x, m0, zeta) for x in R]
    assert np.all(np.diff(s) > 0)


def test_phi1_profile_converges_at_second_order():
    a = phi1_profile(1.3, 1.1, 2.1, 512).max_gap
    b = phi1_profile(1.3, 1.1, 2.1, 1024).max_gap
    assert math.log2(a / b) == pytest.approx(2.0, abs=0.1)
    res = phi1_profile(1.3, 1.1, 2.1, 2048)
    assert res.derivative_bvp == pytest.approx(res.derivative, rel=1e-5)


@pytest.mark.parametrize("m0,zeta,frozen", [(3.0, 4.0, 1.187197977667314), (1.1, 2.1, 2.0560527749174025)])
def test_critical_radius(m0, zeta, frozen):
    Rc = critical_radius_fixed_density(m0, zeta)
    oracle = optimize.brentq(lambda R: slope_oracle(R, m0, zeta) - 1.0, 0.05, 10.0, xtol=1e-15)
    assert Rc == pytest.approx(oracle, abs=1e-11)
    assert Rc == pytest.approx(frozen, abs=1e-12)


def test_critical_radius_requires_zeta_above_density():
    with pytest.raises(ValueError):
        critical_radius_fixed_density(2.0, 1.5)


@pytest.mark.parametrize("scale,label", [(0.7, "Stable"), (1.0, "Critical"), (1.4, "Unstable")])
def test_classification(scale, label):
    Rc = critical_radius_fixed_density(1.1, 2.1)
    R = Rc * scale
    p = ModelParams.with_density(1.1, R, 2.1, 0.75)
    assert classify(R, p, tol=1e-9).label == label


def test_hypothesis_failures_are_reported():
    p = ModelParams.with_density(3.0, 1.0, 2.0, 0.1)
    c = classify(1.0, p)
    assert c.label == "Undetermined"
    assert "zeta>m0" in c.failed()
    assert "area_stiffness" in c.failed()
    good = compliant_params(1.1, 1.2, 2.1, 0.75)
    assert all(h.passed for h in hypothesis_report(1.2, good))


def test_neumann_eigenvalue():
    assert neumann_eigenvalue(2.0, 2) == pytest.approx((special.jnp_zeros(2, 1)[0] / 2.0) ** 2, rel=1e-12)
    assert neumann_eigenvalue(1.0, 0, 1) == 0.0


def test_q_closed_form_frozen_and_oracle():
    assert q_closed_form(1.0, 2.0) == pytest.approx(27.145292937243962, rel=1e-13)
    for R, zeta in [(0.5, 0.5), (1.0, 2.0), (2.5, 4.0)]:
        assert q_closed_form(R, zeta) == pytest.approx(q_oracle(R, zeta), rel=1e-9)


@given(st.floats(0.1, 5.0), st.floats(0.05, 10.0))
def test_q_lower_bound(R, zeta):
    q = q_functional(R, zeta, check=False)
    assert q.closed >= q.lower_bound


def test_q_discrete_minimization():
    q = q_functional(1.2, 2.1, 512)
    assert q.rel_gap < 1e-3
    with pytest.raises(ValueError):
        q_functional(1.0, 0.0)


def test_mode_zero_eigenvector_is_radius_family():
    R = 0.9
    p = compliant_params(1.1, R, 2.1, 0.75)
    st_ = radial_steady_state(R, p)
    sys0 = assemble_operator_mode(0, st_, 48)
    lam, vec, res = mode_spectrum(sys0)
    i = int(np.argmin(np.abs(lam)))
    assert abs(lam[i]) < 1e-8
    assert np.max(res) < 1e-8
    m, rho = sys0.split(np.real(vec[:, i]))
    assert np.allclose(m / rho, 0.75 / R**2 + 2 * math.pi * p.dp_eff * R, rtol=1e-6)


def test_spectrum_stable_and_unstable():
    Rc = critical_radius_fixed_density(1.1, 2.1)
    stable = full_spectrum(radial_steady_state(0.8 * Rc, compliant_params(1.1, 0.8 * Rc, 2.1, 0.75)), 6, 32)
    assert stable.zero_multiplicity == 2
    assert stable.max_real(exclude_zero=True) < 0
    unstable = full_spectrum(radial_steady_state(1.3 * Rc, compliant_params(1.1, 1.3 * Rc, 2.1, 0.75)), 6, 32)
    assert unstable.max_real(1) > 0
    assert unstable.to_csv().startswith("mode,re_lambda")


def test_spectrum_threads_match_serial():
    st_ = radial_steady_state(1.0, compliant_params(1.1, 1.0, 2.1, 0.75))
    a = full_spectrum(st_, 4, 24, jobs=1)
    b = full_spectrum(st_, 4, 24, jobs=3)
    assert np.allclose(a.eigenvalues, b.eigenvalues)


def test_inequality_has_no_violations():
    rep = rayleigh_inequality_check(n_r=128, trials=40)
    assert rep.violations == 0
    assert abs(rep.eigenfunction_lhs) < 1e-2


def test_inequality_detects_larger_density():
    rep = rayleigh_inequality_check(n_r=128, trials=60, m0=3 * neumann_eigenvalue(1.0, 2))
    assert rep.violations > 0


def test_tw_operator_at_rest_matches_mode_spectrum(fig2, fig2_wave):
    Rc, p = fig2
    op = assemble_tw_operator(fig2_wave, 0.0, 16, 16)
    lam = np.linalg.eigvals(op.matrix)
    lam = np.sort(lam[np.abs(lam) > 1e-8].real)[::-1][:5]
    ref = full_spectrum(radial_steady_state(Rc, p), n_max=7, n_r=16, richardson=False).eigenvalues
    ref = np.sort(ref[np.abs(ref) > 1e-8].real)[::-1][:5]
    assert np.allclose(lam, ref, atol=5e-3)


def test_tw_shift_residual_is_second_order(fig2_wave):
    a = tw_mass_eigenvector_check(fig2_wave, 0.05, 16, 16)
    b = tw_mass_eigenvector_check(fig2_wave, 0.1, 16, 16)
    assert 3.0 < b.shift_residual / a.shift_residual < 6.0
    assert a.three_small and b.three_small
    assert b.adjoint_residual <= b.budget
