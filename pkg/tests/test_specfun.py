import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from motility.specfun import bessel_i, bessel_i_prime, bessel_j, bessel_j_prime, besselj_prime_zero


def test_frozen_values():
    assert bessel_i(1, 1.0) == pytest.approx(0.565159103992485, rel=1e-14)
    assert bessel_i(2, 3.5) == pytest.approx(3.832012048077841, rel=1e-13)
    assert bessel_i_prime(1, 2.0) == pytest.approx(1.4842668750174028, rel=1e-13)
    assert bessel_i(0, 0.0) == 1.0
    assert bessel_i(3, 0.0) == 0.0


@given(st.integers(0, 8), st.one_of(st.just(0.0), st.floats(1e-100, 45.0)))
def test_bessel_i_matches_reference(n, x):
    ref = special.iv(n, x)
    assert bessel_i(n, x) == pytest.approx(ref, rel=1e-12, abs=1e-150)
    assert bessel_i_prime(n, x) == pytest.approx(special.ivp(n, x), rel=1e-11, abs=1e-150)


@given(st.integers(0, 6), st.floats(0.0, 30.0))
def test_bessel_j_matches_reference(n, x):
    assert bessel_j(n, x) == pytest.approx(special.jv(n, x), abs=1e-13)
    assert bessel_j_prime(n, x) == pytest.approx(special.jvp(n, x), abs=1e-13)


def test_asymptotic_branch_continuity():
    below, above = bessel_i(1, 50.0), bessel_i(1, 50.0 + 1e-9)
    assert above == pytest.approx(below, rel=1e-8)
    assert bessel_i(2, 60.0) == pytest.approx(special.iv(2, 60.0), rel=1e-12)


def test_array_input_shape():
    x = np.linspace(0, 5, 7).reshape(7, 1)
    assert bessel_i(1, x).shape == (7, 1)
    assert bessel_j(2, np.array([0.5, 1.0])).shape == (2,)


@pytest.mark.parametrize("n,k", [(1, 1), (1, 2), (2, 1), (0, 2), (3, 1)])
def test_prime_zeros(n, k):
    assert besselj_prime_zero(n, k) == pytest.approx(special.jnp_zeros(n, k)[-1], abs=1e-11)


def test_recurrence_identity():
    # I_{n-1} - I_{n+1} = (2n/x) I_n
    x = np.linspace(0.3, 20.0, 50)
    for n in range(1, 6):
        lhs = bessel_i(n - 1, x) - bessel_i(n + 1, x)
        assert np.allclose(lhs, 2 * n / x * bessel_i(n, x), rtol=1e-12)


@pytest.mark.parametrize("bad", [(-1, 1.0), (1.5, 1.0), (1, -0.1), (1, np.inf)])
def test_invalid_arguments(bad):
    with pytest.raises(ValueError):
        bessel_i(*bad)


def test_invalid_zero_index():
    with pytest.raises(ValueError):
        besselj_prime_zero(1, 0)
