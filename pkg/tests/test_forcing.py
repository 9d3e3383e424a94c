import math

import numpy as np
import pytest
from scipy import integrate

from pullback_lab.forcing import ForcingProfile, IntegrabilityError
from pullback_lab.spaces import SpectralDomain, mode_pair, norm_dual, random_field

D = SpectralDomain(2, 8, viscosity=0.7)


def reference_integral(f: ForcingProfile, s: float) -> float:
    """Plain quad over a finite window long enough for the integrand to die out."""
    sigma = f.domain.sigma
    rate = sigma + 2 * min(f.alpha, 0.0) if f.kind != "periodic" else sigma
    lo = s - 80.0 / max(rate, 1e-3)
    knots = None
    if f.times is not None:
        knots = [x for x in f.times if lo < x < s] or None
    val, _ = integrate.quad(lambda x: math.exp(sigma * x) * float(f.dual_norm2(x)),
                            lo, s, limit=2000, epsabs=0, epsrel=1e-12, points=knots)
    return val


@pytest.fixture
def profile():
    return random_field(D, np.random.default_rng(0), norm=1.5, slope=1.0)


def test_exponential_rejects_nonintegrable(profile):
    sigma = D.sigma
    with pytest.raises(IntegrabilityError):
        ForcingProfile.exponential(profile, alpha=-sigma / 2)
    with pytest.raises(IntegrabilityError):
        ForcingProfile.exponential(profile, alpha=-sigma)
    ForcingProfile.exponential(profile, alpha=-0.49 * sigma)


def test_tabulated_rejects_nonintegrable_tail(profile):
    with pytest.raises(IntegrabilityError):
        ForcingProfile.tabulated(profile, [0, 1], [1, 2], tail_rate=-D.sigma)


def test_zero_forcing():
    f = ForcingProfile.zero(D)
    assert f.weighted_integral(3.0) == 0.0
    assert f.weighted_integral_quadrature(3.0) == 0.0
    assert np.all(f.dual_norm2(np.linspace(-2, 2, 5)) == 0.0)


def test_dual_norm_scales_with_amplitude(profile):
    f = ForcingProfile.exponential(profile, alpha=0.3)
    g2 = norm_dual(profile, 1) ** 2
    assert f.dual_norm2(2.0) == pytest.approx(math.exp(0.6 * 2) * g2, rel=1e-14)
    assert f.dual_norm2(2.0, 3) == pytest.approx(math.exp(0.6 * 2) * norm_dual(profile, 3) ** 2,
                                                 rel=1e-14)


def test_periodic_amplitude(profile):
    f = ForcingProfile.periodic(profile, omega=2.0, phase=0.5)
    ts = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(f.amplitude(ts), np.cos(2 * ts + 0.5), rtol=0, atol=1e-15)
    np.testing.assert_allclose(f(1.0).coefficients, math.cos(2.5) * profile.coefficients)


def test_tabulated_amplitude(profile):
    f = ForcingProfile.tabulated(profile, [0.0, 1.0, 3.0], [1.0, 3.0, 2.0], tail_rate=0.2)
    assert f.amplitude(0.5) == pytest.approx(2.0)
    assert f.amplitude(2.0) == pytest.approx(2.5)
    assert f.amplitude(-1.0) == pytest.approx(math.exp(-0.2))
    assert f.amplitude(5.0) == pytest.approx(2.0)


@pytest.mark.parametrize("alpha", [-0.2, 0.0, 0.4])
def test_exponential_integral_closed_form(profile, alpha):
    f = ForcingProfile.exponential(profile, alpha=alpha)
    g2 = norm_dual(profile, 1) ** 2
    rate = 2 * alpha + D.sigma
    for s in (-2.0, 0.0, 1.5):
        assert f.weighted_integral(s) == pytest.approx(g2 * math.exp(rate * s) / rate, rel=1e-14)
        assert f.weighted_integral_quadrature(s) == pytest.approx(f.weighted_integral(s), rel=1e-8)


@pytest.mark.parametrize("omega,phase", [(1.0, 0.0), (3.0, 1.1), (0.2, -0.4)])
def test_periodic_integral_against_quadrature(profile, omega, phase):
    f = ForcingProfile.periodic(profile, omega=omega, phase=phase)
    for s in (-1.0, 0.3, 2.0):
        closed = f.weighted_integral(s)
        assert closed == pytest.approx(reference_integral(f, s), rel=1e-9)
        assert closed == pytest.approx(f.weighted_integral_quadrature(s), rel=1e-8)


def test_tabulated_integral_against_quadrature(profile):
    f = ForcingProfile.tabulated(profile, [-1.0, 0.0, 0.5, 2.0], [0.5, 2.0, 1.0, 1.5],
                                 tail_rate=0.1)
    for s in (-3.0, -0.5, 1.0, 4.0):
        closed = f.weighted_integral(s)
        assert closed == pytest.approx(reference_integral(f, s), rel=1e-9)
        assert closed == pytest.approx(f.weighted_integral_quadrature(s), rel=1e-8)


def test_single_mode_dual_norm():
    g = mode_pair(D, (1, 0), norm=2.0)
    f = ForcingProfile.exponential(g)
    assert f.profile_dual2 == pytest.approx(4.0 / D.lambda1, rel=1e-14)
