import math

import numpy as np
import pytest

from decohere.acceptance import criterion_10
from decohere.scattering import (
    GasSpec,
    NoQuadraticRegime,
    effective_gpp,
    hard_sphere,
    kernel_table,
    localization_kernel,
    tabulated,
    thermal_flux,
)

R, K0, FLUX = 1.0, 2.0, 3.0
RATE = FLUX * math.pi * R ** 2


@pytest.fixture(scope="module")
def gas():
    return hard_sphere(R, K0, FLUX)


def test_kernel_vanishes_at_zero(gas):
    assert localization_kernel(gas, [0.0])[0] == 0.0


def test_kernel_plateau_is_total_rate(gas):
    far = localization_kernel(gas, np.linspace(40, 60, 41) / K0)
    assert abs(far.mean() / RATE - 1) <= 0.02
    assert gas.rate() == pytest.approx(RATE, rel=1e-12)


def test_kernel_even_nonnegative_and_monotone(gas):
    xi = np.linspace(0, 30 / K0, 301)
    f = localization_kernel(gas, xi)
    assert np.array_equal(f, localization_kernel(gas, -xi))
    assert f.min() >= 0
    assert np.diff(f).min() >= -0.01 * RATE


def test_small_separation_curvature(gas):
    # isotropic average of (q·ξ)²/2 with ⟨q²⟩ = 2k₀² gives Λ = Φσk₀²/3
    assert effective_gpp(gas) == pytest.approx(RATE * K0 ** 2 / 3, rel=0.01)


@pytest.mark.xfail(strict=True, reason="quadrature gives Φσk₀²/3, twice the quoted Φσk₀²/6")
def test_small_separation_curvature_quoted_value(gas):
    assert effective_gpp(gas) == pytest.approx(RATE * K0 ** 2 / 6, rel=0.01)


def test_effective_gpp_feeds_back_into_closed_form():
    r = criterion_10(R, K0, FLUX)
    assert r["F0"] == 0.0 and r["feedback_rel"] <= 0.05


def test_gpp_linear_in_flux(gas):
    assert effective_gpp(gas.scaled_flux(2.0)) == pytest.approx(2 * effective_gpp(gas), rel=1e-12)


def test_gpp_quadratic_in_momentum():
    a = effective_gpp(hard_sphere(R, K0, FLUX))
    b = effective_gpp(hard_sphere(R, 2 * K0, FLUX))
    assert b / a == pytest.approx(4.0, rel=1e-3)


def test_no_scattering_no_decoherence():
    gas0 = hard_sphere(0.0, K0, FLUX)
    assert effective_gpp(gas0) == 0.0
    assert not np.any(localization_kernel(gas0, np.linspace(0, 5, 11)))


def test_two_momentum_mixture_is_linear():
    xi = np.linspace(0, 8, 33)
    mix = GasSpec(hard_sphere(R, 1.0).cross_section, ((1.0, 0.7), (3.0, 1.8)))
    parts = (0.7 * localization_kernel(hard_sphere(R, 1.0), xi)
             + 1.8 * localization_kernel(hard_sphere(R, 3.0), xi))
    assert np.abs(localization_kernel(mix, xi) - parts).max() <= 2e-3 * parts.max()


def test_no_quadratic_regime_reports_table(gas):
    with pytest.raises(NoQuadraticRegime) as info:
        effective_gpp(gas, xi_grid=np.linspace(1.0, 2.0, 5))
    assert info.value.table.shape == (5, 2)


def forward_peaked(k, theta):
    with np.errstate(divide="ignore"):
        return 1.0 / np.sin(np.asarray(theta) / 2) ** 4


def test_forward_divergence_needs_cutoff():
    with pytest.raises(ValueError, match="theta_min"):
        GasSpec(forward_peaked, ((1.0, 1.0),))
    rates = [GasSpec(forward_peaked, ((1.0, 1.0),), theta_min=t).rate() for t in (0.4, 0.2)]
    assert rates[1] > rates[0] > 0


def test_tabulated_isotropic_matches_hard_sphere():
    th = np.linspace(0, math.pi, 50)
    tab = tabulated(th, np.full(50, R * R / 4), K0, FLUX)
    xi = np.linspace(0, 5, 11)
    assert np.allclose(localization_kernel(tab, xi), localization_kernel(hard_sphere(R, K0, FLUX), xi),
                       rtol=1e-12, atol=1e-14)


def test_gas_validation():
    with pytest.raises(ValueError):
        hard_sphere(-1.0, K0)
    with pytest.raises(ValueError):
        GasSpec(lambda k, t: -np.ones_like(t), ((1.0, 1.0),))
    with pytest.raises(ValueError):
        GasSpec(lambda k, t: np.ones_like(t), ())
    with pytest.raises(ValueError):
        tabulated(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 1.0)


def test_thermal_flux_normalization():
    fl = thermal_flux(2.0, 3.0, density=0.5)
    assert sum(w for _, w in fl) == pytest.approx(0.5 * math.sqrt(8 * 2.0 / (math.pi * 3.0)), rel=1e-12)
    assert all(k > 0 and w > 0 for k, w in fl)


def test_kernel_table_format(gas):
    lines = kernel_table(gas, [0.0, 0.5]).splitlines()
    assert lines[0] == "xi,F" and lines[1] == "0,0"
