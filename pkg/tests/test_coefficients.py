import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from decohere.coefficients import (
    CouplingSpectrum,
    DecoherenceTensor,
    canonical_rotation,
    decoherence_coeffs,
    dissipation_coeffs,
    fdt_ratio,
    kernel_C,
    kernel_C_series,
    ohmic_modes,
    oscillator_bath,
    random_spectrum,
)

seeds = st.integers(0, 2**31)


def two_level(a=0.3 + 0.4j, w=1.3, beta=0.7, hp=0.0):
    hx = np.array([[0, a], [np.conj(a), 0]])
    hpm = np.array([[0, hp], [np.conj(hp), 0]])
    return CouplingSpectrum.from_matrices(hx, hpm, np.array([0.0, w]), beta)


def dense_band(m=20000, omega_c=1.0, beta=0.5):
    """Transitions with frequencies spread uniformly over [-Ω, Ω]."""
    w = omega_c * (np.arange(m) + 0.5) / m
    n = np.arange(2 * m)
    nprime = n ^ 1
    omega = np.empty(2 * m)
    omega[0::2], omega[1::2] = w, -w
    h = np.full(2 * m, 0.01 + 0j)
    weight = np.repeat(np.exp(-beta * w / 2) / (1 + np.exp(-beta * w)), 2)
    return CouplingSpectrum(n, nprime, h, np.zeros(2 * m), omega, weight, beta, omega_c)


def test_kernel_at_zero_single_pair():
    a, w, beta = 0.3 + 0.4j, 1.3, 0.7
    s = two_level(a, w, beta)
    p = math.exp(-beta * w / 2) / (1 + math.exp(-beta * w))
    assert kernel_C(s, 0.0)[1, 1] == pytest.approx(2 * abs(a) ** 2 * p * math.cosh(beta * w / 2), rel=1e-12)


def test_kernel_without_x_gradients():
    s = CouplingSpectrum.from_matrices(np.zeros((2, 2)), np.array([[0, 1.0], [1.0, 0]]), np.array([0, 1.0]), 1.0)
    taus = np.linspace(0, 5, 11)
    c = kernel_C_series(s, taus)
    assert np.all(c[:, 1, 1] == 0) and np.all(c[:, 0, 1] == 0)


@given(seeds, st.floats(0, 10))
def test_kernel_series_consistent_and_real(seed, tau):
    s = random_spectrum(np.random.default_rng(seed))
    # the imaginary parts cancel pairwise: compare the real kernel with a direct complex sum
    one = kernel_C(s, tau)
    assert np.allclose(kernel_C_series(s, [tau])[0], one, atol=1e-12)
    rev = {(a, b): i for i, (a, b) in enumerate(zip(s.n, s.nprime))}
    idx = [rev[(b, a)] for a, b in zip(s.n, s.nprime)]
    z = np.sum(s.h1x * s.h1x[idx] * np.exp(1j * s.omega * tau) * s.weight * np.cosh(s.beta * s.omega / 2))
    assert abs(z.imag) < 1e-10 * max(1, abs(z))
    assert one[1, 1] == pytest.approx(z.real, rel=1e-10, abs=1e-12)


def test_position_only_coefficients():
    s = oscillator_bath(ohmic_modes(8, 1.0, 0.2), 2.0, 4, "position_only")
    g, gam = decoherence_coeffs(s), dissipation_coeffs(s)
    assert g.gxx == 0 and g.gxp == 0 and g.gpp > 0
    assert gam.gxx == 0 and gam.gpx == 0
    assert g.classification == "Degenerate" and g.degenerate_kind() == "position"


@given(seeds)
def test_symmetry_and_positivity(seed):
    s = random_spectrum(np.random.default_rng(seed))
    g, gam = decoherence_coeffs(s), dissipation_coeffs(s)
    assert g.gxp == g.gpx
    assert abs(gam.gxp - gam.gpx) <= 1e-10 * max(1, np.abs(gam.gamma).max())
    norm = np.linalg.norm(g.g, 2)
    r = np.random.default_rng(seed + 1)
    for a, b in r.normal(size=(20, 2)):
        assert g.quadratic_form(a, b) >= -1e-12 * norm * (a * a + b * b)
    # dissipated power has a definite sign: the γ form is nonnegative
    assert np.linalg.eigvalsh(0.5 * (gam.gamma + gam.gamma.T)).min() >= -1e-12 * max(1, np.abs(gam.gamma).max())


def test_fluctuation_dissipation_high_temperature():
    modes = ohmic_modes(16, 1.0, 0.1, band=(0.8, 1.0))
    hot = oscillator_bath(modes, 100.0, 4)
    g, gam = decoherence_coeffs(hot), dissipation_coeffs(hot)
    assert fdt_ratio(g, gam, 100.0) == pytest.approx(1.0, abs=0.01)
    assert gam.gpp == pytest.approx(g.gpp / 100.0, rel=0.01)
    cold = oscillator_bath(modes, 1.0, 4)
    assert abs(fdt_ratio(decoherence_coeffs(cold), dissipation_coeffs(cold), 1.0) - 1) > 0.05


def test_ladder_form_ratio():
    mass, omega = 1.0, 1.0
    s = oscillator_bath(ohmic_modes(16, 1.0, 0.1, (0.8, 1.0)), 10.0, 4, "ladder", mass=mass, omega_c=omega)
    g = decoherence_coeffs(s)
    assert g.gxx * mass ** 2 * omega ** 2 / g.gpp == pytest.approx(1.0, rel=0.1)


def test_zero_coupling_gives_empty_spectrum():
    s = oscillator_bath([(0.0, 1.0)], 1.0)
    assert s.size == 0
    assert not np.any(decoherence_coeffs(s).g)


def test_canonical_rotation_examples():
    theta, rot = canonical_rotation(DecoherenceTensor.from_components(2.0, 0.0, 1.0))
    assert theta == 0
    theta, _ = canonical_rotation(DecoherenceTensor.from_components(1.0, 0.3, 1.0))
    assert theta == pytest.approx(math.pi / 4)


@given(seeds)
def test_canonical_rotation_diagonalizes(seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(2, 2))
    g = DecoherenceTensor(a @ a.T + 0.1 * np.eye(2))
    lu = float(r.uniform(0.5, 2.0))
    _, rot = canonical_rotation(g, lu, 1 / lu)
    assert abs(rot.gxp) < 1e-12 * np.abs(rot.g).max()


@given(seeds)
def test_invariance_under_relabel_and_phases(seed):
    r = np.random.default_rng(seed)
    d = 5
    e = np.sort(r.uniform(0, 3, d))
    hx = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    hx = hx + hx.conj().T
    hp = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    hp = hp + hp.conj().T
    base = decoherence_coeffs(CouplingSpectrum.from_matrices(hx, hp, e, 0.8)).g
    perm = r.permutation(d)
    relab = decoherence_coeffs(CouplingSpectrum.from_matrices(hx[np.ix_(perm, perm)], hp[np.ix_(perm, perm)], e[perm], 0.8)).g
    u = np.diag(np.exp(1j * r.uniform(0, 2 * np.pi, d)))  # commutes with ρ_e
    rot = decoherence_coeffs(CouplingSpectrum.from_matrices(u.conj().T @ hx @ u, u.conj().T @ hp @ u, e, 0.8)).g
    scale = np.abs(base).max()
    assert np.abs(relab - base).max() < 1e-12 * scale
    assert np.abs(rot - base).max() < 1e-12 * scale


def test_epsilon_stability_on_dense_band():
    s = dense_band()
    g1 = decoherence_coeffs(s).gpp
    g2 = decoherence_coeffs(s.with_epsilon(s.regularization_epsilon / 2)).gpp
    assert abs(g2 / g1 - 1) < 0.01


def test_default_epsilon():
    s = dense_band(10)
    assert s.regularization_epsilon == pytest.approx(s.omega_cutoff / 1000)
    with pytest.raises(ValueError):
        s.with_epsilon(0.0)


def test_spectrum_text_roundtrip():
    s = random_spectrum(np.random.default_rng(3))
    back = CouplingSpectrum.from_text(s.to_text("spectrum"))
    assert np.array_equal(back.h1x, s.h1x) and np.array_equal(back.omega, s.omega)
    assert np.array_equal(decoherence_coeffs(back).g, decoherence_coeffs(s).g)
    with pytest.raises(ValueError, match="beta"):
        CouplingSpectrum.from_text("0,1,1,0,0,0,1,1\n")


def test_tensor_validation():
    with pytest.raises(ValueError):
        DecoherenceTensor(np.array([[1.0, 0.5], [0.0, 1.0]]))
    g = DecoherenceTensor.from_components(1.0, 0.0, 1.0)
    assert g.classification == "NonDegenerate" and g.degenerate_kind() is None
