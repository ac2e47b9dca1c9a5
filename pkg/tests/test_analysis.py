import math
import warnings

import numpy as np
import pytest

from decohere.analysis import (
    TimescaleParams,
    cat_state_experiment,
    nogo_check,
    pointer_basis_check,
    pure_state_expectation,
    purity_sieve,
    symmetric_positions,
    timescale_report,
    timescales,
)
from decohere.acceptance import criterion_8
from decohere.coefficients import DecoherenceTensor
from decohere.evolution import momentum_basis, position_momentum_ops
from decohere.hilbert import random_density
from decohere.weyl import PhaseSpaceGrid, WignerFunction, gaussian_wavefunction


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


# -- timescales -----------------------------------------------------------------

def test_timescale_formula_example():
    t_dec, t_mix, t_wp = timescales(TimescaleParams(1.0, 1.0, 0.01, 1.0, 10.0, 0.01))
    assert t_dec == pytest.approx(1e-4, rel=1e-12)
    assert t_mix == pytest.approx(1e4, rel=1e-12)
    assert t_wp == pytest.approx(1e4, rel=1e-12)


def test_timescale_separation_scaling():
    a = timescales(TimescaleParams(2.0, 0.5, 0.03, 1.5, 1.0, 0.2))
    b = timescales(TimescaleParams(2.0, 0.5, 0.03, 1.5, 2.0, 0.2))
    assert b[0] / a[0] == pytest.approx(0.25, rel=1e-14)
    assert b[1] / a[1] == pytest.approx(4.0, rel=1e-14)
    assert b[2] / a[2] == pytest.approx(4.0, rel=1e-14)


@pytest.mark.parametrize("field,degrees", [
    ("mass", (-1, 1, 1)),
    ("temperature", (-1, -1, 0)),
    ("gamma_pp", (-1, -1, 0)),
    ("omega", (0, 2, 0)),
    ("hbar", (2, 0, -1)),
])
def test_timescale_homogeneity(field, degrees):
    base = dict(mass=1.3, temperature=0.7, gamma_pp=0.02, omega=0.9, delta_x=3.0, hbar=0.1)
    lam = 3.0
    t0 = timescales(TimescaleParams(**base))
    t1 = timescales(TimescaleParams(**{**base, field: base[field] * lam}))
    for a, b, k in zip(t0, t1, degrees):
        assert b / a == pytest.approx(lam ** k, rel=1e-13)


def test_timescale_ordering_regime():
    rep = timescale_report(TimescaleParams(1.0, 1.0, 0.01, 0.1, 10.0, 0.01))
    assert rep.t_dec < rep.t_mix < rep.t_wp and rep.ordered
    assert rep.to_text().splitlines()[-1].startswith("PASS timescale_ordering")
    tied = timescale_report(TimescaleParams(1.0, 1.0, 0.01, 1.0, 10.0, 0.01))
    assert not tied.ordered and tied.to_text().splitlines()[-1].startswith("FAIL")


def test_timescale_params_validation():
    with pytest.raises(ValueError, match="delta_x"):
        TimescaleParams(1.0, 1.0, 0.01, 1.0, 0.0)


# -- pointer basis ----------------------------------------------------------------

@pytest.mark.parametrize("comps,position_ok", [
    ((0.0, 0.0, 0.3), True),
    ((0.0, 0.0, 2.0), True),
    ((0.3, 0.0, 0.0), False),
    ((0.1, 0.0, 0.3), False),
    ((0.1, 0.05, 0.3), False),
    ((1e-3, 0.0, 1.0), False),
])
def test_pointer_position_basis_iff_position_degenerate(comps, position_ok):
    g = DecoherenceTensor.from_components(*comps)
    rep = pointer_basis_check(g, np.eye(24), samples=8, rng_seed=1)
    assert rep.passed == position_ok
    assert (g.degenerate_kind() == "position") == position_ok
    if position_ok:
        assert rep.diag_residual < 1e-10


def test_pointer_rotated_basis_fails_for_degenerate():
    g = DecoherenceTensor.from_components(gpp=0.3)
    f, _ = momentum_basis(24, symmetric_positions(24)[1] - symmetric_positions(24)[0])
    assert not pointer_basis_check(g, f, samples=4).passed
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(24, 24)))
    assert not pointer_basis_check(g, q, samples=4).passed


def test_pointer_rejects_non_orthonormal():
    with pytest.raises(ValueError, match="orthonormal"):
        pointer_basis_check(DecoherenceTensor.from_components(gpp=1.0), 2 * np.eye(8))


# -- no-go theorem -----------------------------------------------------------------

def test_nogo_floor_includes_coherent_states():
    rep = nogo_check(DecoherenceTensor.from_components(gxx=1.0, gpp=1.0), 24, 64, rng_seed=3, n=32,
                     n_coherent=8)
    assert rep.passed and rep.floor > 1e-6
    coh = [v for lab, v in rep.per_psi if lab.startswith("coherent")]
    assert len(coh) == 8 and min(coh) > 1e-6
    assert rep.to_text().splitlines()[-1].startswith("PASS nogo_floor")


def test_nogo_inapplicable_for_degenerate():
    rep = nogo_check(DecoherenceTensor.from_components(gpp=1.0), 8, 16, n=32)
    assert rep.status == "inapplicable" and not rep.passed
    assert rep.position_residual < 1e-10


def test_pure_state_expectation_is_negative():
    n, hbar = 64, 1.0
    x = symmetric_positions(n, hbar)
    psi = gaussian_wavefunction(x, 0.0, 0.0, 2.0, hbar)
    psi = psi / np.linalg.norm(psi)
    g = DecoherenceTensor.from_components(gxx=0.4, gpp=0.7)
    xo, po = position_momentum_ops(x, hbar)

    def var(op):
        m = np.vdot(psi, op @ psi).real
        return np.vdot(psi, op @ op @ psi).real - m * m

    expected = -2 * (g.gpp * var(xo) + g.gxx * var(po)) / hbar ** 2
    got = pure_state_expectation(psi, g, x, hbar)
    assert got < 0
    assert got == pytest.approx(expected, rel=1e-10)


def test_nogo_invariant_under_quarter_rotation():
    n = 32
    x = symmetric_positions(n)
    f, p = momentum_basis(n, x[1] - x[0])
    # U|x_k> = |p = x_k>, so U X U† = P and the pair (x, p) turns by a quarter period
    order = [int(np.argmin(np.abs(p - xk))) for xk in x]
    u = f[:, order]
    g = DecoherenceTensor.from_components(0.5, 0.2, 1.5)
    g_rot = DecoherenceTensor.from_components(1.5, -0.2, 0.5)
    rng = np.random.default_rng(4)
    rhos = np.array([random_density(n, rng) for _ in range(64)])
    psis = []
    for i in range(16):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        psis.append((f"s{i}", v / np.linalg.norm(v)))
    base = nogo_check(g, rhos=rhos, psis=psis, n=n)
    rot = nogo_check(g_rot, rhos=np.array([u @ r @ u.conj().T for r in rhos]),
                     psis=[(lab, u @ v) for lab, v in psis], n=n)
    assert rot.floor == pytest.approx(base.floor, rel=0.2)


def test_nogo_threads_match_serial():
    g = DecoherenceTensor.from_components(gxx=1.0, gpp=1.0)
    a = nogo_check(g, 12, 16, rng_seed=9, n=32, n_coherent=4)
    b = nogo_check(g, 12, 16, rng_seed=9, n=32, n_coherent=4, threads=3)
    assert a.per_psi == b.per_psi


# -- predictability sieve ------------------------------------------------------------

def test_sieve_cell_beats_gaussian(quiet):
    cell_drop, gauss_drop, ranking = criterion_8(dim=256)
    assert cell_drop < 0.10 and gauss_drop >= 0.5
    assert ranking == ["cell", "gaussian"]


def test_sieve_ranking_stable_under_resolution(quiet):
    assert criterion_8(dim=256)[2] == criterion_8(dim=512)[2]


def test_sieve_constant_wigner_is_fixed_point():
    # the band projector Π has constant W, so Π/tr Π plays the role of I/d
    dim = 64
    length = math.sqrt(dim * 2 * math.pi)
    grid = PhaseSpaceGrid.lattice(dim, -length / 2, length)
    w = WignerFunction(grid, np.ones(grid.shape))
    w = WignerFunction(grid, w.values / w.norm())
    g = DecoherenceTensor.from_components(0.2, 0.05, 0.3)
    rep = purity_sieve({"flat": w}, g, 5.0, 6)
    pur = rep.entry("flat").purity
    assert np.all(pur == pur[0])


def test_sieve_requires_grid_for_operators():
    from decohere.hilbert import DensityOperator
    with pytest.raises(ValueError, match="lattice"):
        purity_sieve([DensityOperator.from_matrix(np.eye(4) / 4)], DecoherenceTensor.from_components(1, 0, 1), 1.0)


# -- two-packet experiment -----------------------------------------------------------

@pytest.fixture(scope="module")
def cat_lattice():
    dim = 512
    length = math.sqrt(dim * math.pi)
    return PhaseSpaceGrid.lattice(dim, -length / 2, length)


def packet(grid, x0, p0, sigma=math.sqrt(0.5)):
    v = gaussian_wavefunction(grid.basis_x, x0, p0, sigma)
    return v / np.linalg.norm(v)


def test_cat_position_separation_rate(cat_lattice):
    g = DecoherenceTensor.from_components(gpp=0.002)
    d = 12.0
    rep = cat_state_experiment(packet(cat_lattice, -d / 2, 0), packet(cat_lattice, d / 2, 0), g,
                               np.linspace(0, 4, 9), cat_lattice)
    assert rep.decay_rate == pytest.approx(g.gpp * d * d, rel=0.05)
    assert np.abs(rep.diag_total - rep.diag_total[0]).max() == 0.0


def test_cat_momentum_separation_decays_slower(cat_lattice):
    g = DecoherenceTensor.from_components(gpp=0.002)
    ts = np.linspace(0, 4, 9)
    pos = cat_state_experiment(packet(cat_lattice, -6, 0), packet(cat_lattice, 6, 0), g, ts, cat_lattice)
    mom = cat_state_experiment(packet(cat_lattice, 0, -6), packet(cat_lattice, 0, 6), g, ts, cat_lattice)
    assert mom.decay_time > pos.decay_time


def test_cat_overlap_grows_under_smearing(quiet):
    dim = 128
    length = math.sqrt(dim * math.pi)
    grid = PhaseSpaceGrid.lattice(dim, -length / 2, length)
    g = DecoherenceTensor.from_components(gxx=0.05, gpp=0.05)
    rep = cat_state_experiment(packet(grid, -3, 0), packet(grid, 3, 0), g, np.linspace(0, 10, 6), grid)
    assert np.all(np.diff(rep.overlap) > 0)
    assert rep.mixing_time(0.02) < 10 and rep.mixing_time(0.9) == math.inf


def test_cat_rejects_unnormalized(cat_lattice):
    with pytest.raises(ValueError, match="normalized"):
        cat_state_experiment(2 * packet(cat_lattice, 0, 0), packet(cat_lattice, 1, 0),
                             DecoherenceTensor.from_components(gpp=1.0), [0.0], cat_lattice)
