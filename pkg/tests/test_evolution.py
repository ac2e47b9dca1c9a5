import math

import numpy as np
import pytest

from decohere.acceptance import spin_bath
from decohere.coefficients import DecoherenceTensor, canonical_rotation, rotation_matrix
from decohere.evolution import (
    BathCoupling,
    BoundaryError,
    EvolutionSpec,
    HamiltonField,
    StabilityError,
    evolve_master,
    finite_difference_pure,
    heat_kernel_evolve,
    moyal_correction,
    pure_decoherence_closed,
    semiclassical_evolve,
    stable_dt,
    xi_representation,
)
from decohere.hilbert import DensityOperator, Operator, evolve_exact, purity, random_density
from decohere.weyl import PhaseSpaceGrid, WignerFunction, gaussian_wigner

PLUS = DensityOperator.pure(np.array([1.0, 1.0]) / math.sqrt(2))


def mixture(grid, parts):
    return sum(gaussian_wigner(grid, m, c) for m, c in parts) / len(parts)


@pytest.fixture(scope="module")
def grid():
    return PhaseSpaceGrid.square(10.0, 10.0, 128)


@pytest.fixture(scope="module")
def blobs():
    r = np.random.default_rng(8)
    out = []
    for _ in range(3):
        a = r.normal(size=(2, 2))
        out.append((r.uniform(-1.5, 1.5, 2), 0.1 * (a @ a.T) + 0.4 * np.eye(2)))
    return out


# -- master equations ------------------------------------------------------------

def test_decoupled_master_is_unitary():
    h_c = Operator(np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, -0.4]]))
    rho0 = random_density(2, np.random.default_rng(1))
    rho0 = DensityOperator.from_matrix(rho0)
    ts, states = evolve_master(rho0, h_c, None, EvolutionSpec("markov_master", 3.0, 0.01))
    _, exact = evolve_exact(rho0, h_c, 3.0, ts.size)
    assert max(np.abs(a.matrix - b.matrix).max() for a, b in zip(states, exact)) < 1e-10


@pytest.mark.parametrize("mode", ["markov_master", "retarded_master"])
def test_master_preserves_trace_and_hermiticity(mode):
    h_c, cp, _ = spin_bath((0.6, 1.2, 2.0), (0.1, 0.1, 0.1), 1.0)
    _, states = evolve_master(PLUS, h_c, cp, EvolutionSpec(mode, 2.0, 0.01))
    for s in states:
        assert abs(np.trace(s.matrix) - 1) < 1e-8
        assert np.abs(s.matrix - s.matrix.conj().T).max() < 1e-12


def test_master_rejects_mean_field_coupling():
    h_e = Operator(np.diag([0.0, 1.0]), "environment")
    cp = BathCoupling(h_e, Operator(np.kron(np.diag([1.0, -1.0]), np.eye(2)), "composite"), 1.0)
    with pytest.raises(ValueError, match="renormalize"):
        evolve_master(PLUS, Operator(np.eye(2)), cp, EvolutionSpec("markov_master", 1.0, 0.1))


def test_markov_and_retarded_converge_with_bandwidth():
    devs = []
    for om in (1.0, 2.0, 4.0, 8.0):
        h_c, cp, _ = spin_bath((0.3 * om, 0.6 * om, om), (0.1, 0.1, 0.1), 1.0)
        traj = {}
        for mode in ("markov_master", "retarded_master"):
            _, st = evolve_master(PLUS, h_c, cp, EvolutionSpec(mode, 4.0, 0.01))
            traj[mode] = np.array([abs(s.matrix[0, 1]) for s in st])
        devs.append(np.abs(traj["markov_master"] - traj["retarded_master"]).max() / 0.5)
    assert all(b < a for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 1e-3


# -- degenerate closed form ---------------------------------------------------------

def test_closed_form_half_time_and_diagonal():
    x = np.linspace(-3, 3, 16)
    rho0 = DensityOperator.pure(np.exp(-x * x / 8) / np.linalg.norm(np.exp(-x * x / 8)))
    g = DecoherenceTensor.from_components(gpp=0.2)
    assert np.allclose(pure_decoherence_closed(rho0, g, 0.0, x).matrix, rho0.matrix, atol=0, rtol=1e-15)
    i, j = 2, 11
    t_half = math.log(2) / (g.gpp * (x[i] - x[j]) ** 2)
    rt = pure_decoherence_closed(rho0, g, t_half, x).matrix
    assert abs(rt[i, j] / rho0.matrix[i, j] - 0.5) < 1e-10
    assert np.array_equal(np.diag(rt), np.diag(rho0.matrix))


def test_closed_form_momentum_case_and_rejection():
    x = np.linspace(-4, 4, 32, endpoint=False)
    rho0 = DensityOperator.pure(np.exp(-x * x / 2) / np.linalg.norm(np.exp(-x * x / 2)))
    rt = pure_decoherence_closed(rho0, DecoherenceTensor.from_components(gxx=0.3), 2.0, x)
    assert abs(np.trace(rt.matrix) - 1) < 1e-12
    assert purity(rt) < purity(rho0)
    with pytest.raises(ValueError):
        pure_decoherence_closed(rho0, DecoherenceTensor.from_components(0.1, 0.0, 0.1), 1.0, x)


def test_closed_form_purity_monotone():
    x = np.linspace(-5, 5, 24)
    rho = DensityOperator.from_matrix(random_density(24, np.random.default_rng(2)))
    g = DecoherenceTensor.from_components(gpp=0.05)
    pur = [purity(pure_decoherence_closed(rho, g, t, x)) for t in np.linspace(0, 5, 26)]
    assert all(b <= a + 1e-10 for a, b in zip(pur, pur[1:]))


# -- heat kernel and finite differences --------------------------------------------

G_ND = DecoherenceTensor(np.array([[0.04, 0.01], [0.01, 0.03]]))


def test_heat_kernel_limits(grid, blobs):
    w0 = WignerFunction(grid, mixture(grid, blobs))
    near = heat_kernel_evolve(w0, G_ND, 1e-12)
    assert np.abs(near.values - w0.values).max() < 1e-8
    for t in (0.5, 5.0, 50.0):
        assert abs(heat_kernel_evolve(w0, G_ND, t).norm() - w0.norm()) < 1e-10


def test_heat_kernel_gaussian_covariance(grid):
    cov = np.array([[0.7, -0.2], [-0.2, 0.9]])
    w0 = WignerFunction(grid, gaussian_wigner(grid, (0.3, -0.4), cov))
    wt = heat_kernel_evolve(w0, G_ND, 4.0)
    exact = gaussian_wigner(grid, (0.3, -0.4), cov + 2 * G_ND.g * 4.0)
    assert np.abs(wt.values - exact).max() < 1e-8


def test_heat_kernel_rejects_degenerate(grid):
    w0 = WignerFunction(grid, gaussian_wigner(grid, (0, 0), np.eye(2)))
    with pytest.raises(ValueError):
        heat_kernel_evolve(w0, DecoherenceTensor.from_components(gpp=0.1), 1.0)


def test_finite_difference_constant_field(grid):
    w0 = WignerFunction(grid, np.full(grid.shape, 0.01))
    wt = finite_difference_pure(w0, G_ND, 2.0, stable_dt(grid, G_ND))
    assert np.abs(wt.values - 0.01).max() < 1e-15


def test_finite_difference_matches_heat_kernel(grid, blobs):
    w0 = WignerFunction(grid, mixture(grid, blobs))
    t = 0.25 / (2 * np.linalg.eigvalsh(G_ND.g).max())
    fd = finite_difference_pure(w0, G_ND, t, stable_dt(grid, G_ND))
    hk = heat_kernel_evolve(w0, G_ND, t)
    assert np.linalg.norm(fd.values - hk.values) / np.linalg.norm(hk.values) < 1e-3
    assert abs(fd.norm() - w0.norm()) < 1e-8


def test_finite_difference_degenerate_matches_closed_form():
    grid = PhaseSpaceGrid.square(12.0, 12.0, 128)
    g = DecoherenceTensor.from_components(gpp=0.05)
    w0 = WignerFunction(grid, gaussian_wigner(grid, (0.0, 0.0), np.diag([2.0, 0.125])))
    xi, r0 = xi_representation(w0)
    t = 3.0
    _, rt = xi_representation(finite_difference_pure(w0, g, t, stable_dt(grid, g)))
    expected = r0 * np.exp(-g.gpp * xi[None, :] ** 2 * t)
    mask = np.abs(expected) > 1e-6 * np.abs(expected).max()
    assert np.max(np.abs(rt[mask] - expected[mask]) / np.abs(expected[mask])) < 1e-3


def test_finite_difference_rejects_large_step(grid, blobs):
    w0 = WignerFunction(grid, mixture(grid, blobs))
    with pytest.raises(StabilityError, match="dt <="):
        finite_difference_pure(w0, G_ND, 1.0, 2 * stable_dt(grid, G_ND))


def test_smearing_purity_monotone(grid, blobs):
    w0 = WignerFunction(grid, mixture(grid, blobs))
    pur = [heat_kernel_evolve(w0, G_ND, t).purity() for t in np.linspace(1e-9, 20, 11)]
    assert all(b <= a + 1e-10 for a, b in zip(pur, pur[1:]))


@pytest.mark.parametrize("propagate", ["heat_kernel", "finite_difference"])
def test_evolution_commutes_with_canonical_rotation(grid, blobs, propagate):
    theta, g_rot = canonical_rotation(G_ND)
    R = rotation_matrix(theta)
    assert np.allclose(R @ G_ND.g @ R.T, g_rot.g, atol=1e-15)
    t = 3.0
    rotated = [(R @ m, R @ c @ R.T) for m, c in blobs]
    w_rot = WignerFunction(grid, mixture(grid, rotated))
    if propagate == "heat_kernel":
        evolved = heat_kernel_evolve(w_rot, g_rot, t)
    else:
        evolved = finite_difference_pure(w_rot, g_rot, t, stable_dt(grid, g_rot))
    # evolving first in the original frame gives covariances Σ + 2gt, then rotate
    target = mixture(grid, [(R @ m, R @ (c + 2 * G_ND.g * t) @ R.T) for m, c in blobs])
    assert np.abs(evolved.values - target).max() / np.abs(target).max() < 1e-6


# -- semiclassical flow --------------------------------------------------------------

def test_harmonic_rotation_quarter_period():
    grid = PhaseSpaceGrid.square(8.0, 8.0, 128)
    h = HamiltonField.harmonic(grid)
    mean0, cov0 = np.array([1.5, 0.0]), np.array([[0.5, 0.1], [0.1, 0.5]])
    w0 = WignerFunction(grid, gaussian_wigner(grid, mean0, cov0))
    assert not np.any(moyal_correction(w0.values, h))
    q = math.pi / 2
    _, ws = semiclassical_evolve(w0, h, EvolutionSpec("semiclassical", q, q / 300))
    R = np.array([[0.0, 1.0], [-1.0, 0.0]])
    exact = gaussian_wigner(grid, R @ mean0, R @ cov0 @ R.T)
    assert np.abs(ws[-1].values - exact).max() / exact.max() < 1e-4
    assert abs(ws[-1].purity() - w0.purity()) < 1e-6 * w0.purity()


def test_constant_hamiltonian_is_static(grid, blobs):
    w0 = WignerFunction(grid, mixture(grid, blobs))
    h = HamiltonField.polynomial(grid, {(0, 0): 2.5})
    _, ws = semiclassical_evolve(w0, h, EvolutionSpec("semiclassical", 1.0, 0.1))
    assert np.array_equal(ws[-1].values, w0.values)


def test_cubic_hbar_squared_scaling():
    diffs = []
    for hbar in (0.4, 0.2):
        grid = PhaseSpaceGrid.square(8.0, 8.0, 128, hbar=hbar)
        h = HamiltonField.polynomial(grid, {(0, 2): 0.5, (2, 0): 0.5, (3, 0): 0.05})
        w0 = WignerFunction(grid, gaussian_wigner(grid, (0.5, 0.0), np.diag([0.3, 0.3])))
        runs = [semiclassical_evolve(w0, h, EvolutionSpec("semiclassical", 1.0, 0.004, hbar_order=o))[1][-1]
                for o in (1, 2)]
        # W carries a factor ħ from its normalization, so compare relative differences
        diffs.append(np.abs(runs[1].values - runs[0].values).max() / np.abs(w0.values).max())
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.2)


def test_semiclassical_errors():
    grid = PhaseSpaceGrid.square(8.0, 8.0, 64)
    w0 = WignerFunction(grid, gaussian_wigner(grid, (4.0, 0.0), np.diag([0.5, 0.5])))
    drift = HamiltonField.polynomial(grid, {(0, 1): 1.0})  # ẋ = 1: the packet reaches the edge
    with pytest.raises(BoundaryError):
        semiclassical_evolve(w0, drift, EvolutionSpec("semiclassical", 6.0, 0.05))
    with pytest.raises(StabilityError):
        semiclassical_evolve(w0, HamiltonField.harmonic(grid), EvolutionSpec("semiclassical", 1.0, 5.0))


def test_spec_validation():
    with pytest.raises(ValueError):
        EvolutionSpec("bogus", 1.0, 0.1)
    with pytest.raises(ValueError):
        EvolutionSpec("heat_kernel", 1.0, 0.0)
    with pytest.raises(ValueError):
        EvolutionSpec("semiclassical", 1.0, 0.1, hbar_order=3)
