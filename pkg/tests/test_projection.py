import numpy as np
import pytest
from hypothesis import given, strategies as st

from decohere.hilbert import (
    DensityOperator,
    HilbertDims,
    Operator,
    ptrace_env,
    random_density,
    random_hermitian,
    thermal_state,
)
from decohere.projection import (
    DegenerateEnvironmentError,
    ProjectionContext,
    RelevantSet,
    auxiliary_densities,
    build_test_density,
    orthogonality_matrix,
    project_P_matrix,
    project_Q_matrix,
    renormalize_coupling,
)


def make_env(d_e, rng, beta=0.8):
    return thermal_state(Operator(random_hermitian(d_e, rng), "environment"), beta)


def make_ctx(d_c, d_e, seed):
    rng = np.random.default_rng(seed)
    return ProjectionContext(random_density(d_c, rng), make_env(d_e, rng)), rng


def test_test_density_averages(rng):
    env = make_env(4, rng)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1
        rho0 = build_test_density(DensityOperator.pure(e), env)
        obs = RelevantSet(3).observables(env.hamiltonian.entries)
        for (tag, a, b) in [lab for lab in obs if isinstance(lab, tuple)]:
            val = np.trace(obs[(tag, a, b)] @ rho0.matrix)
            assert val == pytest.approx(1.0 if (a, b) == (k, k) else 0.0, abs=1e-12)
        assert np.trace(obs["env"] @ rho0.matrix).real == pytest.approx(env.energy, abs=1e-12)
    rr = DensityOperator.from_matrix(random_density(3, rng))
    assert np.abs(ptrace_env(build_test_density(rr, env).matrix, HilbertDims(3, 4)) - rr.matrix).max() < 1e-12


def test_orthogonality():
    ctx, _ = make_ctx(3, 5, 1)
    labels, m = orthogonality_matrix(ctx)
    dy = [i for i, lab in enumerate(labels) if isinstance(lab, tuple)]
    assert np.abs(m[np.ix_(dy, dy)] - np.eye(len(dy))).max() < 1e-12
    env = labels.index("env")
    assert abs(m[env, env] - 1) < 1e-10
    # s_e carries no collective population and no trace
    assert np.abs(m[env, dy]).max() < 1e-12 and abs(m[env, labels.index("one")]) < 1e-12
    aux = auxiliary_densities(ctx)
    obs = RelevantSet(3).observables(ctx.env.hamiltonian.entries)
    assert np.trace(aux["env"] @ obs["env"]) == pytest.approx(1.0, abs=1e-10)


def test_product_state_fixed_point():
    ctx, rng = make_ctx(4, 5, 2)
    mu = np.kron(random_density(4, rng), ctx.env.rho)
    assert np.abs(project_P_matrix(mu, ctx) - mu).max() < 1e-12


@given(st.integers(0, 10_000))
def test_idempotent_and_complement(seed):
    ctx, rng = make_ctx(4, 5, seed)
    mu = random_density(20, rng)
    p1 = project_P_matrix(mu, ctx)
    assert np.abs(project_P_matrix(p1, ctx) - p1).max() < 1e-10 * np.abs(mu).max()
    assert np.abs(project_P_matrix(project_Q_matrix(mu, ctx), ctx)).max() < 1e-10


@given(st.integers(0, 10_000))
def test_relevant_averages_preserved(seed):
    ctx, rng = make_ctx(3, 4, seed)
    mu = random_density(12, rng)
    pm = project_P_matrix(mu, ctx)
    for a in RelevantSet(3).observables(ctx.env.hamiltonian.entries).values():
        assert abs(np.trace(a @ pm) - np.trace(a @ mu)) < 1e-10


def test_kernel_of_P(rng):
    ctx, _ = make_ctx(2, 3, 3)
    # traceless collective part with no energy shift: σz ⊗ ρ_e
    mu = np.kron(np.diag([1.0, -1.0]), ctx.env.rho)
    mu = mu - np.kron(np.diag([1.0, -1.0]), ctx.env.rho)  # zero, then add a Q-type piece
    h = ctx.env.hamiltonian.entries
    x = random_hermitian(6, rng)
    x = x - project_P_matrix(x, ctx)
    assert abs(np.trace(x)) < 1e-12
    assert abs(np.trace(np.kron(np.eye(2), h) @ x)) < 1e-12
    assert np.abs(project_P_matrix(x + mu, ctx)).max() < 1e-12


def test_energy_shift_structure_vanishes_on_Q():
    ctx, rng = make_ctx(3, 4, 4)
    rho = random_density(12, rng)
    q = project_Q_matrix(rho, ctx)
    h = np.kron(np.eye(3), ctx.env.hamiltonian.entries)
    assert abs(np.trace(h @ q) - ctx.env.energy * np.trace(q)) < 1e-10


def test_degenerate_environment_rejected(rng):
    env = thermal_state(Operator(np.eye(3), "environment"), 1.0)
    with pytest.raises(DegenerateEnvironmentError):
        ProjectionContext(random_density(2, rng), env)


def test_renormalize_fixed_point_and_absorption(rng):
    env = make_env(4, rng)
    h_c = Operator(random_hermitian(3, rng))
    a = random_hermitian(3, rng)
    hc2, h12 = renormalize_coupling(h_c, Operator(np.kron(a, np.eye(4)), "composite"), env)
    assert np.abs(h12.entries).max() < 1e-12
    assert np.abs(hc2.entries - (h_c.entries + a)).max() < 1e-12
    # already fluctuation-only
    hc3, h13 = renormalize_coupling(hc2, h12, env)
    assert np.abs(hc3.entries - hc2.entries).max() < 1e-14


@given(st.integers(0, 10_000))
def test_renormalize_conserves_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    env = make_env(4, rng)
    h_c = Operator(random_hermitian(4, rng))
    h1 = Operator(random_hermitian(16, rng), "composite")
    hc2, h12 = renormalize_coupling(h_c, h1, env)
    dims = HilbertDims(4, 4)
    assert np.abs(ptrace_env(h12.entries @ np.kron(np.eye(4), env.rho), dims)).max() < 1e-12
    tot0 = np.kron(h_c.entries, np.eye(4)) + h1.entries
    tot1 = np.kron(hc2.entries, np.eye(4)) + h12.entries
    assert np.abs(tot0 - tot1).max() < 1e-12
    hc3, h13 = renormalize_coupling(hc2, h12, env)
    assert np.abs(h13.entries - h12.entries).max() < 1e-12
