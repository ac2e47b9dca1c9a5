"""Projection onto the relevant observables of decoherence.

The relevant set is {|k><k'| ⊗ I_e} ∪ {I} ∪ {I_c ⊗ H_e}. The test density is
ρ_r ⊗ ρ_e with ρ_e thermal, and P maps any composite density onto the
manifold of test densities reproducing those averages.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    DensityOperator,
    HilbertDims,
    Operator,
    ThermalEnvironment,
    ptrace_env,
)


class DegenerateEnvironmentError(ValueError):
    """Energy variance of the environment vanishes; P is undefined."""


DEGENERACY_TOL = 1e-14


@dataclass(frozen=True)
class RelevantSet:
    d_c: int
    include_identity: bool = True
    include_env_energy: bool = True
    collective_dyads: tuple = field(default=())

    def __post_init__(self):
        if not self.collective_dyads:
            pairs = tuple((k, kp) for k in range(self.d_c) for kp in range(self.d_c))
            object.__setattr__(self, "collective_dyads", pairs)
        covered = {(k, kp) for k, kp in self.collective_dyads}
        if len(covered) != self.d_c ** 2:
            raise ValueError("dyads must cover the full collective basis")

    def observables(self, h_e: np.ndarray) -> dict:
        """Composite matrices keyed by label: ('dyad', k, k'), 'one', 'env'."""
        d_e = h_e.shape[0]
        ie = np.eye(d_e)
        out = {}
        for k, kp in self.collective_dyads:
            e = np.zeros((self.d_c, self.d_c))
            e[k, kp] = 1.0
            out[("dyad", k, kp)] = np.kron(e, ie)
        if self.include_identity:
            out["one"] = np.eye(self.d_c * d_e)
        if self.include_env_energy:
            out["env"] = np.kron(np.eye(self.d_c), h_e)
        return out

    def hermitian_collective(self) -> list[np.ndarray]:
        """Orthonormal Hermitian basis of collective operators (Tr AB = δ)."""
        d = self.d_c
        basis = []
        for k in range(d):
            e = np.zeros((d, d), complex)
            e[k, k] = 1
            basis.append(e)
            for kp in range(k + 1, d):
                s = np.zeros((d, d), complex)
                s[k, kp] = s[kp, k] = 1 / np.sqrt(2)
                a = np.zeros((d, d), complex)
                a[k, kp] = -1j / np.sqrt(2)
                a[kp, k] = 1j / np.sqrt(2)
                basis += [s, a]
        return basis


@dataclass(frozen=True)
class ProjectionContext:
    rho_c: np.ndarray
    env: ThermalEnvironment

    def __post_init__(self):
        h = self.env.hamiltonian.entries
        scale = np.abs(np.linalg.eigvalsh(h)).max() if h.size else 0.0
        if self.env.variance <= DEGENERACY_TOL * max(scale, 1e-300) ** 2:
            raise DegenerateEnvironmentError(
                f"environment energy variance {self.env.variance:.3e} is degenerate"
            )

    @property
    def dims(self) -> HilbertDims:
        return HilbertDims(self.rho_c.shape[0], self.env.rho.shape[0])

    @property
    def energy_fluctuation(self) -> np.ndarray:
        """ρ_e (H_e - E) / Δ²."""
        e = self.env
        h = e.hamiltonian.entries
        return e.rho @ (h - e.energy * np.eye(h.shape[0])) / e.variance


def build_test_density(rho_r: DensityOperator, env: ThermalEnvironment) -> DensityOperator:
    return DensityOperator(Operator(np.kron(rho_r.matrix, env.rho), "composite"))


def auxiliary_densities(ctx: ProjectionContext) -> dict:
    """s_{kk'} = |k'><k| ⊗ ρ_e, s_e = ρ_c ⊗ ρ_e(H_e-E)/Δ², s_1 = -E s_e.

    Dyad densities are not Hermitian, so plain arrays are returned.
    """
    d_c = ctx.rho_c.shape[0]
    out = {}
    for k in range(d_c):
        for kp in range(d_c):
            e = np.zeros((d_c, d_c))
            e[kp, k] = 1.0
            out[("dyad", k, kp)] = np.kron(e, ctx.env.rho)
    s_e = np.kron(ctx.rho_c, ctx.energy_fluctuation)
    out["env"] = s_e
    out["one"] = -ctx.env.energy * s_e
    return out


def orthogonality_matrix(ctx: ProjectionContext, relevant: RelevantSet | None = None):
    """M[i, j] = Tr(s_i A^j) with labels in a fixed order."""
    relevant = relevant or RelevantSet(ctx.rho_c.shape[0])
    obs = relevant.observables(ctx.env.hamiltonian.entries)
    aux = auxiliary_densities(ctx)
    labels = [lab for lab in obs if lab in aux]
    m = np.array([[np.trace(aux[i] @ obs[j]) for j in labels] for i in labels])
    return labels, m


def project_P_matrix(mu: np.ndarray, ctx: ProjectionContext) -> np.ndarray:
    dims = ctx.dims
    e = ctx.env
    mu_r = ptrace_env(mu, dims)
    h_full = np.kron(np.eye(dims.d_c), e.hamiltonian.entries)
    shift = np.trace(h_full @ mu) - e.energy * np.trace(mu)
    return np.kron(mu_r, e.rho) + np.kron(ctx.rho_c, ctx.energy_fluctuation) * shift


def project_P(mu: DensityOperator, ctx: ProjectionContext) -> DensityOperator:
    """Pμ = tr_e μ ⊗ ρ_e + ρ_c ⊗ ρ_e(H_e-E)/Δ² · (Tr H_e μ - E Tr μ)."""
    out = project_P_matrix(mu.matrix, ctx)
    return DensityOperator.from_matrix(out, "composite", hermitize=True)


def project_Q_matrix(mu: np.ndarray, ctx: ProjectionContext) -> np.ndarray:
    return mu - project_P_matrix(mu, ctx)


def renormalize_coupling(h_c: Operator, h_1: Operator, env: ThermalEnvironment) -> tuple[Operator, Operator]:
    """Move the mean-field part tr_e(H₁ρ_e) of the coupling into H_c."""
    d_c = h_c.dim
    d_e = env.rho.shape[0]
    if h_1.dim != d_c * d_e:
        raise ValueError("coupling dimension does not match collective ⊗ environment")
    dims = HilbertDims(d_c, d_e)
    mean = ptrace_env(h_1.entries @ np.kron(np.eye(d_c), env.rho), dims)
    mean = 0.5 * (mean + mean.conj().T)
    hc_new = Operator(h_c.entries + mean, h_c.space_tag)
    h1_new = Operator(h_1.entries - np.kron(mean, np.eye(d_e)), "composite")
    return hc_new, h1_new


def coupling_mean(h_1: np.ndarray, env: ThermalEnvironment, d_c: int) -> np.ndarray:
    dims = HilbertDims(d_c, env.rho.shape[0])
    return ptrace_env(h_1 @ np.kron(np.eye(d_c), env.rho), dims)
