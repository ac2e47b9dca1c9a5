"""Finite-dimensional operator algebra on a collective ⊗ environment space.

Everything here is dense linear algebra. The composite basis is ordered
collective-major, |k,n> = |k> ⊗ |n>, so index = k * d_e + n.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
TAGS = ("collective", "environment", "composite")


class CompositionError(ValueError):
    """Raised when operators from incompatible spaces are combined."""


class HermiticityError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertDims:
    d_c: int
    d_e: int
    hbar: float = 1.0

    def __post_init__(self):
        if self.d_c < 1 or self.d_e < 1:
            raise ValueError("dimensions must be >= 1")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    @property
    def d(self) -> int:
        return self.d_c * self.d_e


@dataclass(frozen=True)
class Operator:
    """A square complex matrix tagged with the space it acts on."""

    entries: np.ndarray
    space_tag: str = "collective"

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        if self.space_tag not in TAGS:
            raise ValueError(f"unknown space tag {self.space_tag!r}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return hermitian_defect(self.entries) <= tol

    def dagger(self) -> "Operator":
        return Operator(self.entries.conj().T, self.space_tag)

    def __matmul__(self, other: "Operator") -> "Operator":
        _same_space(self, other)
        return Operator(self.entries @ other.entries, self.space_tag)

    def __add__(self, other: "Operator") -> "Operator":
        _same_space(self, other)
        return Operator(self.entries + other.entries, self.space_tag)

    def __sub__(self, other: "Operator") -> "Operator":
        _same_space(self, other)
        return Operator(self.entries - other.entries, self.space_tag)

    def __mul__(self, c) -> "Operator":
        return Operator(self.entries * c, self.space_tag)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, dim: int, tag: str = "collective") -> "Operator":
        return cls(np.eye(dim), tag)


def _same_space(a: Operator, b: Operator):
    if a.space_tag != b.space_tag or a.dim != b.dim:
        raise CompositionError(
            f"cannot combine {a.space_tag}[{a.dim}] with {b.space_tag}[{b.dim}]"
        )


def hermitian_defect(m: np.ndarray) -> float:
    """Max |m - m†| relative to max |m| (0 for the zero matrix)."""
    scale = np.abs(m).max() if m.size else 0.0
    if scale == 0:
        return 0.0
    return float(np.abs(m - m.conj().T).max() / scale)


@dataclass(frozen=True)
class DensityOperator:
    """Trace-class operator. Not required to be positive or unit-trace."""

    op: Operator
    trace: complex = field(init=False)

    def __post_init__(self):
        if hermitian_defect(self.op.entries) > HERMITIAN_TOL:
            raise HermiticityError("density operator must be Hermitian")
        object.__setattr__(self, "trace", complex(np.trace(self.op.entries)))

    @classmethod
    def from_matrix(cls, m, tag: str = "collective", hermitize: bool = False):
        m = np.asarray(m, dtype=complex)
        if hermitize:
            m = 0.5 * (m + m.conj().T)
        return cls(Operator(m, tag))

    @classmethod
    def pure(cls, psi, tag: str = "collective") -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls.from_matrix(np.outer(psi, psi.conj()), tag, hermitize=True)

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries

    @property
    def dim(self) -> int:
        return self.op.dim

    def is_physical(self, tol: float = 1e-10) -> bool:
        ev = np.linalg.eigvalsh(self.matrix)
        return abs(self.trace - 1) < 1e-10 and ev.min() >= -tol


def tensor_product(a: Operator, b: Operator) -> Operator:
    if a.space_tag != "collective" or b.space_tag != "environment":
        raise CompositionError(
            "tensor_product expects (collective, environment), "
            f"got ({a.space_tag}, {b.space_tag})"
        )
    return Operator(np.kron(a.entries, b.entries), "composite")


def _reshape4(m: np.ndarray, dims: HilbertDims) -> np.ndarray:
    if m.shape != (dims.d, dims.d):
        raise CompositionError(f"expected composite dim {dims.d}, got {m.shape}")
    return m.reshape(dims.d_c, dims.d_e, dims.d_c, dims.d_e)


def ptrace_env(m: np.ndarray, dims: HilbertDims) -> np.ndarray:
    """Matrix-level partial trace over the environment."""
    return np.einsum("anbn->ab", _reshape4(m, dims))


def ptrace_collective(m: np.ndarray, dims: HilbertDims) -> np.ndarray:
    return np.einsum("kakb->ab", _reshape4(m, dims))


def partial_trace_env(rho: DensityOperator, dims: HilbertDims) -> DensityOperator:
    return DensityOperator(Operator(ptrace_env(rho.matrix, dims), "collective"))


def purity(rho: DensityOperator) -> float:
    m = rho.matrix
    # Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
    return float(np.vdot(m, m).real)


def _eigh_hermitian(h: Operator):
    if not h.is_hermitian():
        raise HermiticityError("generator must be Hermitian")
    return np.linalg.eigh(0.5 * (h.entries + h.entries.conj().T))


def propagator(h: Operator, t: float, hbar: float = 1.0) -> np.ndarray:
    w, v = _eigh_hermitian(h)
    return (v * np.exp(-1j * w * t / hbar)) @ v.conj().T


def evolve_exact(
    rho0: DensityOperator,
    h: Operator,
    t: float,
    steps: int,
    hbar: float = 1.0,
) -> tuple[np.ndarray, list[DensityOperator]]:
    """Sample ρ(t) = U ρ0 U† at `steps` uniform times in [0, t]."""
    if h.dim != rho0.dim:
        raise CompositionError("generator and state dimensions differ")
    w, v = _eigh_hermitian(h)
    # work in the eigenbasis: ρ_ab(t) = ρ_ab(0) exp(-i (w_a - w_b) t / ħ)
    r = v.conj().T @ rho0.matrix @ v
    dw = w[:, None] - w[None, :]
    times = np.linspace(0.0, t, steps)
    out = []
    for tk in times:
        rk = v @ (r * np.exp(-1j * dw * tk / hbar)) @ v.conj().T
        out.append(DensityOperator.from_matrix(rk, rho0.op.space_tag, hermitize=True))
    return times, out


@dataclass(frozen=True)
class ThermalEnvironment:
    hamiltonian: Operator
    beta: float
    alpha: float
    energy: float
    variance: float
    rho: np.ndarray = field(repr=False)

    @property
    def delta(self) -> float:
        return float(np.sqrt(self.variance))

    def density(self) -> DensityOperator:
        return DensityOperator(Operator(self.rho, "environment"))


def thermal_state(h_e: Operator, beta: float) -> ThermalEnvironment:
    """ρ_e = exp(-βH_e - α) with α fixed by unit trace."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    w, v = _eigh_hermitian(h_e)
    alpha = float(logsumexp(-beta * w))
    p = np.exp(-beta * w - alpha)
    rho = (v * p) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    energy = float(p @ w)
    var = float(p @ (w - energy) ** 2)
    var = max(var, 0.0)
    return ThermalEnvironment(h_e, float(beta), alpha, energy, var, rho)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Hilbert–Schmidt-uniform density matrix GG†/tr (full rank by default)."""
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (a + a.conj().T)


# -- serialization -----------------------------------------------------------

def dumps_operator(op: Operator) -> str:
    lines = [f"dim={op.dim} tag={op.space_tag}"]
    for row in op.entries:
        lines.append(",".join(f"{float(z.real)!r}:{float(z.imag)!r}" for z in row))
    return "\n".join(lines) + "\n"


def loads_operator(text: str) -> Operator:
    rows = [ln for ln in text.strip().splitlines() if ln.strip()]
    head = dict(kv.split("=", 1) for kv in rows[0].split())
    d = int(head["dim"])
    body = rows[1:]
    if len(body) != d:
        raise ValueError(f"expected {d} rows, found {len(body)}")
    m = np.empty((d, d), dtype=complex)
    for i, ln in enumerate(body):
        cells = ln.split(",")
        if len(cells) != d:
            raise ValueError(f"row {i} has {len(cells)} entries, expected {d}")
        for j, c in enumerate(cells):
            re, im = c.split(":")
            m[i, j] = complex(float(re), float(im))
    return Operator(m, head["tag"])


def kron_all(ops: Iterable[np.ndarray]) -> np.ndarray:
    out = np.eye(1)
    for o in ops:
        out = np.kron(out, o)
    return out
