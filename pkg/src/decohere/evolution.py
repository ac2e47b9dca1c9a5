"""Propagators for the reduced dynamics.

Operator level: second-order master equations (time-local and retarded)
for a finite collective system coupled to a finite environment.
Phase-space level: degenerate closed forms, the heat kernel, an explicit
spectral integrator for the decoherence Laplacian, and the semiclassical
Liouville flow with its ħ² correction.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import DecoherenceTensor
from .hilbert import (
    DensityOperator,
    HilbertDims,
    Operator,
    ThermalEnvironment,
    ptrace_env,
    thermal_state,
)
from .weyl import PhaseSpaceGrid, WignerFunction, boundary_mass, spectral_derivative

log = logging.getLogger(__name__)

MODES = ("exact_oracle", "retarded_master", "markov_master", "pure_decoherence_closed",
         "heat_kernel", "finite_difference", "semiclassical")


class StabilityError(ValueError):
    pass


class BoundaryError(RuntimeError):
    pass


@dataclass
class EvolutionSpec:
    mode: str
    t_final: float
    dt: float
    include_hamiltonian_flow: bool = True
    hbar_order: int = 2
    sample_every: int = 1
    memory_time: float | None = None  # retarded kernel cutoff; None = until decay
    stationary_kernel: bool = False   # markov: use the t -> ∞ regulated kernel
    epsilon: float = 0.0              # regulator for the stationary kernel
    boundary_limit: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.hbar_order not in (1, 2):
            raise ValueError("hbar_order must be 1 or 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


# -- operator-level master equations ------------------------------------------

@dataclass(frozen=True)
class BathCoupling:
    """Environment Hamiltonian, composite coupling and temperature."""

    h_e: Operator
    h_1: Operator
    beta: float
    env: ThermalEnvironment = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "env", thermal_state(self.h_e, self.beta))

    @property
    def d_e(self) -> int:
        return self.h_e.dim

    def mean_field(self, d_c: int) -> np.ndarray:
        dims = HilbertDims(d_c, self.d_e)
        return ptrace_env(self.h_1.entries @ np.kron(np.eye(d_c), self.env.rho), dims)


def _check_renormalized(h1: np.ndarray, coupling: BathCoupling, d_c: int, tol: float = 1e-10):
    mf = coupling.mean_field(d_c)
    scale = max(np.abs(h1).max(), 1e-300)
    if np.abs(mf).max() > tol * scale:
        raise ValueError(
            f"coupling carries a mean-field part (max {np.abs(mf).max():.2e}); "
            "apply renormalize_coupling first"
        )


class _MasterRHS:
    """Shared pieces of the second-order generator."""

    def __init__(self, h_c: np.ndarray, coupling: BathCoupling, hbar: float):
        self.hbar = hbar
        self.d_c = h_c.shape[0]
        self.d_e = coupling.d_e
        self.dims = HilbertDims(self.d_c, self.d_e, hbar)
        self.h_c = h_c
        self.h1 = coupling.h_1.entries
        self.rho_e = coupling.env.rho
        h0 = np.kron(h_c, np.eye(self.d_e)) + np.kron(np.eye(self.d_c), coupling.h_e.entries)
        self.w0, self.v0 = np.linalg.eigh(0.5 * (h0 + h0.conj().T))
        self.h1_eig = self.v0.conj().T @ self.h1 @ self.v0
        self.dw = (self.w0[:, None] - self.w0[None, :]) / hbar

    def unitary_part(self, rho: np.ndarray) -> np.ndarray:
        return -1j / self.hbar * (self.h_c @ rho - rho @ self.h_c)

    def dissipator(self, rho: np.ndarray, m: np.ndarray) -> np.ndarray:
        """-(1/ħ²) tr_e [H₁, [M, ρ⊗ρ_e]]."""
        big = np.kron(rho, self.rho_e)
        inner = m @ big - big @ m
        outer = self.h1 @ inner - inner @ self.h1
        return -ptrace_env(outer, self.dims) / self.hbar ** 2

    def memory_integral(self, t: float, stationary: bool, eps: float) -> np.ndarray:
        """M = ∫₀^t U₀(τ) H₁ U₀(τ)† dτ, exact in the H₀ eigenbasis."""
        w = self.dw
        if stationary:
            # ∫₀^∞ e^{-iωτ-ετ} dτ = 1/(ε + iω); ε = 0 keeps the ω = 0 part finite only if absent
            with np.errstate(divide="ignore", invalid="ignore"):
                f = 1.0 / (eps + 1j * w)
            f[~np.isfinite(f)] = 0.0
        else:
            small = np.abs(w * t) < 1e-8
            with np.errstate(divide="ignore", invalid="ignore"):
                f = np.where(small, t - 0.5j * w * t * t, (1 - np.exp(-1j * w * t)) / (1j * w + small))
        return self.v0 @ (self.h1_eig * f) @ self.v0.conj().T

    def propagated(self, tau: float) -> np.ndarray:
        u = (self.v0 * np.exp(-1j * self.w0 * tau / self.hbar)) @ self.v0.conj().T
        return u


def _hermitize(m):
    return 0.5 * (m + m.conj().T)


def evolve_master(rho_r0: DensityOperator, h_c: Operator, coupling: BathCoupling | None,
                  spec: EvolutionSpec, hbar: float = 1.0):
    """Second-order master equation for ρ_r. Returns (times, states).

    markov_master replaces ρ_r(t') inside the memory integral by the freely
    back-propagated ρ_r(t), which makes the generator time-local; the memory
    window runs from the initial time (ρ₂ = 0 there) unless
    `spec.stationary_kernel` asks for the t → ∞ limit.
    retarded_master keeps the full history of ρ_r on the step grid.
    """
    if spec.mode not in ("markov_master", "retarded_master"):
        raise ValueError("evolve_master handles markov_master and retarded_master")
    rho = np.array(rho_r0.matrix, dtype=complex)
    hc = np.array(h_c.entries, dtype=complex)
    if coupling is None or np.abs(coupling.h_1.entries).max() == 0:
        from .hilbert import evolve_exact
        n = spec.n_steps
        times, states = evolve_exact(rho_r0, h_c, n * spec.dt, n + 1, hbar)
        keep = list(range(0, n + 1, spec.sample_every))
        return times[keep], [states[i] for i in keep]
    _check_renormalized(coupling.h_1.entries, coupling, hc.shape[0])
    rhs = _MasterRHS(hc, coupling, hbar)
    if spec.mode == "markov_master":
        return _run_markov(rho, rhs, spec)
    return _run_retarded(rho, rhs, spec)


def _run_markov(rho, rhs: _MasterRHS, spec: EvolutionSpec):
    dt = spec.dt
    n = spec.n_steps
    if spec.stationary_kernel:
        m_inf = rhs.memory_integral(0.0, True, spec.epsilon)
        mem = lambda t: m_inf  # noqa: E731
    else:
        mem = lambda t: rhs.memory_integral(t, False, 0.0)  # noqa: E731

    def f(t, r):
        return rhs.unitary_part(r) + rhs.dissipator(r, mem(t))

    times, out = [0.0], [DensityOperator.from_matrix(rho, hermitize=True)]
    for k in range(n):
        t = k * dt
        mid = rho + 0.5 * dt * f(t, rho)
        rho = _hermitize(rho + dt * f(t + 0.5 * dt, mid))
        if (k + 1) % spec.sample_every == 0:
            times.append((k + 1) * dt)
            out.append(DensityOperator.from_matrix(rho, hermitize=True))
    return np.array(times), out


def _run_retarded(rho, rhs: _MasterRHS, spec: EvolutionSpec):
    dt = spec.dt
    n = spec.n_steps
    # memory length in steps: explicit cutoff, else kernel decay below 1e-6
    if spec.memory_time is not None:
        kmax = max(1, int(math.ceil(spec.memory_time / dt)))
    else:
        kmax = n + 1
        c0 = None
        for k in range(n + 1):
            u = rhs.propagated(k * dt)
            c = np.abs(ptrace_env(rhs.h1 @ u @ rhs.h1 @ u.conj().T @ np.kron(np.eye(rhs.d_c), rhs.rho_e),
                                  rhs.dims)).max()
            c0 = c if c0 is None else c0
            if k > 0 and c < 1e-6 * c0:
                kmax = k
                log.info("retarded kernel truncated after %d steps", k)
                break
    kmax = min(kmax, n + 1)
    kern = _kernel_superops(rhs, dt, kmax)
    d = rhs.d_c
    d2 = d * d
    # column block k holds K_k, so the τ-sum is a single matvec
    kern_flat = np.ascontiguousarray(kern.transpose(1, 0, 2).reshape(d2, -1))

    def kernel_term(hist):
        # trapezoid over τ_k = k dt, hist[-1 - k] = vec ρ(t - τ_k)
        kk = min(len(hist) - 1, kmax)
        if kk == 0:
            return np.zeros(d2, dtype=complex)
        past = np.array(hist[::-1][: kk + 1])
        past[0] *= 0.5
        past[-1] *= 0.5
        return dt * (kern_flat[:, : (kk + 1) * d2] @ past.ravel())

    def unitary(v):
        return rhs.unitary_part(v.reshape(d, d)).ravel()

    v = rho.ravel().copy()
    hist = [v]
    times, out = [0.0], [DensityOperator.from_matrix(rho, hermitize=True)]
    f_prev = unitary(v) + kernel_term(hist)
    for k in range(n):
        pred = v + dt * f_prev
        f_next = unitary(pred) + kernel_term(hist + [pred])
        v = _hermitize((v + 0.5 * dt * (f_prev + f_next)).reshape(d, d)).ravel()
        hist.append(v)
        if len(hist) > kmax + 2:
            hist.pop(0)
        f_prev = unitary(v) + kernel_term(hist)
        if (k + 1) % spec.sample_every == 0:
            times.append((k + 1) * dt)
            out.append(DensityOperator.from_matrix(v.reshape(d, d), hermitize=True))
    return np.array(times), out


def _kernel_superops(rhs: _MasterRHS, dt: float, kmax: int) -> np.ndarray:
    """K_k acting on vec ρ: -(1/ħ²) tr_e[H₁, U_k [H₁, ρ⊗ρ_e] U_k†], k = 0..kmax."""
    d = rhs.d_c
    basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    # [H₁, E_ab ⊗ ρ_e] for every collective matrix unit, once
    bigs = np.array([np.kron(e, rhs.rho_e) for e in basis])
    inner0 = rhs.h1 @ bigs - bigs @ rhs.h1
    out = np.empty((kmax + 1, d * d, d * d), dtype=complex)
    for k in range(kmax + 1):
        u = rhs.propagated(k * dt)
        inner = u @ inner0 @ u.conj().T
        outer = rhs.h1 @ inner - inner @ rhs.h1
        cols = np.array([ptrace_env(o, rhs.dims).ravel() for o in outer])
        out[k] = -cols.T / rhs.hbar ** 2
    return out


# -- degenerate closed forms --------------------------------------------------

def momentum_basis(n: int, dx: float, hbar: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Unitary DFT columns (plane waves) and their momenta for n nodes spacing dx."""
    p = 2 * np.pi * hbar * np.fft.fftfreq(n, dx)
    x = np.arange(n)
    f = np.exp(1j * np.outer(x, p) * dx / hbar) / np.sqrt(n)
    return f, p


def pure_decoherence_closed(rho_r0: DensityOperator, g: DecoherenceTensor, t: float,
                            positions: np.ndarray, hbar: float = 1.0) -> DensityOperator:
    """ρ(x,x',t) = ρ(x,x',0) exp[-g^pp (x-x')² t/ħ²] (or the momentum dual)."""
    kind = g.degenerate_kind()
    if kind is None:
        raise ValueError("closed form needs a degenerate tensor with only g^pp or only g^xx")
    rho = rho_r0.matrix
    x = np.asarray(positions, dtype=float)
    if kind == "position":
        d = x[:, None] - x[None, :]
        return DensityOperator.from_matrix(rho * np.exp(-g.gpp * d * d * t / hbar ** 2), hermitize=True)
    dx = x[1] - x[0]
    f, p = momentum_basis(x.size, dx, hbar)
    rp = f.conj().T @ rho @ f
    d = p[:, None] - p[None, :]
    rp = rp * np.exp(-g.gxx * d * d * t / hbar ** 2)
    return DensityOperator.from_matrix(f @ rp @ f.conj().T, hermitize=True)


# -- phase-space propagators --------------------------------------------------

def _smear(values: np.ndarray, grid: PhaseSpaceGrid, g: np.ndarray, t: float) -> np.ndarray:
    kx, kp = grid.wavenumbers()
    KX, KP = np.meshgrid(kx, kp, indexing="ij")
    q = g[0, 0] * KX * KX + 2 * g[0, 1] * KX * KP + g[1, 1] * KP * KP
    return np.fft.ifft2(np.fft.fft2(values) * np.exp(-q * t)).real


def heat_kernel_evolve(w0: WignerFunction, g: DecoherenceTensor, t: float) -> WignerFunction:
    """Convolution with the unit-mass Gaussian of covariance 2gt (periodized)."""
    if g.is_degenerate:
        raise ValueError("heat kernel needs a non-degenerate tensor; use the closed form")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return WignerFunction(w0.grid, _smear(w0.values, w0.grid, g.g, t))


def stable_dt(grid: PhaseSpaceGrid, g: DecoherenceTensor) -> float:
    lam = float(np.linalg.eigvalsh(g.g).max())
    if lam <= 0:
        return math.inf
    return 0.4 * min(grid.dx ** 2, grid.dp ** 2) / lam


_RK4_ACCURACY_LIMIT = 1.0  # |λh| per substep; RK4 per-step relative error ≲ |λh|⁵/120


def finite_difference_pure(w0: WignerFunction, g: DecoherenceTensor, t: float,
                           dt: float) -> WignerFunction:
    """Explicit RK4 for Ẇ = ∂ᵢ(gⁱʲ∂ⱼW) with spectral derivatives.

    The outer step must satisfy dt ≤ 0.4·min(Δx², Δp²)/λ_max(g). Each outer
    step is split into RK4 substeps so that the stiffest spectral mode sees
    |λh| ≤ 1, which keeps the scheme accurate, not merely stable.
    """
    grid = w0.grid
    bound = stable_dt(grid, g)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound; use dt <= {bound:.3e}")
    kx, kp = grid.wavenumbers()
    # odd derivatives drop the Nyquist mode, as in spectral_derivative
    kxo, kpo = kx.copy(), kp.copy()
    kxo[grid.n_x // 2] = 0.0
    kpo[grid.n_p // 2] = 0.0
    gg = g.g
    # the spectral Laplacian is diagonal in Fourier space
    sym = -(gg[0, 0] * kx[:, None] ** 2 + 2 * gg[0, 1] * kxo[:, None] * kpo[None, :]
            + gg[1, 1] * kp[None, :] ** 2)
    n_outer = max(1, int(round(t / dt)))
    h_outer = t / n_outer
    n_sub = max(1, int(math.ceil(np.abs(sym).max() * h_outer / _RK4_ACCURACY_LIMIT)))
    h = h_outer / n_sub
    f = np.fft.fft2(w0.values)
    for _ in range(n_outer * n_sub):
        k1 = sym * f
        k2 = sym * (f + 0.5 * h * k1)
        k3 = sym * (f + 0.5 * h * k2)
        k4 = sym * (f + h * k3)
        f = f + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return WignerFunction(grid, np.fft.ifft2(f).real)


def xi_representation(w: WignerFunction) -> tuple[np.ndarray, np.ndarray]:
    """Partial inverse Fourier transform in p: (x, ξ) samples of ρ(x+ξ/2, x-ξ/2).

    Returns (xi, values) with values[i, k] ∝ ρ at x_i and separation xi[k].
    """
    g = w.grid
    xi = g.hbar * 2 * np.pi * np.fft.fftfreq(g.n_p, g.dp)
    vals = np.fft.ifft(w.values * np.exp(0j), axis=1)
    # undo the offset p_min so phases refer to p = 0
    vals = vals * np.exp(1j * g.p_min * xi / g.hbar)[None, :]
    return xi, vals


# -- semiclassical flow -------------------------------------------------------

@dataclass
class HamiltonField:
    """Classical Hamilton function h(x,p) on a grid, derivatives to third order."""

    grid: PhaseSpaceGrid
    values: np.ndarray
    derivs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("Hamilton field does not match grid")

    def d(self, nx: int, np_: int) -> np.ndarray:
        if (nx, np_) == (0, 0):
            return self.values
        if (nx, np_) not in self.derivs:
            self.derivs[(nx, np_)] = spectral_derivative(self.values, self.grid, nx, np_)
        return self.derivs[(nx, np_)]

    @classmethod
    def polynomial(cls, grid: PhaseSpaceGrid, coeffs: dict) -> "HamiltonField":
        """h = Σ c_ab x^a p^b with exact derivatives through third order."""
        X, P = grid.mesh()

        def ev(nx, np_):
            out = np.zeros(grid.shape)
            for (a, b), c in coeffs.items():
                if a < nx or b < np_:
                    continue
                fa = math.perm(a, nx)
                fb = math.perm(b, np_)
                out = out + c * fa * fb * X ** (a - nx) * P ** (b - np_)
            return out

        derivs = {(i, j): ev(i, j) for i in range(4) for j in range(4 - i) if (i, j) != (0, 0)}
        return cls(grid, ev(0, 0), derivs)

    @classmethod
    def harmonic(cls, grid: PhaseSpaceGrid, mass: float = 1.0, omega: float = 1.0):
        return cls.polynomial(grid, {(0, 2): 0.5 / mass, (2, 0): 0.5 * mass * omega ** 2})

    @classmethod
    def from_callables(cls, grid: PhaseSpaceGrid, h: Callable, derivatives: dict | None = None):
        X, P = grid.mesh()
        derivs = {k: np.broadcast_to(np.asarray(f(X, P), dtype=float), grid.shape).copy()
                  for k, f in (derivatives or {}).items()}
        return cls(grid, np.asarray(h(X, P), dtype=float), derivs)


def moyal_correction(w: np.ndarray, h: HamiltonField) -> np.ndarray:
    """(ħ²/24)(h_ppp W_xxx - 3h_xpp W_pxx + 3h_pxx W_xpp - h_xxx W_ppp)."""
    g = h.grid
    hb = g.hbar
    terms = 0.0
    for (hx, hp), (wx, wp), c in (((0, 3), (3, 0), 1.0), ((1, 2), (2, 1), -3.0),
                                  ((2, 1), (1, 2), 3.0), ((3, 0), (0, 3), -1.0)):
        dh = h.d(hx, hp)
        if not np.any(dh):
            continue
        terms = terms + c * dh * spectral_derivative(w, g, wx, wp)
    return (hb * hb / 24.0) * terms if not np.isscalar(terms) else np.zeros_like(w)


def liouville_rhs(w: np.ndarray, h: HamiltonField, hbar_order: int = 2) -> np.ndarray:
    g = h.grid
    out = h.d(1, 0) * spectral_derivative(w, g, 0, 1) - h.d(0, 1) * spectral_derivative(w, g, 1, 0)
    if hbar_order >= 2:
        out = out + moyal_correction(w, h)
    return out


def advective_dt_limit(h: HamiltonField) -> float:
    g = h.grid
    vx = np.abs(h.d(0, 1)).max()
    vp = np.abs(h.d(1, 0)).max()
    rate = vx * np.pi / g.dx + vp * np.pi / g.dp
    return math.inf if rate == 0 else 2.8 / rate


def semiclassical_evolve(w0: WignerFunction, h: HamiltonField, spec: EvolutionSpec,
                         g: DecoherenceTensor | None = None) -> tuple[np.ndarray, list[WignerFunction]]:
    """RK4 Liouville flow (plus ħ² term), Strang-split with decoherence if g given."""
    if h.grid != w0.grid:
        raise ValueError("Hamilton field and Wigner function use different grids")
    limit = advective_dt_limit(h)
    if spec.dt > limit:
        raise StabilityError(f"dt={spec.dt:.3e} violates the advective limit {limit:.3e}")
    grid = w0.grid
    w = np.array(w0.values, dtype=float)
    flow = spec.include_hamiltonian_flow
    smear = g is not None and np.any(g.g)

    def step_flow(w, dt):
        k1 = liouville_rhs(w, h, spec.hbar_order)
        k2 = liouville_rhs(w + 0.5 * dt * k1, h, spec.hbar_order)
        k3 = liouville_rhs(w + 0.5 * dt * k2, h, spec.hbar_order)
        k4 = liouville_rhs(w + dt * k3, h, spec.hbar_order)
        return w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    times, out = [0.0], [WignerFunction(grid, w.copy())]
    n = spec.n_steps
    for k in range(n):
        if smear and flow:
            w = step_flow(w, 0.5 * spec.dt)
            w = _smear(w, grid, g.g, spec.dt)
            w = step_flow(w, 0.5 * spec.dt)
        elif flow:
            w = step_flow(w, spec.dt)
        elif smear:
            w = _smear(w, grid, g.g, spec.dt)
        bm = boundary_mass(w)
        if bm > spec.boundary_limit:
            raise BoundaryError(f"boundary mass {bm:.2e} at t={(k + 1) * spec.dt:.4g}; enlarge the grid")
        if (k + 1) % spec.sample_every == 0:
            times.append((k + 1) * spec.dt)
            out.append(WignerFunction(grid, w.copy()))
    return np.array(times), out


def decoherence_generator(rho: np.ndarray, g: DecoherenceTensor, x_op: np.ndarray,
                          p_op: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """Operator form of ∂ᵢ(gⁱʲ∂ⱼW):
    (1/ħ²)(-g^xx[P,[P,ρ]] - g^pp[X,[X,ρ]] + g^xp([X,[P,ρ]] + [P,[X,ρ]])).
    """
    def c(a, b):
        return a @ b - b @ a

    out = -g.gpp * c(x_op, c(x_op, rho))
    if g.gxx:
        out = out - g.gxx * c(p_op, c(p_op, rho))
    if g.gxp:
        out = out + g.gxp * (c(x_op, c(p_op, rho)) + c(p_op, c(x_op, rho)))
    return out / hbar ** 2


def position_momentum_ops(x: np.ndarray, hbar: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal X and spectral P on a periodic position grid."""
    n = x.size
    f, p = momentum_basis(n, x[1] - x[0], hbar)
    return np.diag(x).astype(complex), (f * p) @ f.conj().T
