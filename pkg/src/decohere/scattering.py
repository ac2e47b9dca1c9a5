"""Collisional decoherence from a differential cross-section.

F(ξ) = Σ_k Φ_k ∫dΩ' dσ/dΩ(k, θ) [1 - sin(qξ)/(qξ)],  q = 2k sin(θ/2),

which is Φ∫dσ[1 - cos((k - k')·ξ)] averaged over isotropic incidence.
Elastic kinematics only; the object is infinitely heavy. The overall
normalization is fixed by the sum rule F(∞) = Φ_tot σ_tot.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

QUAD_RTOL = 1e-3
QUAD_ORDERS = (64, 128, 256, 512, 1024, 2048, 4096)
QUADRATIC_KXI = 0.05  # k ξ below this is treated as the quadratic regime


class QuadratureError(RuntimeError):
    pass


class NoQuadraticRegime(ValueError):
    """Raised by effective_gpp; `table` holds (ξ, F) for inspection."""

    def __init__(self, msg, table=None):
        super().__init__(msg)
        self.table = table


@dataclass(frozen=True)
class GasSpec:
    """Scattering gas: cross-section, incident momentum distribution, cutoff.

    flux: sequence of (|k|, Φ_k) pairs; directions are isotropic.
    """

    cross_section: Callable  # (k, theta) -> dσ/dΩ
    flux: tuple
    particle_mass: float = 1.0
    temperature: float | None = None
    theta_min: float = 0.0
    label: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        fl = tuple((float(k), float(w)) for k, w in self.flux)
        if not fl:
            raise ValueError("flux distribution is empty")
        if any(k <= 0 or w < 0 for k, w in fl):
            raise ValueError("flux entries need k > 0 and Φ_k >= 0")
        if not 0 <= self.theta_min < math.pi:
            raise ValueError("theta_min must lie in [0, π)")
        object.__setattr__(self, "flux", fl)
        if self.theta_min == 0.0:
            for k, _ in fl:
                v = np.asarray(self.cross_section(k, np.array([0.0, 1e-6])), dtype=float)
                if not np.all(np.isfinite(v)):
                    raise ValueError("cross-section diverges in the forward direction; set theta_min")
        for k, _ in fl:
            th = np.linspace(self.theta_min, math.pi, 33)
            if np.any(np.asarray(self.cross_section(k, th)) < 0):
                raise ValueError("differential cross-section must be nonnegative")

    @property
    def total_flux(self) -> float:
        return sum(w for _, w in self.flux)

    @property
    def k_max(self) -> float:
        return max(k for k, _ in self.flux)

    def scaled_flux(self, factor: float) -> "GasSpec":
        return GasSpec(self.cross_section, tuple((k, w * factor) for k, w in self.flux),
                       self.particle_mass, self.temperature, self.theta_min, self.label)

    def sigma_total(self, k: float, order: int = 256) -> float:
        mu, wt = _legendre(order, math.cos(self.theta_min))
        return float(2 * math.pi * np.sum(wt * self.cross_section(k, np.arccos(mu))))

    def rate(self) -> float:
        """Φ_tot-weighted total cross-section, the plateau of F."""
        return sum(w * self.sigma_total(k) for k, w in self.flux)


def hard_sphere(radius: float, k0: float, flux: float = 1.0, **kw) -> GasSpec:
    """Isotropic dσ/dΩ = R²/4 (σ_tot = πR²) with monochromatic flux at k0."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    r2 = radius * radius / 4.0

    def ds(k, theta):
        return np.full_like(np.asarray(theta, dtype=float), r2)

    return GasSpec(ds, ((k0, flux),), label="hard_sphere", meta={"radius": radius}, **kw)


def tabulated(theta: np.ndarray, dsigma: np.ndarray, k0: float, flux: float = 1.0,
              theta_min: float = 0.0, **kw) -> GasSpec:
    """Cross-section interpolated in θ (k-independent) from a table."""
    th = np.asarray(theta, dtype=float)
    ds = np.asarray(dsigma, dtype=float)
    if th.ndim != 1 or th.shape != ds.shape or np.any(np.diff(th) <= 0):
        raise ValueError("table needs increasing θ and matching dσ/dΩ columns")

    def f(k, t):
        return np.interp(t, th, ds)

    return GasSpec(f, ((k0, flux),), theta_min=theta_min, label="tabulated", **kw)


def thermal_flux(temperature: float, particle_mass: float, density: float = 1.0,
                 n_points: int = 24, hbar: float = 1.0) -> tuple:
    """Discretized Maxwell flux: Φ(k) ∝ k³ exp(-ħ²k²/2mT), Σ Φ_k = n⟨v⟩."""
    if temperature <= 0 or particle_mass <= 0:
        raise ValueError("temperature and mass must be positive")
    kt = math.sqrt(particle_mass * temperature) / hbar
    u, wt = np.polynomial.legendre.leggauss(n_points)
    kmax = 8 * kt
    k = 0.5 * kmax * (u + 1)
    dens = k ** 3 * np.exp(-0.5 * (k / kt) ** 2)
    wts = 0.5 * kmax * wt * dens
    mean_speed = math.sqrt(8 * temperature / (math.pi * particle_mass))
    wts = wts / wts.sum() * density * mean_speed
    return tuple(zip(k.tolist(), wts.tolist()))


def _legendre(order: int, mu_max: float = 1.0):
    u, w = np.polynomial.legendre.leggauss(order)
    # map [-1, 1] onto [-1, mu_max]
    half = 0.5 * (mu_max + 1.0)
    return half * (u + 1.0) - 1.0, half * w


def _sinc_term(qxi: np.ndarray) -> np.ndarray:
    # 1 - sin(z)/z; np.sinc is exactly 1 at 0, so F(0) = 0 exactly
    return 1.0 - np.sinc(qxi / math.pi)


def _kernel_at_order(gas: GasSpec, xi: np.ndarray, order: int) -> np.ndarray:
    mu, wt = _legendre(order, math.cos(gas.theta_min))
    theta = np.arccos(np.clip(mu, -1.0, 1.0))
    out = np.zeros_like(xi)
    for k, phi in gas.flux:
        ds = np.asarray(gas.cross_section(k, theta), dtype=float)
        q = k * np.sqrt(2.0 * (1.0 - mu))
        integrand = _sinc_term(q[:, None] * xi[None, :])
        out += 2 * math.pi * phi * ((wt * ds) @ integrand)
    return out


def localization_kernel(gas: GasSpec, xi_grid) -> np.ndarray:
    """F(|ξ|) by Gauss–Legendre in cos θ, raising the order until F settles to 0.1%."""
    xi = np.abs(np.asarray(xi_grid, dtype=float))
    prev = _kernel_at_order(gas, xi, QUAD_ORDERS[0])
    for order in QUAD_ORDERS[1:]:
        cur = _kernel_at_order(gas, xi, order)
        scale = max(np.abs(cur).max(), 1e-300)
        if np.abs(cur - prev).max() <= QUAD_RTOL * scale:
            log.debug("kernel converged at Gauss–Legendre order %d", order)
            return cur
        prev = cur
    raise QuadratureError("angular quadrature did not converge; reduce the ξ range")


def kernel_table(gas: GasSpec, xi_grid) -> str:
    xi = np.asarray(xi_grid, dtype=float)
    f = localization_kernel(gas, xi)
    lines = ["xi,F"] + [f"{a:.10g},{b:.12g}" for a, b in zip(xi, f)]
    return "\n".join(lines) + "\n"


def effective_gpp(gas: GasSpec, xi_grid=None, hbar: float = 1.0) -> float:
    """g^pp = ħ²Λ with Λ the least-squares curvature of F = Λξ² at small ξ."""
    kmax = gas.k_max
    if xi_grid is None:
        xi_grid = np.linspace(0.0, QUADRATIC_KXI / kmax, 9)
    xi = np.abs(np.asarray(xi_grid, dtype=float))
    sel = (xi > 0) & (kmax * xi <= QUADRATIC_KXI)
    f = localization_kernel(gas, xi)
    if not sel.any():
        raise NoQuadraticRegime(
            f"no ξ with k ξ <= {QUADRATIC_KXI} (smallest nonzero ξ·k = "
            f"{(kmax * xi[xi > 0]).min() if (xi > 0).any() else float('nan'):.3g})",
            table=np.column_stack([xi, f]))
    x2 = xi[sel] ** 2
    lam = float(np.sum(x2 * f[sel]) / np.sum(x2 * x2))
    return hbar ** 2 * lam
