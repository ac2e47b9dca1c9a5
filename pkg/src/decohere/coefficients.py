"""Decoherence and dissipation coefficients from environment transition data.

Index order for all 2×2 tensors is (x, p). g^{pp} multiplies ∂²W/∂p² and is
built from the x-gradient of the coupling symbol; g^{xx} from its p-gradient.
Only the delta-function (absorptive) part of the τ-integral is kept:
Re ∫₀^∞ e^{iωτ-ετ} dτ = ε / (ω² + ε²).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True)
class CouplingSpectrum:
    """Transitions n -> n' of the environment, stored column-wise.

    Both orientations (n, n') and (n', n) must be present; the diagonal
    n = n' entries carry the zero-frequency part.
    """

    n: np.ndarray
    nprime: np.ndarray
    h1x: np.ndarray
    h1p: np.ndarray
    omega: np.ndarray
    weight: np.ndarray
    beta: float
    omega_cutoff: float
    regularization_epsilon: float | None = None
    hbar: float = 1.0

    def __post_init__(self):
        arrs = {}
        for name, dt in (("n", int), ("nprime", int), ("h1x", complex), ("h1p", complex),
                         ("omega", float), ("weight", float)):
            arrs[name] = np.atleast_1d(np.asarray(getattr(self, name), dtype=dt))
        sizes = {a.shape[0] for a in arrs.values()}
        if len(sizes) > 1:
            raise ValueError("transition columns have different lengths")
        for k, v in arrs.items():
            object.__setattr__(self, k, v)
        if np.any(self.weight < 0):
            raise ValueError("transition weights must be nonnegative")
        if self.regularization_epsilon is None:
            object.__setattr__(self, "regularization_epsilon", self.omega_cutoff / 1000.0)
        if not self.regularization_epsilon > 0:
            raise ValueError("regularization epsilon must be positive")

    @property
    def size(self) -> int:
        return self.n.shape[0]

    @property
    def temperature(self) -> float:
        return np.inf if self.beta == 0 else 1.0 / self.beta

    def with_epsilon(self, eps: float) -> "CouplingSpectrum":
        return CouplingSpectrum(self.n, self.nprime, self.h1x, self.h1p, self.omega,
                                self.weight, self.beta, self.omega_cutoff, eps, self.hbar)

    def scaled(self, factor: float) -> "CouplingSpectrum":
        """Scale coupling amplitudes by `factor` (coefficients scale by factor²)."""
        return CouplingSpectrum(self.n, self.nprime, self.h1x * factor, self.h1p * factor,
                                self.omega, self.weight, self.beta, self.omega_cutoff,
                                self.regularization_epsilon, self.hbar)

    def check_hermitian(self, tol: float = 1e-12) -> bool:
        idx = {(a, b): i for i, (a, b) in enumerate(zip(self.n, self.nprime))}
        for i, (a, b) in enumerate(zip(self.n, self.nprime)):
            j = idx.get((b, a))
            if j is None:
                return False
            if abs(self.h1x[i] - np.conj(self.h1x[j])) > tol or abs(self.h1p[i] - np.conj(self.h1p[j])) > tol:
                return False
            if abs(self.omega[i] + self.omega[j]) > tol * max(1.0, abs(self.omega[i])):
                return False
        return True

    @classmethod
    def from_matrices(cls, h1x: np.ndarray, h1p: np.ndarray, energies: np.ndarray, beta: float,
                      omega_cutoff: float | None = None, epsilon: float | None = None,
                      hbar: float = 1.0, drop_below: float = 0.0) -> "CouplingSpectrum":
        """Spectrum from gradient matrices given in the H_e eigenbasis."""
        e = np.asarray(energies, dtype=float)
        d = e.shape[0]
        alpha = logsumexp(-beta * e)
        nn, mm = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        omega = (e[:, None] - e[None, :]) / hbar
        weight = np.exp(-beta * (e[:, None] + e[None, :]) / 2 - alpha)
        keep = (np.abs(h1x) > drop_below) | (np.abs(h1p) > drop_below)
        keep = keep | keep.T
        if omega_cutoff is None:
            omega_cutoff = float(np.abs(omega).max()) or 1.0
        return cls(nn[keep], mm[keep], np.asarray(h1x)[keep], np.asarray(h1p)[keep],
                   omega[keep], weight[keep], float(beta), float(omega_cutoff), epsilon, hbar)

    @classmethod
    def empty(cls, beta: float = 1.0, omega_cutoff: float = 1.0, hbar: float = 1.0):
        z = np.zeros(0)
        return cls(z, z, z, z, z, z, beta, omega_cutoff, None, hbar)

    # -- text format ----------------------------------------------------------
    def to_text(self, header: str = "") -> str:
        lines = [f"# {h}" for h in header.splitlines() if h]
        lines += [f"beta={float(self.beta)!r}", f"epsilon={float(self.regularization_epsilon)!r}",
                  f"omega_cutoff={float(self.omega_cutoff)!r}", f"hbar={float(self.hbar)!r}"]
        for i in range(self.size):
            lines.append(",".join([
                str(self.n[i]), str(self.nprime[i]),
                repr(float(self.h1x[i].real)), repr(float(self.h1x[i].imag)),
                repr(float(self.h1p[i].real)), repr(float(self.h1p[i].imag)),
                repr(float(self.omega[i])), repr(float(self.weight[i])),
            ]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CouplingSpectrum":
        meta = {}
        rows = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            ln = raw.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" in ln and "," not in ln:
                k, v = ln.split("=", 1)
                meta[k.strip()] = float(v)
                continue
            cells = ln.split(",")
            if len(cells) != 8:
                raise ValueError(f"line {lineno}: expected 8 fields, got {len(cells)}")
            rows.append(cells)
        if "beta" not in meta:
            raise ValueError("spectrum file lacks a beta= header")
        a = np.array(rows, dtype=object) if rows else np.zeros((0, 8), dtype=object)
        col = lambda j, t=float: np.array([t(v) for v in a[:, j]]) if rows else np.zeros(0)  # noqa: E731
        omega = col(6)
        cutoff = meta.get("omega_cutoff", float(np.abs(omega).max()) if rows else 1.0)
        return cls(col(0, int), col(1, int), col(2) + 1j * col(3), col(4) + 1j * col(5),
                   omega, col(7), meta["beta"], cutoff or 1.0, meta.get("epsilon"),
                   meta.get("hbar", 1.0))


# -- kernels and coefficients -------------------------------------------------

_SIGN = np.array([[1.0, -1.0], [-1.0, 1.0]])


def _products(s: CouplingSpectrum) -> np.ndarray:
    """P[i, j, t] = H̄₁ᵢ,nn' H̄₁ⱼ,n'n for each transition t, (i,j) ∈ {x,p}.

    Index 0 is x-gradient-of-symbol slot, so C^{pp} uses (x, x); we return
    the tensor already arranged in (x, p) *coefficient* order.
    """
    lookup = {(a, b): i for i, (a, b) in enumerate(zip(s.n, s.nprime))}
    rev = np.array([lookup[(b, a)] for a, b in zip(s.n, s.nprime)], dtype=int) if s.size else np.zeros(0, int)
    hx, hp = s.h1x, s.h1p
    hx_r = hx[rev] if s.size else hx
    hp_r = hp[rev] if s.size else hp
    # coefficient xx <- p-gradients, pp <- x-gradients, xp <- (p, x), px <- (x, p)
    out = np.empty((2, 2, s.size), dtype=complex)
    out[0, 0] = hp * hp_r
    out[0, 1] = hp * hx_r
    out[1, 0] = hx * hp_r
    out[1, 1] = hx * hx_r
    return out * _SIGN[:, :, None]


def _thermal_cosh(s: CouplingSpectrum) -> np.ndarray:
    return s.weight * np.cosh(s.beta * s.hbar * s.omega / 2)


def _thermal_sinh_ratio(s: CouplingSpectrum) -> np.ndarray:
    """p_nn' · 2 sinh(βħω/2)/(ħω), with the ω → 0 limit β."""
    x = s.beta * s.hbar * s.omega / 2
    safe = np.where(np.abs(x) < 1e-8, 1.0, x)
    ratio = np.where(np.abs(x) < 1e-8, 1.0 + x * x / 6, np.sinh(safe) / safe)
    return s.weight * s.beta * ratio


def kernel_C(spectrum: CouplingSpectrum, tau: float) -> np.ndarray:
    """C^{ij}(τ), ordering (x, p); real by conjugate pairing."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    s = spectrum
    if s.size == 0:
        return np.zeros((2, 2))
    terms = _products(s) * (np.exp(1j * s.omega * tau) * _thermal_cosh(s))[None, None]
    c = terms.sum(axis=-1)
    return c.real


def kernel_C_series(spectrum: CouplingSpectrum, taus: np.ndarray) -> np.ndarray:
    s = spectrum
    taus = np.asarray(taus, dtype=float)
    if s.size == 0:
        return np.zeros((taus.size, 2, 2))
    ph = np.exp(1j * np.outer(taus, s.omega)) * _thermal_cosh(s)[None, :]
    return np.einsum("ijt,kt->kij", _products(s), ph).real


def _lorentz(s: CouplingSpectrum) -> np.ndarray:
    eps = s.regularization_epsilon
    return eps / (s.omega ** 2 + eps ** 2)


@dataclass(frozen=True)
class DecoherenceTensor:
    g: np.ndarray
    classification: str = field(init=False)
    det_g: float = field(init=False)
    g_inv: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] % 2:
            raise ValueError("g must be a 2n×2n matrix")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        n2 = g.shape[0]
        if np.abs(g - g.T).max() > 1e-9 * max(np.abs(g).max(), 1e-300):
            raise ValueError("g must be symmetric")
        det = float(np.linalg.det(g))
        scale = (np.trace(g) / n2) ** n2
        degenerate = not (det > DEGENERACY_RTOL * scale) or np.trace(g) <= 0
        object.__setattr__(self, "det_g", det)
        object.__setattr__(self, "classification", "Degenerate" if degenerate else "NonDegenerate")
        object.__setattr__(self, "g_inv", None if degenerate else np.linalg.inv(g))

    @classmethod
    def from_components(cls, gxx: float = 0.0, gxp: float = 0.0, gpp: float = 0.0):
        return cls(np.array([[gxx, gxp], [gxp, gpp]]))

    @property
    def n(self) -> int:
        return self.g.shape[0] // 2

    @property
    def gxx(self) -> float:
        return float(self.g[0, 0])

    @property
    def gxp(self) -> float:
        return float(self.g[0, 1])

    @property
    def gpx(self) -> float:
        return float(self.g[1, 0])

    @property
    def gpp(self) -> float:
        return float(self.g[1, 1])

    @property
    def is_degenerate(self) -> bool:
        return self.classification == "Degenerate"

    def degenerate_kind(self) -> str | None:
        """'position' if only g^pp survives, 'momentum' if only g^xx, else None."""
        if self.n != 1 or not self.is_degenerate:
            return None
        tol = 1e-12 * max(np.abs(self.g).max(), 1e-300)
        if abs(self.gxx) <= tol and abs(self.gxp) <= tol and self.gpp > tol:
            return "position"
        if abs(self.gpp) <= tol and abs(self.gxp) <= tol and self.gxx > tol:
            return "momentum"
        return None

    def quadratic_form(self, a: float, b: float) -> float:
        v = np.array([a, b])
        return float(v @ self.g @ v)


@dataclass(frozen=True)
class DissipationTensor:
    gamma: np.ndarray

    @property
    def gxx(self) -> float:
        return float(self.gamma[0, 0])

    @property
    def gxp(self) -> float:
        return float(self.gamma[0, 1])

    @property
    def gpx(self) -> float:
        return float(self.gamma[1, 0])

    @property
    def gpp(self) -> float:
        return float(self.gamma[1, 1])

    def momentum_damping_rate(self, mass: float) -> float:
        """γ in dp/dt = -V' - γ p for H_c = P²/2m + V (so rate = γ^{pp}/m)."""
        return self.gpp / mass


def decoherence_coeffs(spectrum: CouplingSpectrum) -> DecoherenceTensor:
    s = spectrum
    if s.size == 0:
        return DecoherenceTensor(np.zeros((2, 2)))
    w = _thermal_cosh(s) * _lorentz(s)
    g = np.einsum("ijt,t->ij", _products(s), w)
    return DecoherenceTensor(g.real)


def dissipation_coeffs(spectrum: CouplingSpectrum) -> DissipationTensor:
    s = spectrum
    if s.size == 0:
        return DissipationTensor(np.zeros((2, 2)))
    w = _thermal_sinh_ratio(s) * _lorentz(s)
    gam = np.einsum("ijt,t->ij", _products(s), w).real
    return DissipationTensor(gam)


# -- spectrum builders --------------------------------------------------------

def _ladder_ops(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels)), 1)


def oscillator_bath(couplings, temperature: float, mode_truncation: int = 4,
                    form: str = "position_only", mass: float = 1.0, omega_c: float = 1.0,
                    hbar: float = 1.0, epsilon: float | None = None,
                    omega_cutoff: float | None = None) -> CouplingSpectrum:
    """Transitions of independent truncated oscillator modes.

    couplings: iterable of (lambda_i, omega_i). The coupling is
    X·Σ(λa + λ*a†) ("position_only") or
    (X - iP/mω_c)·Σλa + (X + iP/mω_c)·Σλ*a† ("ladder").
    Modes are independent, so each contributes its own block of
    transitions with single-mode thermal weights; environment state labels
    are offset per mode.
    """
    if mode_truncation < 2:
        raise ValueError("mode truncation must keep at least 2 levels")
    if form not in ("position_only", "ladder"):
        raise ValueError(f"unknown coupling form {form!r}")
    couplings = [(complex(l), float(w)) for l, w in couplings]
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    beta = 1.0 / temperature
    max_beta = 700.0 / max(hbar * max((w for _, w in couplings), default=1.0), 1e-300)
    if beta > max_beta:
        warnings.warn("temperature too low for the mode spacings; beta clamped", RuntimeWarning)
        beta = max_beta
    a = _ladder_ops(mode_truncation)
    cols = {k: [] for k in ("n", "nprime", "h1x", "h1p", "omega", "weight")}
    for i, (lam, w) in enumerate(couplings):
        if lam == 0:
            continue
        e = hbar * w * np.arange(mode_truncation)
        alpha = logsumexp(-beta * e)
        b = lam * a
        if form == "position_only":
            hx = b + b.conj().T
            hp = np.zeros_like(hx)
        else:
            hx = b + b.conj().T
            hp = (-1j * b + 1j * b.conj().T) / (mass * omega_c)
        for n in range(mode_truncation):
            for m in range(mode_truncation):
                if hx[n, m] == 0 and hp[n, m] == 0:
                    continue
                cols["n"].append(i * mode_truncation + n)
                cols["nprime"].append(i * mode_truncation + m)
                cols["h1x"].append(hx[n, m])
                cols["h1p"].append(hp[n, m])
                cols["omega"].append((e[n] - e[m]) / hbar)
                cols["weight"].append(np.exp(-beta * (e[n] + e[m]) / 2 - alpha))
    cutoff = omega_cutoff or max((w for _, w in couplings), default=1.0)
    return CouplingSpectrum(cols["n"], cols["nprime"], cols["h1x"], cols["h1p"], cols["omega"],
                            cols["weight"], beta, cutoff, epsilon, hbar)


def ohmic_modes(n_modes: int, omega_cutoff: float, eta: float = 1.0,
                band: tuple[float, float] = (0.0, 1.0)) -> list[tuple[float, float]]:
    """Discrete ohmic sampling: λ_i² = η ω_i Δω / π over a fraction of [0, Ω]."""
    lo, hi = band
    edges = omega_cutoff * np.linspace(lo, hi, n_modes + 1)
    w = 0.5 * (edges[1:] + edges[:-1])
    dw = np.diff(edges)
    lam = np.sqrt(eta * w * dw / np.pi)
    return list(zip(lam, w))


def random_spectrum(rng: np.random.Generator, d_e: int = 5, beta: float | None = None,
                    hbar: float = 1.0) -> CouplingSpectrum:
    """Random Hermitian gradient matrices over random environment levels."""
    e = np.sort(rng.uniform(0.0, 3.0, size=d_e))
    hx = rng.normal(size=(d_e, d_e)) + 1j * rng.normal(size=(d_e, d_e))
    hp = rng.normal(size=(d_e, d_e)) + 1j * rng.normal(size=(d_e, d_e))
    hx = 0.5 * (hx + hx.conj().T)
    hp = 0.5 * (hp + hp.conj().T)
    if beta is None:
        beta = float(rng.uniform(0.05, 5.0))
    return CouplingSpectrum.from_matrices(hx, hp, e, beta, omega_cutoff=3.0,
                                          epsilon=float(rng.uniform(1e-3, 1.0)), hbar=hbar)


# -- canonical rotation -------------------------------------------------------

def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def canonical_rotation(g: DecoherenceTensor, length_unit: float = 1.0,
                       momentum_unit: float = 1.0) -> tuple[float, DecoherenceTensor]:
    """Angle diagonalizing g in the scaled coordinates (Πx, Lp).

    In those coordinates x and p carry the same units and any rotation is
    canonical (it preserves dX∧dP up to the constant LΠ).
    """
    if g.n != 1:
        raise ValueError("canonical rotation is defined for one phase-space pair")
    S = np.diag([momentum_unit, length_unit])
    gs = S @ g.g @ S
    theta = 0.5 * np.arctan2(2 * gs[0, 1], gs[0, 0] - gs[1, 1])
    R = rotation_matrix(theta)
    rot = R @ gs @ R.T
    rot[0, 1] = rot[1, 0] = 0.5 * (rot[0, 1] + rot[1, 0])
    return float(theta), DecoherenceTensor(rot)


def fdt_ratio(g: DecoherenceTensor, gamma: DissipationTensor, temperature: float,
              mass: float = 1.0) -> float:
    """g^{pp} / (m T γ_rate) with γ_rate the momentum damping rate."""
    return g.gpp / (mass * temperature * gamma.momentum_damping_rate(mass))
