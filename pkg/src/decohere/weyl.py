"""Phase-space calculus on periodic grids.

Two kinds of grid are used:

* a generic periodic grid (any power-of-two sizes, any ranges) on which
  phase-space fields are differentiated spectrally and evolved;
* the Wigner lattice of an N-point position basis, which is the generic grid
  with 2N position nodes at half spacing and N/2 momentum nodes spaced
  2πħ/L. On that lattice the Wigner transform is an exact bijection between
  Hermitian N×N matrices and real fields (a scaled isometry), and the lattice
  satisfies Δx·Δp·n_x = 2πħ.

The separation ξ = x - x' is taken in the minimum-image window [-L/2, L/2),
so a localized state has a single, ghost-free Wigner function. The price is
that the symbol 1 quantizes to the projector onto the N/2 momenta inside the
grid's momentum range rather than to the full identity.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hilbert import DensityOperator, Operator

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class GridError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Periodic grid; upper bounds are excluded (x_max = x_min + n_x Δx)."""

    x_min: float
    x_max: float
    p_min: float
    p_max: float
    n_x: int
    n_p: int
    hbar: float = 1.0

    def __post_init__(self):
        if not (_is_pow2(self.n_x) and _is_pow2(self.n_p)):
            raise GridError("grid counts must be powers of two")
        if not (self.x_max > self.x_min and self.p_max > self.p_min):
            raise GridError("empty grid range")
        if not self.hbar > 0:
            raise GridError("hbar must be positive")

    @classmethod
    def lattice(cls, dim: int, x_min: float, length: float, hbar: float = 1.0):
        """Wigner lattice for a `dim`-point position basis on [x_min, x_min + length)."""
        if not _is_pow2(dim) or dim < 4:
            raise GridError("basis dimension must be a power of two >= 4")
        dp = TWO_PI * hbar / length
        m = dim // 2
        return cls(x_min, x_min + length, -(m // 2) * dp, (m - m // 2) * dp,
                   2 * dim, m, hbar)

    @classmethod
    def square(cls, half_x: float, half_p: float, n: int, hbar: float = 1.0):
        return cls(-half_x, half_x, -half_p, half_p, n, n, hbar)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def p(self) -> np.ndarray:
        return self.p_min + self.dp * np.arange(self.n_p)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.p, indexing="ij")

    @property
    def measure(self) -> float:
        """Quadrature weight Δx Δp / (2πħ)."""
        return self.dx * self.dp / (TWO_PI * self.hbar)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_p)

    @property
    def is_lattice(self) -> bool:
        n = self.n_x // 2
        length = self.x_max - self.x_min
        return (
            self.n_x == 4 * self.n_p
            and n >= 4
            and np.isclose(self.dp * length, TWO_PI * self.hbar, rtol=1e-12)
            and np.isclose(self.p_min, -(self.n_p // 2) * self.dp, rtol=1e-12, atol=1e-14 * self.dp)
        )

    @property
    def basis_dim(self) -> int:
        return self.n_x // 2

    @property
    def basis_x(self) -> np.ndarray:
        """Position-basis nodes of the lattice (every other x node)."""
        return self.x[::2]

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        kx = TWO_PI * np.fft.fftfreq(self.n_x, self.dx)
        kp = TWO_PI * np.fft.fftfreq(self.n_p, self.dp)
        return kx, kp

    def same_as(self, other: "PhaseSpaceGrid") -> bool:
        return self == other


def spectral_derivative(f: np.ndarray, grid: PhaseSpaceGrid, nx: int = 0, np_: int = 0) -> np.ndarray:
    """∂ₓ^nx ∂ₚ^np f on the trailing two axes, by FFT."""
    if nx == 0 and np_ == 0:
        return np.array(f, copy=True)
    kx, kp = grid.wavenumbers()
    kx = kx.copy()
    kp = kp.copy()
    # the Nyquist mode has no antisymmetric partner: drop it for odd orders
    if nx % 2 and grid.n_x % 2 == 0:
        kx[grid.n_x // 2] = 0.0
    if np_ % 2 and grid.n_p % 2 == 0:
        kp[grid.n_p // 2] = 0.0
    mult = (1j * kx[:, None]) ** nx * (1j * kp[None, :]) ** np_
    out = np.fft.ifft2(np.fft.fft2(f, axes=(-2, -1)) * mult, axes=(-2, -1))
    if np.isrealobj(f):
        return out.real
    return out


def boundary_mass(values: np.ndarray, frac: float = 1 / 32) -> float:
    """Fraction of Σ|W| sitting in the outer band of the grid."""
    a = np.abs(values)
    total = a.sum()
    if total == 0:
        return 0.0
    nx, np_ = a.shape[-2:]
    bx = max(1, int(nx * frac))
    bp = max(1, int(np_ * frac))
    inner = a[..., bx:nx - bx, bp:np_ - bp].sum()
    return float((total - inner) / total)


def check_boundary(values: np.ndarray, limit: float = 1e-8, what: str = "field") -> float:
    bm = boundary_mass(values)
    if bm > limit:
        warnings.warn(f"{what}: boundary mass {bm:.2e} exceeds {limit:.0e}; enlarge the grid",
                      RuntimeWarning, stacklevel=3)
    return bm


@dataclass(frozen=True)
class WignerFunction:
    grid: PhaseSpaceGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridError(f"values shape {v.shape} != grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        """(2πħ)⁻¹ ∫ W dx dp.

        On a Wigner lattice only the even x rows sample ξ = 0, so the trace
        is read from them; the plain Riemann sum agrees for band-limited W.
        """
        if self.grid.is_lattice:
            return float(2.0 * self.values[::2].sum() * self.grid.measure)
        return float(self.values.sum() * self.grid.measure)

    def purity(self) -> float:
        """(2πħ)⁻¹ ∫ W² dx dp, equal to Tr ρ² for a normalized W."""
        return float((self.values ** 2).sum() * self.grid.measure)

    def marginal_x(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dp / (TWO_PI * self.grid.hbar)

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.grid.dx / (TWO_PI * self.grid.hbar)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean (x, p) and covariance matrix of W treated as a distribution."""
        X, P = self.grid.mesh()
        w = self.values * self.grid.measure
        n = w.sum()
        mean = np.array([(w * X).sum(), (w * P).sum()]) / n
        dx, dp = X - mean[0], P - mean[1]
        cov = np.array([[(w * dx * dx).sum(), (w * dx * dp).sum()],
                        [(w * dx * dp).sum(), (w * dp * dp).sum()]]) / n
        return mean, cov

    def boundary_mass(self) -> float:
        return boundary_mass(self.values)

    def to_text(self, header: str = "") -> str:
        X, P = self.grid.mesh()
        rows = np.column_stack([X.ravel(), P.ravel(), self.values.ravel()])
        lines = [f"# {h}" for h in header.splitlines() if h]
        lines.append("# x p W")
        lines.extend(f"{a:.10g} {b:.10g} {c:.12g}" for a, b, c in rows)
        return "\n".join(lines) + "\n"


# -- Wigner transform on the lattice -----------------------------------------

def _lattice_indices(n: int):
    m_half = n // 2
    s = np.arange(2 * n)[:, None]
    j = np.arange(m_half)[None, :] - m_half // 2
    m = 2 * j + (s % 2)
    a = ((s + m) // 2) % n
    b = ((s - m) // 2) % n
    return s, m, a, b


def _phase(n: int) -> np.ndarray:
    """Row-dependent phase linking the per-row DFT to p_k = k Δp."""
    mh = n // 2
    k = np.arange(mh) - mh // 2
    r = (np.arange(2 * n) % 2)[:, None]
    return np.exp(-TWO_PI * 1j * k[None, :] * r / n + 1j * np.pi * k[None, :]), k


def _require_lattice(grid: PhaseSpaceGrid, dim: int | None = None):
    if not grid.is_lattice:
        raise GridError("grid is not a Wigner lattice; build it with PhaseSpaceGrid.lattice")
    if dim is not None and dim != grid.basis_dim:
        raise GridError(f"operator dim {dim} does not match lattice basis dim {grid.basis_dim}")


def _forward(m: np.ndarray, n: int) -> np.ndarray:
    """Complex lattice transform of an arbitrary n×n matrix (real iff m Hermitian)."""
    _, _, a, b = _lattice_indices(n)
    v = m[a, b].astype(complex)
    # edge separation ξ = -L/2: fold (Re, Im) into one real number per row
    even = slice(0, 2 * n, 2)
    e = v[even, 0]
    v[even, 0] = e.real + e.imag
    ph, k = _phase(n)
    mh = n // 2
    f = np.fft.fft(v, axis=1)[:, k % mh]
    return 2.0 * ph * f


def _inverse(w: np.ndarray, n: int) -> np.ndarray:
    _, _, a, b = _lattice_indices(n)
    ph, k = _phase(n)
    mh = n // 2
    f = np.empty_like(w, dtype=complex)
    f[:, k % mh] = (0.5 * w) / ph
    v = np.fft.ifft(f, axis=1)
    out = np.empty((n, n), dtype=complex)
    out[a, b] = v
    # undo the edge fold: rows s and s+n hold (Re+Im) of ρ_ab and ρ_ba
    t = v[0:2 * n:2, 0].real
    s_idx = np.arange(0, 2 * n, 2)
    ts, tsp = t[: n // 2], t[n // 2:]
    aa, bb = a[s_idx[: n // 2], 0], b[s_idx[: n // 2], 0]
    out[aa, bb] = 0.5 * (ts + tsp) + 0.5j * (ts - tsp)
    out[bb, aa] = 0.5 * (ts + tsp) - 0.5j * (ts - tsp)
    return out


def wigner_transform(rho_r: DensityOperator, grid: PhaseSpaceGrid) -> WignerFunction:
    """W(x,p) = ∫dξ e^{-ipξ/ħ} ρ(x+ξ/2, x-ξ/2) on the Wigner lattice.

    Normalized so that (2πħ)⁻¹∫W dx dp = Tr ρ for states whose momenta lie
    inside the grid's momentum range.
    """
    _require_lattice(grid, rho_r.dim)
    w = _forward(rho_r.matrix, rho_r.dim)
    imag = np.abs(w.imag).max()
    if imag > 1e-10 * max(1.0, np.abs(w.real).max()):
        raise ValueError(f"Wigner function not real (max imag {imag:.2e})")
    out = WignerFunction(grid, w.real)
    check_boundary(out.values, what="wigner_transform")
    return out


def inverse_wigner(w: WignerFunction) -> DensityOperator:
    _require_lattice(w.grid)
    m = _inverse(w.values, w.grid.basis_dim)
    return DensityOperator.from_matrix(m, hermitize=True)


def weyl_operator(values: np.ndarray, grid: PhaseSpaceGrid) -> np.ndarray:
    """Quantize a (possibly complex) scalar symbol on the lattice."""
    _require_lattice(grid)
    n = grid.basis_dim
    v = np.asarray(values)
    re = _inverse(np.real(v).astype(float), n)
    if np.iscomplexobj(v):
        re = re + 1j * _inverse(np.imag(v).astype(float), n)
    return re


def weyl_symbol(m: np.ndarray, grid: PhaseSpaceGrid) -> np.ndarray:
    """Complex Weyl symbol of an arbitrary matrix on the lattice."""
    _require_lattice(grid, m.shape[0])
    h = 0.5 * (m + m.conj().T)
    k = -0.5j * (m - m.conj().T)  # m = h + i k, both Hermitian
    return _forward(h, m.shape[0]).real + 1j * _forward(k, m.shape[0]).real


# -- operator-valued symbols -------------------------------------------------

@dataclass(frozen=True)
class OperatorSymbol:
    """Field of d×d blocks; values have shape (d, d, n_x, n_p).

    `derivs` optionally caches exact derivatives keyed by (order_x, order_p).
    Missing entries are computed spectrally, which assumes periodicity.
    """

    grid: PhaseSpaceGrid
    values: np.ndarray
    derivs: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 2:
            v = v[None, None]
        if v.shape[-2:] != self.grid.shape or v.shape[0] != v.shape[1]:
            raise GridError(f"bad symbol shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def block_dim(self) -> int:
        return self.values.shape[0]

    def derivative(self, nx: int, np_: int) -> np.ndarray:
        if (nx, np_) == (0, 0):
            return self.values
        if (nx, np_) in self.derivs:
            d = np.asarray(self.derivs[(nx, np_)], dtype=complex)
            return d if d.ndim == 4 else np.broadcast_to(d, self.values.shape)
        return spectral_derivative(self.values, self.grid, nx, np_)

    @classmethod
    def scalar(cls, grid: PhaseSpaceGrid, values, derivs: dict | None = None):
        d = {k: np.asarray(v)[None, None] for k, v in (derivs or {}).items()}
        return cls(grid, np.asarray(values)[None, None], d)

    @classmethod
    def polynomial(cls, grid: PhaseSpaceGrid, coeffs: dict):
        """Σ c_ab x^a p^b with exact derivatives up to third order."""
        X, P = grid.mesh()

        def ev(nx, np_):
            out = np.zeros(grid.shape, dtype=complex)
            for (a, b), c in coeffs.items():
                if a < nx or b < np_:
                    continue
                fa = np.prod(np.arange(a - nx + 1, a + 1)) if nx else 1
                fb = np.prod(np.arange(b - np_ + 1, b + 1)) if np_ else 1
                out += c * fa * fb * X ** (a - nx) * P ** (b - np_)
            return out

        derivs = {(i, j): ev(i, j) for i in range(4) for j in range(4 - i) if (i, j) != (0, 0)}
        return cls.scalar(grid, ev(0, 0), derivs)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        v = self.values
        return np.abs(v - np.conj(np.swapaxes(v, 0, 1))).max() <= tol * max(1.0, np.abs(v).max())

    def to_wigner(self) -> WignerFunction:
        if self.block_dim != 1:
            raise GridError("only scalar symbols convert to Wigner functions")
        return WignerFunction(self.grid, self.values[0, 0].real)

    @classmethod
    def from_wigner(cls, w: WignerFunction) -> "OperatorSymbol":
        return cls.scalar(w.grid, w.values)


def _blockmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,jk...->ik...", a, b)


def moyal_product(a: OperatorSymbol, b: OperatorSymbol, order: int = 2) -> OperatorSymbol:
    """a ⋆ b truncated at ħ^order; block order is preserved (a before b).

    Second-order coefficient is ħ²/8, the value fixed by expanding
    exp[(iħ/2)(∂x←∂p→ - ∂p←∂x→)]; it makes the series exact for quadratics.
    """
    if a.grid != b.grid:
        raise GridError("symbols live on different grids")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    h = a.grid.hbar
    d = a.derivative
    e = b.derivative
    out = _blockmul(a.values, b.values)
    if order >= 1:
        out = out - 0.5j * h * (_blockmul(d(0, 1), e(1, 0)) - _blockmul(d(1, 0), e(0, 1)))
    if order >= 2:
        out = out - (h * h / 8.0) * (
            _blockmul(d(0, 2), e(2, 0)) + _blockmul(d(2, 0), e(0, 2))
            - 2.0 * _blockmul(d(1, 1), e(1, 1))
        )
    return OperatorSymbol(a.grid, out)


def symbol_trace(a: OperatorSymbol) -> complex:
    """∫dx dp (2πħ)⁻¹ tr Ā(x,p) by grid quadrature (one phase-space pair)."""
    tr = np.einsum("ii...->...", a.values)
    return complex(tr.sum() * a.grid.measure)


# -- quasi-projectors ---------------------------------------------------------

@dataclass(frozen=True)
class PhaseCell:
    center: tuple[float, float]
    half_widths: tuple[float, float]
    margin: float = 0.1

    def __post_init__(self):
        if not 0 < self.margin < 0.5:
            raise ValueError("margin must lie in (0, 0.5)")
        if min(self.half_widths) <= 0:
            raise ValueError("half widths must be positive")

    @property
    def area(self) -> float:
        return 4.0 * self.half_widths[0] * self.half_widths[1]

    def extent(self) -> tuple[float, float]:
        lx, lp = self.half_widths
        return lx * (1 + self.margin / 2), lp * (1 + self.margin / 2)


def raised_cosine_box(u: np.ndarray, half: float, width: float) -> np.ndarray:
    """1 for |u| < half - width/2, 0 beyond half + width/2, cosine roll-off between.

    The roll-off is centred on the edge, so ∫ = 2·half exactly.
    """
    r = (np.abs(u) - (half - width / 2)) / width
    r = np.clip(r, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * r))


def cell_symbol(cell: PhaseCell, grid: PhaseSpaceGrid) -> np.ndarray:
    X, P = grid.mesh()
    lx, lp = cell.half_widths
    return (raised_cosine_box(X - cell.center[0], lx, cell.margin * lx)
            * raised_cosine_box(P - cell.center[1], lp, cell.margin * lp))


def quasi_projector(cell: PhaseCell, grid: PhaseSpaceGrid) -> tuple[OperatorSymbol, Operator | None]:
    """Smoothed indicator of a phase-space cell and its quantization.

    The operator is returned only on a Wigner lattice; elsewhere it is None.
    """
    two_pi_h = TWO_PI * grid.hbar
    if cell.area < two_pi_h:
        raise ValueError(f"cell area {cell.area:.3g} is below 2πħ = {two_pi_h:.3g}")
    if cell.area < 10 * two_pi_h:
        warnings.warn("cell area below 10·2πħ; quasi-projector will be far from idempotent",
                      RuntimeWarning, stacklevel=2)
    ex, ep = cell.extent()
    cx, cp = cell.center
    if (cx - ex < grid.x_min or cx + ex > grid.x_max
            or cp - ep < grid.p_min or cp + ep > grid.p_max - grid.dp):
        raise GridError("cell (with margin) does not fit inside the grid")
    sym = OperatorSymbol.scalar(grid, cell_symbol(cell, grid))
    op = None
    if grid.is_lattice:
        m = weyl_operator(sym.values[0, 0].real, grid)
        op = Operator(0.5 * (m + m.conj().T), "collective")
    return sym, op


# -- handy states on the lattice ---------------------------------------------

def gaussian_wavefunction(x: np.ndarray, x0: float, p0: float, sigma: float,
                          hbar: float = 1.0, period: float | None = None) -> np.ndarray:
    """Normalized (Σ|ψ|² = 1) Gaussian packet sampled on nodes x."""
    d = x - x0
    if period is not None:
        d = (d + period / 2) % period - period / 2
    psi = np.exp(-d ** 2 / (4 * sigma ** 2) + 1j * p0 * d / hbar)
    return psi / np.linalg.norm(psi)


def gaussian_wigner(grid: PhaseSpaceGrid, mean, cov) -> np.ndarray:
    """Gaussian W with (2πħ)⁻¹∫W = 1 and the given mean and covariance."""
    X, P = grid.mesh()
    cov = np.asarray(cov, dtype=float)
    inv = np.linalg.inv(cov)
    dx, dp = X - mean[0], P - mean[1]
    q = inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dp + inv[1, 1] * dp * dp
    norm = TWO_PI * grid.hbar / (TWO_PI * np.sqrt(np.linalg.det(cov)))
    return norm * np.exp(-0.5 * q)
