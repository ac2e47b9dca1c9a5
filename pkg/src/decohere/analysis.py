"""Einselection diagnostics.

Timescale formulas, pointer-basis tests, a sampled check of the no-go
theorem, purity-based predictability sieve and the two-packet ("cat")
experiment. Operator-level checks run on a periodic position grid with
X diagonal and P spectral; phase-space runs use the Wigner lattice.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import DecoherenceTensor
from .evolution import (
    _smear,
    decoherence_generator,
    heat_kernel_evolve,
    position_momentum_ops,
    pure_decoherence_closed,
)
from .hilbert import DensityOperator, random_density
from .weyl import PhaseSpaceGrid, WignerFunction, gaussian_wavefunction, inverse_wigner, wigner_transform

log = logging.getLogger(__name__)

NOGO_FLOOR = 1e-6
POINTER_TOL = 1e-8


def footer(passed: bool, criterion: str, value: float, threshold: float) -> str:
    return f"{'PASS' if passed else 'FAIL'} {criterion} {value:.6g} {threshold:.6g}"


# -- timescales ---------------------------------------------------------------

@dataclass(frozen=True)
class TimescaleParams:
    mass: float
    temperature: float
    gamma_pp: float
    omega: float
    delta_x: float
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("mass", "temperature", "gamma_pp", "omega", "delta_x", "hbar"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")


def timescales(p: TimescaleParams) -> tuple[float, float, float]:
    """(t_dec, t_mix, t_wp) for separation Δx."""
    dx2 = p.delta_x ** 2
    t_dec = p.hbar ** 2 / (p.mass * p.temperature * p.gamma_pp * dx2)
    t_mix = p.mass * p.omega ** 2 * dx2 / (p.gamma_pp * p.temperature)
    t_wp = p.mass * dx2 / p.hbar
    return t_dec, t_mix, t_wp


@dataclass
class TimescaleReport:
    t_dec: float
    t_mix: float
    t_wp: float
    min_ratio: float = 10.0

    @property
    def ratios(self) -> tuple[float, float]:
        return self.t_mix / self.t_dec, self.t_wp / self.t_mix

    @property
    def ordered(self) -> bool:
        """t_dec < t_mix < t_wp with both ratios above `min_ratio`."""
        r1, r2 = self.ratios
        return r1 > self.min_ratio and r2 > self.min_ratio

    def to_text(self) -> str:
        r1, r2 = self.ratios
        lines = ["quantity,value",
                 f"t_dec,{self.t_dec:.10g}",
                 f"t_mix,{self.t_mix:.10g}",
                 f"t_wp,{self.t_wp:.10g}",
                 f"t_mix/t_dec,{r1:.10g}",
                 f"t_wp/t_mix,{r2:.10g}",
                 footer(self.ordered, "timescale_ordering", min(r1, r2), self.min_ratio)]
        return "\n".join(lines) + "\n"


def timescale_report(p: TimescaleParams, min_ratio: float = 10.0) -> TimescaleReport:
    return TimescaleReport(*timescales(p), min_ratio=min_ratio)


# -- operator-level grid -----------------------------------------------------

def symmetric_positions(n: int, hbar: float = 1.0) -> np.ndarray:
    """n nodes with Δx = Δp = √(2πħ/n), centred on 0."""
    dx = math.sqrt(2 * math.pi * hbar / n)
    return dx * (np.arange(n) - n // 2)


def _as_basis(basis) -> np.ndarray:
    b = np.asarray(basis, dtype=complex)
    if b.ndim == 2 and isinstance(basis, (list, tuple)):
        b = b.T  # list of vectors -> columns
    return b


def _check_orthonormal(b: np.ndarray, tol: float = 1e-10):
    gram = b.conj().T @ b
    err = np.abs(gram - np.eye(gram.shape[0])).max()
    if err > tol:
        raise ValueError(f"basis is not orthonormal (max |B†B - I| = {err:.2e})")


@dataclass
class PointerReport:
    diag_residual: float
    offdiag_margin: float  # max over ρ, j≠k of Re(D_jk conj ρ_jk)/|ρ_jk|²
    samples: int
    tol: float = POINTER_TOL

    @property
    def passed(self) -> bool:
        return self.diag_residual <= self.tol and self.offdiag_margin < 0

    def to_text(self) -> str:
        return "\n".join([
            "quantity,value",
            f"diag_residual,{self.diag_residual:.6e}",
            f"offdiag_margin,{self.offdiag_margin:.6e}",
            f"samples,{self.samples}",
            footer(self.passed, "pointer_basis", self.diag_residual, self.tol),
        ]) + "\n"


def pointer_basis_check(g: DecoherenceTensor, basis, samples: int = 32, rng_seed: int = 0,
                        positions: np.ndarray | None = None, hbar: float = 1.0) -> PointerReport:
    """Test <j|D(ρ)|j> = 0 and damping of every <j|D(ρ)|k>, j≠k, over random ρ.

    "Damping" means Re(<j|D|k> conj<j|ρ|k>) < 0: each coherence shrinks.
    """
    b = _as_basis(basis)
    _check_orthonormal(b)
    n = b.shape[0]
    x = symmetric_positions(n, hbar) if positions is None else np.asarray(positions, float)
    xo, po = position_momentum_ops(x, hbar)
    rng = np.random.default_rng(rng_seed)
    diag_res, margin = 0.0, -np.inf
    off = ~np.eye(b.shape[1], dtype=bool)
    for _ in range(samples):
        rho = random_density(n, rng)
        d = b.conj().T @ decoherence_generator(rho, g, xo, po, hbar) @ b
        rb = b.conj().T @ rho @ b
        diag_res = max(diag_res, float(np.abs(np.diag(d)).max()))
        a2 = np.abs(rb[off]) ** 2
        ok = a2 > 1e-300
        if ok.any():
            margin = max(margin, float((np.real(d[off] * rb[off].conj())[ok] / a2[ok]).max()))
    return PointerReport(diag_res, margin, samples)


# -- no-go theorem -------------------------------------------------------------

@dataclass
class NogoReport:
    status: str  # "ok" | "inapplicable"
    floor: float  # min over ψ of max over ρ |<ψ|D(ρ)|ψ>|
    per_psi: list = field(default_factory=list)  # (label, max |.|)
    position_residual: float = float("nan")
    threshold: float = NOGO_FLOOR

    @property
    def passed(self) -> bool:
        if self.status == "inapplicable":
            return False
        return self.floor > self.threshold

    def to_text(self) -> str:
        lines = ["psi,max_abs_expectation"]
        lines += [f"{lab},{v:.6e}" for lab, v in self.per_psi]
        if self.status == "inapplicable":
            lines.append(f"# inapplicable: degenerate tensor, position-basis residual "
                         f"{self.position_residual:.3e}")
            lines.append(footer(self.position_residual < 1e-10, "nogo_degenerate_residual",
                                self.position_residual, 1e-10))
        else:
            lines.append(footer(self.passed, "nogo_floor", self.floor, self.threshold))
        return "\n".join(lines) + "\n"


def sample_states(n: int, count: int, n_coherent: int, rng_seed: int,
                  positions: np.ndarray, hbar: float = 1.0, mass: float = 1.0,
                  omega: float = 1.0) -> list[tuple[str, np.ndarray]]:
    """Coherent packets, random vectors and two-packet superpositions.

    Each state draws from its own substream so adding samples does not
    change earlier ones.
    """
    if n_coherent > count:
        raise ValueError("more coherent states than samples")
    streams = np.random.SeedSequence(rng_seed).spawn(count)
    x = positions
    length = n * (x[1] - x[0])
    sigma = math.sqrt(hbar / (mass * omega))
    p_span = math.pi * hbar / (x[1] - x[0])  # half the momentum band
    out = []
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        if i < n_coherent:
            x0 = rng.uniform(-length / 4, length / 4)
            p0 = rng.uniform(-p_span / 2, p_span / 2)
            out.append((f"coherent{i}", gaussian_wavefunction(x, x0, p0, sigma, hbar, length)))
        elif (i - n_coherent) % 2 == 0:
            v = rng.normal(size=n) + 1j * rng.normal(size=n)
            out.append((f"random{i}", v / np.linalg.norm(v)))
        else:
            a, b = rng.uniform(-length / 4, length / 4, size=2)
            v = (gaussian_wavefunction(x, a, 0.0, sigma, hbar, length)
                 + np.exp(1j * rng.uniform(0, 2 * np.pi))
                 * gaussian_wavefunction(x, b, 0.0, sigma, hbar, length))
            out.append((f"cat{i}", v / np.linalg.norm(v)))
    return out


def nogo_check(g: DecoherenceTensor, psi_samples: int = 64, rho_samples: int = 256,
               rng_seed: int = 0, n: int = 64, hbar: float = 1.0, n_coherent: int = 16,
               psis: list | None = None, rhos: np.ndarray | None = None,
               threads: int = 1, mass: float = 1.0, omega: float = 1.0) -> NogoReport:
    """Falsification-style check of the no-go theorem.

    For each ψ, max over sampled ρ of |<ψ|D(ρ)|ψ>| = |Tr(ρ D(|ψ><ψ|))| (D is
    self-adjoint), and the floor is the minimum over ψ. A degenerate tensor
    is reported as inapplicable together with the position-basis residual.
    """
    x = symmetric_positions(n, hbar)
    xo, po = position_momentum_ops(x, hbar)
    root = np.random.SeedSequence(rng_seed)
    psi_seed, rho_seed = (int(s.generate_state(1)[0]) for s in root.spawn(2))
    if rhos is None:
        rng = np.random.default_rng(rho_seed)
        rhos = np.array([random_density(n, rng) for _ in range(rho_samples)])
    if g.is_degenerate:
        res = 0.0
        for r in rhos:
            res = max(res, float(np.abs(np.diag(decoherence_generator(r, g, xo, po, hbar))).max()))
        return NogoReport("inapplicable", float("nan"), [], position_residual=res)
    if psis is None:
        psis = sample_states(n, psi_samples, n_coherent, psi_seed, x, hbar, mass, omega)

    def one(item):
        label, psi = item
        a = decoherence_generator(np.outer(psi, psi.conj()), g, xo, po, hbar)
        vals = np.einsum("sij,ji->s", rhos, a)
        return label, float(np.abs(vals).max())

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            per = list(ex.map(one, psis))  # map keeps input order
    else:
        per = [one(it) for it in psis]
    floor = min(v for _, v in per)
    return NogoReport("ok", floor, per)


def pure_state_expectation(psi: np.ndarray, g: DecoherenceTensor, positions: np.ndarray,
                           hbar: float = 1.0) -> float:
    """<ψ|D(|ψ><ψ|)|ψ> via the operator generator."""
    xo, po = position_momentum_ops(positions, hbar)
    rho = np.outer(psi, psi.conj())
    return float(np.real(np.trace(rho @ decoherence_generator(rho, g, xo, po, hbar))))


# -- predictability sieve -------------------------------------------------------

@dataclass
class SieveEntry:
    label: str
    purity: np.ndarray
    retained: float  # time-averaged Tr ρ²(t) / Tr ρ²(0)

    @property
    def final_purity(self) -> float:
        return float(self.purity[-1])

    @property
    def final_retained(self) -> float:
        return float(self.purity[-1] / self.purity[0])


@dataclass
class SieveReport:
    times: np.ndarray
    entries: list  # ranked, best first

    @property
    def window(self) -> float:
        return float(self.times[-1])

    @property
    def ranking(self) -> list[str]:
        return [e.label for e in self.entries]

    def entry(self, label: str) -> SieveEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def to_text(self) -> str:
        lines = ["label,initial_purity,final_purity,final_retained,mean_retained"]
        for e in self.entries:
            lines.append(f"{e.label},{e.purity[0]:.8g},{e.final_purity:.8g},"
                         f"{e.final_retained:.8g},{e.retained:.8g}")
        return "\n".join(lines) + "\n"


def _to_wigner(c, grid: PhaseSpaceGrid | None) -> WignerFunction:
    if isinstance(c, WignerFunction):
        return c
    if grid is None:
        raise ValueError("a Wigner lattice is needed to sieve density operators")
    return wigner_transform(c, grid)


def evolve_wigner(w: WignerFunction, g: DecoherenceTensor, t: float) -> WignerFunction:
    """Exact pure-decoherence propagation (degenerate tensors included)."""
    if g.is_degenerate:
        return WignerFunction(w.grid, _smear(w.values, w.grid, g.g, t))
    return heat_kernel_evolve(w, g, t)


def purity_sieve(candidates, g: DecoherenceTensor, window: float, samples: int = 11,
                 grid: PhaseSpaceGrid | None = None, labels: list | None = None) -> SieveReport:
    """Rank candidates by retained purity Tr ρ²(t)/Tr ρ²(0) averaged over [0, window].

    Candidates are DensityOperators (transformed on `grid`) or WignerFunctions.
    Ranking by the retained fraction rather than the raw purity lets mixed
    cell states be compared with pure packets.
    """
    if isinstance(candidates, dict):
        labels, candidates = list(candidates), list(candidates.values())
    labels = labels or [f"c{i}" for i in range(len(candidates))]
    times = np.linspace(0.0, window, samples)
    entries = []
    for lab, c in zip(labels, candidates):
        w0 = _to_wigner(c, grid)
        pur = np.array([evolve_wigner(w0, g, t).purity() if t > 0 else w0.purity() for t in times])
        if pur.min() <= 0 or pur.max() > 1 + 1e-8:
            log.warning("candidate %s has purity outside (0, 1]: [%g, %g]", lab, pur.min(), pur.max())
        # trapezoid average of the retained fraction
        ret = pur / pur[0]
        mean = float(np.trapezoid(ret, times) / window) if window > 0 else 1.0
        entries.append(SieveEntry(lab, pur, mean))
    entries.sort(key=lambda e: -e.retained)
    return SieveReport(times, entries)


def half_purity_time(g: DecoherenceTensor, cov: np.ndarray) -> float:
    """Time for a pure Gaussian (covariance `cov`) to reach half its purity.

    Purity ∝ det(Σ + 2gt)^(-1/2); solve det(Σ + 2gt) = 4 det Σ.
    """
    a = np.linalg.det(2 * g.g)
    b = 2 * (cov[0, 0] * g.g[1, 1] + cov[1, 1] * g.g[0, 0] - 2 * cov[0, 1] * g.g[0, 1])
    c = -3 * np.linalg.det(cov)
    if abs(a) < 1e-300:
        return float(-c / b)
    return float((-b + math.sqrt(b * b - 4 * a * c)) / (2 * a))


# -- two-packet experiment ---------------------------------------------------------

@dataclass
class CatReport:
    times: np.ndarray
    interference_norm: np.ndarray  # HS norm of the |ψ1><ψ2| + h.c. part
    overlap: np.ndarray  # Bhattacharyya overlap of the two diagonal distributions
    diag_total: np.ndarray  # diagonal of the probabilistic part at each time

    @property
    def decay_rate(self) -> float:
        """Least-squares slope of -log(norm) versus t."""
        y = np.log(self.interference_norm / self.interference_norm[0])
        t = self.times
        return float(-np.sum(t * y) / np.sum(t * t))

    @property
    def decay_time(self) -> float:
        r = self.decay_rate
        return math.inf if r <= 0 else 1.0 / r

    def mixing_time(self, level: float = 0.1) -> float:
        """First time the diagonal overlap reaches `level` (linear interpolation)."""
        o = self.overlap
        idx = np.nonzero(o >= level)[0]
        if idx.size == 0:
            return math.inf
        i = int(idx[0])
        if i == 0:
            return 0.0
        t0, t1, o0, o1 = self.times[i - 1], self.times[i], o[i - 1], o[i]
        return float(t0 + (level - o0) * (t1 - t0) / (o1 - o0))

    def to_text(self) -> str:
        lines = ["t,interference_norm,overlap"]
        for t, a, b in zip(self.times, self.interference_norm, self.overlap):
            lines.append(f"{t:.10g},{a:.10g},{b:.10g}")
        return "\n".join(lines) + "\n"


def _evolve_part(m: np.ndarray, g: DecoherenceTensor, t: float, grid: PhaseSpaceGrid) -> np.ndarray:
    if t == 0:
        return m
    rho = DensityOperator.from_matrix(m, hermitize=True)
    if g.degenerate_kind() is not None:
        return pure_decoherence_closed(rho, g, t, grid.basis_x, grid.hbar).matrix
    w = evolve_wigner(wigner_transform(rho, grid), g, t)
    return inverse_wigner(w).matrix


def cat_state_experiment(psi1, psi2, g: DecoherenceTensor, t_grid, grid: PhaseSpaceGrid) -> CatReport:
    """Split ρ for ψ ∝ ψ1 + ψ2 into interference and probabilistic parts and evolve both."""
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    for name, v in (("psi1", psi1), ("psi2", psi2)):
        if abs(np.linalg.norm(v) - 1) > 1e-10:
            raise ValueError(f"{name} is not normalized")
    if psi1.size != grid.basis_dim or psi2.size != grid.basis_dim:
        raise ValueError("states do not match the lattice basis dimension")
    p11 = np.outer(psi1, psi1.conj())
    p22 = np.outer(psi2, psi2.conj())
    inter = np.outer(psi1, psi2.conj())
    inter = inter + inter.conj().T
    times = np.asarray(t_grid, dtype=float)
    norms, overlaps, diags = [], [], []
    for t in times:
        i_t = _evolve_part(inter, g, t, grid)
        a = np.real(np.diag(_evolve_part(p11, g, t, grid)))
        b = np.real(np.diag(_evolve_part(p22, g, t, grid)))
        norms.append(float(np.linalg.norm(i_t)))
        pa, pb = np.clip(a, 0, None), np.clip(b, 0, None)
        overlaps.append(float(np.sum(np.sqrt(pa * pb)) / math.sqrt(pa.sum() * pb.sum())))
        diags.append(a + b)
    return CatReport(times, np.array(norms), np.array(overlaps), np.array(diags))
