"""The twelve acceptance criteria as runnable checks.

Each check returns a CriterionResult whose `line()` is the footer format
`PASS|FAIL <criterion> <value> <threshold>` followed by runtime and details.
Every comparison is against a closed form or an independent computation
(exact unitary evolution, Gaussian algebra, plane-wave star products,
dense angular quadrature), never against another run of the same solver.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import (
    half_purity_time,
    nogo_check,
    purity_sieve,
    TimescaleParams,
    timescale_report,
)
from .coefficients import (
    DecoherenceTensor,
    decoherence_coeffs,
    dissipation_coeffs,
    fdt_ratio,
    ohmic_modes,
    oscillator_bath,
    random_spectrum,
)
from .evolution import (
    BathCoupling,
    EvolutionSpec,
    HamiltonField,
    evolve_master,
    finite_difference_pure,
    heat_kernel_evolve,
    moyal_correction,
    pure_decoherence_closed,
    semiclassical_evolve,
    stable_dt,
    xi_representation,
)
from .hilbert import (
    DensityOperator,
    HilbertDims,
    Operator,
    evolve_exact,
    kron_all,
    ptrace_env,
    random_density,
    random_hermitian,
    thermal_state,
)
from .projection import ProjectionContext, project_P_matrix, renormalize_coupling
from .scattering import effective_gpp, hard_sphere, localization_kernel
from .weyl import (
    OperatorSymbol,
    PhaseCell,
    PhaseSpaceGrid,
    WignerFunction,
    gaussian_wavefunction,
    gaussian_wigner,
    moyal_product,
    quasi_projector,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    value: float
    threshold: float
    runtime: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} criterion{self.number}_{self.name} {self.value:.6g} {self.threshold:.6g}"
                f"  [{self.runtime:.2f}s of {self.limit:g}s] {self.detail}").rstrip()


# -- 1: master equation vs exact evolution -------------------------------------

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([1.0, -1.0])

C1_FREQS = (0.1, 0.15, 8.0)
C1_COUPLINGS = (0.1, 0.1, 0.16)
C1_BETA = 1.0


def spin_bath(freqs, couplings, beta, omega_c=1.0):
    """H_c = ω_c σz/2, H_e = Σ ω_i σz_i/2, H₁ = σz ⊗ Σ λ_i σx_i."""
    n = len(freqs)
    eye = np.eye(2)

    def site(op, i):
        return kron_all([op if j == i else eye for j in range(n)])

    h_e = sum(0.5 * w * site(SZ, i) for i, w in enumerate(freqs))
    b = sum(lam * site(SX, i) for i, lam in enumerate(couplings))
    h_c = Operator(0.5 * omega_c * SZ)
    coupling = BathCoupling(Operator(h_e, "environment"), Operator(np.kron(SZ, b), "composite"), beta)
    return h_c, coupling, b


def correlation_time(h_e: np.ndarray, b: np.ndarray, beta: float, t_max: float = 20.0,
                     n: int = 20001) -> float:
    """First τ with |C(τ)| ≤ |C(0)|/e, C(τ) = tr(B(τ) B ρ_e)."""
    w, v = np.linalg.eigh(h_e)
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    bb = v.conj().T @ b @ v
    amp = p[:, None] * np.abs(bb) ** 2  # C(τ) = Σ p_n |B_nm|² e^{i(E_n - E_m)τ}
    dw = w[:, None] - w[None, :]
    taus = np.linspace(0.0, t_max, n)
    c = np.exp(1j * np.outer(taus, dw.ravel())) @ amp.ravel()
    r = np.abs(c) / abs(c[0])
    idx = np.nonzero(r <= 1 / math.e)[0]
    return float(taus[idx[0]]) if idx.size else math.inf


def criterion_1(t_final=8.0, dt=0.005, freqs=C1_FREQS, couplings=C1_COUPLINGS, beta=C1_BETA):
    h_c, coupling, b = spin_bath(freqs, couplings, beta)
    psi = np.array([1.0, 1.0]) / math.sqrt(2)
    rho0 = DensityOperator.pure(psi)
    n = int(round(t_final / dt))
    d_e = coupling.d_e
    full_h = (np.kron(h_c.entries, np.eye(d_e)) + np.kron(np.eye(2), coupling.h_e.entries)
              + coupling.h_1.entries)
    full0 = DensityOperator.from_matrix(np.kron(rho0.matrix, coupling.env.rho), "composite")
    _, exact = evolve_exact(full0, Operator(full_h, "composite"), n * dt, n + 1)
    dims = HilbertDims(2, d_e)
    ex = np.array([abs(ptrace_env(r.matrix, dims)[0, 1]) for r in exact])
    _, states = evolve_master(rho0, h_c, coupling, EvolutionSpec("markov_master", n * dt, dt))
    mk = np.array([abs(s.matrix[0, 1]) for s in states])
    below = np.nonzero(ex <= 0.5 * ex[0])[0]
    if below.size == 0:
        return math.inf, "exact coherence never halves", {}
    half = int(below[0])
    rel = float(np.max(np.abs(mk[: half + 1] - ex[: half + 1]) / ex[: half + 1]))
    tau_c = correlation_time(coupling.h_e.entries, b, beta)
    t_half = half * dt
    ratio = t_half / tau_c
    return rel, f"t_half={t_half:.3f} tau_c={tau_c:.3f} ratio={ratio:.1f}", {"ratio": ratio}


def _c1():
    rel, detail, extra = criterion_1()
    return rel < 0.10 and extra.get("ratio", 0) >= 10, rel, 0.10, detail


# -- 2: degenerate finite difference vs closed form ------------------------------

def criterion_2(n=256):
    grid = PhaseSpaceGrid.square(12.0, 12.0, n)
    gpp = 0.05
    g = DecoherenceTensor.from_components(gpp=gpp)
    sig = 1.5
    w0 = WignerFunction(grid, gaussian_wigner(grid, (0.0, 0.0), np.diag([sig ** 2, 0.25 / sig ** 2])))
    xi, r0 = xi_representation(w0)
    # time at which the largest well-populated separation decays by e²
    pop = np.abs(r0).max(axis=0) > 1e-6 * np.abs(r0).max()
    xi_max = np.abs(xi[pop]).max()
    t = 2.0 / (gpp * xi_max ** 2)
    wt = finite_difference_pure(w0, g, t, stable_dt(grid, g))
    _, rt = xi_representation(wt)
    mask = np.abs(r0) > 1e-6 * np.abs(r0).max()
    expected = r0 * np.exp(-gpp * xi[None, :] ** 2 * t / grid.hbar ** 2)
    rel = float(np.max(np.abs(rt[mask] - expected[mask]) / np.abs(expected[mask])))
    return rel, f"t={t:.4g} xi_max={xi_max:.3g}"


def _c2():
    rel, detail = criterion_2()
    return rel < 1e-3, rel, 1e-3, detail


# -- 3: heat kernel vs PDE and Gaussian covariance growth -------------------------

def criterion_3(n=256):
    grid = PhaseSpaceGrid.square(10.0, 10.0, n)
    g = DecoherenceTensor(np.array([[0.04, 0.01], [0.01, 0.03]]))
    rng = np.random.default_rng(3)
    w = np.zeros(grid.shape)
    for _ in range(4):
        mean = rng.uniform(-3, 3, size=2)
        a = rng.uniform(0.5, 1.2, size=2)
        w += gaussian_wigner(grid, mean, np.diag(a ** 2))
    w0 = WignerFunction(grid, w / 4)
    # one smearing time: 2 λ_max t equals the narrowest packet variance
    t = 0.25 / (2 * np.linalg.eigvalsh(g.g).max())
    hk = heat_kernel_evolve(w0, g, t)
    fd = finite_difference_pure(w0, g, t, stable_dt(grid, g))
    l2 = float(np.linalg.norm(fd.values - hk.values) / np.linalg.norm(hk.values))
    cov0 = np.array([[0.8, 0.2], [0.2, 0.6]])
    gw = WignerFunction(grid, gaussian_wigner(grid, (0.5, -0.5), cov0))
    _, cov_t = heat_kernel_evolve(gw, g, 5.0).moments()
    cov_err = float(np.abs(cov_t - (cov0 + 2 * g.g * 5.0)).max())
    return l2, cov_err


def _c3():
    l2, cov_err = criterion_3()
    return l2 < 1e-3 and cov_err < 1e-8, l2, 1e-3, f"cov_err={cov_err:.2e}"


# -- 4: fluctuation-dissipation ------------------------------------------------------

def criterion_4(omega_c=1.0):
    modes = ohmic_modes(16, omega_c, eta=0.1, band=(0.8, 1.0))

    def ratio(temp):
        s = oscillator_bath(modes, temp, mode_truncation=4, hbar=1.0)
        return fdt_ratio(decoherence_coeffs(s), dissipation_coeffs(s), temp)

    return ratio(100.0 * omega_c), ratio(1.0 * omega_c)


def _c4():
    hi, lo = criterion_4()
    dev_hi, dev_lo = abs(hi - 1), abs(lo - 1)
    return dev_hi < 0.01 and dev_lo > 0.05, dev_hi, 0.01, f"T=1: ratio={lo:.4f} (needs >5% off)"


# -- 5: positivity and symmetry ------------------------------------------------------

def criterion_5(count=1000, seed=5):
    rng = np.random.default_rng(seed)
    worst_eig, worst_sym = 0.0, 0.0
    for _ in range(count):
        s = random_spectrum(rng)
        g = decoherence_coeffs(s).g
        gam = dissipation_coeffs(s).gamma
        norm = max(np.linalg.norm(g, 2), 1e-300)
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(g).min() / norm))
        worst_sym = max(worst_sym, abs(g[0, 1] - g[1, 0]), abs(gam[0, 1] - gam[1, 0]))
    return worst_eig, worst_sym


def _c5():
    eig, sym = criterion_5()
    return eig >= -1e-12 and sym <= 1e-10, sym, 1e-10, f"min eig/|g|={eig:.2e}"


# -- 6: Moyal truncation order --------------------------------------------------------

def criterion_6(hbars=(0.4, 0.2, 0.1, 0.05)):
    alpha = np.array([1.0, 2.0])  # (α_x, α_p) integer frequencies on a 2π-periodic box
    beta = np.array([-2.0, 1.0])
    theta = alpha[0] * beta[1] - alpha[1] * beta[0]
    errs = []
    for h in hbars:
        grid = PhaseSpaceGrid(0.0, 2 * math.pi, 0.0, 2 * math.pi, 32, 32, h)
        X, P = grid.mesh()
        a = OperatorSymbol.scalar(grid, np.exp(1j * (alpha[0] * X + alpha[1] * P)))
        b = OperatorSymbol.scalar(grid, np.exp(1j * (beta[0] * X + beta[1] * P)))
        exact = np.exp(-0.5j * h * theta) * a.values[0, 0] * b.values[0, 0]
        approx = moyal_product(a, b, order=2).values[0, 0]
        errs.append(float(np.abs(approx - exact).max()))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return orders, errs


def _c6():
    orders, _ = criterion_6()
    dev = max(abs(o - 3.0) for o in orders)
    return dev <= 0.3, dev, 0.3, "orders=" + ",".join(f"{o:.3f}" for o in orders)


# -- 7: no-go theorem -----------------------------------------------------------------

def criterion_7(seed=7):
    iso = DecoherenceTensor.from_components(gxx=1.0, gpp=1.0)
    rep = nogo_check(iso, 64, 256, seed, n=64, n_coherent=16)
    deg = nogo_check(DecoherenceTensor.from_components(gpp=1.0), 64, 256, seed, n=64)
    n_coh = sum(1 for lab, _ in rep.per_psi if lab.startswith("coherent"))
    return rep.floor, deg.position_residual, n_coh


def _c7():
    floor, resid, n_coh = criterion_7()
    return floor > 1e-6 and resid < 1e-10 and n_coh == 16, floor, 1e-6, f"degenerate residual={resid:.2e}"


# -- 8: predictability sieve ----------------------------------------------------------

def criterion_8(dim=512, g_iso=0.05):
    hbar = 1.0
    length = math.sqrt(dim * math.pi * hbar)
    grid = PhaseSpaceGrid.lattice(dim, -length / 2, length, hbar)
    half = math.sqrt(100 * 2 * math.pi * hbar) / 2
    _, op = quasi_projector(PhaseCell((0.0, 0.0), (half, half), 0.1), grid)
    m = op.entries
    cell = DensityOperator.from_matrix(m / np.trace(m).real, hermitize=True)
    sig = math.sqrt(hbar / 2)
    gauss = DensityOperator.pure(gaussian_wavefunction(grid.basis_x, 0.0, 0.0, sig, hbar))
    g = DecoherenceTensor.from_components(gxx=g_iso, gpp=g_iso)
    window = 1.05 * half_purity_time(g, np.diag([sig ** 2, hbar ** 2 / (4 * sig ** 2)]))
    rep = purity_sieve({"cell": cell, "gaussian": gauss}, g, window, 11, grid=grid)
    c, q = rep.entry("cell"), rep.entry("gaussian")
    cell_drop = 1 - float((c.purity / c.purity[0]).min())
    gauss_drop = 1 - q.final_retained
    return cell_drop, gauss_drop, rep.ranking


def _c8():
    cell_drop, gauss_drop, ranking = criterion_8()
    ok = cell_drop < 0.10 and gauss_drop >= 0.5 and ranking[0] == "cell"
    return ok, cell_drop, 0.10, f"gaussian lost {gauss_drop:.3f}; ranking={'>'.join(ranking)}"


# -- 9: timescale ordering --------------------------------------------------------------

def criterion_9():
    return timescale_report(TimescaleParams(1.0, 1.0, 1e-2, 1.0, 10.0, 1e-2))


def _c9():
    rep = criterion_9()
    r1, r2 = rep.ratios
    return rep.ordered, min(r1, r2), 10.0, (f"t_dec={rep.t_dec:.3g} t_mix={rep.t_mix:.3g} "
                                            f"t_wp={rep.t_wp:.3g}")


# -- 10: collisional kernel --------------------------------------------------------------

def criterion_10(radius=1.0, k0=2.0, flux=3.0):
    gas = hard_sphere(radius, k0, flux)
    sigma = math.pi * radius ** 2
    rate = flux * sigma
    f0 = float(localization_kernel(gas, [0.0])[0])
    xi_far = np.linspace(40.0, 60.0, 41) / k0
    plateau = float(localization_kernel(gas, xi_far).mean())
    lam = effective_gpp(gas)
    lam_stated = rate * k0 ** 2 / 6
    # feed g^pp back into the closed form on a position grid in the quadratic regime
    x = np.linspace(0.0, 0.05 / k0, 9)
    rho0 = DensityOperator.from_matrix(np.ones((x.size, x.size)) / x.size)
    t = 1.0 / (lam * x[-1] ** 2)
    rt = pure_decoherence_closed(rho0, DecoherenceTensor.from_components(gpp=lam), t, x).matrix
    sep = np.abs(x[:, None] - x[None, :])
    f_tab = localization_kernel(gas, sep.ravel()).reshape(sep.shape)
    ref = np.exp(-f_tab * t) / x.size
    feed = float(np.max(np.abs(rt.real - ref) / ref))
    return {"F0": f0, "plateau_rel": abs(plateau / rate - 1), "lambda": lam,
            "lambda_rel": abs(lam / lam_stated - 1), "feedback_rel": feed}


def _c10():
    r = criterion_10()
    ok = r["F0"] == 0.0 and r["plateau_rel"] <= 0.02 and r["lambda_rel"] <= 0.01 and r["feedback_rel"] <= 0.05
    detail = (f"F0={r['F0']:.1e} plateau_dev={r['plateau_rel']:.2e} "
              f"Lambda/(Phi*sigma*k0^2/6)={r['lambda_rel'] + 1:.4f} feedback_dev={r['feedback_rel']:.2e}")
    return ok, r["lambda_rel"], 0.01, detail


# -- 11: projection algebra ------------------------------------------------------------

def criterion_11(count=100, seed=11, d_c=4, d_e=5):
    rng = np.random.default_rng(seed)
    h_e = Operator(random_hermitian(d_e, rng), "environment")
    env = thermal_state(h_e, 0.7)
    dims = HilbertDims(d_c, d_e)
    ctx = ProjectionContext(random_density(d_c, rng), env)
    h_full = np.kron(np.eye(d_c), h_e.entries)
    idem = avg = 0.0
    for _ in range(count):
        mu = random_density(d_c * d_e, rng)
        p1 = project_P_matrix(mu, ctx)
        p2 = project_P_matrix(p1, ctx)
        idem = max(idem, float(np.abs(p2 - p1).max()))
        avg = max(avg,
                  float(np.abs(ptrace_env(p1, dims) - ptrace_env(mu, dims)).max()),
                  abs(np.trace(h_full @ p1) - np.trace(h_full @ mu)),
                  abs(np.trace(p1) - np.trace(mu)))
    h1 = Operator(random_hermitian(d_c * d_e, rng), "composite")
    h_c = Operator(random_hermitian(d_c, rng))
    _, h1r = renormalize_coupling(h_c, h1, env)
    resid = float(np.abs(ptrace_env(h1r.entries @ np.kron(np.eye(d_c), env.rho), dims)).max())
    return idem, avg, resid


def _c11():
    idem, avg, resid = criterion_11()
    ok = idem < 1e-10 and avg < 1e-10 and resid < 1e-12
    return ok, max(idem, avg), 1e-10, f"renormalized mean={resid:.2e}"


# -- 12: semiclassical rotation ------------------------------------------------------------

def criterion_12(n=128, dt=0.005):
    grid = PhaseSpaceGrid.square(8.0, 8.0, n)
    h = HamiltonField.harmonic(grid, 1.0, 1.0)
    mean0 = np.array([1.5, 0.0])
    cov0 = np.array([[0.5, 0.1], [0.1, 0.5]])
    w0 = WignerFunction(grid, gaussian_wigner(grid, mean0, cov0))
    quarter = math.pi / 2
    spec = EvolutionSpec("semiclassical", quarter, quarter / round(quarter / dt))
    _, ws = semiclassical_evolve(w0, h, spec)
    # phase-space flow x(t) = x cos t + p sin t, p(t) = -x sin t + p cos t
    c, s = math.cos(quarter), math.sin(quarter)
    R = np.array([[c, s], [-s, c]])
    exact = gaussian_wigner(grid, R @ mean0, R @ cov0 @ R.T)
    dev = float(np.abs(ws[-1].values - exact).max() / np.abs(exact).max())
    corr = float(np.abs(moyal_correction(w0.values, h)).max())
    return dev, corr


def _c12():
    dev, corr = criterion_12()
    return dev < 1e-4 and corr == 0.0, dev, 1e-4, f"hbar^2 term max={corr:.1e}"


CRITERIA = {
    1: ("markov_vs_exact", _c1, 60.0),
    2: ("degenerate_closed_form", _c2, 10.0),
    3: ("heat_kernel_vs_pde", _c3, 60.0),
    4: ("fluctuation_dissipation", _c4, 5.0),
    5: ("positivity_symmetry", _c5, 30.0),
    6: ("moyal_truncation", _c6, 30.0),
    7: ("nogo_theorem", _c7, 120.0),
    8: ("einselection_sieve", _c8, 60.0),
    9: ("timescale_ordering", _c9, 1.0),
    10: ("scattering_sum_rule", _c10, 30.0),
    11: ("projection_algebra", _c11, 10.0),
    12: ("semiclassical_limit", _c12, 30.0),
}


def run_criterion(number: int) -> CriterionResult:
    name, fn, limit = CRITERIA[number]
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ok, value, threshold, detail = fn()
    rt = time.perf_counter() - t0
    if rt >= limit:
        detail = f"{detail} (runtime over limit)"
    return CriterionResult(number, name, bool(ok and rt < limit), float(value), float(threshold),
                           rt, limit, detail)


def run_criteria(numbers=None) -> list[CriterionResult]:
    return [run_criterion(n) for n in (numbers or sorted(CRITERIA))]
