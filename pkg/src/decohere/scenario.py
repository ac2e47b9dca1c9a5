"""Turn a ScenarioConfig into physics objects and run it.

Everything returned here is in-memory text; the CLI decides where it goes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    footer,
    nogo_check,
    pointer_basis_check,
    symmetric_positions,
    timescale_report,
    TimescaleParams,
)
from .coefficients import (
    CouplingSpectrum,
    DecoherenceTensor,
    DissipationTensor,
    canonical_rotation,
    decoherence_coeffs,
    dissipation_coeffs,
    fdt_ratio,
    oscillator_bath,
)
from .config import ConfigError, ScenarioConfig
from .evolution import (
    BathCoupling,
    EvolutionSpec,
    HamiltonField,
    evolve_master,
    finite_difference_pure,
    heat_kernel_evolve,
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
    loads_operator,
    partial_trace_env,
)
from .projection import renormalize_coupling
from .scattering import GasSpec, effective_gpp, hard_sphere, kernel_table, tabulated, thermal_flux
from .weyl import (
    PhaseSpaceGrid,
    WignerFunction,
    gaussian_wavefunction,
    gaussian_wigner,
    inverse_wigner,
    wigner_transform,
)

log = logging.getLogger(__name__)

SZ = np.diag([1.0, -1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])

PHASE_SPACE_MODES = ("pure_decoherence_closed", "heat_kernel", "finite_difference", "semiclassical")
MASTER_MODES = ("exact_oracle", "markov_master", "retarded_master")


def header(cfg: ScenarioConfig, what: str) -> str:
    return f"# decohere {__version__} {what} config={cfg.hash} seed={cfg.seed}\n"


# -- system ---------------------------------------------------------------------

def collective_hamiltonian(cfg: ScenarioConfig) -> Operator:
    s = cfg.system
    if s.hamiltonian == "spin":
        if s.d_c != 2:
            raise ConfigError("[system] hamiltonian = 'spin' needs d_c = 2")
        return Operator(0.5 * s.hbar * s.omega * SZ)
    if s.hamiltonian == "harmonic":
        return Operator(np.diag(s.hbar * s.omega * (np.arange(s.d_c) + 0.5)))
    op = loads_operator(cfg.resolve(s.file).read_text())
    if op.dim != s.d_c:
        raise ConfigError(f"tabulated H_c has dimension {op.dim}, [system] d_c = {s.d_c}")
    return Operator(op.entries, "collective")


def collective_coupling(cfg: ScenarioConfig) -> np.ndarray:
    s = cfg.system
    if s.coupling_operator == "sz":
        if s.d_c != 2:
            raise ConfigError("coupling_operator = 'sz' needs d_c = 2")
        return SZ
    a = np.diag(np.sqrt(np.arange(1, s.d_c)), 1)
    return math.sqrt(s.hbar / (2 * s.mass * s.omega)) * (a + a.T)


def _mode_ops(kind: str, levels: int):
    if kind == "spin_modes":
        return 0.5 * SZ, SX, 2
    a = np.diag(np.sqrt(np.arange(1, levels)), 1)
    return np.diag(np.arange(levels, dtype=float)), a + a.T, levels


def bath_coupling(cfg: ScenarioConfig, h_c: Operator) -> tuple[Operator, BathCoupling]:
    """Composite environment for the operator-level modes (coupling renormalized)."""
    b, s = cfg.bath, cfg.system
    if b.model not in ("spin_modes", "oscillator"):
        raise ConfigError(f"mode {cfg.evolution.mode} needs [bath] model = spin_modes or oscillator")
    h_loc, x_loc, lv = _mode_ops(b.model, b.mode_truncation)
    n = len(b.frequencies)
    d_e = lv ** n
    if s.d_e is not None and s.d_e != d_e:
        raise ConfigError(f"[system] d_e = {s.d_e} but the bath has dimension {d_e}")
    eye = np.eye(lv)
    h_e = np.zeros((d_e, d_e))
    bx = np.zeros((d_e, d_e))
    for i, (w, lam) in enumerate(zip(b.frequencies, b.couplings)):
        ops = [eye] * n
        ops[i] = h_loc
        h_e = h_e + s.hbar * w * kron_all(ops)
        ops[i] = x_loc
        bx = bx + lam * kron_all(ops)
    env_op = Operator(h_e, "environment")
    h1 = Operator(np.kron(collective_coupling(cfg), bx), "composite")
    from .hilbert import thermal_state
    hc_new, h1_new = renormalize_coupling(h_c, h1, thermal_state(env_op, 1.0 / b.temperature))
    return hc_new, BathCoupling(env_op, h1_new, 1.0 / b.temperature)


def coupling_spectrum(cfg: ScenarioConfig) -> CouplingSpectrum | None:
    b, s = cfg.bath, cfg.system
    if b.model == "oscillator":
        return oscillator_bath(list(zip(b.couplings, b.frequencies)), b.temperature,
                               b.mode_truncation, b.form, s.mass, s.omega, s.hbar,
                               b.epsilon, b.omega_cutoff)
    if b.model == "spectrum":
        return CouplingSpectrum.from_text(cfg.resolve(b.file).read_text())
    if b.model == "spin_modes":
        h_loc, x_loc, lv = _mode_ops("spin_modes", 2)
        n = len(b.frequencies)
        eye = np.eye(2)
        energies = np.zeros(2 ** n)
        bx = np.zeros((2 ** n, 2 ** n))
        for i, (w, lam) in enumerate(zip(b.frequencies, b.couplings)):
            ops = [eye] * n
            ops[i] = h_loc
            energies = energies + s.hbar * w * np.diag(kron_all(ops))
            ops[i] = x_loc
            bx = bx + lam * kron_all(ops)
        return CouplingSpectrum.from_matrices(bx, np.zeros_like(bx), energies, 1.0 / b.temperature,
                                              b.omega_cutoff, b.epsilon, s.hbar)
    return None


def gas_spec(cfg: ScenarioConfig) -> GasSpec:
    g = cfg.gas
    if g.k0 is not None:
        flux = ((g.k0, g.flux),)
    elif g.temperature is not None:
        flux = thermal_flux(g.temperature, g.particle_mass, g.flux, hbar=cfg.system.hbar)
    else:
        raise ConfigError("[gas] needs k0 or temperature")
    if g.model == "hard_sphere":
        base = hard_sphere(g.radius, flux[0][0], theta_min=g.theta_min,
                           particle_mass=g.particle_mass, temperature=g.temperature)
    else:
        tab = np.loadtxt(cfg.resolve(g.table), delimiter=",", comments="#", ndmin=2)
        base = tabulated(tab[:, 0], tab[:, 1], flux[0][0], theta_min=g.theta_min,
                         particle_mass=g.particle_mass, temperature=g.temperature)
    return GasSpec(base.cross_section, flux, g.particle_mass, g.temperature, g.theta_min, base.label)


def tensors(cfg: ScenarioConfig) -> tuple[DecoherenceTensor, DissipationTensor | None]:
    b = cfg.bath
    if b.model == "tensor":
        return DecoherenceTensor.from_components(b.gxx, b.gxp, b.gpp), None
    if b.model == "gas":
        return DecoherenceTensor.from_components(gpp=effective_gpp(gas_spec(cfg), hbar=cfg.system.hbar)), None
    if b.model == "none":
        return DecoherenceTensor(np.zeros((2, 2))), None
    spec = coupling_spectrum(cfg)
    return decoherence_coeffs(spec), dissipation_coeffs(spec)


# -- grid and states ----------------------------------------------------------

def phase_grid(cfg: ScenarioConfig) -> PhaseSpaceGrid:
    g = cfg.grid
    if g.is_lattice:
        if g.n_x % 2:
            raise ConfigError("[grid] n_x must be even for a Wigner lattice")
        return PhaseSpaceGrid.lattice(g.n_x // 2, g.x_min, g.x_max - g.x_min, cfg.system.hbar)
    return PhaseSpaceGrid(g.x_min, g.x_max, g.p_min, g.p_max, g.n_x, g.n_p, cfg.system.hbar)


def packet_width(cfg: ScenarioConfig) -> float:
    s = cfg.system
    return s.sigma if s.sigma is not None else math.sqrt(s.hbar / (s.mass * s.omega))


def packet_centres(cfg: ScenarioConfig):
    s = cfg.system
    if s.initial != "cat":
        return [(s.x0, s.p0)]
    h = 0.5 * s.separation
    if s.separation_axis == "x":
        return [(s.x0 - h, s.p0), (s.x0 + h, s.p0)]
    return [(s.x0, s.p0 - h), (s.x0, s.p0 + h)]


def initial_wigner(cfg: ScenarioConfig, grid: PhaseSpaceGrid) -> tuple[WignerFunction, DensityOperator | None]:
    s = cfg.system
    sig = packet_width(cfg)
    if s.initial == "plus":
        raise ConfigError("initial = 'plus' is only meaningful for the operator-level modes")
    if grid.is_lattice:
        x = grid.basis_x
        length = grid.x_max - grid.x_min
        psi = sum(gaussian_wavefunction(x, a, b, sig, s.hbar, length) for a, b in packet_centres(cfg))
        rho = DensityOperator.pure(psi)
        return wigner_transform(rho, grid), rho
    if s.initial == "cat":
        raise ConfigError("initial = 'cat' needs a Wigner lattice grid (omit p_min/p_max/n_p)")
    cov = np.diag([sig ** 2, (s.hbar / (2 * sig)) ** 2])
    return WignerFunction(grid, gaussian_wigner(grid, (s.x0, s.p0), cov)), None


# -- run ----------------------------------------------------------------------------

@dataclass
class RunResult:
    files: dict = field(default_factory=dict)  # name -> text
    passed: bool = True


def _offdiag_l2(m: np.ndarray) -> float:
    off = m - np.diag(np.diag(m))
    return float(np.linalg.norm(off))


def _offdiag_from_wigner(w: WignerFunction) -> float:
    """HS norm of the ξ ≠ 0 part of ρ(x, ξ) from a generic-grid W."""
    g = w.grid
    xi, vals = xi_representation(w)
    rho = vals * g.n_p * g.dp / (2 * math.pi * g.hbar)
    dxi = 2 * math.pi * g.hbar / (g.n_p * g.dp)
    mask = xi != 0
    return float(math.sqrt((np.abs(rho[:, mask]) ** 2).sum() * g.dx * dxi))


def _trajectory_text(cfg, rows) -> str:
    out = [header(cfg, "trajectory"), "t,trace_re,purity,offdiag_l2,energy_c\n"]
    out += [f"{t:.10g},{a:.15g},{b:.15g},{c:.15g},{d:.15g}\n" for t, a, b, c, d in rows]
    return "".join(out)


def evolution_spec(cfg: ScenarioConfig, dt: float | None = None) -> EvolutionSpec:
    e = cfg.evolution
    return EvolutionSpec(e.mode, e.t_final, dt or e.dt, e.include_hamiltonian_flow, e.hbar_order,
                         e.sample_every, e.memory_time, e.stationary_kernel)


def run_master(cfg: ScenarioConfig, res: RunResult):
    h_c = collective_hamiltonian(cfg)
    if cfg.system.initial != "plus":
        raise ConfigError(f"mode {cfg.evolution.mode} supports initial = 'plus' only")
    psi = np.zeros(cfg.system.d_c)
    psi[:2] = 1 / math.sqrt(2)
    rho0 = DensityOperator.pure(psi)
    spec = evolution_spec(cfg)
    hb = cfg.system.hbar
    if cfg.bath.model == "none":
        hc_r, coupling = h_c, None
    else:
        hc_r, coupling = bath_coupling(cfg, h_c)
    if spec.mode == "exact_oracle":
        if coupling is None:
            times, states = evolve_exact(rho0, h_c, spec.n_steps * spec.dt, spec.n_steps + 1, hb)
        else:
            d_e = coupling.d_e
            full_h = Operator(np.kron(hc_r.entries, np.eye(d_e)) + np.kron(np.eye(h_c.dim), coupling.h_e.entries)
                              + coupling.h_1.entries, "composite")
            full0 = DensityOperator(Operator(np.kron(rho0.matrix, coupling.env.rho), "composite"))
            times, big = evolve_exact(full0, full_h, spec.n_steps * spec.dt, spec.n_steps + 1, hb)
            dims = HilbertDims(h_c.dim, d_e, hb)
            states = [partial_trace_env(r, dims) for r in big]
        keep = list(range(0, len(times), spec.sample_every))
        times, states = times[keep], [states[i] for i in keep]
    else:
        times, states = evolve_master(rho0, hc_r, coupling, spec, hb)
    rows = []
    for t, r in zip(times, states):
        m = r.matrix
        rows.append((t, float(np.trace(m).real), float(np.vdot(m, m).real), _offdiag_l2(m),
                     float(np.trace(m @ h_c.entries).real)))
    res.files["trajectory.csv"] = _trajectory_text(cfg, rows)
    drift = max(abs(r[1] - 1.0) for r in rows)
    return {"trace_drift": (drift, 1e-8, drift < 1e-8), "final_purity": rows[-1][2],
            "final_offdiag_l2": rows[-1][3]}


def _energy(w: WignerFunction, cfg: ScenarioConfig) -> float:
    s = cfg.system
    X, P = w.grid.mesh()
    h = P ** 2 / (2 * s.mass) + 0.5 * s.mass * s.omega ** 2 * X ** 2
    return float((h * w.values).sum() * w.grid.measure)


def run_phase_space(cfg: ScenarioConfig, res: RunResult, snapshot_every: int):
    mode = cfg.evolution.mode
    grid = phase_grid(cfg)
    w0, rho0 = initial_wigner(cfg, grid)
    g, _ = tensors(cfg)
    spec = evolution_spec(cfg)
    n = spec.n_steps
    idx = list(range(0, n + 1, spec.sample_every))
    times = np.array([k * spec.dt for k in idx])
    states: list = []
    mats: list = []
    if mode == "pure_decoherence_closed":
        if rho0 is None:
            raise ConfigError("pure_decoherence_closed needs a Wigner lattice grid")
        for t in times:
            r = pure_decoherence_closed(rho0, g, t, grid.basis_x, grid.hbar) if t > 0 else rho0
            mats.append(r.matrix)
            states.append(wigner_transform(r, grid))
    elif mode == "heat_kernel":
        states = [heat_kernel_evolve(w0, g, t) if t > 0 else w0 for t in times]
    elif mode == "finite_difference":
        dt = min(spec.dt, stable_dt(grid, g))
        w, prev = w0, 0.0
        for t in times:
            if t > prev:
                w = finite_difference_pure(w, g, t - prev, min(dt, t - prev))
            states.append(w)
            prev = t
    else:
        if cfg.system.hamiltonian != "harmonic":
            raise ConfigError("semiclassical mode uses the harmonic Hamilton function; set hamiltonian = 'harmonic'")
        h = HamiltonField.harmonic(grid, cfg.system.mass, cfg.system.omega)
        times, states = semiclassical_evolve(w0, h, spec, g if np.any(g.g) else None)
    if not mats and grid.is_lattice:
        mats = [inverse_wigner(w).matrix for w in states]
    rows = []
    for k, (t, w) in enumerate(zip(times, states)):
        off = _offdiag_l2(mats[k]) if mats else _offdiag_from_wigner(w)
        pur = float(np.vdot(mats[k], mats[k]).real) if mats else w.purity()
        rows.append((t, w.norm(), pur, off, _energy(w, cfg)))
    res.files["trajectory.csv"] = _trajectory_text(cfg, rows)
    if snapshot_every:
        for k in range(0, len(states), snapshot_every):
            res.files[f"wigner_t{k}.csv"] = states[k].to_text(
                header(cfg, f"wigner t={times[k]:.10g}").strip("# \n"))
    drift = max(abs(r[1] - rows[0][1]) for r in rows)
    out = {"trace_drift": (drift, 1e-8, drift < 1e-8), "final_purity": rows[-1][2],
           "final_offdiag_l2": rows[-1][3]}
    if mats and cfg.system.initial == "cat" and cfg.system.separation_axis == "x" and len(times) > 1:
        x = grid.basis_x
        (a, _), (b, _) = packet_centres(cfg)
        i, j = int(np.argmin(np.abs(x - a))), int(np.argmin(np.abs(x - b)))
        c = np.array([abs(m[i, j]) for m in mats])
        sel = c > 1e-300
        tt = times[sel]
        y = np.log(c[sel] / c[0])
        rate = float(-np.sum(tt * y) / np.sum(tt * tt)) if np.any(tt > 0) else 0.0
        expect = g.gpp * (x[j] - x[i]) ** 2 / grid.hbar ** 2
        rel = abs(rate - expect) / expect if expect > 0 else float("nan")
        out["coherence_rate"] = rate
        out["expected_rate_gpp"] = expect
        out["coherence_rate_match"] = (rel, 0.05, rel < 0.05)
    return out


def report_text(cfg: ScenarioConfig, rows: dict) -> tuple[str, bool]:
    lines = [header(cfg, "report").rstrip("\n"), "quantity,value"]
    foot = []
    ok = True
    for k, v in rows.items():
        if isinstance(v, tuple):
            val, thr, passed = v
            lines.append(f"{k},{val:.10g}")
            foot.append(footer(passed, k, val, thr))
            ok &= passed
        elif isinstance(v, float):
            lines.append(f"{k},{v:.10g}")
        else:
            lines.append(f"{k},{v}")
    return "\n".join(lines + foot) + "\n", ok


def coeffs_text(cfg: ScenarioConfig) -> str:
    g, gam = tensors(cfg)
    s = cfg.system
    lines = [header(cfg, "coeffs").rstrip("\n"), "quantity,value"]
    for name in ("gxx", "gxp", "gpx", "gpp"):
        lines.append(f"g_{name[1:]},{getattr(g, name):.12g}")
    if gam is not None:
        for name in ("gxx", "gxp", "gpx", "gpp"):
            lines.append(f"gamma_{name[1:]},{getattr(gam, name):.12g}")
    lines.append(f"det_g,{g.det_g:.12g}")
    lines.append(f"classification,{g.classification}")
    kind = g.degenerate_kind()
    if kind:
        lines.append(f"degenerate_kind,{kind}")
    if np.any(g.g):
        length = math.sqrt(s.hbar / (s.mass * s.omega))
        theta, _ = canonical_rotation(g, length, s.hbar / length)
        lines.append(f"theta,{theta:.12g}")
    if gam is not None and gam.gpp > 0 and cfg.bath.model in ("oscillator", "spin_modes", "spectrum"):
        lines.append(f"fdt_ratio,{fdt_ratio(g, gam, cfg.bath.temperature, s.mass):.12g}")
    return "\n".join(lines) + "\n"


def nogo_text(cfg: ScenarioConfig, threads: int = 1) -> tuple[str, str]:
    g, _ = tensors(cfg)
    a = cfg.analysis
    rep = nogo_check(g, a.nogo_psi, a.nogo_rho, cfg.seed, a.nogo_dim, cfg.system.hbar,
                     n_coherent=min(16, a.nogo_psi), threads=threads,
                     mass=cfg.system.mass, omega=cfg.system.omega)
    return header(cfg, "nogo") + rep.to_text(), rep.status


def pointer_text(cfg: ScenarioConfig) -> str:
    g, _ = tensors(cfg)
    n = cfg.analysis.nogo_dim
    rep = pointer_basis_check(g, np.eye(n), 16, cfg.seed, symmetric_positions(n, cfg.system.hbar),
                              cfg.system.hbar)
    return header(cfg, "pointer") + rep.to_text()


def timescales_text(cfg: ScenarioConfig) -> str:
    _, gam = tensors(cfg)
    if gam is None or gam.gpp <= 0:
        raise ConfigError("timescales need a bath with a positive γ^pp")
    s = cfg.system
    p = TimescaleParams(s.mass, cfg.bath.temperature, gam.gpp, s.omega, cfg.analysis.delta_x, s.hbar)
    return header(cfg, "timescales") + timescale_report(p).to_text()


def kernel_text(cfg: ScenarioConfig) -> str:
    gas = gas_spec(cfg)
    xi_max = cfg.gas.xi_max or 20.0 / gas.k_max
    xi = np.linspace(0.0, xi_max, cfg.gas.n_xi)
    return header(cfg, "kernel") + kernel_table(gas, xi)


def run_scenario(cfg: ScenarioConfig, snapshot_every: int | None = None, threads: int = 1) -> RunResult:
    res = RunResult()
    snap = cfg.output.snapshot_every if snapshot_every is None else snapshot_every
    mode = cfg.evolution.mode
    if mode in MASTER_MODES:
        rows = run_master(cfg, res)
    else:
        rows = run_phase_space(cfg, res, snap)
    rows = {"mode": mode, **rows}
    diag = cfg.analysis.diagnostics
    if "coeffs" in diag or cfg.bath.model not in ("none",):
        res.files["coeffs.csv"] = coeffs_text(cfg)
    if "nogo" in diag:
        text, _ = nogo_text(cfg, threads)
        res.files["nogo.csv"] = text
    if "pointer" in diag:
        res.files["pointer.csv"] = pointer_text(cfg)
    if "timescales" in diag:
        res.files["timescales.csv"] = timescales_text(cfg)
    res.files["report.csv"], res.passed = report_text(cfg, rows)
    return res
