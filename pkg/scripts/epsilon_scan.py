#!/usr/bin/env python3
"""Sensitivity of g^pp to the Lorentzian regulator ε.

Two spectra are compared. The dense band has transition frequencies
spread evenly over [-Ω, Ω], so its density at ω = 0 is finite and g
settles once the level spacing is well below ε. The truncated ohmic bath
caps the occupation of its slowest modes, so the coupling density falls
to zero at ω = 0 and g keeps moving as ε shrinks.
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass

import numpy as np

from decohere.coefficients import CouplingSpectrum, decoherence_coeffs, ohmic_modes, oscillator_bath

log = logging.getLogger("epsilon_scan")


@dataclass
class ScanConfig:
    n_modes: int = 2000
    band_transitions: int = 20000
    temperature: float = 1.0
    eta: float = 0.1
    truncation: int = 3
    factors: tuple = (1.0, 0.5, 0.25, 0.125)


def dense_band(m: int, beta: float, omega_c: float = 1.0) -> CouplingSpectrum:
    w = omega_c * (np.arange(m) + 0.5) / m
    omega = np.empty(2 * m)
    omega[0::2], omega[1::2] = w, -w
    n = np.arange(2 * m)
    weight = np.repeat(np.exp(-beta * w / 2) / (1 + np.exp(-beta * w)), 2)
    return CouplingSpectrum(n, n ^ 1, np.full(2 * m, 0.01 + 0j), np.zeros(2 * m), omega, weight,
                            beta, omega_c)


def scan(spec: CouplingSpectrum, factors) -> list[float]:
    eps0 = spec.regularization_epsilon
    return [decoherence_coeffs(spec.with_epsilon(eps0 * f)).gpp for f in factors]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-modes", type=int, default=ScanConfig.n_modes)
    ap.add_argument("--truncation", type=int, default=ScanConfig.truncation)
    a = ap.parse_args(argv)
    cfg = ScanConfig(n_modes=a.n_modes, truncation=a.truncation)
    specs = {
        "dense_band": dense_band(cfg.band_transitions, 1.0 / cfg.temperature),
        "ohmic_truncated": oscillator_bath(ohmic_modes(cfg.n_modes, 1.0, cfg.eta), cfg.temperature,
                                           mode_truncation=cfg.truncation),
    }
    print("spectrum,eps_factor,gpp,relative_to_default")
    for name, s in specs.items():
        vals = scan(s, cfg.factors)
        for f, v in zip(cfg.factors, vals):
            print(f"{name},{f:g},{v:.8e},{v / vals[0]:.6f}")


if __name__ == "__main__":
    main()
