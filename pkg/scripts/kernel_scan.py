#!/usr/bin/env python3
"""Hard-sphere localization kernel and its small-separation curvature.

Prints F(ξ) on a grid for one gas, then Λ against k₀ together with the
two reference values Φσk₀²/3 and Φσk₀²/6.
"""
from __future__ import annotations

import argparse
import math
from dataclasses import dataclass

import numpy as np

from decohere.scattering import effective_gpp, hard_sphere, localization_kernel


@dataclass
class KernelConfig:
    radius: float = 1.0
    flux: float = 3.0
    k0: float = 2.0
    xi_max: float = 20.0
    n_xi: int = 41
    k_values: tuple = (0.5, 1.0, 2.0, 4.0, 8.0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radius", type=float, default=KernelConfig.radius)
    ap.add_argument("--flux", type=float, default=KernelConfig.flux)
    ap.add_argument("--k0", type=float, default=KernelConfig.k0)
    a = ap.parse_args(argv)
    cfg = KernelConfig(radius=a.radius, flux=a.flux, k0=a.k0)
    rate = cfg.flux * math.pi * cfg.radius ** 2
    gas = hard_sphere(cfg.radius, cfg.k0, cfg.flux)
    xi = np.linspace(0.0, cfg.xi_max, cfg.n_xi)
    print("# kernel")
    print("xi,F,F_over_rate")
    for x, f in zip(xi, localization_kernel(gas, xi)):
        print(f"{x:.6g},{f:.8e},{f / rate:.6f}")
    print("# curvature")
    print("k0,Lambda,ratio_to_third,ratio_to_sixth")
    for k in cfg.k_values:
        lam = effective_gpp(hard_sphere(cfg.radius, k, cfg.flux))
        print(f"{k:g},{lam:.8e},{lam / (rate * k * k / 3):.6f},{lam / (rate * k * k / 6):.6f}")


if __name__ == "__main__":
    main()
