"""Walk from measured coherence numbers to a memory capability estimate.

Run with ``python3 demos/memory_budget.py``.  Prints the linewidths implied by
the two devices, the spectral-diffusion law at a few waiting times, a
simulated two-pulse decay with its refit, and the optical-depth and SEMM
(Stark-echo modulation memory) budget for the on-chip geometry.
"""
import dataclasses

import numpy as np

from erecho import sim
from erecho.analytic import (effective_linewidth, homogeneous_linewidth, od_from_efficiency,
                             stark_extinction_time)
from erecho.fitting import fit_echo_decay
from erecho.metrics import (MEASURED_DEVICE, ON_CHIP_ELECTRODES, TARGET_DEVICE, format_si,
                            scale_od, semm_feasibility)
from erecho.presets import CHIP1H, CHIP1H_SD, CHIP3H, CHIP3H_SD, ECHO_EFFICIENCY, STARK_K
from erecho.units import to_si


def main():
    print("homogeneous linewidths")
    for name, spec in (("chip1h", CHIP1H), ("chip3h", CHIP3H)):
        print(f"  {name}: T2 = {format_si(spec.t2_optical, 's')}, "
              f"gamma_h = {format_si(homogeneous_linewidth(spec.t2_optical), 'Hz')}")

    print("effective linewidth versus waiting time")
    for tw in (1e-4, 1e-3, 1e-2):
        print(f"  T_W = {format_si(tw, 's'):>7}:  chip1h {format_si(effective_linewidth(CHIP1H_SD, tw), 'Hz'):>9}"
              f"   chip3h {format_si(effective_linewidth(CHIP3H_SD, tw), 'Hz'):>9}")

    spec = dataclasses.replace(CHIP3H, bath=None)
    taus = np.linspace(2e-6, 40e-6, 12)
    curve = sim.two_pulse_decay(spec, sim.SimConfig(n_ions=20_000, seed=0), taus)
    res = fit_echo_decay(curve)
    print(f"simulated chip3h decay refit: T2 = {format_si(res.params['T2'], 's')} "
          f"± {format_si(res.stderr['T2'], 's')}")

    od = od_from_efficiency(ECHO_EFFICIENCY)
    proj = scale_od(od, MEASURED_DEVICE, TARGET_DEVICE)
    print(f"optical depth: measured {od:.4f}, projected on the target geometry {proj:.2f}")

    t = stark_extinction_time(to_si(500.0, "V/cm"), STARK_K, "cos4")
    print(f"cos4 Stark extinction at 500 V/cm: {format_si(t, 's')}")
    semm = semm_feasibility(CHIP3H, ON_CHIP_ELECTRODES, "sin4", target=0.9)
    print(f"on-chip electrodes: {format_si(semm.field, 'V/m')}, 90% extinction after "
          f"{format_si(semm.extinction_time, 's')}, {semm.recalls_within_T2} recall cycles within T2")


if __name__ == "__main__":
    main()
