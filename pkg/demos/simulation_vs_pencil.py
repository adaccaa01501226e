"""A trajectory's per-step growth is the dominant pencil eigenvalue.

Simulates the linear scalar DAE ``x' = -2x + y, 0 = x - y`` with both interfacing
options and compares the fitted amplification with the pencil spectrum. Then
repeats on the nonlinear machine model to show the extrapolation order loss.
"""

import math

import numpy as np

from pencil_psa import (
    DaeModel,
    PcScheme,
    SimConfig,
    find_equilibrium,
    fitted_amplification,
    fixtures,
    pencil_spectrum,
    scheme_pencil,
    simulate,
)


def main():
    ssm = fixtures.scalar_dae()
    h = 0.05
    print(f"scalar DAE, h={h}, exact per-step factor e^(-h) = {math.exp(-h):.10f}")
    for iface in ("extrapolation", "perfect"):
        scheme = PcScheme.heun(1, iface)
        # keep the run short: once the state nears the absolute interface
        # tolerance the final ratio stops meaning anything
        traj = simulate(DaeModel.from_linear(ssm), [1.0], [0.0], SimConfig(h=h, t_end=100 * h, scheme=scheme))
        z = pencil_spectrum(scheme_pencil(ssm, scheme, h)).eigenvalues
        zmax = z[np.argmax(np.abs(z))]
        print(f"  {iface:>13s}: fitted {fitted_amplification(traj):.10f}  pencil {zmax.real:.10f}")

    model = fixtures.classical_machine()
    eq = find_equilibrium(model, fixtures.CLASSICAL_MACHINE_GUESS)
    x0 = eq.x0 + np.array([0.05, 0.0, 0.0])
    ref = simulate(model, x0, eq.y0, SimConfig(h=1e-4, t_end=1.0, method="tm")).x[-1]
    print("\nmachine, 0.05 rad kick, error at t=1 s against a fine trapezoidal run")
    for iface in ("extrapolation", "perfect"):
        errs = []
        for step in (4e-3, 2e-3, 1e-3):
            traj = simulate(model, x0, eq.y0, SimConfig(h=step, t_end=1.0, scheme=PcScheme.heun(1, iface)))
            errs.append(np.max(np.abs(traj.x[-1] - ref)))
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        print(f"  {iface:>13s}: errors " + ", ".join(f"{e:.2e}" for e in errs)
              + "  observed order " + ", ".join(f"{o:.2f}" for o in orders))


if __name__ == "__main__":
    main()
