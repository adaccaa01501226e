"""How Heun-based partitioned integration deforms the modes of a small machine model.

Linearizes the one-axis machine at its equilibrium, then compares the
continuous-time modes with the modes implied by each discrete scheme over a
range of step sizes. Run with ``python demos/machine_deformation.py``.
"""

import numpy as np

from pencil_psa import PcScheme, find_equilibrium, fixtures, linearize, reference_spectrum, sweep
from pencil_psa.deformation import max_step_for_accuracy, stability_margin
from pencil_psa.spectra import damping_frequency


def main():
    model = fixtures.classical_machine()
    eq = find_equilibrium(model, fixtures.CLASSICAL_MACHINE_GUESS)
    ssm = linearize(model, eq)
    ref = reference_spectrum(ssm)
    print("continuous-time modes")
    for i, s in enumerate(ref.eigenvalues):
        m = damping_frequency(s)
        print(f"  {i}: {s.real:+.4f}{s.imag:+.4f}j  zeta={m.damping_pct:6.2f}%  f={m.natural_frequency:.3f} Hz")

    schemes = [PcScheme.heun(r, iface) for iface in ("extrapolation", "perfect") for r in (1, 2)]
    grid = np.geomspace(1e-3, 5e-2, 6)
    # electromechanical pair only: the fastest mode dominates the margin, not the error story
    target = [s for s in ref.eigenvalues if s.imag > 0]
    report = sweep(ssm, schemes, grid, target, include_delay=True)
    print("\nrelative error of the electromechanical mode (%)")
    labels = [s.label for s in schemes] + ["delay"]
    print("  h        " + "  ".join(f"{lab:>18s}" for lab in labels))
    for h in grid:
        cells = []
        for lab in labels:
            rows = [r for r in report.rows if r.variant == lab and r.h == h and r.mode_id == 0]
            cells.append(f"{rows[0].rel_err_pct:18.5f}" if rows else f"{'-':>18s}")
        print(f"  {h:.4f}   " + "  ".join(cells))

    print("\nlargest steps")
    for scheme in schemes:
        margin = stability_margin(ssm, scheme)
        acc = max_step_for_accuracy(ssm, scheme, target, 0.1)
        print(f"  {scheme.label:>18s}: stable up to h={margin.h:.5f}, 0.1% accurate up to h={acc.h:.6f}")


if __name__ == "__main__":
    main()
