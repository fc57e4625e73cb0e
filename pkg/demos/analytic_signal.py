"""Complex-frequency decomposition of a damped voltage swing.

Evaluates the closed-form transient

    v_d = V - k exp(-alpha t) cos(beta t),   v_q = k exp(-alpha t) sin(beta t)

and compares the exact (rho, omega) pair against the first-order
small-(k/V) approximation.  Writes analytic_signal.csv and prints the
worst-case approximation error.

Run from the repository root:  python3 demos/analytic_signal.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from gridfreq.complex_frequency import AnalyticExampleParams, analytic_example


def main(outdir: str = ".") -> None:
    p = AnalyticExampleParams(V=1.0, k=0.05, alpha=0.5, beta=2.0 * np.pi * 0.7)
    times = np.linspace(0.0, 8.0, 801)

    rows = []
    for t in times:
        s = analytic_example(p, t)
        rows.append((t, s.v.mag, s.exact.rho, s.exact.omega,
                     s.approx.rho, s.approx.omega))
    data = np.array(rows)

    out = Path(outdir) / "analytic_signal.csv"
    np.savetxt(out, data, delimiter=",", fmt="%.12g",
               header="t,v_mag,rho_exact,omega_exact,rho_approx,omega_approx",
               comments="")

    err_rho = np.max(np.abs(data[:, 2] - data[:, 4]))
    err_omega = np.max(np.abs(data[:, 3] - data[:, 5]))
    print(f"wrote {out}")
    print(f"max |rho_exact - rho_approx|     = {err_rho:.3e}")
    print(f"max |omega_exact - omega_approx| = {err_omega:.3e}")
    print("rho and omega are the same damped oscillation in quadrature: "
          "rho leads omega by ~90 degrees.")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
