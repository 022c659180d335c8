"""Constant-vector residuals of the state and adjoint updates for upwind advection."""

import numpy as np

from adjoint_lab.diagrams import equilibrium_report, nonuniform_mass, upwind_operator

if __name__ == "__main__":
    n = 16
    K = upwind_operator(n)
    for label, M in (("nonuniform M", nonuniform_mass(n)), ("M = I/n", np.eye(n) / n)):
        for method in ("explicit_euler", "rk4"):
            r = equilibrium_report(K, M, method=method, h=1e-3)
            adj = r.info["adjoint_residuals"]
            print(f"{label:13s} {method:15s} state {r.max_residual:.1e}  "
                  f"standard {adj['standard']:.3e}  mass {adj['mass']:.3e}")
