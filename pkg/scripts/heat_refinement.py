"""Spatial convergence of P1 Galerkin heat at t = 0.1 against a 4x finer mesh."""

import numpy as np
from scipy.linalg import expm

from adjoint_lab.semidisc import EvolutionProblem, assemble_galerkin, gaussian


def error_at(problem, n_el, t=0.1):
    disc, ode = assemble_galerkin(problem, n_el)
    rdisc, rode = assemble_galerkin(problem, 4 * n_el)
    q = expm(t * ode.jacobian(0, None)) @ ode.initial_state(problem.initial_condition)
    qr = expm(t * rode.jacobian(0, None)) @ rode.initial_state(problem.initial_condition)
    x = disc.mesh
    return disc.h, float(np.max(np.abs(disc.interpolate(q, x) - rdisc.interpolate(qr, x))))


if __name__ == "__main__":
    problem = EvolutionProblem("heat", nu=0.1, initial_condition=gaussian(width=0.15))
    rows = [error_at(problem, n) for n in (8, 16, 32, 64)]
    for h, e in rows:
        print(f"h={h:.5f}  err={e:.3e}")
    hs, es = zip(*rows)
    print("slope", np.polyfit(np.log(hs), np.log(es), 1)[0])
