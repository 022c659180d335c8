"""Adjoint convergence table for all fixed-step methods on one problem."""

import argparse

from adjoint_lab.cli import ORDER_STEPS, ORDER_T_FINAL, PROBLEM_DEFAULTS
from adjoint_lab.gradients import adjoint_order_study, half_squared_norm
from adjoint_lab.integrators import get_method
from adjoint_lab.semidisc import EvolutionProblem, build_ode


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="heat", choices=sorted(PROBLEM_DEFAULTS))
    ap.add_argument("--n", type=int, default=9)
    args = ap.parse_args()
    problem = EvolutionProblem(args.problem, **PROBLEM_DEFAULTS[args.problem])
    ode = build_ode(problem, args.n)
    q0 = ode.initial_state(problem.initial_condition)
    tf = ORDER_T_FINAL[args.problem]
    print(f"{args.problem}, dim {ode.dim}, t_final {tf}")
    print(f"{'method':18s} {'N':>6s} {'h':>10s} {'max |p_n - p_ref|':>18s}")
    for name, counts in ORDER_STEPS.items():
        study = adjoint_order_study(name, ode, half_squared_norm(), q0, 0.0, tf, counts)
        for n, h, err in study.table:
            print(f"{name:18s} {n:6d} {h:10.3e} {err:18.6e}")
        print(f"{name:18s} slope {study.slope:.3f} (order {get_method(name).order})\n")


if __name__ == "__main__":
    main()
