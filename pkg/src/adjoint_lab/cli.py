"""``adjoint-lab run <experiment>``: run one experiment and write CSV + JSON artifacts.

Exit codes: 0 when every check in the run passed, 1 on a failed check or a
numerical failure, 2 on an invalid configuration (nothing is written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import adaptive, diagrams, gradients
from .errors import ConfigError
from .integrators import (METHODS, ODE, AdaptiveEuler, backpropagate, get_method,
                          integrate_variational, variational_equivariance_residual)
from .pairings import DualityPairing
from .semidisc import DISCRETIZATIONS, EvolutionProblem, build_ode

EXPERIMENTS = ("conservation", "dto-vs-otd", "gradient-check", "order-study",
               "adaptive-counterexample", "precondition", "equilibrium")
PAIRINGS = ("standard", "mass")
SEED_ENV = "ADJOINT_LAB_SEED"

DEFAULT_STEPS = {"conservation": [200], "dto-vs-otd": [20], "gradient-check": [20],
                 "precondition": [50], "equilibrium": [1], "adaptive-counterexample": [1]}
ORDER_STEPS = {"explicit_euler": [80, 160, 320, 640], "heun": [80, 160, 320, 640],
               "rk4": [50, 100, 200, 400], "implicit_midpoint": [20, 40, 80, 160]}
PROBLEM_DEFAULTS = {"heat": {"nu": 0.1, "a": 0.0, "bc": "dirichlet"},
                    "burgers": {"nu": 0.1, "a": 0.0, "bc": "dirichlet"},
                    "advection": {"nu": 0.0, "a": 1.0, "bc": "periodic"}}
# heat is smooth enough for a long horizon; the others stay short to keep the
# coarsest grids stable and the finest above round-off
ORDER_T_FINAL = {"heat": 1.0, "burgers": 0.2, "advection": 0.2}
CONFIG_KEYS = {"experiment", "problem", "bc", "nu", "a", "initial", "n", "discretization",
               "method", "pairing", "n_steps", "t_final", "seed", "out_path"}


@dataclass
class ExperimentConfig:
    experiment: str
    problem: str = "heat"
    bc: str | None = None
    nu: float | None = None
    a: float | None = None
    initial: object = "sine"
    n: int = 9
    discretization: str = "galerkin"
    method: str = "rk4"
    pairing: str = "standard"
    n_steps: list = field(default_factory=list)
    t_final: float | None = None
    seed: int = diagrams.DEFAULT_SEED
    out_path: str = "results"

    def problem_block(self):
        d = PROBLEM_DEFAULTS.get(self.problem, {})
        return {"problem": self.problem,
                "bc": self.bc if self.bc is not None else d.get("bc", "dirichlet"),
                "nu": self.nu if self.nu is not None else d.get("nu", 0.0),
                "a": self.a if self.a is not None else d.get("a", 0.0),
                "initial": self.initial}


def _choice(value, valid, what):
    if value not in valid:
        raise ConfigError(f"unknown {what} {value!r}; valid options: {', '.join(valid)}")
    return value


def _parse_steps(value):
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        steps = [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"steps must be an integer or comma-separated integers, got {value!r}")
    if not steps or min(steps) < 1:
        raise ConfigError("steps must be positive integers")
    return steps


def load_config(args, environ=None):
    """Merge JSON config file, environment seed and command-line overrides; validate."""
    environ = os.environ if environ is None else environ
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(raw) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; valid: {sorted(CONFIG_KEYS)}")
        if "experiment" in raw and raw["experiment"] != args.experiment:
            raise ConfigError(f"config is for experiment {raw['experiment']!r}, "
                              f"but {args.experiment!r} was requested")
    raw["experiment"] = args.experiment
    if SEED_ENV in environ:
        raw["seed"] = environ[SEED_ENV]
    overrides = {"problem": args.problem, "bc": args.bc, "nu": args.nu, "a": args.a, "n": args.n,
                 "discretization": args.discretization, "method": args.method,
                 "pairing": args.pairing, "n_steps": args.steps, "t_final": args.t_final,
                 "seed": args.seed, "out_path": args.out}
    raw.update({k: v for k, v in overrides.items() if v is not None})

    _choice(raw["experiment"], EXPERIMENTS, "experiment")
    cfg = ExperimentConfig(experiment=raw["experiment"])
    try:
        for key in ("problem", "bc", "initial", "discretization", "method", "pairing",
                    "out_path"):
            if key in raw:
                setattr(cfg, key, raw[key])
        for key in ("nu", "a", "t_final"):
            if key in raw:
                setattr(cfg, key, float(raw[key]))
        for key in ("n", "seed"):
            if key in raw:
                setattr(cfg, key, int(raw[key]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}")
    method = cfg.method.lower()
    cfg.method = {"euler": "explicit_euler", "ee": "explicit_euler", "midpoint": "implicit_midpoint",
                  "im": "implicit_midpoint"}.get(method, method)
    _choice(cfg.method, tuple(METHODS), "method")
    _choice(cfg.pairing, PAIRINGS, "pairing")
    _choice(cfg.discretization, DISCRETIZATIONS, "discretization")
    if cfg.t_final is None:
        cfg.t_final = ORDER_T_FINAL.get(cfg.problem, 0.2) if cfg.experiment == "order-study" else 0.2
    if not cfg.t_final > 0:
        raise ConfigError("t_final must be positive")
    if cfg.n < 1:
        raise ConfigError("n must be >= 1")
    if "n_steps" in raw:
        cfg.n_steps = _parse_steps(raw["n_steps"])
    elif cfg.experiment == "order-study":
        cfg.n_steps = list(ORDER_STEPS[cfg.method])
    else:
        cfg.n_steps = list(DEFAULT_STEPS[cfg.experiment])
    if cfg.experiment == "order-study" and len(cfg.n_steps) < 3:
        raise ConfigError("order-study needs at least 3 step counts")
    if cfg.pairing == "mass" and cfg.discretization != "galerkin":
        raise ConfigError("the mass pairing needs a Galerkin discretization")
    # assemble once here so invalid problem data is reported as a config error
    try:
        _setup(cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc))
    return cfg


def _setup(cfg):
    problem = EvolutionProblem.from_config(cfg.problem_block())
    ode = build_ode(problem, cfg.n, cfg.discretization)
    q0 = ode.initial_state(problem.initial_condition)
    pairing = DualityPairing.mass_induced(ode.mass) if cfg.pairing == "mass" else \
        DualityPairing.standard(ode.dim)
    return problem, ode, q0, pairing


# -- experiments: each returns (header, rows, summary, passed) ----------------

def _conservation(cfg):
    _, ode, q0, pairing = _setup(cfg)
    method = get_method(cfg.method)
    n_steps = cfg.n_steps[0]
    rng = np.random.default_rng(cfg.seed)
    fwd = integrate_variational(method, ode, q0, rng.standard_normal(ode.dim), 0.0,
                                cfg.t_final, n_steps)
    bundle = backpropagate(method, ode.rhs, ode.jacobian, fwd, rng.standard_normal(ode.dim),
                           pairing=pairing)
    inv = bundle.invariant_series
    drift = np.abs(inv - inv[-1]) / bundle.info["invariant_scale"]
    tol = 1e-9 if method.implicit else 1e-12
    rows = [[n, bundle.times[n], inv[n], drift[n]] for n in range(len(inv))]
    report = diagrams.DiagramReport(f"conservation[{method.name},{cfg.pairing}]",
                                    float(drift.max()), tol, cfg.seed, drift,
                                    {"dim": ode.dim, "n_steps": n_steps})
    return ["step", "t", "invariant", "drift"], rows, report.to_json(), report.passed


def _dto_vs_otd(cfg):
    problem, ode, q0, pairing = _setup(cfg)
    method = get_method(cfg.method)
    n_steps = cfg.n_steps[0]
    tol = 1e-9 if method.implicit else 1e-11
    full = diagrams.verify_fully_discrete_commutation(method, ode, q0, 0.0, cfg.t_final, n_steps,
                                                      pairing=pairing, seed=cfg.seed,
                                                      tolerance=tol)
    times = np.linspace(0.0, cfg.t_final, n_steps + 1)
    rows = [[n, times[n], full.per_step[n]] for n in range(n_steps + 1)]
    reports = [full]
    if cfg.discretization == "galerkin":
        n_el = cfg.n + 1 if problem.bc == "dirichlet" else cfg.n
        reports.append(diagrams.verify_semidiscrete_commutation(problem, n_el, "mass",
                                                                seed=cfg.seed))
        reports.append(diagrams.verify_semidiscrete_commutation(problem, n_el, "standard",
                                                                seed=cfg.seed))
    summary = {"reports": [r.to_json() for r in reports],
               "passed": all(r.passed for r in reports)}
    return ["step", "t", "residual"], rows, summary, summary["passed"]


def _gradient_check(cfg):
    _, ode, q0, pairing = _setup(cfg)
    method = get_method(cfg.method)
    n_steps = cfg.n_steps[0]
    cost = gradients.half_squared_norm()
    res = gradients.discrete_gradient(method, ode, cost, q0, 0.0, cfg.t_final, n_steps,
                                      pairing=pairing, seed=cfg.seed)
    fd = gradients.fd_gradient_oracle(method, ode, cost, q0, 0.0, cfg.t_final, n_steps, 1e-6)
    rng = np.random.default_rng(cfg.seed)
    dir_errs = []
    for _ in range(10):
        d = rng.standard_normal(ode.dim)
        d /= np.linalg.norm(d)
        fd_d = gradients.fd_directional_derivative(method, ode, cost, q0, 0.0, cfg.t_final,
                                                   n_steps, d, 1e-6)
        dir_errs.append(abs(res.gradient @ d - fd_d) / np.linalg.norm(res.gradient))
    rel = float(np.max(np.abs(res.gradient - fd)) / np.max(np.abs(res.gradient)))
    passed = max(dir_errs) <= 1e-5 and res.invariant_drift <= (1e-9 if method.implicit else 1e-12)
    rows = [[i, res.gradient[i], fd[i], abs(res.gradient[i] - fd[i])] for i in range(ode.dim)]
    summary = res.to_json()
    summary.update({"fd_max_relative_error": rel, "directional_errors": dir_errs,
                    "tolerance": 1e-5, "seed": cfg.seed, "passed": passed})
    return ["component", "adjoint", "fd", "abs_error"], rows, summary, passed


def _order_study(cfg):
    _, ode, q0, _ = _setup(cfg)
    method = get_method(cfg.method)
    study = gradients.adjoint_order_study(method, ode, gradients.half_squared_norm(), q0, 0.0,
                                          cfg.t_final, cfg.n_steps)
    passed = abs(study.slope - method.order) <= 0.3
    rows = [[h, err] for _, h, err in study.table]
    summary = study.to_json()
    summary.update({"method": method.name, "expected_order": method.order, "tolerance": 0.3,
                    "passed": passed})
    return ["h", "error"], rows, summary, passed


def _adaptive(cfg):
    ode = ODE(lambda t, y: -y, lambda t, y: -np.eye(1), 1)
    y0, dy0 = np.array([1.0]), np.array([1.0])
    h0s = [0.1, 0.05, 0.025]
    rows, results = [], {}
    for label, ctrl in (("state_ratio", adaptive.state_ratio_controller(y0)),
                        ("constant", None)):
        results[label] = []
        for h0 in h0s:
            c = ctrl if ctrl is not None else adaptive.constant_controller(h0)
            r, _ = variational_equivariance_residual(AdaptiveEuler(c), ode, y0, dy0, 0.0, 1.0, h0)
            rows.append([label, h0, r])
            results[label].append(r)
    sd = results["state_ratio"]
    checks = {"state_dependent_exceeds_1e-3": bool(sd[0] > 1e-3 * np.linalg.norm(dy0)),
              "state_dependent_not_shrinking": bool(sd[-1] >= 0.5 * sd[0]),
              "constant_below_1e-13": bool(max(results["constant"]) <= 1e-13)}
    summary = {"name": "adaptive_counterexample", "h0": h0s, "residuals": results,
               "checks": checks, "passed": all(checks.values())}
    return ["controller", "h0", "residual"], rows, summary, summary["passed"]


def _precondition(cfg):
    _, ode, q0, _ = _setup(cfg)
    method = get_method(cfg.method)
    n_steps = cfg.n_steps[0]
    rng = np.random.default_rng(cfg.seed)
    well = np.eye(ode.dim) + 0.3 * rng.standard_normal((ode.dim, ode.dim)) / np.sqrt(ode.dim)
    ill = diagrams.ill_conditioned_matrix(ode.dim, 1e8, cfg.seed)
    times = np.linspace(0.0, cfg.t_final, n_steps + 1)
    rows, reports = [], []
    for label, P in (("well_conditioned", well), ("ill_conditioned", ill)):
        rep = diagrams.verify_precondition_identity(method, ode, P, q0, 0.0, cfg.t_final,
                                                    n_steps, seed=cfg.seed)
        reports.append(rep)
        rows += [[label, n, times[n], rep.per_step[n]] for n in range(n_steps + 1)]
    summary = {"reports": [r.to_json() for r in reports],
               "passed": all(r.passed for r in reports)}
    return ["case", "step", "t", "residual"], rows, summary, summary["passed"]


def _equilibrium(cfg):
    n = cfg.n
    K = diagrams.upwind_operator(n, 1.0)
    rows, reports = [], []
    for label, M in (("nonuniform", diagrams.nonuniform_mass(n, seed=cfg.seed)),
                     ("uniform", np.eye(n) / n)):
        rep = diagrams.equilibrium_report(K, M, get_method(cfg.method), h=cfg.t_final / 100)
        reports.append(rep)
        rows.append([label, "state", rep.max_residual])
        rows += [[label, k, v] for k, v in rep.info["adjoint_residuals"].items()]
    summary = {"reports": [r.to_json() for r in reports],
               "passed": all(r.passed for r in reports)}
    return ["mass", "update", "residual"], rows, summary, summary["passed"]


RUNNERS = {"conservation": _conservation, "dto-vs-otd": _dto_vs_otd,
           "gradient-check": _gradient_check, "order-study": _order_study,
           "adaptive-counterexample": _adaptive, "precondition": _precondition,
           "equilibrium": _equilibrium}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def run(cfg):
    """Run one experiment; returns ``(passed, csv_text, summary)``."""
    header, rows, summary, passed = RUNNERS[cfg.experiment](cfg)
    # out_path is left out so reruns into different directories stay byte-identical
    config = {k: v for k, v in asdict(cfg).items() if k != "out_path"}
    summary = {"experiment": cfg.experiment, "config": config, "result": summary,
               "passed": bool(passed)}
    return bool(passed), render_csv(header, rows), summary


def build_parser():
    parser = argparse.ArgumentParser(prog="adjoint-lab")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--out", help="output directory (default: results)")
    r.add_argument("--problem")
    r.add_argument("--bc")
    r.add_argument("--nu", type=float)
    r.add_argument("--a", type=float)
    r.add_argument("--n", type=int, help="number of unknowns")
    r.add_argument("--discretization")
    r.add_argument("--method")
    r.add_argument("--pairing")
    r.add_argument("--steps", help="step count, or comma-separated list for order-study")
    r.add_argument("--t-final", dest="t_final", type=float)
    r.add_argument("--seed", type=int)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"adjoint-lab: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        passed, text, summary = run(cfg)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"adjoint-lab: {cfg.experiment} failed: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    out = Path(cfg.out_path)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.experiment}.csv").write_text(text)
    (out / f"{cfg.experiment}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{cfg.experiment}: {'PASS' if passed else 'FAIL'} -> {out}/{cfg.experiment}.csv")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
