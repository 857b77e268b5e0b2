"""Command-line interface: run scenarios, check measures, minimize actions."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .action_lp import GridSpec, build_lp, solve_min_action
from .closed_velocity import estimate_second_derivative
from .dynamics import (LAGRANGIAN_TAGS, invariance_residual, make_lagrangian)
from .errors import HolovarError
from .fields import SecondDerivativeField
from .measures import AtomicMeasure, closedness_residual
from .probes import make_basis
from .scenarios import SCENARIOS, ScenarioCheck, ScenarioReport
from .variations import (graph_support_check, horizontal_criticality_residual,
                         theta1_residual, theta2_residual)


def _parse_params(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"--param expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_lagrangian(args):
    params = json.loads(args.lagrangian_params) if args.lagrangian_params else {}
    return make_lagrangian(args.lagrangian, **params)


def cmd_run(args) -> int:
    if args.scenario not in SCENARIOS:
        raise SystemExit(f"unknown scenario {args.scenario!r}; available: {sorted(SCENARIOS)}")
    report = SCENARIOS[args.scenario](**_parse_params(args.param))
    print(report.summary())
    if args.out:
        report.save(args.out)
    if args.csv:
        report.save_csv(args.csv)
    return 0 if report.passed else 1


def cmd_check(args) -> int:
    mu = AtomicMeasure.load(args.measure)
    dom = mu.domain
    name = args.what
    tol = args.tol
    if name == "closedness":
        rep = closedness_residual(mu, make_basis(dom, "base", args.degree, True), tolerance=tol)
        value = rep.residual
    elif name == "invariance":
        rep = invariance_residual(mu, _load_lagrangian(args),
                                  make_basis(dom, "full", args.degree, True), tolerance=tol)
        value = rep.residual
    elif name == "theta1":
        value = theta1_residual(mu, _load_lagrangian(args),
                                make_basis(dom, "base", args.degree, False))
    elif name == "theta2":
        value = theta2_residual(mu, _load_lagrangian(args))
    elif name == "graph":
        ok, offender = graph_support_check(mu, tol)
        value = 0.0 if ok else max(tol * 2, offender["spread"])
    elif name == "criticality":
        L = _load_lagrangian(args)
        basis = make_basis(dom, "full", args.degree, True)
        C = estimate_second_derivative(mu, basis)
        rep = horizontal_criticality_residual(mu, L, C, basis, tolerance=tol)
        value = rep.residual
    else:
        raise SystemExit(f"unknown check {name!r}")
    passed = value <= tol
    check = ScenarioCheck(name, value, tol, "<=", "derived")
    report = ScenarioReport(f"check-{name}", {"measure": args.measure, "degree": args.degree},
                            [check])
    print(report.summary())
    if args.out:
        report.save(args.out)
    if args.csv:
        report.save_csv(args.csv)
    return 0 if passed else 1


def cmd_minimize(args) -> int:
    from .domain import Domain

    L = _load_lagrangian(args)
    n = L.n
    nx, nv, nt = (int(v) for v in args.grid.split(","))
    vlo, vhi = (float(v) for v in args.v_box.split(","))
    if args.domain:
        dom = Domain.from_dict(json.loads(args.domain))
    else:
        dom = Domain(n=n, t0=1.0, periodic=(True,) * n)
    grid = GridSpec(dom, (nx,) * n, (nv,) * n, nt, ((vlo, vhi),) * n)
    basis = make_basis(dom, "base", args.degree, True)
    res = solve_min_action(build_lp(grid, L, basis))
    print(f"optimal value: {res.value:.12e} (basis degree {res.basis_degree}, "
          f"duality gap {res.duality_gap:.3e}, {res.measure.natoms} atoms kept)")
    if args.out:
        res.measure.save(args.out)
        print(f"minimizer written to {args.out}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump({
                "value": res.value,
                "duality_gap": res.duality_gap,
                "basis_degree": res.basis_degree,
                "dual_probe_values": res.dual_probe_values.tolist(),
                "dual_mass_value": res.dual_mass_value,
            }, fh, indent=2)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="holovar",
        description="Variational calculus on closed measures: scenario reproductions, "
                    "measure checks, and occupation-measure action minimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a packaged scenario")
    p_run.add_argument("scenario", help=f"one of {sorted(SCENARIOS)}")
    p_run.add_argument("--param", action="append", help="scenario parameter key=value")
    p_run.add_argument("--out", help="write the JSON report here")
    p_run.add_argument("--csv", help="write a flattened CSV of the checks here")
    p_run.set_defaults(func=cmd_run)

    p_chk = sub.add_parser("check", help="run one check on a saved measure")
    p_chk.add_argument("what", choices=["closedness", "invariance", "theta1",
                                        "theta2", "graph", "criticality"])
    p_chk.add_argument("--measure", required=True, help="measure JSON file")
    p_chk.add_argument("--lagrangian", default="free", help=f"one of {LAGRANGIAN_TAGS}")
    p_chk.add_argument("--lagrangian-params", help="JSON dict of Lagrangian parameters")
    p_chk.add_argument("--degree", type=int, default=3)
    p_chk.add_argument("--tol", type=float, default=1e-6)
    p_chk.add_argument("--out", help="write the JSON report here")
    p_chk.add_argument("--csv", help="write a flattened CSV of the checks here")
    p_chk.set_defaults(func=cmd_check)

    p_min = sub.add_parser("minimize", help="minimize the action over grid measures")
    p_min.add_argument("--lagrangian", required=True)
    p_min.add_argument("--lagrangian-params", help="JSON dict of Lagrangian parameters")
    p_min.add_argument("--grid", required=True, help="nx,nv,nt cell counts")
    p_min.add_argument("--v-box", default="-2,2", help="velocity box lo,hi")
    p_min.add_argument("--degree", type=int, default=2)
    p_min.add_argument("--domain", help="JSON domain override")
    p_min.add_argument("--out", help="write the minimizing measure here")
    p_min.add_argument("--report", help="write value/duals here")
    p_min.set_defaults(func=cmd_minimize)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HolovarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
