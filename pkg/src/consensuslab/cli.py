"""Command-line front end.

Subcommands: generate, perturb, stationary, scan, hitting, simulate,
verify.  Exit status 0 on success, 1 on computation errors (with a
machine-readable JSON diagnostic on stderr), 2 on usage or file-format
errors (one-line diagnostic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import families, hitting, perturb, simulate, stationary
from .matrix import (SmatFormatError, is_irreducible, read_smat, write_smat)

USAGE_ERROR = 2
COMPUTATION_ERROR = 1

_COMPUTATION_ERRORS = (
    stationary.ReducibleMatrixError,
    stationary.PowerIterationError,
    stationary.ScanError,
    hitting.HittingDiagnosisError,
    simulate.StepCapExceededError,
    ArithmeticError,
)


class UsageError(Exception):
    pass


def _parse_range(text):
    """'a:b' inclusive integer range, or a single integer."""
    if ":" in text:
        a, b = text.split(":", 1)
        lo, hi = int(a), int(b)
        if lo > hi:
            raise UsageError(f"empty size range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def _family_from_args(args):
    if getattr(args, "fam", None):
        return families.read_fam(args.fam)
    kind = args.family
    if kind is None:
        raise UsageError("need --family or --fam")
    params = {}
    if kind in ("grid", "lazy_torus"):
        params["dim"] = args.dim
        params["tau"] = args.tau
    elif kind == "directed_torus":
        params["dim"] = args.dim
    elif kind == "drift_line":
        if args.delta is None:
            raise UsageError("--delta required for drift_line")
        params["delta"] = args.delta
    elif kind == "drift_cycle":
        if args.delta is None:
            raise UsageError("--delta required for drift_cycle")
        params["delta"] = args.delta
        params["perturb_zero"] = args.perturb_zero
    elif kind == "conductance_line":
        if not args.values:
            raise UsageError("--values required for conductance_line")
        params["values"] = tuple(float(v) for v in args.values.split(","))
    return families.family(kind, **params)


def _add_family_flags(p):
    p.add_argument("--family", choices=["grid", "directed_torus", "lazy_torus",
                                        "drift_line", "drift_cycle",
                                        "conductance_line"])
    p.add_argument("--fam", help="FAM v1 family specification file")
    p.add_argument("--dim", type=int, default=1, help="lattice dimension")
    p.add_argument("--tau", type=float, default=0.0, help="self-confidence")
    p.add_argument("--delta", type=float, help="drift probability")
    p.add_argument("--perturb-zero", action="store_true",
                   help="drift_cycle: redirect state 0's outgoing mass upward")
    p.add_argument("--values", help="conductance_line: comma-separated conductances")


def _load_pert(args):
    spec = perturb.read_pert(args.perturb)
    if getattr(args, "lam", None) is not None:
        if spec.kind != "homophily":
            raise UsageError("--lambda only applies to homophily specs")
        spec = perturb.PerturbationSpec.homophily(spec.community, args.lam)
    return spec


def _emit(doc, path):
    text = json.dumps(doc, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_matrix(path):
    if not os.path.exists(path):
        raise UsageError(f"input file not found: {path}")
    return read_smat(path)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args):
    fam = _family_from_args(args)
    sizes = _parse_range(args.n)
    if len(sizes) != 1:
        raise UsageError("generate takes a single --n")
    matrix = fam.matrix(sizes[0])
    write_smat(matrix, args.output)
    return 0


def _cmd_perturb(args):
    matrix = _read_matrix(args.input)
    spec = _load_pert(args)
    out = perturb.apply_perturbation(spec, matrix)
    write_smat(out, args.output)
    flags = {k: out.meta[k] for k in ("irreducible", "strongly_connected")
             if k in out.meta}
    if flags:
        sys.stderr.write(json.dumps(flags) + "\n")
    return 0


def _cmd_stationary(args):
    matrix = _read_matrix(args.input)
    if args.method == "direct":
        pi = stationary.stationary_direct(matrix)
    else:
        pi = stationary.stationary_power(matrix, tol=args.tol,
                                         max_iter=args.max_iter)
    _emit({"n": matrix.n,
           "method": args.method,
           "pi": pi.to_list(),
           "max_weight": pi.max_weight(),
           "residual": stationary.residual_l1(matrix, pi)}, args.output)
    return 0


def _cmd_scan(args):
    fam = _family_from_args(args)
    sizes = _parse_range(args.n)
    spec = _load_pert(args) if args.perturb else None
    tracked = [families.parse_label(t) for t in args.track or []]
    jobs = int(os.environ.get("CONSENSUSLAB_JOBS", os.cpu_count() or 1))
    records = stationary.democracy_scan(fam, sizes, perturbation=spec,
                                        tracked=tracked, solver=args.solver,
                                        jobs=jobs)
    stationary.scan_to_csv(records, tracked, args.output)
    if args.json:
        stationary.scan_to_json(records, tracked, args.json,
                                family_doc=fam.to_dict(),
                                perturbation_doc=spec.to_dict() if spec else None)
    return 0


def _cmd_hitting(args):
    matrix = _read_matrix(args.input)
    if args.return_state is not None:
        value = hitting.expected_return(matrix, args.return_state)
        query = {"kind": "return", "state": args.return_state}
    else:
        if args.target is None or args.start is None:
            raise UsageError("need --target and --start (or --return-state)")
        targets = [int(t) for t in args.target.split(",")]
        value = hitting.expected_hitting(matrix, targets, args.start)
        query = {"kind": "hitting", "targets": targets, "start": args.start}
    _emit({"query": query, "value": value, "method": "sparse_direct"},
          args.output)
    return 0


def _cmd_simulate(args):
    matrix = _read_matrix(args.input)
    seed = args.seed
    if seed is None:
        seed = int.from_bytes(os.urandom(8), "little")
    if args.occupation:
        if args.steps is None:
            raise UsageError("--occupation needs --steps")
        occ = simulate.estimate_stationary_occupation(
            matrix, args.steps, args.burn_in, seed, start=args.state)
        _emit({"kind": "occupation", "frequencies": occ.to_list(),
               "steps": args.steps, "burn_in": args.burn_in, "seed": seed},
              args.output)
    else:
        res = simulate.simulate_return_time(matrix, args.state, args.samples,
                                            seed, step_cap=args.step_cap)
        _emit({"kind": "return_time", "estimate": res.estimate,
               "standard_error": res.standard_error, "samples": res.samples,
               "seed": res.seed, "step_cap_hits": 0}, args.output)
    return 0


# -- verify ----------------------------------------------------------------


def _builtin_corpus():
    out = [("grid_d1", families.lazy_srw_grid(1, 6, 0.0)),
           ("grid_d2_lazy", families.lazy_srw_grid(2, 2, 0.3)),
           ("lazy_torus_d2", families.lazy_torus(2, 2, 0.1)),
           ("directed_torus_d2", families.directed_torus(2, 2)),
           ("drift_line", families.drift_line(12, 0.75)),
           ("drift_cycle_perturbed", families.drift_cycle(12, 0.75, True))]
    cond = families.ConductanceMatrix.from_edges(
        4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 5.0), (3, 0, 1.0)])
    out.append(("conductance_ring", families.from_conductance(cond)))
    return out


def _check_kac(args):
    tol = args.tol
    worst = 0.0
    if args.input:
        matrix = _read_matrix(args.input)
        nodes = "all" if args.nodes in (None, "all") else \
            [int(t) for t in args.nodes.split(",")]
        report = hitting.kac_check(matrix, nodes=nodes, tol=tol)
        worst = report.worst
    else:
        for _, matrix in _builtin_corpus():
            report = hitting.kac_check(matrix, tol=tol)
            worst = max(worst, report.worst)
    status = "pass" if worst <= tol else "fail"
    return {"name": "kac", "status": status, "measured": worst, "threshold": tol}


def _check_reversible(args):
    if args.input:
        return {"name": "reversible", "status": "skip",
                "reason": "needs a conductance table, not a transition matrix"}
    worst = 0.0
    for values in [(1.0,), (1.0, 2.0), (1.0, 2.0, 5.0)]:
        fam = families.family("conductance_line", values=values)
        for n in (4, 9):
            cond = fam._impl.conductance(n)
            pi_closed = stationary.reversible_stationary(cond)
            pi_direct = stationary.stationary_direct(families.from_conductance(cond))
            worst = max(worst, max(abs(a - b) for a, b in
                                   zip(pi_closed.to_list(), pi_direct.to_list())))
    status = "pass" if worst <= 1e-12 else "fail"
    return {"name": "reversible", "status": status, "measured": worst,
            "threshold": 1e-12}


def _check_democracy_bound(args):
    if args.input:
        matrix = _read_matrix(args.input)
        try:
            bound = stationary.degree_bound(matrix)
        except ValueError as exc:
            return {"name": "democracy_bound", "status": "skip",
                    "reason": f"not an SRW matrix: {exc}"}
        if not is_irreducible(matrix):
            return {"name": "democracy_bound", "status": "skip",
                    "reason": "matrix is reducible"}
        gap = stationary.stationary_direct(matrix).max_weight() - bound
        status = "pass" if gap <= 1e-12 else "fail"
        return {"name": "democracy_bound", "status": status, "measured": gap,
                "threshold": 1e-12}
    worst = -1.0
    for matrix in [families.lazy_srw_grid(1, 8), families.lazy_srw_grid(2, 3, 0.2),
                   families.lazy_torus(2, 3, 0.1)]:
        bound = stationary.degree_bound(matrix)
        gap = stationary.stationary_direct(matrix).max_weight() - bound
        worst = max(worst, gap)
    status = "pass" if worst <= 1e-12 else "fail"
    return {"name": "democracy_bound", "status": status, "measured": worst,
            "threshold": 1e-12}


def _check_drift_line_form(args):
    worst = 0.0
    for delta in (0.25, 1.0 / 3.0, 0.6, 0.75):
        for n in (2, 5, 10, 25, 60):
            pi = stationary.stationary_direct(families.drift_line(n, delta))
            closed = families.drift_line_stationary(n, delta)
            worst = max(worst, max(abs(a - b) for a, b in zip(pi.to_list(), closed)))
    status = "pass" if worst <= 1e-12 else "fail"
    return {"name": "drift_line_form", "status": status, "measured": worst,
            "threshold": 1e-12}


def _check_gamblers(args):
    worst = 0.0
    for p10 in range(1, 10):
        p = p10 / 10.0
        for barrier in (2, 5, 10, 20):
            chain = hitting.ruin_chain(barrier, p)
            h = hitting.hitting_times(chain, {0, barrier})
            for k in range(1, barrier):
                closed = hitting.gamblers_ruin_expected(barrier, p, k)
                worst = max(worst, abs(closed - float(h[k])))
    status = "pass" if worst <= 1e-10 else "fail"
    return {"name": "gamblers", "status": status, "measured": worst,
            "threshold": 1e-10}


_VERIFY_CHECKS = {
    "kac": _check_kac,
    "reversible": _check_reversible,
    "democracy_bound": _check_democracy_bound,
    "drift_line_form": _check_drift_line_form,
    "gamblers": _check_gamblers,
}


def _cmd_verify(args):
    names = args.checks or sorted(_VERIFY_CHECKS)
    unknown = [c for c in names if c not in _VERIFY_CHECKS]
    if unknown:
        raise UsageError(f"unknown checks: {unknown}; known: {sorted(_VERIFY_CHECKS)}")
    results = [_VERIFY_CHECKS[name](args) for name in names]
    _emit({"checks": results}, args.output)
    return 0 if all(r["status"] != "fail" for r in results) else 1


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="consensuslab",
        description="Consensus dynamics on growing graph families: generate, "
                    "perturb, solve, scan, verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a family member as SMAT v1")
    _add_family_flags(p)
    p.add_argument("--n", required=True, help="size index")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("perturb", help="apply a PERT v1 spec to a matrix")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--spec", dest="perturb", required=True)
    p.add_argument("--lambda", dest="lam", type=float,
                   help="override the homophily factor")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("stationary", help="solve for the consensus weights")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--method", choices=["direct", "power"], default="direct")
    p.add_argument("--tol", type=float, default=stationary.POWER_TOL)
    p.add_argument("--max-iter", type=int, default=stationary.POWER_MAX_ITER)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_stationary)

    p = sub.add_parser("scan", help="democracy scan across family sizes")
    _add_family_flags(p)
    p.add_argument("--n", required=True, help="size range a:b (inclusive)")
    p.add_argument("--perturb", help="PERT v1 file")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="override the homophily factor")
    p.add_argument("--track", action="append",
                   help="node label to track (repeatable); lattice labels "
                        "as 'x,y'")
    p.add_argument("--solver", choices=["direct", "power"], default="direct")
    p.add_argument("-o", "--output", required=True, help="CSV output path")
    p.add_argument("--json", help="also write a JSON summary")
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("hitting", help="expected hitting / return times")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--target", help="comma-separated target states")
    p.add_argument("--start", type=int)
    p.add_argument("--return-state", type=int,
                   help="expected return time to this state")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_hitting)

    p = sub.add_parser("simulate", help="Monte Carlo return time / occupation")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--state", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--step-cap", type=int, default=simulate.STEP_CAP)
    p.add_argument("--occupation", action="store_true")
    p.add_argument("--steps", type=int)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="run named identity checks")
    p.add_argument("checks", nargs="*",
                   help=f"subset of {sorted(_VERIFY_CHECKS)} (default: all)")
    p.add_argument("-i", "--input", help="SMAT matrix to check where applicable")
    p.add_argument("--nodes", help="'all' or comma-separated states (kac)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except (UsageError, SmatFormatError, FileNotFoundError) as exc:
        sys.stderr.write(f"consensuslab: error: {exc}\n")
        return USAGE_ERROR
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"consensuslab: error: bad JSON input: {exc}\n")
        return USAGE_ERROR
    except _COMPUTATION_ERRORS as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__,
                                     "message": str(exc)}) + "\n")
        return COMPUTATION_ERROR
    except ValueError as exc:
        sys.stderr.write(f"consensuslab: error: {exc}\n")
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
