"""Command-line entry point: parse -> tighten -> verify -> report.

Exit codes: 0 the property holds, 1 it is violated (a counterexample was
certified), 2 undecided within the limits, 3 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import fixtures
from .bounds import BoundStore, ibp_forward
from .driver import compute_metrics, lp_bound_of_final_mip, verify
from .errors import InfeasibleBounds, ReluVerifyError
from .graph import NetworkGraph, extract_window
from .milp import lp_relax
from .netjson import emit_network_json, parse_network_json
from .obbt import ObbtConfig, tighten_bounds
from .simplex import LpStatus, solve_lp
from .vnnlib import parse_vnnlib

REPORT_VERSION = 1

TIME_LIMIT_ENV = "RELUVERIFY_TIME_LIMIT"
SUBPROBLEM_TIME_LIMIT_ENV = "RELUVERIFY_SUBPROBLEM_TIME_LIMIT"

METHODS = ("ibp", "lp", "obbt-rh")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for Unknown
        return 0 if exc.code in (0, None) else 3
    try:
        return args.func(args)
    except ReluVerifyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="reluverify",
        description="Verify ReLU networks by MIP with tightened layer bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="decide a property end to end")
    _add_model_property(pv)
    _add_method_flags(pv)
    pv.add_argument("--bounds-in", help="import a bound store and skip tightening")
    pv.add_argument("--bounds-out", help="export the bound store used")
    pv.add_argument("--report", help="write the report JSON here (default stdout)")
    pv.add_argument("--time-limit", type=float, default=None,
                    help="wall-clock budget for the final MIP per clause")
    pv.add_argument("--no-cutoff-zero", dest="cutoff_zero", action="store_false",
                    help="disable pruning of nodes with nonnegative relaxation bound")
    pv.set_defaults(func=_cmd_verify, cutoff_zero=True)

    pt = sub.add_parser("tighten", help="run only the bound-tightening stage")
    _add_model_property(pt)
    _add_method_flags(pt)
    pt.add_argument("--out", required=True, help="bound-store JSON destination")
    pt.set_defaults(func=_cmd_tighten)

    pr = sub.add_parser("report", help="metrics for an existing bound store")
    pr.add_argument("--model", required=True)
    pr.add_argument("--bounds-in", required=True)
    pr.add_argument("--property", help="adds per-clause LP relaxation bounds")
    pr.add_argument("--out", help="report JSON destination (default stdout)")
    pr.set_defaults(func=_cmd_report)

    pf = sub.add_parser("fixture", help="generate a seeded random instance")
    pf.add_argument("--seed", type=int, required=True)
    pf.add_argument("--gemm-layers", type=int, default=3)
    pf.add_argument("--max-width", type=int, default=4)
    pf.add_argument("--kind", choices=("holds", "violated", "random"), default="random")
    pf.add_argument("--model-out", required=True)
    pf.add_argument("--property-out", required=True)
    pf.set_defaults(func=_cmd_fixture)
    return parser


def _add_model_property(p):
    p.add_argument("--model", required=True, help="network JSON path")
    p.add_argument("--property", required=True, help="property file path")


def _add_method_flags(p):
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="tightening and per-clause diagnostics on stderr")
    p.add_argument("--method", choices=METHODS, default="obbt-rh")
    p.add_argument("--horizon", type=int, default=None,
                   help="window length in Gemm layers (obbt-rh only)")
    p.add_argument("--per-instance-time-limit", type=float, default=None,
                   help="seconds per tightening sub-MIP (obbt-rh only)")
    p.add_argument("--no-early-stop", dest="early_stop", action="store_false",
                   help="disable sign-proof early termination (obbt-rh only)")
    p.add_argument("--tighten-output", action="store_true",
                   help="also tighten the output layer (lp / obbt-rh)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(early_stop=True)


def _reject_foreign_flags(args):
    if args.method != "obbt-rh":
        if args.horizon is not None:
            raise ReluVerifyError(f"--horizon applies to obbt-rh only, not {args.method}")
        if args.per_instance_time_limit is not None:
            raise ReluVerifyError(
                f"--per-instance-time-limit applies to obbt-rh only, not {args.method}"
            )
        if not args.early_stop:
            raise ReluVerifyError(f"--no-early-stop applies to obbt-rh only, not {args.method}")
    if args.method == "ibp" and args.tighten_output:
        raise ReluVerifyError("--tighten-output applies to lp and obbt-rh only")


def _load_model(path) -> NetworkGraph:
    if not os.path.exists(path):
        raise ReluVerifyError(f"model file not found: {path}")
    with open(path, "rb") as fh:
        return parse_network_json(fh.read())


def _load_property(path):
    if not os.path.exists(path):
        raise ReluVerifyError(f"property file not found: {path}")
    with open(path, "rb") as fh:
        return parse_vnnlib(fh.read())


def _compute_bounds(net, prop, args):
    """Run the selected tightening method; returns (store, seconds, label)."""
    t0 = time.monotonic()
    lo, hi = prop.input_lo, prop.input_hi
    if args.method == "ibp":
        store = ibp_forward(net, lo, hi)
    elif args.method == "lp":
        store = _lp_bounds(net, lo, hi, tighten_output=args.tighten_output)
    else:
        per_mip = args.per_instance_time_limit
        if per_mip is None:
            per_mip = float(os.environ.get(SUBPROBLEM_TIME_LIMIT_ENV, 30.0))
        config = ObbtConfig(
            H=args.horizon if args.horizon is not None else 2,
            per_instance_time_limit_s=per_mip,
            early_stop=args.early_stop,
            workers=args.workers,
            tighten_output=args.tighten_output,
        )
        store, summary = tighten_bounds(net, lo, hi, config)
        if args.verbose:
            print(
                f"tightening: {summary.windows} windows,"
                f" {summary.subproblems} sub-MIPs,"
                f" {summary.early_stops} early stops,"
                f" {summary.timeouts} timeouts,"
                f" {summary.skipped_stabilized} skipped,"
                f" {summary.wall_time:.3f}s",
                file=sys.stderr,
            )
    return store, time.monotonic() - t0, args.method


def _lp_bounds(net, lo, hi, tighten_output=False):
    """Per-neuron bounds from the relaxation of the full prefix problem."""
    from .milp import encode_window

    store = ibp_forward(net, lo, hi)
    targets = [t for t in range(2, net.num_gemm + 1) if net.feeds_relu(t)]
    if tighten_output and net.num_gemm not in targets:
        targets.append(net.num_gemm)
    for t in targets:
        window = extract_window(net, 0, t)
        snapshot = store.copy()
        width = snapshot.pre[t][0].shape[0]
        for k in range(width):
            objective = np.zeros(width)
            objective[k] = 1.0
            mip = encode_window(net, window, snapshot, objective)
            for sense in ("max", "min"):
                res = solve_lp(lp_relax(mip, sense))
                if res.status != LpStatus.OPTIMAL:
                    continue
                if sense == "max":
                    store.tighten_pre_neuron(t, k, hi=res.objective_value,
                                             relu=net.feeds_relu(t))
                else:
                    store.tighten_pre_neuron(t, k, lo=res.objective_value,
                                             relu=net.feeds_relu(t))
    return store


def _cmd_verify(args) -> int:
    _reject_foreign_flags(args)
    net = _load_model(args.model)
    prop = _load_property(args.property)

    tighten_time = None
    vacuous = False
    store = None
    try:
        if args.bounds_in:
            if not os.path.exists(args.bounds_in):
                raise ReluVerifyError(f"bounds file not found: {args.bounds_in}")
            with open(args.bounds_in) as fh:
                store = BoundStore.from_json(fh.read())
        else:
            store, tighten_time, _ = _compute_bounds(net, prop, args)
    except InfeasibleBounds:
        vacuous = True

    time_limit = args.time_limit
    if time_limit is None and TIME_LIMIT_ENV in os.environ:
        time_limit = float(os.environ[TIME_LIMIT_ENV])

    if vacuous:
        report = {
            "format_version": REPORT_VERSION,
            "verdict": "holds",
            "vacuous": True,
            "counterexample": None,
            "clauses": [],
            "metrics": None,
            "config": _config_dict(args),
        }
        _write_report(report, args.report)
        return 0

    if args.bounds_out:
        with open(args.bounds_out, "w") as fh:
            fh.write(store.to_json())

    verdict = verify(net, prop, store, cutoff_zero=args.cutoff_zero,
                     time_limit_s=time_limit, workers=args.workers)
    if args.verbose:
        for k, c in enumerate(verdict.certificate):
            print(f"clause {k}: {c.status}, dual {c.dual_bound}, {c.time:.3f}s",
                  file=sys.stderr)
    metrics = compute_metrics(store, tighten_time=tighten_time, method=args.method,
                              lp_bounds=_clause_lp_bounds(net, prop, store))
    report = {
        "format_version": REPORT_VERSION,
        "verdict": verdict.outcome.value,
        "vacuous": verdict.vacuous,
        "counterexample": None
        if verdict.counterexample is None
        else [float(v) for v in verdict.counterexample],
        "clauses": [
            {"status": c.status, "dual_bound": c.dual_bound, "time": c.time}
            for c in verdict.certificate
        ],
        "metrics": _metrics_dict(metrics),
        "config": _config_dict(args),
    }
    _write_report(report, args.report)
    return {"holds": 0, "violated": 1, "unknown": 2}[verdict.outcome.value]


def _cmd_tighten(args) -> int:
    _reject_foreign_flags(args)
    net = _load_model(args.model)
    prop = _load_property(args.property)
    store, _, _ = _compute_bounds(net, prop, args)
    with open(args.out, "w") as fh:
        fh.write(store.to_json())
    return 0


def _cmd_report(args) -> int:
    net = _load_model(args.model)
    if not os.path.exists(args.bounds_in):
        raise ReluVerifyError(f"bounds file not found: {args.bounds_in}")
    with open(args.bounds_in) as fh:
        store = BoundStore.from_json(fh.read())
    lp_bounds = []
    if args.property:
        prop = _load_property(args.property)
        lp_bounds = _clause_lp_bounds(net, prop, store)
    metrics = compute_metrics(store, lp_bounds=lp_bounds)
    report = {
        "format_version": REPORT_VERSION,
        "metrics": _metrics_dict(metrics),
    }
    _write_report(report, args.out)
    return 0


def _cmd_fixture(args) -> int:
    net = fixtures.random_network(args.seed, max_gemm=args.gemm_layers,
                                  max_width=args.max_width)
    lo, hi = fixtures.random_box(net, args.seed)
    text = fixtures.random_property_text(net, args.seed, lo, hi, kind=args.kind)
    with open(args.model_out, "wb") as fh:
        fh.write(emit_network_json(net))
    with open(args.property_out, "w") as fh:
        fh.write(text)
    return 0


def _clause_lp_bounds(net, prop, store):
    out = []
    for clause in prop.clauses:
        out.append(lp_bound_of_final_mip(net, clause, store)
                   if clause.is_single_atom else None)
    return out


def _metrics_dict(metrics):
    return {
        "layer_counts": {str(i): c for i, c in sorted(metrics.layer_counts.items())},
        "totals": metrics.totals(),
        "range_all": metrics.range_all,
        "range_unstabilized": metrics.range_unstabilized,
        "lp_bounds": metrics.lp_bounds,
        "tighten_time": metrics.tighten_time,
        "method": metrics.method,
    }


def _config_dict(args):
    keys = ("method", "horizon", "workers", "cutoff_zero", "time_limit",
            "per_instance_time_limit", "tighten_output")
    return {k: getattr(args, k, None) for k in keys}


def _write_report(report, path):
    text = json.dumps(report, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
