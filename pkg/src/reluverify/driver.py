"""Assembles and solves the final verification MIP; computes metrics.

For each violation clause the full network is encoded against the stored
bounds.  A single-atom clause minimizes its slack objective, optionally
pruning nodes whose relaxation bound is already positive (cutoff at zero);
a conjunction clause becomes a feasibility search with every atom as a
constraint row.  A counterexample only counts when the exact forward pass
re-verifies it with the certification margin.
"""

from __future__ import annotations

import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bounds import BoundStore, forward_eval
from .errors import DimensionMismatch, InfeasibleBounds
from .graph import NetworkGraph, extract_window
from .milp import BnBControls, BnBStatus, branch_and_bound, encode_window, lp_relax
from .simplex import LpStatus, add_rows, solve_lp
from .vnnlib import CERT_MARGIN, Clause, PropertySpec


class Outcome(Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    UNKNOWN = "unknown"


@dataclass
class ClauseCertificate:
    status: str
    dual_bound: float | None
    time: float


@dataclass
class Verdict:
    outcome: Outcome
    counterexample: np.ndarray | None
    certificate: list[ClauseCertificate]
    total_time: float
    vacuous: bool = False


@dataclass
class MetricsReport:
    """Bound-quality numbers: per-layer state counts and range averages.

    ``range_all`` averages the pre-activation interval width over every
    neuron; ``range_unstabilized`` restricts the average to neurons whose
    sign is still open (None when there are none).  The population of the
    published range metric is ambiguous, so both variants are reported.
    """

    layer_counts: dict[int, dict[str, int]]
    range_all: float
    range_unstabilized: float | None
    lp_bounds: list[float | None] = field(default_factory=list)
    tighten_time: float | None = None
    method: str | None = None

    def totals(self):
        out = {"inactive": 0, "active": 0, "stabilized": 0, "unstabilized": 0}
        for counts in self.layer_counts.values():
            for key in out:
                out[key] += counts[key]
        return out


def _check_compatible(net: NetworkGraph, prop: PropertySpec, bounds: BoundStore):
    if prop.num_inputs != net.input_dim:
        raise DimensionMismatch(
            f"property has {prop.num_inputs} inputs, network expects {net.input_dim}"
        )
    if prop.num_outputs != net.output_dim:
        raise DimensionMismatch(
            f"property has {prop.num_outputs} outputs, network produces {net.output_dim}"
        )
    for i in range(1, net.num_gemm + 1):
        if i not in bounds.pre:
            raise ValueError(f"bound store lacks pre-activation bounds for layer {i}")


def verify(
    net: NetworkGraph,
    prop: PropertySpec,
    bounds: BoundStore,
    cutoff_zero: bool = True,
    time_limit_s: float | None = None,
    workers: int = 1,
) -> Verdict:
    """Decide the property against precomputed bounds.

    Violated requires a counterexample whose exact forward pass satisfies
    some violation clause with margin >= CERT_MARGIN; Holds requires every
    clause refuted by a nonnegative dual bound or infeasibility.  Anything
    weaker (time limits, boundary-grazing optima) degrades to Unknown with
    the best dual bound attached.
    """
    t0 = _time.monotonic()
    _check_compatible(net, prop, bounds)
    certificates: list[ClauseCertificate] = []
    counterexample = None
    any_unknown = False

    window = extract_window(net, 0, net.num_gemm)

    def decide(clause):
        t_clause = _time.monotonic()
        refuted, cex, dual, status = _decide_clause(
            net, window, bounds, clause, cutoff_zero, time_limit_s
        )
        return refuted, cex, ClauseCertificate(
            status=status, dual_bound=dual, time=_time.monotonic() - t_clause
        )

    try:
        if workers > 1 and len(prop.clauses) > 1:
            # clauses are independent MIPs; merge in clause order after all
            # launched searches settle, so the outcome matches a serial run
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(decide, prop.clauses))
        else:
            outcomes = [decide(c) for c in prop.clauses]
        for refuted, cex, cert in outcomes:
            certificates.append(cert)
            if cex is not None:
                counterexample = cex
                break  # any violated disjunct falsifies the property
            if not refuted:
                any_unknown = True
    except InfeasibleBounds:
        certificates.append(ClauseCertificate("vacuous", None, 0.0))
        return Verdict(
            Outcome.HOLDS, None, certificates, _time.monotonic() - t0, vacuous=True
        )

    total = _time.monotonic() - t0
    if counterexample is not None:
        return Verdict(Outcome.VIOLATED, counterexample, certificates, total)
    if any_unknown:
        return Verdict(Outcome.UNKNOWN, None, certificates, total)
    return Verdict(Outcome.HOLDS, None, certificates, total)


def _decide_clause(net, window, bounds, clause: Clause, cutoff_zero, time_limit_s):
    """Returns (refuted, counterexample, dual_bound, status_label)."""
    controls = BnBControls(
        cutoff=0.0 if (cutoff_zero and clause.is_single_atom) else None,
        time_limit_s=time_limit_s,
    )
    if clause.is_single_atom:
        atom = clause.atoms[0]
        mip = encode_window(
            net, window, bounds, np.asarray(atom.coeffs), -atom.rhs
        )
        res = branch_and_bound(mip, "min", controls)
    else:
        # Feasibility form: every atom as a constraint row with a constant
        # objective.  Rows are shifted by twice the certification margin so
        # that a point found by the search still clears the margin after an
        # exact forward-pass re-check (the LP sits on the shifted boundary).
        mip = encode_window(net, window, bounds, np.zeros(net.output_dim))
        rows = []
        for atom in clause.atoms:
            coeffs = {
                mip.y_vars[net.num_gemm][k]: c
                for k, c in enumerate(atom.coeffs)
                if c != 0.0
            }
            rows.append((coeffs, "<=", atom.rhs - 2.0 * CERT_MARGIN))
        mip.lp = add_rows(mip.lp, rows)
        res = branch_and_bound(mip, "min", controls)

    dual = res.dual_bound if np.isfinite(res.dual_bound) else None

    if res.incumbent_point is not None:
        x0 = res.incumbent_point[0]
        y = forward_eval(net, x0).output
        if clause.satisfied(y, margin=CERT_MARGIN):
            return False, x0, dual, res.status.value

    if clause.is_single_atom:
        # the dual bound is valid at every termination status
        refuted = res.status == BnBStatus.INFEASIBLE or (
            dual is not None and dual >= 0.0
        )
        return refuted, None, dual, res.status.value
    return res.status == BnBStatus.INFEASIBLE, None, dual, res.status.value


def verify_with_tightening(net, prop, make_bounds, cutoff_zero=True, time_limit_s=None):
    """Run a bound-tightening callback, then verify.

    An empty constrained region raised anywhere in the pipeline certifies
    the property vacuously.
    """
    t0 = _time.monotonic()
    try:
        bounds = make_bounds()
        verdict = verify(net, prop, bounds, cutoff_zero=cutoff_zero, time_limit_s=time_limit_s)
        return verdict, bounds
    except InfeasibleBounds:
        verdict = Verdict(
            outcome=Outcome.HOLDS,
            counterexample=None,
            certificate=[ClauseCertificate("vacuous", None, 0.0)],
            total_time=_time.monotonic() - t0,
            vacuous=True,
        )
        return verdict, None


def lp_bound_of_final_mip(net: NetworkGraph, clause: Clause, bounds: BoundStore) -> float:
    """Relaxation bound of the full verification MIP for one atom clause."""
    if not clause.is_single_atom:
        raise ValueError("LP bound metric is defined for single-atom clauses only")
    atom = clause.atoms[0]
    window = extract_window(net, 0, net.num_gemm)
    mip = encode_window(net, window, bounds, np.asarray(atom.coeffs), -atom.rhs)
    res = solve_lp(lp_relax(mip, "min"))
    if res.status != LpStatus.OPTIMAL:
        raise ArithmeticError(f"relaxation of the final MIP came back {res.status}")
    return res.objective_value


def compute_metrics(
    bounds: BoundStore,
    tighten_time: float | None = None,
    method: str | None = None,
    lp_bounds: list[float | None] | None = None,
) -> MetricsReport:
    """State counts and bounds-range averages over the pre-activation store."""
    layer_counts = {i: bounds.state_counts(i) for i in sorted(bounds.pre)}
    widths_all = []
    widths_unstab = []
    for i in sorted(bounds.pre):
        lo, hi = bounds.pre[i]
        w = hi - lo
        widths_all.append(w)
        mask = (lo < 0.0) & (hi > 0.0)
        if mask.any():
            widths_unstab.append(w[mask])
    all_cat = np.concatenate(widths_all) if widths_all else np.zeros(0)
    unstab_cat = np.concatenate(widths_unstab) if widths_unstab else np.zeros(0)
    return MetricsReport(
        layer_counts=layer_counts,
        range_all=float(all_cat.mean()) if all_cat.size else 0.0,
        range_unstabilized=float(unstab_cat.mean()) if unstab_cat.size else None,
        lp_bounds=lp_bounds or [],
        tighten_time=tighten_time,
        method=method,
    )
