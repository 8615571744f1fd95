"""Big-M MILP encoding of ReLU windows and a best-first branch-and-bound.

Each unstabilized ReLU contributes exactly the four link constraints

    x >= 0,  x >= y,  x <= y - l(1 - z),  x <= u z,  z in {0, 1}

with the neuron's own stored interval (l, u) as big-M constants; stabilized
neurons are substituted before any binary exists.  The search explores LP
relaxations best-bound-first, which keeps the global dual bound monotone,
so zero-threshold early termination and cutoff pruning are sound at any
point in the search.
"""

from __future__ import annotations

import heapq
import time as _time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bounds import BoundStore, eval_window
from .errors import UnboundedVariable
from .graph import NetworkGraph, WindowSubGraph
from .simplex import (
    LinearProgram,
    LpStatus,
    feasibility_violation,
    solve_lp,
)

INF = float("inf")

EARLY_STOP_THRESHOLD_AT_ZERO = "threshold_at_zero"


@dataclass(frozen=True)
class ReluBlock:
    """Big-M link group for one unstabilized neuron."""

    ordinal: int
    neuron: int
    y_var: int
    x_var: int
    z_var: int
    lo: float
    hi: float


@dataclass
class MilpProblem:
    """A window MIP: continuous LP part plus ReLU link blocks."""

    lp: LinearProgram
    blocks: list[ReluBlock]
    binaries: list[int]
    objective_coeffs: dict[int, float]
    objective_constant: float
    window: WindowSubGraph
    net: NetworkGraph
    entry_vars: dict[int, list[int]]
    y_vars: dict[int, list[int]]
    x_vars: dict[int, list[int]]


def encode_window(
    net: NetworkGraph,
    window: WindowSubGraph,
    store: BoundStore,
    objective: np.ndarray | dict[int, float],
    objective_constant: float = 0.0,
) -> MilpProblem:
    """Encode a window against a bound-store snapshot.

    ``objective`` gives coefficients over the target layer's pre-activation
    vector y^(t).  Every variable gets its stored interval as box bounds;
    an infinite stored bound is rejected (the big-M constants would be
    undefined).
    """
    lp = LinearProgram()
    entry_vars: dict[int, list[int]] = {}
    y_vars: dict[int, list[int]] = {}
    x_vars: dict[int, list[int]] = {}
    blocks: list[ReluBlock] = []

    for e in window.entries:
        lo, hi = store.post_box(e)
        _require_finite(lo, hi, f"x{e}")
        entry_vars[e] = [
            lp.add_variable(f"x{e}_{k}", lo[k], hi[k]) for k in range(lo.shape[0])
        ]

    def feed_indices(ordinal):
        idxs = []
        for e in net.gemm_sources(ordinal):
            idxs.extend(entry_vars[e] if e in entry_vars else x_vars[e])
        return idxs

    for i in window.gemm_ordinals:
        ly = net.gemm_layer(i)
        pre_lo, pre_hi = store.pre[i]
        _require_finite(pre_lo, pre_hi, f"y{i}")
        y_vars[i] = [
            lp.add_variable(f"y{i}_{k}", pre_lo[k], pre_hi[k])
            for k in range(pre_lo.shape[0])
        ]
        feed = feed_indices(i)
        for k in range(ly.weights.shape[0]):
            row = {y_vars[i][k]: 1.0}
            for j, col in enumerate(feed):
                w = ly.weights[k, j]
                if w != 0.0:
                    row[col] = row.get(col, 0.0) - w
            lp.add_constraint(row, "==", float(ly.bias[k]))

        if i == window.t or not net.feeds_relu(i):
            continue
        post_lo, post_hi = store.post[i]
        _require_finite(post_lo, post_hi, f"x{i}")
        x_vars[i] = []
        for k in range(pre_lo.shape[0]):
            l, u = float(pre_lo[k]), float(pre_hi[k])
            if u <= 0.0:  # inactive: x substituted by 0
                x_vars[i].append(lp.add_variable(f"x{i}_{k}", 0.0, 0.0))
                continue
            xk = lp.add_variable(
                f"x{i}_{k}", max(0.0, float(post_lo[k])), float(post_hi[k])
            )
            x_vars[i].append(xk)
            yk = y_vars[i][k]
            if l >= 0.0:  # active: x substituted by y
                lp.add_constraint({xk: 1.0, yk: -1.0}, "==", 0.0)
                continue
            zk = lp.add_variable(f"z{i}_{k}", 0.0, 1.0)
            lp.add_constraint({yk: 1.0, xk: -1.0}, "<=", 0.0)  # x >= y
            lp.add_constraint({xk: 1.0, yk: -1.0, zk: -l}, "<=", -l)  # x <= y - l(1-z)
            lp.add_constraint({xk: 1.0, zk: -u}, "<=", 0.0)  # x <= u z
            blocks.append(ReluBlock(i, k, yk, xk, zk, l, u))

    if isinstance(objective, dict):
        obj = {y_vars[window.t][k]: float(v) for k, v in objective.items() if v != 0.0}
    else:
        objective = np.asarray(objective, dtype=np.float64)
        obj = {
            y_vars[window.t][k]: float(v)
            for k, v in enumerate(objective)
            if v != 0.0
        }
    lp.set_objective("min", obj, float(objective_constant))
    return MilpProblem(
        lp=lp,
        blocks=blocks,
        binaries=[b.z_var for b in blocks],
        objective_coeffs=obj,
        objective_constant=float(objective_constant),
        window=window,
        net=net,
        entry_vars=entry_vars,
        y_vars=y_vars,
        x_vars=x_vars,
    )


def _require_finite(lo, hi, label):
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        k = int(np.argmax(~(np.isfinite(lo) & np.isfinite(hi))))
        raise UnboundedVariable(f"{label}_{k} has an infinite stored bound")


def lp_relax(mip: MilpProblem, sense="min") -> LinearProgram:
    """The window LP with every binary relaxed to [0, 1]."""
    lp = mip.lp.copy()
    lp.set_objective(sense, mip.objective_coeffs, mip.objective_constant)
    return lp


class BnBStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    CUTOFF_PRUNED = "cutoff_pruned"
    EARLY_STOPPED = "early_stopped"
    TIME_LIMIT = "time_limit"


@dataclass
class BnBControls:
    cutoff: float | None = None
    early_stop: str | None = None
    time_limit_s: float | None = None
    node_limit: int | None = None
    gap_tol: float = 1e-6
    integrality_tol: float = 1e-6
    max_lp_iterations: int = 50_000
    trace: object = None  # callable(str) for per-node logging


@dataclass
class BnBResult:
    status: BnBStatus
    incumbent_value: float | None
    incumbent_point: dict[int, np.ndarray] | None
    dual_bound: float
    nodes_explored: int
    wall_time: float


def rounding_incumbent(mip: MilpProblem, primal):
    """Feasible point from a relaxation primal, or None.

    Clamps the entry components into their boxes, propagates them through
    the window layers, and assigns each binary from the resulting
    activation sign.  The point is checked against all stored box rows:
    interior boxes tightened beyond plain propagation can put a propagated
    point outside the feasible set, in which case no incumbent is derived.
    """
    lp = mip.lp
    entry_vals = {}
    for e, idxs in mip.entry_vars.items():
        v = np.array([primal[j] for j in idxs])
        lo = np.array([lp.lo[j] for j in idxs])
        hi = np.array([lp.hi[j] for j in idxs])
        entry_vals[e] = np.clip(v, lo, hi)
    values = eval_window(mip.net, mip.window, entry_vals)

    full = np.zeros(lp.num_variables)
    for e, idxs in mip.entry_vars.items():
        full[idxs] = entry_vals[e]
    for i, idxs in mip.y_vars.items():
        full[idxs] = values.pre[i]
    for i, idxs in mip.x_vars.items():
        full[idxs] = np.maximum(values.pre[i], 0.0)
    for blk in mip.blocks:
        full[blk.z_var] = 1.0 if values.pre[blk.ordinal][blk.neuron] > 0.0 else 0.0

    if feasibility_violation(lp, full) > 1e-7:
        return None
    value = sum(v * full[j] for j, v in mip.objective_coeffs.items())
    value += mip.objective_constant
    return value, entry_vals


def branch_and_bound(
    mip: MilpProblem, sense: str, controls: BnBControls | None = None
) -> BnBResult:
    """Best-first search over LP relaxations.

    The returned dual bound is valid whatever the termination reason: it
    never exceeds the true minimum (is never below the true maximum) of
    the MIP.  A node-limit stop is reported as TIME_LIMIT.
    """
    controls = controls or BnBControls()
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    flip = -1.0 if sense == "max" else 1.0
    res = _branch_and_bound_min(mip, flip, controls)
    if flip < 0:
        res.dual_bound = -res.dual_bound
        if res.incumbent_value is not None:
            res.incumbent_value = -res.incumbent_value
    return res


def _branch_and_bound_min(mip, flip, controls: BnBControls) -> BnBResult:
    t0 = _time.monotonic()
    base = mip.lp.copy()
    obj = {j: flip * v for j, v in mip.objective_coeffs.items()}
    const = flip * mip.objective_constant
    base.set_objective("min", obj, const)
    cutoff = None if controls.cutoff is None else flip * controls.cutoff
    early = controls.early_stop == EARLY_STOP_THRESHOLD_AT_ZERO
    trace = controls.trace

    nbin = len(mip.binaries)
    incumbent_value = None
    incumbent_point = None
    floor = INF  # min over closed-subtree lower bounds
    cutoff_hit = False
    nodes_explored = 0
    next_id = 1

    # heap entries: (bound, node_id, fixings, depth)
    heap = [(-INF, 0, {}, 0)]

    def result(status, dual):
        return BnBResult(
            status=status,
            incumbent_value=incumbent_value,
            incumbent_point=incumbent_point,
            dual_bound=dual,
            nodes_explored=nodes_explored,
            wall_time=_time.monotonic() - t0,
        )

    def solve_node(fixings):
        lp = base.copy()
        for j, b in fixings.items():
            lp.lo[j] = float(b)
            lp.hi[j] = float(b)
        return solve_lp(lp, max_iterations=controls.max_lp_iterations)

    def try_incumbent(primal):
        # rounding_incumbent scores the original objective; map to min space
        nonlocal incumbent_value, incumbent_point
        cand = rounding_incumbent(mip, primal)
        if cand is None:
            return
        value = flip * cand[0]
        if incumbent_value is None or value < incumbent_value:
            incumbent_value = value
            incumbent_point = cand[1]

    while heap:
        if controls.time_limit_s is not None and _time.monotonic() - t0 > controls.time_limit_s:
            return result(BnBStatus.TIME_LIMIT, min(floor, heap[0][0]))
        if controls.node_limit is not None and nodes_explored >= controls.node_limit:
            return result(BnBStatus.TIME_LIMIT, min(floor, heap[0][0]))

        bound, nid, fixings, depth = heapq.heappop(heap)
        dual = min(floor, bound)
        if early and dual >= 0.0:
            return result(BnBStatus.EARLY_STOPPED, dual)
        if incumbent_value is not None and incumbent_value - dual <= controls.gap_tol:
            return result(BnBStatus.OPTIMAL, dual)
        if incumbent_value is not None and bound >= incumbent_value:
            floor = min(floor, bound)
            continue

        lp_res = solve_node(fixings)
        nodes_explored += 1
        if lp_res.status == LpStatus.INFEASIBLE:
            if trace:
                trace(f"node {nid} depth {depth} infeasible")
            continue
        if lp_res.status != LpStatus.OPTIMAL:
            # Unresolved relaxation: keep the parent bound as the subtree's
            # contribution; the node cannot be fathomed.
            floor = min(floor, bound if bound > -INF else -INF)
            if floor == -INF:
                return result(BnBStatus.TIME_LIMIT, -INF)
            continue
        node_bound = lp_res.objective_value
        if trace:
            trace(
                f"node {nid} depth {depth} bound {flip * node_bound:.17g}"
                f" parent_bound {flip * bound:.17g}"
            )

        dual = min(floor, node_bound, heap[0][0] if heap else INF)
        if early and dual >= 0.0:
            return result(BnBStatus.EARLY_STOPPED, dual)

        if cutoff is not None and node_bound > cutoff:
            cutoff_hit = True
            floor = min(floor, node_bound)
            continue

        try_incumbent(lp_res.primal)

        zvals = np.array([lp_res.primal[j] for j in mip.binaries]) if nbin else np.zeros(0)
        frac = np.abs(zvals - np.round(zvals))
        if nbin == 0 or frac.max() <= controls.integrality_tol:
            # relaxation optimum is integral: subtree solved exactly.  The
            # rounding heuristic normally captured this point already with
            # an exactly-propagated value; fall back to the LP primal when
            # it genuinely improves on the recorded incumbent.
            floor = min(floor, node_bound)
            if incumbent_value is None or node_bound < incumbent_value - 1e-9:
                incumbent_value = node_bound
                incumbent_point = {
                    e: np.array([lp_res.primal[j] for j in idxs])
                    for e, idxs in mip.entry_vars.items()
                }
            continue

        if incumbent_value is not None and node_bound >= incumbent_value:
            floor = min(floor, node_bound)
            continue

        # branch: most fractional z, ties by widest block, then lowest index
        dist = np.abs(zvals - 0.5)
        width = np.array([b.hi - b.lo for b in mip.blocks])
        order = sorted(
            (k for k in range(nbin) if frac[k] > controls.integrality_tol),
            key=lambda k: (dist[k], -width[k], k),
        )
        zj = mip.binaries[order[0]]
        for b in (0, 1):
            child = dict(fixings)
            child[zj] = b
            heapq.heappush(heap, (node_bound, next_id, child, depth + 1))
            next_id += 1

    dual = floor
    if early and 0.0 <= dual < INF:
        return result(BnBStatus.EARLY_STOPPED, dual)
    if incumbent_value is not None:
        if cutoff is not None and cutoff_hit and incumbent_value >= cutoff:
            return result(BnBStatus.CUTOFF_PRUNED, dual)
        return result(BnBStatus.OPTIMAL, dual)
    if cutoff_hit:
        return result(BnBStatus.CUTOFF_PRUNED, dual)
    return result(BnBStatus.INFEASIBLE, dual)
