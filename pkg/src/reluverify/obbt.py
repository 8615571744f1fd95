"""Rolling-horizon optimization-based bound tightening.

Walks the network front to back in windows of at most H Gemm layers, and
for every still-unstabilized neuron at a window's target layer solves two
sub-MIPs (maximize and minimize its pre-activation) against a frozen
snapshot of the bound store.  Results merge by intersection only after a
whole window completes, so neurons of one layer are tightened independently
and the outcome does not depend on the worker count.
"""

from __future__ import annotations

import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import BoundStore, ibp_forward
from .graph import NetworkGraph, WindowSubGraph, bfs_window
from .milp import (
    EARLY_STOP_THRESHOLD_AT_ZERO,
    BnBControls,
    BnBStatus,
    branch_and_bound,
    encode_window,
)

# Horizon lengths used per network depth in the reference experiments;
# recorded for convenience, never applied automatically.
HORIZON_PRESETS = {3: 2, 5: 3, 7: 5}


@dataclass(frozen=True)
class HorizonSequence:
    """Ordered (s, t) window pairs, each spanning at most H Gemm layers."""

    pairs: tuple[tuple[int, int], ...]
    H: int


@dataclass
class ObbtConfig:
    H: int = 2
    per_instance_time_limit_s: float = 30.0
    early_stop: bool = True
    workers: int = 1
    tighten_output: bool = False
    gap_tol: float = 1e-6

    def __post_init__(self):
        if self.H < 1:
            raise ValueError(f"horizon length must be >= 1, got {self.H}")
        if self.per_instance_time_limit_s <= 0:
            raise ValueError("per-instance time limit must be positive")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")


@dataclass
class ObbtSummary:
    windows: int = 0
    subproblems: int = 0
    skipped_stabilized: int = 0
    early_stops: int = 0
    timeouts: int = 0
    wall_time: float = 0.0


@dataclass
class NeuronTightening:
    new_bound: float
    status: BnBStatus
    nodes: int
    time: float


def horizon_sequence(net: NetworkGraph, H: int) -> HorizonSequence:
    """Window pairs (max(0, t-H), t) for every layer feeding a ReLU.

    The first Gemm layer is excluded: plain interval propagation is already
    exact there, so no sub-MIP is worth building.  Single-hidden-layer
    networks therefore yield an empty sequence.
    """
    if H < 1:
        raise ValueError(f"horizon length must be >= 1, got {H}")
    pairs = tuple(
        (max(0, t - H), t)
        for t in range(2, net.num_gemm + 1)
        if net.feeds_relu(t)
    )
    return HorizonSequence(pairs=pairs, H=H)


def obbt_neuron(
    net: NetworkGraph,
    window: WindowSubGraph,
    snapshot: BoundStore,
    k: int,
    sense: str,
    controls: BnBControls | None = None,
) -> NeuronTightening:
    """One tightening sub-MIP: max or min of neuron k's pre-activation.

    Returns the search's dual bound, which is a valid bound on the true
    extremum whatever the termination status, ready to be intersected with
    the stored interval.
    """
    width = snapshot.pre[window.t][0].shape[0]
    objective = np.zeros(width)
    objective[k] = 1.0
    mip = encode_window(net, window, snapshot, objective)
    res = branch_and_bound(mip, sense, controls or BnBControls())
    return NeuronTightening(
        new_bound=res.dual_bound,
        status=res.status,
        nodes=res.nodes_explored,
        time=res.wall_time,
    )


def tighten_bounds(
    net: NetworkGraph, input_lo, input_hi, config: ObbtConfig | None = None
) -> tuple[BoundStore, ObbtSummary]:
    """Full rolling-horizon pass; returns the tightened store and a summary.

    The store starts from an interval-propagation sweep, then windows are
    processed strictly in sequence: all sub-MIPs of one window read the same
    snapshot, and their results are merged before the next window starts.
    """
    config = config or ObbtConfig()
    summary = ObbtSummary()
    t_start = _time.monotonic()

    store = ibp_forward(net, input_lo, input_hi)
    targets = [t for t in range(2, net.num_gemm + 1) if net.feeds_relu(t)]
    # the first layer is never a target: interval arithmetic is already
    # exact there, so no sub-MIP can improve it
    if config.tighten_output and net.num_gemm not in targets and net.num_gemm >= 2:
        targets.append(net.num_gemm)

    controls = BnBControls(
        early_stop=EARLY_STOP_THRESHOLD_AT_ZERO if config.early_stop else None,
        time_limit_s=config.per_instance_time_limit_s,
        gap_tol=config.gap_tol,
    )

    for t in targets:
        window = bfs_window(net, t, config.H)
        snapshot = store.copy()
        lo, hi = snapshot.pre[t]
        jobs = []
        for k in range(lo.shape[0]):
            if not (lo[k] < 0.0 < hi[k]) and net.feeds_relu(t):
                summary.skipped_stabilized += 1
                continue
            jobs.append((k, "max"))
            jobs.append((k, "min"))

        def run_job(job):
            k, sense = job
            return job, obbt_neuron(net, window, snapshot, k, sense, controls)

        if config.workers == 1 or len(jobs) <= 1:
            results = [run_job(j) for j in jobs]
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(run_job, jobs))

        summary.windows += 1
        summary.subproblems += len(jobs)
        relu_here = net.feeds_relu(t)
        for (k, sense), outcome in sorted(results, key=lambda r: (r[0][0], r[0][1])):
            if outcome.status == BnBStatus.EARLY_STOPPED:
                summary.early_stops += 1
            elif outcome.status == BnBStatus.TIME_LIMIT:
                summary.timeouts += 1
            if not np.isfinite(outcome.new_bound):
                continue
            if sense == "max":
                store.tighten_pre_neuron(t, k, hi=outcome.new_bound, relu=relu_here)
            else:
                store.tighten_pre_neuron(t, k, lo=outcome.new_bound, relu=relu_here)

    summary.wall_time = _time.monotonic() - t_start
    return store, summary


def obbt_rh(net: NetworkGraph, input_lo, input_hi, config: ObbtConfig | None = None) -> BoundStore:
    """Rolling-horizon tightening; the summary-free entry point."""
    store, _ = tighten_bounds(net, input_lo, input_hi, config)
    return store
