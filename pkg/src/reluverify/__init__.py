"""MIP-based verification of feed-forward ReLU networks.

Computes tight pre-activation bounds by optimization-based tightening over
rolling-horizon windows, then solves the verification MIP built from those
bounds and reports a verdict with bound-quality metrics.
"""

from .bounds import (
    BoundStore,
    LayerValues,
    NeuronState,
    classify,
    forward_eval,
    gemm_interval,
    ibp_forward,
)
from .graph import (
    LayerSpec,
    NetworkGraph,
    WindowSubGraph,
    bfs_window,
    build_graph,
    extract_window,
    gemm,
    relu,
)
from .milp import (
    EARLY_STOP_THRESHOLD_AT_ZERO,
    BnBControls,
    BnBResult,
    BnBStatus,
    MilpProblem,
    branch_and_bound,
    encode_window,
    lp_relax,
    rounding_incumbent,
)
from .netjson import emit_network_json, parse_network_json
from .obbt import (
    HorizonSequence,
    ObbtConfig,
    ObbtSummary,
    horizon_sequence,
    obbt_neuron,
    obbt_rh,
    tighten_bounds,
)
from .simplex import (
    LinearProgram,
    LpResult,
    LpStatus,
    Tolerances,
    add_rows,
    fix_variable,
    solve_lp,
)
from .vnnlib import Atom, Clause, PropertySpec, parse_vnnlib
from .driver import (
    MetricsReport,
    Outcome,
    Verdict,
    compute_metrics,
    lp_bound_of_final_mip,
    verify,
    verify_with_tightening,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "BnBControls",
    "BnBResult",
    "BnBStatus",
    "BoundStore",
    "Clause",
    "EARLY_STOP_THRESHOLD_AT_ZERO",
    "HorizonSequence",
    "LayerSpec",
    "LayerValues",
    "LinearProgram",
    "LpResult",
    "LpStatus",
    "MetricsReport",
    "MilpProblem",
    "NetworkGraph",
    "NeuronState",
    "ObbtConfig",
    "ObbtSummary",
    "Outcome",
    "PropertySpec",
    "Tolerances",
    "Verdict",
    "WindowSubGraph",
    "add_rows",
    "bfs_window",
    "branch_and_bound",
    "build_graph",
    "classify",
    "compute_metrics",
    "emit_network_json",
    "encode_window",
    "extract_window",
    "fix_variable",
    "forward_eval",
    "gemm",
    "gemm_interval",
    "horizon_sequence",
    "ibp_forward",
    "lp_bound_of_final_mip",
    "lp_relax",
    "obbt_neuron",
    "obbt_rh",
    "parse_network_json",
    "parse_vnnlib",
    "relu",
    "rounding_incumbent",
    "solve_lp",
    "tighten_bounds",
    "verify",
    "verify_with_tightening",
]
