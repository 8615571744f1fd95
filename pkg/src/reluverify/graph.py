"""Feed-forward ReLU network as a typed layer DAG, plus sub-graph windows.

Layers are affine maps (``Gemm``) and ``ReLU`` activations hanging off a
single ``Input`` pseudo-layer with id 0.  Gemm layers are numbered by
ordinal 1..L in topological order; the ReLU following Gemm i is addressed
implicitly through that ordinal.  Skip connections are declared explicitly
through the ``inputs`` list of a consuming Gemm (it reads the post-activation
output of an earlier ReLU).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleDetected,
    DanglingReference,
    DimensionMismatch,
    GraphError,
    InvalidWindow,
)

INPUT_ID = 0

KIND_INPUT = "Input"
KIND_GEMM = "Gemm"
KIND_RELU = "ReLU"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network as declared by the caller or a model file.

    ``weights`` is a dense (n_out, n_in) matrix and ``bias`` a length-n_out
    vector; both are present only for Gemm layers.  ``inputs`` lists the
    predecessor layer ids whose outputs are concatenated, in order, to form
    this layer's input.
    """

    id: int
    kind: str
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    inputs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.bias is not None:
            object.__setattr__(self, "bias", np.asarray(self.bias, dtype=np.float64))
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))


def gemm(layer_id, weights, bias, inputs):
    """Shorthand constructor for a Gemm LayerSpec."""
    return LayerSpec(layer_id, KIND_GEMM, weights, bias, tuple(inputs))


def relu(layer_id, source_id):
    """Shorthand constructor for a ReLU LayerSpec."""
    return LayerSpec(layer_id, KIND_RELU, inputs=(source_id,))


class NetworkGraph:
    """Validated, immutable network: layers in topological order.

    Built through :func:`build_graph`; direct construction skips validation.
    """

    def __init__(self, layers, input_dim):
        self.layers: tuple[LayerSpec, ...] = tuple(layers)
        self.input_dim: int = int(input_dim)
        self.by_id: dict[int, LayerSpec] = {ly.id: ly for ly in self.layers}

        # Gemm ordinals 1..L in topological order.
        self.gemm_ids: tuple[int, ...] = tuple(
            ly.id for ly in self.layers if ly.kind == KIND_GEMM
        )
        self.ordinal_of: dict[int, int] = {
            lid: i + 1 for i, lid in enumerate(self.gemm_ids)
        }
        self.num_gemm: int = len(self.gemm_ids)
        self.output_layer: int = self.gemm_ids[-1] if self.gemm_ids else INPUT_ID

        # relu_of[i] = id of the ReLU consuming Gemm i's output, or None.
        self.relu_of: dict[int, int | None] = {i: None for i in range(1, self.num_gemm + 1)}
        for ly in self.layers:
            if ly.kind == KIND_RELU:
                src_ord = self.ordinal_of[ly.inputs[0]]
                self.relu_of[src_ord] = ly.id

        # width(i) = n_i; width(0) = input dim.
        self.widths: dict[int, int] = {0: self.input_dim}
        for i, lid in enumerate(self.gemm_ids, start=1):
            self.widths[i] = self.by_id[lid].weights.shape[0]
        self.output_dim: int = self.widths[self.num_gemm] if self.num_gemm else self.input_dim

    # -- convenience accessors -------------------------------------------

    def gemm_layer(self, ordinal):
        return self.by_id[self.gemm_ids[ordinal - 1]]

    def gemm_sources(self, ordinal):
        """Ordinals whose post-activation vectors feed Gemm `ordinal`.

        The input pseudo-layer is ordinal 0; a ReLU predecessor is reported
        as the ordinal of the Gemm it activates.  Order follows the declared
        ``inputs`` list (concatenation order).
        """
        srcs = []
        for pid in self.gemm_layer(ordinal).inputs:
            if pid == INPUT_ID:
                srcs.append(0)
            else:
                srcs.append(self.ordinal_of[self.by_id[pid].inputs[0]])
        return srcs

    def feeds_relu(self, ordinal):
        return self.relu_of.get(ordinal) is not None

    def is_sequential(self):
        """True when every Gemm reads exactly its immediate predecessor."""
        for i in range(1, self.num_gemm + 1):
            if self.gemm_sources(i) != [i - 1]:
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        if self.input_dim != other.input_dim or len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if (a.id, a.kind, a.inputs) != (b.id, b.kind, b.inputs):
                return False
            if (a.weights is None) != (b.weights is None):
                return False
            if a.weights is not None and not (
                np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
            ):
                return False
        return True


@dataclass(frozen=True)
class WindowSubGraph:
    """A contiguous sub-graph on which one tightening sub-problem is built.

    ``entries`` are the ordinals whose post-activation vectors act as free
    box-bounded inputs (0 means the raw network input); every other variable
    referenced inside the window is produced by an included layer.
    """

    s: int
    t: int
    layers: tuple[int, ...]
    entries: tuple[int, ...]
    gemm_ordinals: tuple[int, ...] = field(default=())


def build_graph(layer_specs, input_dim) -> NetworkGraph:
    """Validate layer specs and assemble a NetworkGraph.

    Layers may arrive in any order; a stable topological sort is applied.
    Raises CycleDetected, DimensionMismatch, or DanglingReference on the
    corresponding defects, GraphError on other structural violations.
    """
    if not layer_specs:
        raise GraphError("network has no layers")
    if input_dim <= 0:
        raise GraphError(f"input_dim must be positive, got {input_dim}")

    ids = [ly.id for ly in layer_specs]
    if len(set(ids)) != len(ids):
        dup = sorted(i for i in set(ids) if ids.count(i) > 1)
        raise GraphError(f"duplicate layer ids {dup}")
    by_id = {ly.id: ly for ly in layer_specs}

    if INPUT_ID not in by_id or by_id[INPUT_ID].kind != KIND_INPUT:
        raise GraphError("layer id 0 must be the Input pseudo-layer")
    if by_id[INPUT_ID].inputs:
        raise GraphError("Input layer cannot have predecessors")
    for ly in layer_specs:
        if ly.kind == KIND_INPUT and ly.id != INPUT_ID:
            raise GraphError(f"layer {ly.id}: only id 0 may be an Input layer")
        if ly.kind not in (KIND_INPUT, KIND_GEMM, KIND_RELU):
            raise GraphError(f"layer {ly.id}: unknown kind {ly.kind!r}")
        for pid in ly.inputs:
            if pid not in by_id:
                raise DanglingReference(f"layer {ly.id} references missing layer {pid}")

    # Stable Kahn topological sort; input first, then declaration order.
    order = _toposort(layer_specs, by_id)

    consumers: dict[int, list[int]] = {ly.id: [] for ly in layer_specs}
    for ly in layer_specs:
        for pid in ly.inputs:
            consumers[pid].append(ly.id)

    # Per-layer structural and dimension checks, walking in topo order.
    out_dim = {INPUT_ID: int(input_dim)}
    for ly in order:
        if ly.kind == KIND_INPUT:
            continue
        if ly.kind == KIND_RELU:
            if ly.weights is not None or ly.bias is not None:
                raise GraphError(f"ReLU layer {ly.id} carries parameters")
            if len(ly.inputs) != 1 or by_id[ly.inputs[0]].kind != KIND_GEMM:
                raise GraphError(
                    f"ReLU layer {ly.id} must have exactly one Gemm predecessor"
                )
            out_dim[ly.id] = out_dim[ly.inputs[0]]
            continue
        # Gemm
        if ly.weights is None or ly.bias is None:
            raise GraphError(f"Gemm layer {ly.id} is missing weights or bias")
        if ly.weights.ndim != 2 or ly.bias.ndim != 1:
            raise DimensionMismatch(
                f"Gemm layer {ly.id}: weights must be a matrix and bias a vector"
            )
        n_out, n_in = ly.weights.shape
        if ly.bias.shape[0] != n_out:
            raise DimensionMismatch(
                f"Gemm layer {ly.id}: {n_out} weight rows but {ly.bias.shape[0]} bias entries"
            )
        if not ly.inputs:
            raise GraphError(f"Gemm layer {ly.id} has no inputs")
        for pid in ly.inputs:
            if by_id[pid].kind == KIND_GEMM:
                raise GraphError(
                    f"Gemm layer {ly.id} consumes Gemm layer {pid} directly;"
                    " insert a ReLU or merge the affine maps"
                )
        feed = sum(out_dim[pid] for pid in ly.inputs)
        if n_in != feed:
            raise DimensionMismatch(
                f"Gemm layer {ly.id}: weights expect {n_in} inputs"
                f" but predecessors provide {feed}"
            )
        out_dim[ly.id] = n_out

    net = NetworkGraph(order, input_dim)
    if net.num_gemm == 0:
        raise GraphError("network has no Gemm layer")

    # Each non-output Gemm must feed exactly one ReLU (fan-out happens at
    # the ReLU, which may feed several Gemms, including skip consumers).
    for i in range(1, net.num_gemm + 1):
        gid = net.gemm_ids[i - 1]
        relu_kids = [c for c in consumers[gid] if by_id[c].kind == KIND_RELU]
        gemm_kids = [c for c in consumers[gid] if by_id[c].kind == KIND_GEMM]
        if gemm_kids:
            raise GraphError(
                f"Gemm layer {gid} feeds Gemm {gemm_kids[0]} directly;"
                " route skip connections through the ReLU output"
            )
        if gid != net.output_layer and len(relu_kids) != 1:
            raise GraphError(
                f"Gemm layer {gid} feeds {len(relu_kids)} ReLU layers; expected exactly 1"
            )
        if len(relu_kids) > 1:
            raise GraphError(f"output Gemm {gid} feeds multiple ReLU layers")
    return net


def _toposort(layer_specs, by_id):
    indeg = {ly.id: len(ly.inputs) for ly in layer_specs}
    kids: dict[int, list[int]] = {ly.id: [] for ly in layer_specs}
    for ly in layer_specs:
        for pid in ly.inputs:
            kids[pid].append(ly.id)
    ready = [ly.id for ly in layer_specs if indeg[ly.id] == 0]
    declared_pos = {ly.id: k for k, ly in enumerate(layer_specs)}
    order = []
    while ready:
        ready.sort(key=declared_pos.__getitem__)
        cur = ready.pop(0)
        order.append(by_id[cur])
        for c in kids[cur]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(order) != len(layer_specs):
        stuck = sorted(i for i, d in indeg.items() if d > 0)
        raise CycleDetected(f"layer dependencies contain a cycle through {stuck}")
    return order


def extract_window(net: NetworkGraph, s: int, t: int) -> WindowSubGraph:
    """Sub-graph spanning Gemm ordinals s+1..t with entry vector x^(s).

    The ReLU after Gemm t is excluded (the window targets the pre-activation
    vector of t).  On DAG networks any source produced before the window
    becomes an additional boxed entry.
    """
    L = net.num_gemm
    if not (0 <= s < t <= L):
        raise InvalidWindow(f"window ({s}, {t}) invalid for a {L}-Gemm network")
    included = set(range(s + 1, t + 1))
    return _assemble_window(net, t, included, s_hint=s)


def bfs_window(net: NetworkGraph, t: int, H: int) -> WindowSubGraph:
    """Backward search from Gemm t keeping at most H Gemm layers per path.

    Walks predecessor links breadth-first from the target layer; a Gemm is
    included when every path from it to t crosses at most H Gemm layers.
    The frontier where the walk stops becomes the boxed entry set.  On
    purely sequential networks this equals extract_window(net, t-H, t)
    clamped at the input.
    """
    L = net.num_gemm
    if not (1 <= t <= L):
        raise InvalidWindow(f"target ordinal {t} outside 1..{L}")
    if H < 1:
        raise InvalidWindow(f"horizon length must be >= 1, got {H}")

    # Longest Gemm-count over paths g -> t, walking ordinals high to low.
    depth: dict[int, int] = {t: 1}
    for g in range(t - 1, 0, -1):
        best = 0
        rid = net.relu_of.get(g)
        if rid is None:
            continue
        for h in range(g + 1, t + 1):
            if h in depth and g in net.gemm_sources(h):
                best = max(best, depth[h])
        if best:
            depth[g] = best + 1
    included = {g for g, d in depth.items() if d <= H}
    return _assemble_window(net, t, included)


def _assemble_window(net, t, included, s_hint=None):
    entries = set()
    for g in sorted(included):
        for e in net.gemm_sources(g):
            if e not in included:
                entries.add(e)
    layer_ids = []
    for g in sorted(included):
        layer_ids.append(net.gemm_ids[g - 1])
        if g != t and net.relu_of.get(g) is not None:
            layer_ids.append(net.relu_of[g])
    s = min(entries) if s_hint is None else s_hint
    return WindowSubGraph(
        s=s,
        t=t,
        layers=tuple(layer_ids),
        entries=tuple(sorted(entries)),
        gemm_ordinals=tuple(sorted(included)),
    )
