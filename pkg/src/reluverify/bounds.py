"""Interval bound propagation and the shared bound store.

The store keeps one interval vector per Gemm ordinal for the pre-activation
output and, where a ReLU follows, for the post-activation output.  All
updates are intersections: bounds only ever tighten, and an intersection
that comes up empty raises :class:`InfeasibleBounds` as a certificate that
the constrained input region admits no point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, InfeasibleBounds
from .graph import NetworkGraph


class NeuronState(Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"
    UNSTABILIZED = "unstabilized"


def classify(lo, hi) -> NeuronState:
    """State of a ReLU from its pre-activation interval [lo, hi].

    Boundary ties (lo == 0 or hi == 0) resolve to the stabilized class.
    """
    if hi <= 0.0:
        return NeuronState.INACTIVE
    if lo >= 0.0:
        return NeuronState.ACTIVE
    return NeuronState.UNSTABILIZED


def is_stabilized(lo, hi):
    return hi <= 0.0 or lo >= 0.0


class BoundStore:
    """Per-layer interval vectors [l, u], monotonically tightened.

    ``pre[i]`` and ``post[i]`` map Gemm ordinal i to an (lo, hi) pair of
    float vectors; the input box is held separately as ordinal 0 post
    bounds.  One writer at a time; take :meth:`copy` snapshots to build
    sub-problems in parallel.
    """

    def __init__(self, input_lo, input_hi):
        input_lo = np.asarray(input_lo, dtype=np.float64).copy()
        input_hi = np.asarray(input_hi, dtype=np.float64).copy()
        if input_lo.shape != input_hi.shape or input_lo.ndim != 1:
            raise DimensionMismatch("input box must be two vectors of equal length")
        if np.any(input_lo > input_hi):
            k = int(np.argmax(input_lo > input_hi))
            raise InfeasibleBounds(
                f"input box is empty at component {k}: [{input_lo[k]}, {input_hi[k]}]"
            )
        self.input_lo = input_lo
        self.input_hi = input_hi
        self.pre: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.post: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def input_box(self):
        return self.input_lo, self.input_hi

    def post_box(self, ordinal):
        """Post-activation box of `ordinal`; ordinal 0 is the input box."""
        if ordinal == 0:
            return self.input_lo, self.input_hi
        return self.post[ordinal]

    def set_pre(self, i, lo, hi):
        """Install or intersect the pre-activation bounds of Gemm i."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if i in self.pre:
            lo = np.maximum(self.pre[i][0], lo)
            hi = np.minimum(self.pre[i][1], hi)
        self._check_nonempty(lo, hi, f"pre({i})")
        self.pre[i] = (lo.copy(), hi.copy())

    def set_post(self, i, lo, hi):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if i in self.post:
            lo = np.maximum(self.post[i][0], lo)
            hi = np.minimum(self.post[i][1], hi)
        self._check_nonempty(lo, hi, f"post({i})")
        self.post[i] = (lo.copy(), hi.copy())

    def tighten_pre_neuron(self, i, k, lo=None, hi=None, relu=False):
        """Intersect one neuron's pre-activation interval; keep post in sync."""
        cur_lo, cur_hi = self.pre[i]
        new_lo = cur_lo[k] if lo is None else max(cur_lo[k], lo)
        new_hi = cur_hi[k] if hi is None else min(cur_hi[k], hi)
        if new_lo > new_hi:
            raise InfeasibleBounds(
                f"pre({i})[{k}] intersection is empty: [{new_lo}, {new_hi}]"
            )
        cur_lo[k] = new_lo
        cur_hi[k] = new_hi
        if relu and i in self.post:
            p_lo, p_hi = self.post[i]
            p_lo[k] = max(p_lo[k], max(new_lo, 0.0))
            p_hi[k] = min(p_hi[k], max(new_hi, 0.0))
            if p_lo[k] > p_hi[k]:
                raise InfeasibleBounds(
                    f"post({i})[{k}] intersection is empty: [{p_lo[k]}, {p_hi[k]}]"
                )

    @staticmethod
    def _check_nonempty(lo, hi, label):
        if np.any(lo > hi):
            k = int(np.argmax(lo > hi))
            raise InfeasibleBounds(
                f"{label}[{k}] intersection is empty: [{lo[k]}, {hi[k]}]"
            )

    def copy(self) -> "BoundStore":
        snap = BoundStore(self.input_lo, self.input_hi)
        snap.pre = {i: (lo.copy(), hi.copy()) for i, (lo, hi) in self.pre.items()}
        snap.post = {i: (lo.copy(), hi.copy()) for i, (lo, hi) in self.post.items()}
        return snap

    def equals(self, other) -> bool:
        if set(self.pre) != set(other.pre) or set(self.post) != set(other.post):
            return False
        if not (
            np.array_equal(self.input_lo, other.input_lo)
            and np.array_equal(self.input_hi, other.input_hi)
        ):
            return False
        for i in self.pre:
            if not (
                np.array_equal(self.pre[i][0], other.pre[i][0])
                and np.array_equal(self.pre[i][1], other.pre[i][1])
            ):
                return False
        for i in self.post:
            if not (
                np.array_equal(self.post[i][0], other.post[i][0])
                and np.array_equal(self.post[i][1], other.post[i][1])
            ):
                return False
        return True

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "input": [[lo, hi] for lo, hi in zip(self.input_lo, self.input_hi)],
            "pre": {
                str(i): [[lo, hi] for lo, hi in zip(*self.pre[i])]
                for i in sorted(self.pre)
            },
            "post": {
                str(i): [[lo, hi] for lo, hi in zip(*self.post[i])]
                for i in sorted(self.post)
            },
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text) -> "BoundStore":
        doc = json.loads(text)
        pairs = np.asarray(doc["input"], dtype=np.float64).reshape(-1, 2)
        store = cls(pairs[:, 0], pairs[:, 1])
        for i, rows in doc.get("pre", {}).items():
            arr = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
            store.set_pre(int(i), arr[:, 0], arr[:, 1])
        for i, rows in doc.get("post", {}).items():
            arr = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
            store.set_post(int(i), arr[:, 0], arr[:, 1])
        return store

    # -- derived summaries -------------------------------------------------

    def state_counts(self, i):
        lo, hi = self.pre[i]
        inactive = int(np.sum(hi <= 0.0))
        active = int(np.sum(lo >= 0.0))
        n = lo.shape[0]
        return {
            "inactive": inactive,
            "active": active,
            "stabilized": inactive + active,
            "unstabilized": n - inactive - active,
        }

def gemm_interval(W, b, in_lo, in_hi):
    """Exact interval image of an affine map over a box.

    Splits W into positive and negative parts so each output bound is
    attained at a vertex of the input box.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    in_lo = np.asarray(in_lo, dtype=np.float64)
    in_hi = np.asarray(in_hi, dtype=np.float64)
    if W.shape[1] != in_lo.shape[0] or in_lo.shape != in_hi.shape:
        raise DimensionMismatch(
            f"affine map expects {W.shape[1]} inputs, box has {in_lo.shape[0]}"
        )
    w_pos = np.maximum(W, 0.0)
    w_neg = np.minimum(W, 0.0)
    lo = w_pos @ in_lo + w_neg @ in_hi + b
    hi = w_pos @ in_hi + w_neg @ in_lo + b
    return lo, hi


def ibp_forward(net: NetworkGraph, input_lo, input_hi, inflate=0.0) -> BoundStore:
    """Propagate the input box through every layer in topological order.

    Arithmetic rounds to nearest; ``inflate`` widens every computed
    pre-activation interval by that absolute amount as a cheap safety
    margin (no outward rounding is performed).
    """
    store = BoundStore(input_lo, input_hi)
    if store.input_lo.shape[0] != net.input_dim:
        raise DimensionMismatch(
            f"input box has {store.input_lo.shape[0]} components,"
            f" network expects {net.input_dim}"
        )
    for i in range(1, net.num_gemm + 1):
        ly = net.gemm_layer(i)
        in_lo, in_hi = _concat_boxes(store, net.gemm_sources(i))
        lo, hi = gemm_interval(ly.weights, ly.bias, in_lo, in_hi)
        store.set_pre(i, lo - inflate, hi + inflate)
        if net.feeds_relu(i):
            store.set_post(i, np.maximum(lo - inflate, 0.0), np.maximum(hi + inflate, 0.0))
    return store


def _concat_boxes(store, ordinals):
    los, his = [], []
    for e in ordinals:
        lo, hi = store.post_box(e)
        los.append(lo)
        his.append(hi)
    return np.concatenate(los), np.concatenate(his)


@dataclass
class LayerValues:
    """Exact forward-pass values: pre/post vectors keyed by Gemm ordinal.

    Arrays may carry a leading batch dimension when the input did.
    """

    pre: dict[int, np.ndarray]
    post: dict[int, np.ndarray]
    output: np.ndarray


def forward_eval(net: NetworkGraph, x0) -> LayerValues:
    """Exact forward pass; accepts a single input (n0,) or a batch (N, n0)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[-1] != net.input_dim:
        raise DimensionMismatch(
            f"input has {x0.shape[-1]} components, network expects {net.input_dim}"
        )
    values = {0: x0}
    pre: dict[int, np.ndarray] = {}
    post: dict[int, np.ndarray] = {}
    for i in range(1, net.num_gemm + 1):
        ly = net.gemm_layer(i)
        feed = np.concatenate([values[e] for e in net.gemm_sources(i)], axis=-1)
        y = feed @ ly.weights.T + ly.bias
        pre[i] = y
        if net.feeds_relu(i):
            post[i] = np.maximum(y, 0.0)
            values[i] = post[i]
    return LayerValues(pre=pre, post=post, output=pre[net.num_gemm])


def eval_window(net: NetworkGraph, window, entry_values: dict[int, np.ndarray]):
    """Forward pass restricted to a window, starting from entry vectors.

    ``entry_values`` maps each entry ordinal to its post-activation vector
    (ordinal 0 means the raw input).  Returns pre/post values for every
    included Gemm; the target's ReLU is not applied.
    """
    values = dict(entry_values)
    pre: dict[int, np.ndarray] = {}
    post: dict[int, np.ndarray] = {}
    for i in window.gemm_ordinals:
        ly = net.gemm_layer(i)
        feed = np.concatenate(
            [np.asarray(values[e], dtype=np.float64) for e in net.gemm_sources(i)],
            axis=-1,
        )
        y = feed @ ly.weights.T + ly.bias
        pre[i] = y
        if i != window.t and net.feeds_relu(i):
            post[i] = np.maximum(y, 0.0)
            values[i] = post[i]
    return LayerValues(pre=pre, post=post, output=pre[window.t])
