"""Seeded random networks and properties for reproducible test instances.

Hidden widths stay small enough that every ReLU may be left unstabilized
and the instance still has at most eight binaries, which keeps exhaustive
activation-pattern enumeration cheap in the oracle suites.
"""

from __future__ import annotations

import numpy as np

from .bounds import forward_eval
from .graph import NetworkGraph, build_graph, gemm, relu, LayerSpec


def appendix_network() -> NetworkGraph:
    """The 2-2-1 golden network: y = (x1+x2, x1-x2), w = z1+z2."""
    return build_graph(
        [
            LayerSpec(0, "Input"),
            gemm(1, [[1.0, 1.0], [1.0, -1.0]], [0.0, 0.0], [0]),
            relu(2, 1),
            gemm(3, [[1.0, 1.0]], [0.0], [2]),
        ],
        input_dim=2,
    )


def appendix_box():
    return np.array([-1.0, 0.0]), np.array([1.0, 1.0])


def chain_network(dims, weights=None, biases=None, trailing_relu=False) -> NetworkGraph:
    """Sequential net with the given widths; identity-ish params when omitted.

    ``dims`` is [n0, n1, ..., nL]; ReLUs follow every non-final Gemm, and
    the final one too when ``trailing_relu`` is set.
    """
    specs = [LayerSpec(0, "Input")]
    prev, next_id = 0, 1
    L = len(dims) - 1
    for i in range(1, L + 1):
        W = np.eye(dims[i], dims[i - 1]) if weights is None else weights[i - 1]
        b = np.zeros(dims[i]) if biases is None else biases[i - 1]
        specs.append(gemm(next_id, W, b, [prev]))
        gemm_id = next_id
        next_id += 1
        if i < L or trailing_relu:
            specs.append(relu(next_id, gemm_id))
            prev = next_id
            next_id += 1
    return build_graph(specs, input_dim=dims[0])


def random_network(seed, max_gemm=3, max_width=4, input_dim=None) -> NetworkGraph:
    """Random sequential ReLU network with bounded total binary count."""
    rng = np.random.default_rng(seed)
    n_gemm = int(rng.integers(2, max_gemm + 1))
    dims = [input_dim or int(rng.integers(2, 4))]
    for _ in range(n_gemm - 1):
        dims.append(int(rng.integers(1, max_width + 1)))
    dims.append(int(rng.integers(1, 3)))
    weights = []
    biases = []
    for i in range(1, len(dims)):
        weights.append(rng.uniform(-1.0, 1.0, size=(dims[i], dims[i - 1])))
        biases.append(rng.uniform(-0.5, 0.5, size=dims[i]))
    return chain_network(dims, weights, biases)


def random_box(net, seed, radius=1.0):
    rng = np.random.default_rng(seed + 10_000)
    center = rng.uniform(-0.5, 0.5, size=net.input_dim)
    half = rng.uniform(0.3, radius, size=net.input_dim)
    return center - half, center + half


def random_property_text(net, seed, lo, hi, kind="random") -> str:
    """A property file over the net's output, calibrated by sampling.

    ``kind`` picks the intended answer: 'holds' places the threshold
    outside the sampled output range, 'violated' strictly inside, 'random'
    near its edge so either answer is possible.
    """
    rng = np.random.default_rng(seed + 20_000)
    coeffs = rng.uniform(-1.0, 1.0, size=net.output_dim)
    xs = rng.uniform(lo, hi, size=(512, net.input_dim))
    vals = forward_eval(net, xs).output @ coeffs
    span = max(vals.max() - vals.min(), 1e-3)
    if kind == "holds":
        thresh = vals.min() - 0.5 * span - 0.1
    elif kind == "violated":
        thresh = float(np.quantile(vals, 0.5))
    else:
        thresh = vals.min() + float(rng.uniform(-0.1, 0.3)) * span

    lines = []
    for i in range(net.input_dim):
        lines.append(f"(declare-const X_{i} Real)")
    for j in range(net.output_dim):
        lines.append(f"(declare-const Y_{j} Real)")
    for i in range(net.input_dim):
        lines.append(f"(assert (>= X_{i} {float(lo[i])!r}))")
        lines.append(f"(assert (<= X_{i} {float(hi[i])!r}))")
    terms = " ".join(f"(* {float(coeffs[j])!r} Y_{j})" for j in range(net.output_dim))
    expr = f"(+ {terms})" if net.output_dim > 1 else terms
    lines.append(f"(assert (<= {expr} {float(thresh)!r}))")
    return "\n".join(lines) + "\n"
