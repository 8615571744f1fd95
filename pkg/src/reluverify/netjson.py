"""Network serialization: a small documented JSON format.

Schema (format_version 1):

    {
      "format_version": 1,
      "input_dim": <int>,
      "layers": [
        {"id": 0, "kind": "Input", "inputs": []},
        {"id": 1, "kind": "Gemm", "weights": [[...], ...], "bias": [...],
         "inputs": [0]},
        {"id": 2, "kind": "ReLU", "inputs": [1]},
        ...
      ]
    }

Weights are row-major (one list per output neuron).  The Input pseudo-layer
must appear explicitly with id 0.  Emission is canonical: fixed key order,
two-space indent, so parse -> emit -> parse is a byte-level fixpoint.
"""

from __future__ import annotations

import json

from .errors import ParseError, SchemaError
from .graph import KIND_GEMM, KIND_INPUT, KIND_RELU, LayerSpec, NetworkGraph, build_graph

FORMAT_VERSION = 1

_TOP_REQUIRED = {"format_version", "input_dim", "layers"}
_LAYER_REQUIRED = {"id", "kind", "inputs"}
_GEMM_FIELDS = {"weights", "bias"}


def parse_network_json(text) -> NetworkGraph:
    """Parse and validate a network document; returns a built graph."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc

    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    missing = _TOP_REQUIRED - doc.keys()
    if missing:
        raise SchemaError(f"missing top-level field {sorted(missing)[0]!r}")
    extra = doc.keys() - _TOP_REQUIRED
    if extra:
        raise SchemaError(f"unexpected top-level field {sorted(extra)[0]!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {doc['format_version']!r}")
    if not isinstance(doc["input_dim"], int) or isinstance(doc["input_dim"], bool):
        raise SchemaError("input_dim must be an integer")
    if not isinstance(doc["layers"], list) or not doc["layers"]:
        raise SchemaError("layers must be a non-empty list")

    specs = []
    for k, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict):
            raise SchemaError(f"layers[{k}] must be an object")
        missing = _LAYER_REQUIRED - entry.keys()
        if missing:
            raise SchemaError(f"layers[{k}] missing field {sorted(missing)[0]!r}")
        kind = entry["kind"]
        allowed = _LAYER_REQUIRED | (_GEMM_FIELDS if kind == KIND_GEMM else set())
        extra = entry.keys() - allowed
        if extra:
            raise SchemaError(f"layers[{k}] has unexpected field {sorted(extra)[0]!r}")
        if kind == KIND_GEMM:
            missing = _GEMM_FIELDS - entry.keys()
            if missing:
                raise SchemaError(f"layers[{k}] missing field {sorted(missing)[0]!r}")
            specs.append(
                LayerSpec(
                    entry["id"], KIND_GEMM, entry["weights"], entry["bias"],
                    tuple(entry["inputs"]),
                )
            )
        elif kind in (KIND_INPUT, KIND_RELU):
            specs.append(LayerSpec(entry["id"], kind, inputs=tuple(entry["inputs"])))
        else:
            raise SchemaError(f"layers[{k}] has unknown kind {kind!r}")
    return build_graph(specs, doc["input_dim"])


def emit_network_json(net: NetworkGraph) -> bytes:
    """Canonical serialization; round-trips through parse_network_json."""
    layers = []
    for ly in net.layers:
        entry = {"id": ly.id, "kind": ly.kind}
        if ly.kind == KIND_GEMM:
            entry["weights"] = [[float(v) for v in row] for row in ly.weights]
            entry["bias"] = [float(v) for v in ly.bias]
        entry["inputs"] = list(ly.inputs)
        layers.append(entry)
    doc = {"format_version": FORMAT_VERSION, "input_dim": net.input_dim, "layers": layers}
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
