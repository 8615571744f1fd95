"""Network JSON round-trips and the property-format subset."""

import numpy as np
import pytest

from reluverify.errors import (
    DimensionMismatch,
    MixedVariableAtom,
    NonlinearTerm,
    ParseError,
    SchemaError,
    UnboundedInputBox,
)
from reluverify.fixtures import appendix_network, random_network
from reluverify.netjson import emit_network_json, parse_network_json
from reluverify.vnnlib import parse_vnnlib

APPENDIX_JSON = """
{
  "format_version": 1,
  "input_dim": 2,
  "layers": [
    {"id": 0, "kind": "Input", "inputs": []},
    {"id": 1, "kind": "Gemm", "weights": [[1, 1], [1, -1]], "bias": [0, 0], "inputs": [0]},
    {"id": 2, "kind": "ReLU", "inputs": [1]},
    {"id": 3, "kind": "Gemm", "weights": [[1, 1]], "bias": [0], "inputs": [2]}
  ]
}
"""

BOX_PROPERTY = """
; appendix region with a one-sided output condition
(declare-const X_0 Real)
(declare-const X_1 Real)
(declare-const Y_0 Real)
(assert (>= X_0 -1))
(assert (<= X_0 1))
(assert (>= X_1 0))
(assert (<= X_1 1))
(assert (<= Y_0 0))
"""


class TestNetworkJson:
    def test_parse_appendix(self):
        net = parse_network_json(APPENDIX_JSON)
        assert net.num_gemm == 2
        assert net.widths[1] == 2
        assert net == appendix_network()

    def test_round_trip(self):
        net = appendix_network()
        again = parse_network_json(emit_network_json(net))
        assert again == net

    def test_emit_fixpoint_is_byte_identical(self):
        first = emit_network_json(parse_network_json(APPENDIX_JSON))
        second = emit_network_json(parse_network_json(first))
        assert first == second

    def test_random_networks_round_trip(self):
        for seed in range(10):
            net = random_network(seed)
            assert parse_network_json(emit_network_json(net)) == net

    def test_syntax_error_carries_offset(self):
        with pytest.raises(ParseError) as exc:
            parse_network_json(b'{"format_version": 1,,}')
        assert exc.value.offset is not None

    def test_empty_layer_list(self):
        with pytest.raises(SchemaError):
            parse_network_json('{"format_version": 1, "input_dim": 2, "layers": []}')

    def test_missing_field_named(self):
        with pytest.raises(SchemaError, match="bias"):
            parse_network_json(
                '{"format_version": 1, "input_dim": 1, "layers": ['
                '{"id": 0, "kind": "Input", "inputs": []},'
                '{"id": 1, "kind": "Gemm", "weights": [[1]], "inputs": [0]}]}'
            )

    def test_extra_field_named(self):
        with pytest.raises(SchemaError, match="color"):
            parse_network_json(
                '{"format_version": 1, "input_dim": 1, "layers": ['
                '{"id": 0, "kind": "Input", "inputs": [], "color": "red"}]}'
            )

    def test_dimension_mismatch_propagates(self):
        doc = (
            '{"format_version": 1, "input_dim": 2, "layers": ['
            '{"id": 0, "kind": "Input", "inputs": []},'
            '{"id": 1, "kind": "Gemm", "weights": [[1, 0], [0, 1]], '
            '"bias": [0, 0, 0], "inputs": [0]}]}'
        )
        with pytest.raises(DimensionMismatch):
            parse_network_json(doc)


class TestVnnlibBasics:
    def test_box_and_single_clause(self):
        prop = parse_vnnlib(BOX_PROPERTY)
        assert np.allclose(prop.input_lo, [-1.0, 0.0])
        assert np.allclose(prop.input_hi, [1.0, 1.0])
        assert len(prop.clauses) == 1
        atom = prop.clauses[0].atoms[0]
        assert atom.coeffs == (1.0,)
        assert atom.rhs == 0.0
        # f(y) = y0: negative iff the violation condition y0 <= 0 is strict
        assert atom.slack([-0.5]) == -0.5
        assert atom.slack([2.0]) == 2.0

    def test_x_bounds_intersect(self):
        text = (
            "(declare-const X_0 Real)(declare-const Y_0 Real)"
            "(assert (>= X_0 -5))(assert (>= X_0 -1))"
            "(assert (<= X_0 3))(assert (<= X_0 2))"
            "(assert (<= Y_0 0))"
        )
        prop = parse_vnnlib(text)
        assert prop.input_lo[0] == -1.0 and prop.input_hi[0] == 2.0

    def test_contradictory_x_bounds_pass_through(self):
        # an empty box is the driver's vacuous-holds path, not a parse error
        text = (
            "(declare-const X_0 Real)(declare-const Y_0 Real)"
            "(assert (>= X_0 1))(assert (<= X_0 0))(assert (<= Y_0 0))"
        )
        prop = parse_vnnlib(text)
        assert prop.input_lo[0] > prop.input_hi[0]

    def test_missing_property(self):
        with pytest.raises(SchemaError):
            parse_vnnlib(
                "(declare-const X_0 Real)(assert (>= X_0 0))(assert (<= X_0 1))"
            )

    def test_unbounded_box(self):
        with pytest.raises(UnboundedInputBox):
            parse_vnnlib(
                "(declare-const X_0 Real)(declare-const Y_0 Real)"
                "(assert (>= X_0 0))(assert (<= Y_0 0))"
            )

    def test_nonlinear_term(self):
        with pytest.raises(NonlinearTerm):
            parse_vnnlib(
                "(declare-const X_0 Real)(declare-const Y_0 Real)"
                "(assert (<= (* X_0 X_0) 1))(assert (<= Y_0 0))"
            )

    def test_mixed_atom(self):
        with pytest.raises(MixedVariableAtom):
            parse_vnnlib(
                "(declare-const X_0 Real)(declare-const Y_0 Real)"
                "(assert (>= X_0 0))(assert (<= X_0 1))"
                "(assert (<= (+ X_0 Y_0) 0))"
            )

    def test_scaled_and_negated_terms(self):
        text = (
            "(declare-const X_0 Real)(declare-const Y_0 Real)(declare-const Y_1 Real)"
            "(assert (>= X_0 0))(assert (<= X_0 1))"
            "(assert (<= (+ (* 2 Y_0) (- Y_1)) 3))"
        )
        prop = parse_vnnlib(text)
        atom = prop.clauses[0].atoms[0]
        assert atom.coeffs == (2.0, -1.0)
        assert atom.rhs == 3.0

    def test_syntax_error_offset(self):
        with pytest.raises(ParseError):
            parse_vnnlib("(declare-const X_0 Real")


class TestDisjunctions:
    def test_two_single_atom_clauses(self):
        text = (
            "(declare-const X_0 Real)"
            "(declare-const Y_0 Real)(declare-const Y_1 Real)(declare-const Y_2 Real)"
            "(assert (>= X_0 0))(assert (<= X_0 1))"
            "(assert (or (and (<= Y_0 Y_1)) (and (<= Y_0 Y_2))))"
        )
        prop = parse_vnnlib(text)
        assert len(prop.clauses) == 2
        assert all(c.is_single_atom for c in prop.clauses)
        # slack signs checked against the raw conditions at y = (0, 1, -1)
        y = np.array([0.0, 1.0, -1.0])
        f1 = prop.clauses[0].atoms[0].slack(y)
        f2 = prop.clauses[1].atoms[0].slack(y)
        assert f1 < 0  # y0 <= y1 is strictly true there
        assert f2 > 0  # y0 <= y2 is false there
        assert prop.violated_at(y)

    def test_conjunction_clause(self):
        text = (
            "(declare-const X_0 Real)(declare-const Y_0 Real)(declare-const Y_1 Real)"
            "(assert (>= X_0 0))(assert (<= X_0 1))"
            "(assert (or (and (<= Y_0 0) (>= Y_1 1))))"
        )
        prop = parse_vnnlib(text)
        assert len(prop.clauses) == 1
        assert len(prop.clauses[0].atoms) == 2
        assert prop.clauses[0].satisfied([-1.0, 2.0])
        assert not prop.clauses[0].satisfied([-1.0, 0.0])

    def test_top_level_atoms_distribute_over_disjunction(self):
        text = (
            "(declare-const X_0 Real)(declare-const Y_0 Real)(declare-const Y_1 Real)"
            "(assert (>= X_0 0))(assert (<= X_0 1))"
            "(assert (<= Y_1 5))"
            "(assert (or (<= Y_0 0) (>= Y_0 10)))"
        )
        prop = parse_vnnlib(text)
        assert len(prop.clauses) == 2
        assert all(len(c.atoms) == 2 for c in prop.clauses)


def _raw_eval(text, x, y):
    """Minimal independent truth evaluation of the asserted conditions.

    Re-reads the file with its own tokenizer and evaluates every assert
    numerically; returns whether all of them hold at (x, y).
    """
    import re

    toks = re.sub(r";[^\n]*", "", text).replace("(", " ( ").replace(")", " ) ").split()

    def read(pos):
        if toks[pos] == "(":
            out = []
            pos += 1
            while toks[pos] != ")":
                node, pos = read(pos)
                out.append(node)
            return out, pos + 1
        return toks[pos], pos + 1

    forms, pos = [], 0
    while pos < len(toks):
        node, pos = read(pos)
        forms.append(node)

    def value(node):
        if isinstance(node, str):
            if node.startswith("X_"):
                return x[int(node[2:])]
            if node.startswith("Y_"):
                return y[int(node[2:])]
            return float(node)
        op, *args = node
        vals = [value(a) for a in args]
        if op == "+":
            return sum(vals)
        if op == "*":
            out = 1.0
            for v in vals:
                out *= v
            return out
        if op == "-":
            return -vals[0] if len(vals) == 1 else vals[0] - vals[1]
        raise AssertionError(op)

    def truth(node):
        op = node[0]
        if op == "<=":
            return value(node[1]) <= value(node[2])
        if op == ">=":
            return value(node[1]) >= value(node[2])
        if op == "or":
            return any(truth(c) for c in node[1:])
        if op == "and":
            return all(truth(c) for c in node[1:])
        raise AssertionError(op)

    return all(truth(f[1]) for f in forms if f[0] == "assert")


class TestPointwiseAgreement:
    def test_parsed_clauses_match_raw_semantics(self):
        # the parser's normalized slacks and the raw assertions must agree
        # at random points inside the box (non-strict semantics)
        text = (
            "(declare-const X_0 Real)(declare-const X_1 Real)\n"
            "(declare-const Y_0 Real)(declare-const Y_1 Real)(declare-const Y_2 Real)\n"
            "(assert (>= X_0 -1))(assert (<= X_0 1))\n"
            "(assert (>= X_1 0))(assert (<= X_1 2))\n"
            "(assert (<= (* 0.5 Y_2) 4))\n"
            "(assert (or (and (<= Y_0 Y_1) (>= Y_2 -1)) (and (>= (+ Y_0 Y_1) 2))))\n"
        )
        prop = parse_vnnlib(text)
        rng = np.random.default_rng(42)
        for _ in range(500):
            x = rng.uniform([-1, 0], [1, 2])
            y = rng.uniform(-3, 3, size=3)
            raw = _raw_eval(text, x, y)
            mine = any(
                max(a.slack(y) for a in c.atoms) <= 0.0 for c in prop.clauses
            )
            assert raw == mine
