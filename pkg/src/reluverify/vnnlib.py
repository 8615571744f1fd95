"""Parser for the property subset of the VNN-LIB exchange format.

Grammar (s-expressions, ';' line comments):

    file    ::= { form }
    form    ::= "(" "declare-const" var "Real" ")"
              | "(" "assert" cond ")"
    cond    ::= atom
              | "(" "or" clause+ ")"
    clause  ::= atom | "(" "and" atom+ ")"
    atom    ::= "(" ("<=" | ">=") expr expr ")"
    expr    ::= number | var
              | "(" "+" expr+ ")" | "(" "*" expr+ ")"
              | "(" "-" expr ")"  | "(" "-" expr expr ")"
    var     ::= "X_" digits | "Y_" digits

Satisfiability of the asserted constraints encodes a property violation:
assertions over X variables carve the input box, assertions over Y
variables form the violation clauses.  Every atom is normalized to
``coeffs . y <= rhs``; the slack ``coeffs . y - rhs`` is negative exactly
when the atom holds strictly, which makes it the certifying objective of a
single-atom clause.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    MixedVariableAtom,
    NonlinearTerm,
    ParseError,
    SchemaError,
    UnboundedInputBox,
)

# Margin below zero a violation certificate must reach; boundary points
# (slack exactly 0) count as satisfying the property.
CERT_MARGIN = 1e-6

_VAR_RE = re.compile(r"^([XY])_(\d+)$")


@dataclass(frozen=True)
class Atom:
    """One output inequality, normalized to coeffs . y <= rhs."""

    coeffs: tuple[float, ...]
    rhs: float

    def slack(self, y):
        """Signed slack; negative iff the atom holds strictly at y."""
        y = np.asarray(y, dtype=np.float64)
        return y @ np.asarray(self.coeffs) - self.rhs


@dataclass(frozen=True)
class Clause:
    """Conjunction of atoms; the property is violated when all hold."""

    atoms: tuple[Atom, ...]

    @property
    def is_single_atom(self):
        return len(self.atoms) == 1

    def satisfied(self, y, margin=0.0):
        return all(a.slack(y) <= -margin for a in self.atoms)


@dataclass
class PropertySpec:
    """Input region plus the disjunction of violation clauses."""

    input_lo: np.ndarray
    input_hi: np.ndarray
    clauses: list[Clause]
    num_outputs: int

    @property
    def num_inputs(self):
        return self.input_lo.shape[0]

    def violated_at(self, y, margin=CERT_MARGIN):
        return any(c.satisfied(y, margin) for c in self.clauses)


# -- tokenizer -------------------------------------------------------------


def _tokenize(text):
    """Yield (token, byte_offset) pairs, skipping ';' comments."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def _read_forms(tokens):
    forms = []
    pos = 0

    def read(pos):
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", offset=tokens[-1][1] if tokens else 0)
        tok, off = tokens[pos]
        if tok == "(":
            items = []
            pos += 1
            while True:
                if pos >= len(tokens):
                    raise ParseError("unbalanced '('", offset=off)
                if tokens[pos][0] == ")":
                    return (items, off), pos + 1
                item, pos = read(pos)
                items.append(item)
        if tok == ")":
            raise ParseError("unbalanced ')'", offset=off)
        return (tok, off), pos + 1

    while pos < len(tokens):
        form, pos = read(pos)
        forms.append(form)
    return forms


# -- linear expressions ------------------------------------------------------


class _LinExpr:
    """coeffs over ('X'|'Y', index) plus a constant."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0.0):
        self.coeffs = coeffs or {}
        self.const = const

    def add(self, other, scale=1.0):
        for k, v in other.coeffs.items():
            self.coeffs[k] = self.coeffs.get(k, 0.0) + scale * v
        self.const += scale * other.const
        return self

    def kinds(self):
        return {k[0] for k, v in self.coeffs.items() if v != 0.0}


def _parse_number(tok):
    try:
        return float(tok)
    except ValueError:
        return None


def _parse_expr(node, declared):
    node, off = node
    if isinstance(node, str):
        num = _parse_number(node)
        if num is not None:
            return _LinExpr(const=num)
        m = _VAR_RE.match(node)
        if not m:
            raise ParseError(f"unexpected token {node!r}", offset=off)
        key = (m.group(1), int(m.group(2)))
        if key not in declared:
            raise ParseError(f"undeclared variable {node}", offset=off)
        return _LinExpr(coeffs={key: 1.0})
    if not node:
        raise ParseError("empty expression", offset=off)
    head, hoff = node[0]
    if not isinstance(head, str):
        raise ParseError("expression head must be an operator", offset=hoff)
    args = [_parse_expr(a, declared) for a in node[1:]]
    if head == "+":
        out = _LinExpr()
        for a in args:
            out.add(a)
        return out
    if head == "-":
        if len(args) == 1:
            return _LinExpr().add(args[0], -1.0)
        if len(args) == 2:
            return _LinExpr().add(args[0]).add(args[1], -1.0)
        raise ParseError("'-' takes one or two arguments", offset=hoff)
    if head == "*":
        out = _LinExpr(const=1.0)
        for a in args:
            if not a.coeffs:
                out.const *= a.const
                for k in out.coeffs:
                    out.coeffs[k] *= a.const
            elif not out.coeffs:
                scale = out.const
                out = _LinExpr({k: v * scale for k, v in a.coeffs.items()}, a.const * scale)
            else:
                raise NonlinearTerm(
                    f"product of two variable expressions at byte offset {hoff}"
                )
        return out
    raise ParseError(f"unknown operator {head!r}", offset=hoff)


# -- assertions --------------------------------------------------------------


def _parse_atom(node, declared):
    items, off = node
    if not (isinstance(items, list) and len(items) == 3):
        raise ParseError("expected (<= expr expr) or (>= expr expr)", offset=off)
    op = items[0][0]
    if op not in ("<=", ">="):
        raise ParseError(f"expected <= or >=, got {op!r}", offset=items[0][1])
    left = _parse_expr(items[1], declared)
    right = _parse_expr(items[2], declared)
    expr = _LinExpr().add(left).add(right, -1.0)  # left - right <= / >= 0
    if op == ">=":
        expr = _LinExpr().add(expr, -1.0)
    # now: expr.coeffs . v <= -expr.const
    kinds = expr.kinds()
    if kinds == {"X", "Y"}:
        raise MixedVariableAtom(f"atom at byte offset {off} mixes X and Y variables")
    if not kinds:
        raise SchemaError("assertion contains no variables")
    coeffs = {k: v for k, v in expr.coeffs.items() if v != 0.0}
    return next(iter(kinds)), coeffs, -expr.const, off


def parse_vnnlib(text) -> PropertySpec:
    """Parse a property file; see the module docstring for the subset."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    forms = _read_forms(_tokenize(text))

    declared: set[tuple[str, int]] = set()
    box: dict[int, list[float]] = {}
    base_atoms: list[tuple[dict, float]] = []
    or_groups: list[list[list[tuple[dict, float]]]] = []

    for form in forms:
        items, off = form
        if not isinstance(items, list) or not items:
            raise ParseError("expected a form", offset=off)
        head = items[0][0]
        if head == "declare-const":
            if len(items) != 3 or items[2][0] != "Real":
                raise ParseError("expected (declare-const <var> Real)", offset=off)
            m = _VAR_RE.match(items[1][0]) if isinstance(items[1][0], str) else None
            if not m:
                raise ParseError(f"bad variable name {items[1][0]!r}", offset=items[1][1])
            key = (m.group(1), int(m.group(2)))
            declared.add(key)
            if key[0] == "X":
                box.setdefault(key[1], [-math.inf, math.inf])
            continue
        if head != "assert":
            raise ParseError(f"unknown form {head!r}", offset=off)
        if len(items) != 2:
            raise ParseError("assert takes exactly one condition", offset=off)
        cond, coff = items[1]
        if isinstance(cond, list) and cond and cond[0][0] == "or":
            group = []
            for sub in cond[1:]:
                sitems, soff = sub
                if isinstance(sitems, list) and sitems and sitems[0][0] == "and":
                    atoms = [_require_y(_parse_atom(a, declared)) for a in sitems[1:]]
                else:
                    atoms = [_require_y(_parse_atom(sub, declared))]
                if not atoms:
                    raise ParseError("empty conjunction", offset=soff)
                group.append(atoms)
            if not group:
                raise ParseError("empty disjunction", offset=coff)
            or_groups.append(group)
            continue
        kind, coeffs, rhs, aoff = _parse_atom(items[1], declared)
        if kind == "X":
            _fold_input_atom(box, coeffs, rhs, aoff)
        else:
            base_atoms.append((coeffs, rhs))

    n_in = _contiguous_count(box.keys(), "X")
    y_idx = sorted(i for k, i in declared if k == "Y")
    n_out = _contiguous_count(y_idx, "Y")
    if n_out == 0:
        raise SchemaError("no output (Y) variables declared; property missing")

    lo = np.array([box[i][0] for i in range(n_in)])
    hi = np.array([box[i][1] for i in range(n_in)])
    unbounded = ~(np.isfinite(lo) & np.isfinite(hi))
    if unbounded.any():
        k = int(np.argmax(unbounded))
        raise UnboundedInputBox(f"input X_{k} is not confined to a finite range")

    # Distribute top-level atoms over the disjunctions (cartesian product).
    if not base_atoms and not or_groups:
        raise SchemaError("no output constraints asserted; property missing")
    clauses = []
    for combo in itertools.product(*or_groups):
        atoms = list(base_atoms)
        for disjunct in combo:
            atoms.extend(disjunct)
        clauses.append(Clause(tuple(_finalize_atom(c, r, n_out) for c, r in atoms)))
    return PropertySpec(input_lo=lo, input_hi=hi, clauses=clauses, num_outputs=n_out)


def _require_y(parsed):
    kind, coeffs, rhs, off = parsed
    if kind != "Y":
        raise SchemaError(
            f"atom at byte offset {off}: input constraints may not appear"
            " inside a disjunction"
        )
    return coeffs, rhs


def _fold_input_atom(box, coeffs, rhs, off):
    if len(coeffs) != 1:
        raise SchemaError(
            f"input constraint at byte offset {off} involves several X variables;"
            " only per-variable bounds fold into a box"
        )
    (_, idx), a = next(iter(coeffs.items()))
    entry = box[idx]
    if a > 0:
        entry[1] = min(entry[1], rhs / a)
    else:
        entry[0] = max(entry[0], rhs / a)


def _contiguous_count(indices, prefix):
    idx = sorted(set(indices))
    if idx and idx != list(range(idx[-1] + 1)):
        missing = next(i for i in range(idx[-1] + 1) if i not in set(idx))
        raise SchemaError(f"variable {prefix}_{missing} is never declared")
    return (idx[-1] + 1) if idx else 0


def _finalize_atom(coeffs, rhs, n_out):
    vec = [0.0] * n_out
    for (_, i), v in coeffs.items():
        if i >= n_out:
            raise SchemaError(f"output Y_{i} is never declared")
        vec[i] = v
    return Atom(coeffs=tuple(vec), rhs=rhs)
