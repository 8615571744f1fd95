"""Dense bounded-variable primal simplex.

The relaxation engine for branch-and-bound and the producer of LP-based
layer bounds.  Deliberately dense and factorization-free: problems at the
window scale have at most a few hundred variables, and a dense basis
inverse keeps every pivot auditable.

Pivoting uses Dantzig's rule (largest reduced-cost violation) and falls
back to Bland's rule after a streak of degenerate pivots, which guarantees
termination on the classical cycling instances.  Phase 1 runs with one
artificial variable per row rather than big-M penalties, so feasibility
search never interacts with the model's own big-M constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValueOutOfBounds

INF = math.inf

LESS_EQUAL = "<="
EQUAL = "=="
GREATER_EQUAL = ">="

_RELATIONS = (LESS_EQUAL, EQUAL, GREATER_EQUAL)


@dataclass
class Tolerances:
    feasibility: float = 1e-7
    optimality: float = 1e-6
    pivot: float = 1e-9
    reduced_cost: float = 1e-9
    degenerate_step: float = 1e-10
    degenerate_streak: int = 50
    refactor_every: int = 100


@dataclass
class Constraint:
    coeffs: dict[int, float]
    relation: str
    rhs: float


class LinearProgram:
    """Variables with box bounds, linear rows, one linear objective.

    Treated as immutable once handed to a solver; derive modified copies
    through :func:`fix_variable` / :func:`add_rows`.
    """

    def __init__(self):
        self.names: list[str] = []
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.constraints: list[Constraint] = []
        self.obj_sense: str = "min"
        self.obj_coeffs: dict[int, float] = {}
        self.obj_constant: float = 0.0
        self._index: dict[str, int] = {}

    def add_variable(self, name, lo=-INF, hi=INF) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable name {name!r}")
        if not lo <= hi:
            raise ValueError(f"variable {name!r} has empty bounds [{lo}, {hi}]")
        self.names.append(name)
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        idx = len(self.names) - 1
        self._index[name] = idx
        return idx

    def index_of(self, name) -> int:
        return self._index[name]

    def add_constraint(self, coeffs: dict[int, float], relation: str, rhs: float) -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        n = len(self.names)
        for j, v in coeffs.items():
            if not 0 <= j < n:
                raise ValueError(f"constraint references undeclared variable {j}")
            if not math.isfinite(v):
                raise ValueError("constraint coefficients must be finite")
        self.constraints.append(Constraint(dict(coeffs), relation, float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, sense, coeffs: dict[int, float], constant=0.0):
        if sense not in ("min", "max"):
            raise ValueError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self.obj_sense = sense
        self.obj_coeffs = dict(coeffs)
        self.obj_constant = float(constant)

    @property
    def num_variables(self):
        return len(self.names)

    def copy(self) -> "LinearProgram":
        other = LinearProgram()
        other.names = list(self.names)
        other.lo = list(self.lo)
        other.hi = list(self.hi)
        other.constraints = [
            Constraint(dict(c.coeffs), c.relation, c.rhs) for c in self.constraints
        ]
        other.obj_sense = self.obj_sense
        other.obj_coeffs = dict(self.obj_coeffs)
        other.obj_constant = self.obj_constant
        other._index = dict(self._index)
        return other


def fix_variable(lp: LinearProgram, var, value) -> LinearProgram:
    """Derived LP with one variable's bounds collapsed to [value, value]."""
    idx = lp.index_of(var) if isinstance(var, str) else int(var)
    value = float(value)
    if value < lp.lo[idx] - 1e-12 or value > lp.hi[idx] + 1e-12:
        raise ValueOutOfBounds(
            f"cannot fix {lp.names[idx]} to {value}:"
            f" outside [{lp.lo[idx]}, {lp.hi[idx]}]"
        )
    out = lp.copy()
    out.lo[idx] = value
    out.hi[idx] = value
    return out


def add_rows(lp: LinearProgram, rows) -> LinearProgram:
    """Derived LP with extra constraint rows appended."""
    out = lp.copy()
    for coeffs, relation, rhs in rows:
        out.add_constraint(coeffs, relation, rhs)
    return out


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpResult:
    status: LpStatus
    objective_value: float | None = None
    primal: np.ndarray | None = None
    infeasibility: float = 0.0
    iterations: int = 0


# nonbasic rest positions
_AT_LO = 0
_AT_UP = 1
_FREE = 2


class _Simplex:
    """Working state of one solve; single-use, confined to one caller."""

    def __init__(self, lp: LinearProgram, tol: Tolerances):
        self.tol = tol
        n = lp.num_variables
        m = len(lp.constraints)
        self.n_struct = n
        self.m = m

        A = np.zeros((m, n))
        b = np.zeros(m)
        slack_lo = np.zeros(m)
        slack_hi = np.zeros(m)
        for i, con in enumerate(lp.constraints):
            for j, v in con.coeffs.items():
                A[i, j] = v
            b[i] = con.rhs
            if con.relation == LESS_EQUAL:
                slack_lo[i], slack_hi[i] = 0.0, INF
            elif con.relation == GREATER_EQUAL:
                slack_lo[i], slack_hi[i] = -INF, 0.0
            else:
                slack_lo[i], slack_hi[i] = 0.0, 0.0

        # columns: structural | slack | artificial
        self.N = n + 2 * m
        self.G = np.zeros((m, self.N))
        self.G[:, :n] = A
        self.G[:, n : n + m] = np.eye(m)
        self.b = b
        self.lo = np.concatenate([np.array(lp.lo), slack_lo, np.zeros(m)])
        self.hi = np.concatenate([np.array(lp.hi), slack_hi, np.full(m, INF)])

        self.values = np.zeros(self.N)
        self.rest = np.full(self.N, _AT_LO, dtype=np.int8)
        for j in range(n + m):
            if np.isfinite(self.lo[j]):
                self.values[j] = self.lo[j]
                self.rest[j] = _AT_LO
            elif np.isfinite(self.hi[j]):
                self.values[j] = self.hi[j]
                self.rest[j] = _AT_UP
            else:
                self.values[j] = 0.0
                self.rest[j] = _FREE

        resid = b - self.G[:, : n + m] @ self.values[: n + m]
        sign = np.where(resid >= 0.0, 1.0, -1.0)
        for i in range(m):
            self.G[i, n + m + i] = sign[i]
            self.values[n + m + i] = abs(resid[i])

        self.basis = np.arange(n + m, n + 2 * m)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.Binv = np.diag(sign)  # inverse of the +-1 artificial basis
        self.pivots = 0
        self.iterations = 0

    # -- core loop ---------------------------------------------------------

    def refactorize(self):
        B = self.G[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.recompute_basics()

    def recompute_basics(self):
        nb_vals = self.values.copy()
        nb_vals[self.basis] = 0.0
        xb = self.Binv @ (self.b - self.G @ nb_vals)
        self.values[self.basis] = xb

    def run(self, c, max_iterations):
        """Minimize c over the current basis; returns a status string."""
        tol = self.tol
        degen_streak = 0
        movable = self.hi > self.lo

        while True:
            if self.iterations >= max_iterations:
                return "iteration_limit"
            self.iterations += 1

            y = c[self.basis] @ self.Binv
            d = c - y @ self.G

            free_mask = self.rest == _FREE
            nb = ~self.is_basic & movable
            elig_lo = nb & (self.rest == _AT_LO) & (d < -tol.reduced_cost)
            elig_up = nb & (self.rest == _AT_UP) & (d > tol.reduced_cost)
            elig_fr = nb & free_mask & (np.abs(d) > tol.reduced_cost)
            elig = elig_lo | elig_up | elig_fr
            if not elig.any():
                return "optimal"

            if degen_streak >= tol.degenerate_streak:
                j = int(np.argmax(elig))  # Bland: lowest eligible index
            else:
                score = np.where(elig, np.abs(d), -1.0)
                j = int(np.argmax(score))
            direction = 1.0 if (elig_lo[j] or (elig_fr[j] and d[j] < 0.0)) else -1.0

            w = self.Binv @ self.G[:, j]
            denom = direction * w
            xb = self.values[self.basis]
            steps = np.full(self.m, INF)
            pos = denom > tol.pivot
            if pos.any():
                steps[pos] = (xb[pos] - self.lo[self.basis][pos]) / denom[pos]
            neg = denom < -tol.pivot
            if neg.any():
                steps[neg] = (xb[neg] - self.hi[self.basis][neg]) / denom[neg]
            steps = np.maximum(steps, 0.0)

            own = self.hi[j] - self.lo[j]
            min_step = steps.min() if self.m else INF
            delta = min(own, min_step)
            if delta == INF:
                return "unbounded"

            degen_streak = degen_streak + 1 if delta < tol.degenerate_step else 0

            if own <= min_step:
                # bound-to-bound flip, no basis change
                self.values[j] = self.hi[j] if direction > 0 else self.lo[j]
                self.rest[j] = _AT_UP if direction > 0 else _AT_LO
                self.values[self.basis] = xb - delta * direction * w
                continue

            cand = np.flatnonzero(steps <= min_step + 1e-12)
            r = int(cand[np.argmin(self.basis[cand])])
            leaving = self.basis[r]

            self.values[self.basis] = xb - delta * direction * w
            self.values[j] += direction * delta
            # snap the leaving variable onto the bound it hit
            if denom[r] > 0:
                self.values[leaving] = self.lo[leaving]
                self.rest[leaving] = _AT_LO
            else:
                self.values[leaving] = self.hi[leaving]
                self.rest[leaving] = _AT_UP
            self.is_basic[leaving] = False
            self.is_basic[j] = True
            self.basis[r] = j

            pivot_row = self.Binv[r] / w[r]
            self.Binv -= np.outer(w, pivot_row)
            self.Binv[r] = pivot_row

            self.pivots += 1
            if self.pivots % tol.refactor_every == 0:
                self.refactorize()


def solve_lp(lp: LinearProgram, max_iterations=50_000, tol: Tolerances | None = None) -> LpResult:
    """Two-phase bounded-variable simplex solve.

    Deterministic: identical programs produce identical results.  On
    ITERATION_LIMIT the best feasible point reached so far is returned
    (phase-2 iterates are always feasible), flagged non-optimal.
    """
    tol = tol or Tolerances()
    for j in range(lp.num_variables):
        if lp.lo[j] > lp.hi[j]:
            return LpResult(LpStatus.INFEASIBLE, infeasibility=lp.lo[j] - lp.hi[j])

    state = _Simplex(lp, tol)
    n, m = state.n_struct, state.m

    # Phase 1: minimize total artificial mass.
    c1 = np.zeros(state.N)
    c1[n + m :] = 1.0
    status = state.run(c1, max_iterations)
    if status == "iteration_limit":
        return LpResult(LpStatus.ITERATION_LIMIT, iterations=state.iterations)
    if status == "unbounded":  # impossible for a sum of nonnegative terms
        raise ArithmeticError("phase-1 objective reported unbounded")
    state.refactorize()
    art_mass = float(state.values[n + m :].sum())
    if art_mass > tol.feasibility:
        return LpResult(
            LpStatus.INFEASIBLE, infeasibility=art_mass, iterations=state.iterations
        )

    # Phase 2: original objective with artificials pinned at zero.
    state.hi[n + m :] = 0.0
    sense = 1.0 if lp.obj_sense == "min" else -1.0
    c2 = np.zeros(state.N)
    for j, v in lp.obj_coeffs.items():
        c2[j] = sense * v
    status = state.run(c2, max_iterations)
    state.refactorize()

    primal = state.values[:n].copy()
    obj = float(c2[:n] @ primal) * sense + lp.obj_constant
    if status == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, iterations=state.iterations)
    if status == "iteration_limit":
        return LpResult(
            LpStatus.ITERATION_LIMIT,
            objective_value=obj,
            primal=primal,
            iterations=state.iterations,
        )
    return LpResult(
        LpStatus.OPTIMAL, objective_value=obj, primal=primal, iterations=state.iterations
    )


def feasibility_violation(lp: LinearProgram, x) -> float:
    """Largest bound or row violation of a candidate point."""
    x = np.asarray(x, dtype=np.float64)
    worst = 0.0
    for j in range(lp.num_variables):
        worst = max(worst, lp.lo[j] - x[j], x[j] - lp.hi[j])
    for con in lp.constraints:
        lhs = sum(v * x[j] for j, v in con.coeffs.items())
        if con.relation == LESS_EQUAL:
            worst = max(worst, lhs - con.rhs)
        elif con.relation == GREATER_EQUAL:
            worst = max(worst, con.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - con.rhs))
    return worst


def format_lp(lp: LinearProgram) -> str:
    """Human-readable dump for debugging; not a solver interchange format."""
    lines = []
    terms = [
        f"{v:+g} {lp.names[j]}" for j, v in sorted(lp.obj_coeffs.items()) if v != 0.0
    ]
    const = f" {lp.obj_constant:+g}" if lp.obj_constant else ""
    lines.append(f"{lp.obj_sense}: " + (" ".join(terms) or "0") + const)
    lines.append("subject to:")
    for k, con in enumerate(lp.constraints):
        row = " ".join(f"{v:+g} {lp.names[j]}" for j, v in sorted(con.coeffs.items()))
        lines.append(f"  r{k}: {row} {con.relation} {con.rhs:g}")
    lines.append("bounds:")
    for j, name in enumerate(lp.names):
        lines.append(f"  {lp.lo[j]:g} <= {name} <= {lp.hi[j]:g}")
    return "\n".join(lines) + "\n"
