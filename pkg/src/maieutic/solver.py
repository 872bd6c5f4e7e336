"""Weighted MAX-SAT: an exhaustive oracle, an exact branch-and-bound
solver, and DIMACS WCNF import/export.

Both solvers share one tie-breaking contract: among all optima they
return the lexicographically smallest value vector over variables in
ascending id order, with False ordered before True. The brute-force
oracle gets this by enumerating assignments as integers (first
variable in the high bit); the branch-and-bound solver first
establishes the optimal weight, then fixes variables one at a time,
keeping False whenever the optimum stays reachable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import ClauseOrigin, Literal, WeightedClause, WeightedCnf
from .errors import ParseError, TooManyVariables, UnassignedVariable, WeightOverflow

MAX_BRUTE_VARIABLES = 24
_CHUNK = 1 << 20
_EPS = 1e-9

WCNF_SCALE = 10 ** 6
_MAX_WCNF_WEIGHT = 2 ** 63 - 1


@dataclass
class Assignment:
    """A complete truth assignment with its objective value."""

    values: dict[int, bool]
    satisfied_weight: float
    violated: list[int] = field(default_factory=list)

    def value_for(self, var: int) -> bool:
        return self.values[var]


def _clause_satisfied(literals: Sequence[Literal], values: Mapping[int, bool]) -> bool:
    for var, polarity in literals:
        if var not in values:
            raise UnassignedVariable(f"variable {var} has no value")
        if values[var] == polarity:
            return True
    return False


def evaluate(cnf: WeightedCnf, values: Mapping[int, bool]) -> tuple[float, list[int]]:
    """Satisfied weight plus the indices of falsified clauses."""
    for var in cnf.variables:
        if var not in values:
            raise UnassignedVariable(f"variable {var} has no value")
    satisfied = 0.0
    violated: list[int] = []
    for index, clause in enumerate(cnf.clauses):
        if _clause_satisfied(clause.literals, values):
            satisfied += clause.weight
        else:
            violated.append(index)
    return satisfied, violated


def _finish(cnf: WeightedCnf, values: dict[int, bool]) -> Assignment:
    satisfied, violated = evaluate(cnf, values)
    return Assignment(values=values, satisfied_weight=satisfied, violated=violated)


def solve_brute(cnf: WeightedCnf) -> Assignment:
    """Exhaustive optimum over all assignments; the testing oracle.

    Restricted to ``MAX_BRUTE_VARIABLES`` variables. Candidate
    assignments are scored in blocks so memory stays bounded.
    """
    ids = sorted(cnf.variables)
    count = len(ids)
    if count > MAX_BRUTE_VARIABLES:
        raise TooManyVariables(f"{count} variables exceed the exhaustive limit "
                               f"of {MAX_BRUTE_VARIABLES}")
    if count == 0:
        return _finish(cnf, {})
    shift = {var: count - 1 - pos for pos, var in enumerate(ids)}
    best_weight = -math.inf
    best_index = 0
    for start in range(0, 1 << count, _CHUNK):
        stop = min(start + _CHUNK, 1 << count)
        candidates = np.arange(start, stop, dtype=np.int64)
        scores = np.zeros(stop - start)
        for clause in cnf.clauses:
            satisfied = np.zeros(stop - start, dtype=bool)
            for var, polarity in clause.literals:
                bits = (candidates >> shift[var]) & 1
                satisfied |= bits == (1 if polarity else 0)
            scores[satisfied] += clause.weight
        local = int(np.argmax(scores))
        if scores[local] > best_weight:
            best_weight = float(scores[local])
            best_index = start + local
    values = {var: bool((best_index >> shift[var]) & 1) for var in ids}
    return _finish(cnf, values)


# --- branch and bound ---

_SearchClause = tuple[tuple[Literal, ...], float]


def _simplify(clauses: list[_SearchClause], var: int,
              value: bool) -> tuple[list[_SearchClause], float]:
    """Apply one assignment; returns the reduced clause list and the weight it satisfies."""
    satisfied = 0.0
    out: list[_SearchClause] = []
    for literals, weight in clauses:
        if (var, value) in literals:
            satisfied += weight
            continue
        if (var, not value) in literals:
            rest = tuple(lit for lit in literals if lit[0] != var)
            if rest:
                out.append((rest, weight))
            # an emptied clause is falsified and simply drops out
            continue
        out.append((literals, weight))
    return out, satisfied


def _propagate(clauses: list[_SearchClause], banked: float) -> tuple[list[_SearchClause], float]:
    """Weight-safe forced assignments: pure literals and dominant unit clauses.

    A pure literal satisfies every clause it touches at no cost. A unit
    clause forces its literal once its weight covers the combined weight
    of every clause holding the opposite literal: flipping toward the
    unit then never loses weight.
    """
    while True:
        polarity_seen: dict[int, set[bool]] = {}
        for literals, _ in clauses:
            for var, value in literals:
                polarity_seen.setdefault(var, set()).add(value)
        pures = [(var, next(iter(seen))) for var, seen in polarity_seen.items()
                 if len(seen) == 1]
        if pures:
            for var, value in pures:
                clauses, gained = _simplify(clauses, var, value)
                banked += gained
            continue
        incident: dict[Literal, float] = {}
        for literals, weight in clauses:
            for lit in literals:
                incident[lit] = incident.get(lit, 0.0) + weight
        forced = None
        for literals, weight in clauses:
            if len(literals) == 1:
                (var, value), = literals
                if weight >= incident.get((var, not value), 0.0):
                    forced = (var, value)
                    break
        if forced is None:
            return clauses, banked
        clauses, gained = _simplify(clauses, *forced)
        banked += gained


def _branch_variable(clauses: list[_SearchClause]) -> int:
    incident: dict[int, float] = {}
    for literals, weight in clauses:
        for var, _ in literals:
            incident[var] = incident.get(var, 0.0) + weight
    return max(incident, key=lambda var: (incident[var], -var))


def _optimize(clauses: list[_SearchClause], banked: float, state: dict) -> None:
    """Raise ``state['best']`` to the subproblem optimum; stops early at the target."""
    target = state["target"]
    if target is not None and state["best"] >= target:
        return
    clauses, banked = _propagate(clauses, banked)
    if not clauses:
        if banked > state["best"]:
            state["best"] = banked
        return
    if banked + sum(weight for _, weight in clauses) <= state["best"]:
        return
    var = _branch_variable(clauses)
    gain_true = sum(w for lits, w in clauses if (var, True) in lits)
    gain_false = sum(w for lits, w in clauses if (var, False) in lits)
    for value in ((True, False) if gain_true > gain_false else (False, True)):
        reduced, gained = _simplify(clauses, var, value)
        _optimize(reduced, banked + gained, state)


def _greedy_seed(clauses: list[_SearchClause], ids: Sequence[int]) -> float:
    banked = 0.0
    for var in ids:
        gain_true = sum(w for lits, w in clauses if (var, True) in lits)
        gain_false = sum(w for lits, w in clauses if (var, False) in lits)
        clauses, gained = _simplify(clauses, var, gain_true > gain_false)
        banked += gained
    return banked


def solve(cnf: WeightedCnf) -> Assignment:
    """Exact optimum by branch and bound, then lexicographic reconstruction.

    Phase one finds the optimal satisfied weight (propagation, a
    remaining-weight upper bound, branching on the variable with the
    most incident weight, heavier polarity first). Phase two walks the
    variables in id order and keeps False wherever the optimum remains
    reachable, so the returned assignment matches ``solve_brute``.
    """
    ids = sorted(cnf.variables)
    clauses: list[_SearchClause] = [(clause.literals, clause.weight)
                                    for clause in cnf.clauses]
    state = {"best": _greedy_seed(clauses, ids), "target": None}
    _optimize(clauses, 0.0, state)
    threshold = state["best"] - _EPS

    values: dict[int, bool] = {}
    active = clauses
    banked = 0.0
    for var in ids:
        reduced, gained = _simplify(active, var, False)
        probe = {"best": -math.inf, "target": threshold}
        _optimize(reduced, banked + gained, probe)
        if probe["best"] >= threshold:
            values[var] = False
        else:
            values[var] = True
            reduced, gained = _simplify(active, var, True)
        active = reduced
        banked += gained
    return _finish(cnf, values)


def assignment_by_node(cnf: WeightedCnf, assignment: Assignment) -> dict[str, bool]:
    """The assignment re-keyed by node id."""
    return {node_id: assignment.values[var] for var, node_id in cnf.variables.items()}


# --- DIMACS WCNF interop ---

def _sidecar_path(path: Union[str, Path]) -> Path:
    return Path(str(path) + ".map.json")


def _scaled_weight(weight: float, scale: int) -> int:
    scaled = int(round(weight * scale))
    if scaled == 0:
        scaled = 1  # the format cannot express a zero-weight soft clause
    if scaled > _MAX_WCNF_WEIGHT:
        raise WeightOverflow(f"weight {weight} exceeds the integer range at scale {scale}")
    return scaled


def export_wcnf(cnf: WeightedCnf, path: Union[str, Path], scale: int = WCNF_SCALE) -> Path:
    """Write ``p wcnf`` format with integerized weights plus a sidecar map.

    Weights are multiplied by ``scale`` and rounded (values rounding to
    zero are clamped to 1); the header's top value is the total plus
    one, so no soft clause ever reaches it. The sidecar JSON records
    the scale, the file-variable to node-id map and each clause's
    origin, letting :func:`import_wcnf` restore provenance.
    """
    path = Path(path)
    ids = sorted(cnf.variables)
    index = {var: position + 1 for position, var in enumerate(ids)}
    weights = [_scaled_weight(clause.weight, scale) for clause in cnf.clauses]
    top = sum(weights) + 1
    if top > _MAX_WCNF_WEIGHT:
        raise WeightOverflow(f"total weight {top} exceeds the integer range")
    lines = [f"p wcnf {len(ids)} {len(cnf.clauses)} {top}"]
    for clause, weight in zip(cnf.clauses, weights):
        rendered = " ".join(str(index[var] if polarity else -index[var])
                            for var, polarity in clause.literals)
        lines.append(f"{weight} {rendered} 0")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {
        "scale": scale,
        "variables": {str(index[var]): cnf.variables[var] for var in ids},
        "origins": [clause.origin.value for clause in cnf.clauses],
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")
    return path


def _parse_header(tokens: list[str], line_no: int) -> tuple[int, int, int]:
    if len(tokens) != 5 or tokens[0] != "p" or tokens[1] != "wcnf":
        raise ParseError("header must read 'p wcnf <vars> <clauses> <top>'", line_no)
    try:
        nvars, nclauses, top = (int(tok) for tok in tokens[2:])
    except ValueError:
        raise ParseError("header counts must be integers", line_no) from None
    if nvars < 0 or nclauses < 0 or top < 1:
        raise ParseError("header counts out of range", line_no)
    return nvars, nclauses, top


def import_wcnf(path: Union[str, Path],
                sidecar: Optional[Union[str, Path]] = None) -> WeightedCnf:
    """Read a DIMACS WCNF file back into a clause set.

    The sidecar map written by :func:`export_wcnf` is picked up
    automatically when present; without it, variables get synthetic
    names and every clause is tagged with the external origin. Clauses
    at or above the header's top value (hard clauses elsewhere) are
    kept as very heavy soft clauses. Sidecar-level problems are
    reported as :class:`ParseError` at line 0.
    """
    path = Path(path)
    if sidecar is None and _sidecar_path(path).exists():
        sidecar = _sidecar_path(path)
    scale = WCNF_SCALE
    names: dict[int, str] = {}
    origins: list[ClauseOrigin] = []
    if sidecar is not None:
        try:
            mapping = json.loads(Path(sidecar).read_text(encoding="utf-8"))
            scale = int(mapping.get("scale", WCNF_SCALE))
            names = {int(key): str(value)
                     for key, value in mapping.get("variables", {}).items()}
            origins = [ClauseOrigin(value) for value in mapping.get("origins", [])]
        except (ValueError, KeyError) as exc:
            raise ParseError(f"unusable sidecar map: {exc}", 0) from exc
        if scale <= 0:
            raise ParseError("sidecar scale must be positive", 0)

    header: Optional[tuple[int, int, int]] = None
    clauses: list[WeightedClause] = []
    last_line = 0
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            last_line = line_no
            line = raw.strip()
            if not line or line.startswith("c"):
                continue
            tokens = line.split()
            if header is None:
                header = _parse_header(tokens, line_no)
                continue
            nvars, nclauses, _ = header
            if len(clauses) == nclauses:
                raise ParseError(f"more than the declared {nclauses} clauses", line_no)
            try:
                numbers = [int(tok) for tok in tokens]
            except ValueError:
                raise ParseError(f"non-integer token in clause: {line!r}", line_no) from None
            if len(numbers) < 3:
                raise ParseError("clause needs a weight, a literal and the 0 terminator",
                                 line_no)
            if numbers[-1] != 0:
                raise ParseError("clause does not end with 0", line_no)
            if 0 in numbers[1:-1]:
                raise ParseError("literal 0 inside a clause body", line_no)
            weight = numbers[0]
            if weight < 1:
                raise ParseError(f"clause weight {weight} must be positive", line_no)
            literals = []
            for literal in numbers[1:-1]:
                var = abs(literal)
                if var > nvars:
                    raise ParseError(f"variable {var} beyond the declared {nvars}", line_no)
                literals.append((var, literal > 0))
            origin = origins[len(clauses)] if len(clauses) < len(origins) \
                else ClauseOrigin.EXTERNAL
            try:
                clauses.append(WeightedClause(literals=tuple(literals),
                                              weight=weight / scale, origin=origin))
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from exc
    if header is None:
        raise ParseError("no header line found", max(last_line, 1))
    nvars, nclauses, _ = header
    if len(clauses) != nclauses:
        raise ParseError(f"found {len(clauses)} clauses, header declares {nclauses}",
                         max(last_line, 1))
    variables = {var: names.get(var, f"v{var}") for var in range(1, nvars + 1)}
    return WeightedCnf(variables=variables, clauses=clauses)
