"""Turning a pruned tree into a weighted clause set.

Every node owns one boolean variable (pre-order numbering, root
first). Integral leaves contribute unary belief clauses whose polarity
follows the integrity direction and whose weight is the magnitude of
the belief ratio. Edges contribute implication clauses: a child
generated for the True label implies its parent, one generated for the
False label implies the parent's negation, weighted by how much more
likely the child was under its own label than under the opposite one.
In verifier mode those edge clauses are replaced by clauses derived
from a natural-language-inference model over all node pairs.
"""
from __future__ import annotations

import json
import math
from enum import Enum
from typing import TYPE_CHECKING, Optional

from . import backend as backend_ops
from .core import (
    ClauseOrigin,
    Integrity,
    MaieuticTree,
    PromptSet,
    Proposition,
    WeightedClause,
    WeightedCnf,
    tree_leaves,
    variable_map,
)
from .errors import DegenerateBelief, EmptyTree

if TYPE_CHECKING:
    from .verifier import NliVerifier

MIN_CLAUSE_WEIGHT = 1e-12


class CompileMode(str, Enum):
    """Where binary clauses come from: LM likelihoods or an NLI verifier."""

    LIKELIHOOD = "likelihood"
    VERIFIER = "verifier"


def belief_from_probs(true_prob: float, neg_true_prob: float) -> float:
    """Normalized difference of the truth probabilities of a statement and its negation.

    Ranges over [-1, 1]; zero exactly when the two probabilities agree,
    positive when the statement is favored over its negation.
    """
    total = true_prob + neg_true_prob
    if total <= 0.0:
        raise DegenerateBelief("both truth probabilities are zero")
    return (true_prob - neg_true_prob) / total


def belief_weight(node: Proposition) -> float:
    if node.true_prob is None or node.neg_true_prob is None:
        raise ValueError(f"{node.id!r} carries no stored truth probabilities")
    return belief_from_probs(node.true_prob, node.neg_true_prob)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    scaled = math.exp(x)
    return scaled / (1.0 + scaled)


def consistency_weight(child: Proposition, parent: Proposition, label: bool,
                       backend: backend_ops.LmBackend, prompts: PromptSet) -> float:
    """Relative likelihood of the child explanation under its own label.

    Equals p(E | parent, label) / (p(E | parent, label) + p(E | parent,
    other label)) but is computed in log space as a sigmoid of the
    log-likelihood difference, so long explanations cannot underflow.
    Swapping the label yields the complement.
    """
    own = backend.sequence_logprob(child.text, parent.text, label, prompts)
    other = backend.sequence_logprob(child.text, parent.text, not label, prompts)
    return _sigmoid(own - other)


def _sorted_literals(*literals: tuple[int, bool]) -> tuple[tuple[int, bool], ...]:
    return tuple(sorted(literals))


def compile_belief_clauses(tree: MaieuticTree) -> list[WeightedClause]:
    """One unary clause per integral non-root leaf.

    The literal is positive for an integral-true leaf and negative for
    an integral-false one; the weight is the belief magnitude. Clauses
    below ``MIN_CLAUSE_WEIGHT`` are dropped as noise. The root never
    receives a belief clause, even when it is a leaf.
    """
    variables = {node_id: var for var, node_id in variable_map(tree).items()}
    clauses: list[WeightedClause] = []
    for leaf in tree_leaves(tree):
        if leaf.id == tree.root_id:
            continue
        if not leaf.integrity.is_integral:
            raise ValueError(f"leaf {leaf.id!r} is not integral; prune the tree first")
        weight = abs(belief_weight(leaf))
        if weight < MIN_CLAUSE_WEIGHT:
            continue
        polarity = leaf.integrity is Integrity.INTEGRAL_TRUE
        clauses.append(WeightedClause(literals=((variables[leaf.id], polarity),),
                                      weight=weight, origin=ClauseOrigin.BELIEF))
    return clauses


def compile_consistency_clauses(tree: MaieuticTree, backend: backend_ops.LmBackend,
                                prompts: PromptSet) -> list[WeightedClause]:
    """One implication clause per edge.

    A True-labeled edge compiles child implies parent, a False-labeled
    edge compiles child implies not-parent; in clause form the child
    literal is negative and the parent literal carries the label.
    """
    variables = {node_id: var for var, node_id in variable_map(tree).items()}
    clauses: list[WeightedClause] = []
    for parent_id, label, child_id in tree.edges():
        weight = consistency_weight(tree.node(child_id), tree.node(parent_id),
                                    label, backend, prompts)
        if weight < MIN_CLAUSE_WEIGHT:
            continue
        literals = _sorted_literals((variables[child_id], False),
                                    (variables[parent_id], label))
        clauses.append(WeightedClause(literals=literals, weight=weight,
                                      origin=ClauseOrigin.CONSISTENCY))
    return clauses


def compile(tree: MaieuticTree, mode: CompileMode,
            backend: Optional[backend_ops.LmBackend] = None,
            verifier: Optional["NliVerifier"] = None,
            prompts: Optional[PromptSet] = None,
            nli_label_prob_weights: bool = False) -> WeightedCnf:
    """Full clause set for a pruned tree.

    Likelihood mode needs the backend and the abductive prompt set for
    the edge clauses; verifier mode needs the NLI verifier. A root-only
    tree raises ``EmptyTree`` so the caller can fall back to direct
    prompting.
    """
    if tree.is_root_only():
        raise EmptyTree("nothing left to compile; answer by direct prompting")
    variables = variable_map(tree)
    clauses = compile_belief_clauses(tree)
    if mode is CompileMode.LIKELIHOOD:
        if backend is None or prompts is None:
            raise ValueError("likelihood mode needs a backend and abductive prompts")
        clauses.extend(compile_consistency_clauses(tree, backend, prompts))
    else:
        if verifier is None:
            raise ValueError("verifier mode needs an NLI verifier")
        from .verifier import relation_clauses

        clauses.extend(relation_clauses(tree, verifier,
                                        label_prob_weights=nli_label_prob_weights))
    return WeightedCnf(variables=variables, clauses=clauses)


def cnf_to_dict(cnf: WeightedCnf) -> dict:
    """Clause dump with literals spelled as node ids; feeds the explain view."""
    return {
        "variables": {str(var): node_id for var, node_id in sorted(cnf.variables.items())},
        "clauses": [
            {
                "literals": [
                    {"node": cnf.variables[var], "positive": polarity}
                    for var, polarity in clause.literals
                ],
                "weight": clause.weight,
                "origin": clause.origin.value,
            }
            for clause in cnf.clauses
        ],
    }


def cnf_to_json(cnf: WeightedCnf) -> str:
    return json.dumps(cnf_to_dict(cnf), sort_keys=False,
                      separators=(",", ": "), indent=2) + "\n"
