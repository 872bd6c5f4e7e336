"""Domain types: propositions, explanation trees, weighted clauses, configuration.

Values are treated as immutable once constructed; tree construction goes
through a builder that assembles the node and edge maps before the tree
object is created.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Sequence

ROOT_ID = "root"


class Integrity(str, Enum):
    """Whether the model answers a statement and its negation consistently."""

    INTEGRAL_TRUE = "integral_true"
    INTEGRAL_FALSE = "integral_false"
    NOT_INTEGRAL = "not_integral"
    UNCHECKED = "unchecked"

    @property
    def is_integral(self) -> bool:
        return self in (Integrity.INTEGRAL_TRUE, Integrity.INTEGRAL_FALSE)


class PromptMode(str, Enum):
    QA_PAIRS = "qa_pairs"
    QA_EXPLANATION_TRIPLES = "qa_explanation_triples"
    ABDUCTIVE_TRIPLES = "abductive_triples"


class NegationStrategy(str, Enum):
    PREFIX = "prefix"
    LM_GENERATED = "lm_generated"


class DecodingStrategy(str, Enum):
    GREEDY = "greedy"
    NUCLEUS = "nucleus"


class ClauseOrigin(str, Enum):
    BELIEF = "belief"
    CONSISTENCY = "consistency"
    NLI = "nli"
    # Clauses read back from a WCNF file without a sidecar carry no
    # compiler provenance.
    EXTERNAL = "external"


def _require_finite(name: str, value: Optional[float]) -> None:
    if value is not None and not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class PromptExample:
    """One demonstration record: question text, optional explanation, answer label."""

    question: str
    answer: bool
    explanation: Optional[str] = None


@dataclass(frozen=True)
class PromptSet:
    """Ordered demonstration examples for one prompting mode."""

    mode: PromptMode
    examples: tuple[PromptExample, ...]

    def __post_init__(self):
        if not self.examples:
            raise ValueError("prompt set must contain at least one example")
        object.__setattr__(self, "examples", tuple(self.examples))
        for ex in self.examples:
            if not ex.question.strip():
                raise ValueError("demonstration question must be non-empty")
            if self.mode is PromptMode.QA_PAIRS:
                if ex.explanation is not None:
                    raise ValueError("qa_pairs examples must not carry explanations")
            elif not (ex.explanation and ex.explanation.strip()):
                raise ValueError(f"{self.mode.value} examples require an explanation")

    def content_hash(self) -> str:
        payload = [
            {"question": e.question, "answer": e.answer, "explanation": e.explanation}
            for e in self.examples
        ]
        blob = json.dumps({"mode": self.mode.value, "examples": payload},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DecodingParams:
    """How completions are sampled for one request."""

    strategy: DecodingStrategy
    nucleus_p: float = 1.0  # ignored for greedy
    max_tokens: int = 64
    stop_sequences: tuple[str, ...] = ("\n",)
    sample_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.strategy is DecodingStrategy.GREEDY and self.sample_count != 1:
            raise ValueError("greedy decoding yields a single sample")
        if self.strategy is DecodingStrategy.NUCLEUS and not 0.0 < self.nucleus_p <= 1.0:
            raise ValueError("nucleus_p must lie in (0, 1]")

    def to_dict(self) -> dict:
        out = {
            "strategy": self.strategy.value,
            "max_tokens": self.max_tokens,
            "stop_sequences": list(self.stop_sequences),
            "sample_count": self.sample_count,
        }
        if self.strategy is DecodingStrategy.NUCLEUS:
            out["nucleus_p"] = self.nucleus_p
        return out

    @classmethod
    def from_dict(cls, data: dict) -> DecodingParams:
        return cls(
            strategy=DecodingStrategy(data["strategy"]),
            nucleus_p=data.get("nucleus_p", 1.0),
            max_tokens=data.get("max_tokens", 64),
            stop_sequences=tuple(data.get("stop_sequences", ("\n",))),
            sample_count=data.get("sample_count", 1),
        )


def _default_decoding_schedule() -> tuple[DecodingParams, ...]:
    return (
        DecodingParams(DecodingStrategy.NUCLEUS, nucleus_p=1.0, sample_count=3),
        DecodingParams(DecodingStrategy.GREEDY, sample_count=1),
    )


@dataclass(frozen=True)
class TreeConfig:
    """Shape of the generated tree and how each depth is decoded.

    Depth 1 defaults to nucleus sampling with three samples per answer
    label; every deeper level decodes greedily with a single sample.
    """

    depth_limit: int = 2
    width_schedule: tuple[int, ...] = (3, 1)
    decoding_schedule: tuple[DecodingParams, ...] = field(
        default_factory=_default_decoding_schedule)
    negation_strategy: NegationStrategy = NegationStrategy.PREFIX

    def __post_init__(self):
        object.__setattr__(self, "width_schedule", tuple(self.width_schedule))
        object.__setattr__(self, "decoding_schedule", tuple(self.decoding_schedule))
        if self.depth_limit < 1:
            raise ValueError("depth_limit must be >= 1")
        if len(self.width_schedule) != self.depth_limit:
            raise ValueError("width_schedule must list one width per depth")
        if len(self.decoding_schedule) != self.depth_limit:
            raise ValueError("decoding_schedule must list one entry per depth")
        for depth0, (width, decoding) in enumerate(
                zip(self.width_schedule, self.decoding_schedule)):
            if width < 1:
                raise ValueError("widths must be >= 1")
            if decoding.sample_count != width:
                raise ValueError(
                    f"decoding sample_count at depth {depth0 + 1} must equal the width")

    def decoding_for(self, depth: int) -> DecodingParams:
        """Decoding parameters for 1-based tree depth."""
        if not 1 <= depth <= self.depth_limit:
            raise ValueError(f"depth {depth} outside 1..{self.depth_limit}")
        return self.decoding_schedule[depth - 1]

    def width_for(self, depth: int) -> int:
        if not 1 <= depth <= self.depth_limit:
            raise ValueError(f"depth {depth} outside 1..{self.depth_limit}")
        return self.width_schedule[depth - 1]

    def max_nodes_excluding_root(self) -> int:
        """Upper bound on generated nodes: both labels at every width, every depth."""
        total = 0
        layer = 1
        for width in self.width_schedule:
            layer *= 2 * width
            total += layer
        return total

    def to_dict(self) -> dict:
        return {
            "depth_limit": self.depth_limit,
            "width_schedule": list(self.width_schedule),
            "decoding_schedule": [d.to_dict() for d in self.decoding_schedule],
            "negation_strategy": self.negation_strategy.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TreeConfig:
        kwargs: dict = {}
        if "depth_limit" in data:
            kwargs["depth_limit"] = data["depth_limit"]
        if "width_schedule" in data:
            kwargs["width_schedule"] = tuple(data["width_schedule"])
        if "decoding_schedule" in data:
            kwargs["decoding_schedule"] = tuple(
                DecodingParams.from_dict(d) for d in data["decoding_schedule"])
        if "negation_strategy" in data:
            kwargs["negation_strategy"] = NegationStrategy(data["negation_strategy"])
        return cls(**kwargs)


@dataclass(frozen=True)
class Proposition:
    """One node of the tree.

    ``path_label`` records the answer-label branch taken at every depth
    from the root, so its length equals the node's depth. ``true_prob``
    and ``neg_true_prob`` are the renormalized probabilities of the True
    answer for the statement and for its negation.
    """

    id: str
    text: str
    negated_text: str = ""
    path_label: str = ""
    source_answer: Optional[bool] = None
    integrity: Integrity = Integrity.UNCHECKED
    belief: Optional[float] = None
    true_prob: Optional[float] = None
    neg_true_prob: Optional[float] = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("proposition text must be non-empty")
        if self.integrity is not Integrity.UNCHECKED and not self.negated_text.strip():
            raise ValueError("checked propositions must carry a negated text")
        if any(ch not in "TF" for ch in self.path_label):
            raise ValueError("path_label may contain only 'T' and 'F'")
        _require_finite("belief", self.belief)
        _require_finite("true_prob", self.true_prob)
        _require_finite("neg_true_prob", self.neg_true_prob)
        for name in ("true_prob", "neg_true_prob"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.integrity is Integrity.INTEGRAL_TRUE and not (
                self.belief is not None and self.belief > 0):
            raise ValueError("integral-true propositions require positive belief")
        if self.integrity is Integrity.INTEGRAL_FALSE and not (
                self.belief is not None and self.belief < 0):
            raise ValueError("integral-false propositions require negative belief")

    @property
    def depth(self) -> int:
        return len(self.path_label)


def child_id(parent_id: str, label: bool, index: int) -> str:
    """Stable node id: the parent's id extended with the branch label and sibling index."""
    stem = "" if parent_id == ROOT_ID else parent_id + "."
    return f"{stem}{'T' if label else 'F'}.{index}"


Edge = tuple[bool, str]  # (branch label, child node id)


@dataclass
class MaieuticTree:
    """Rooted tree of propositions with True/False labeled edges."""

    nodes: dict[str, Proposition]
    children: dict[str, list[Edge]]
    config: TreeConfig = field(default_factory=TreeConfig)
    root_id: str = ROOT_ID

    @property
    def root(self) -> Proposition:
        return self.nodes[self.root_id]

    @property
    def depth_limit(self) -> int:
        return self.config.depth_limit

    @property
    def width_schedule(self) -> tuple[int, ...]:
        return self.config.width_schedule

    def node(self, node_id: str) -> Proposition:
        return self.nodes[node_id]

    def children_of(self, node_id: str) -> list[Edge]:
        return self.children.get(node_id, [])

    def edges(self) -> Iterator[tuple[str, bool, str]]:
        """(parent id, branch label, child id) triples, parents in pre-order."""
        for node in tree_nodes(self):
            for label, cid in self.children_of(node.id):
                yield node.id, label, cid

    def node_count(self) -> int:
        return len(self.nodes)

    def is_root_only(self) -> bool:
        return len(self.nodes) == 1

    def validate(self) -> None:
        """Raise ValueError unless the structure is a well-formed single-rooted tree."""
        if self.root_id not in self.nodes:
            raise ValueError("root node missing from node map")
        if self.root.path_label != "":
            raise ValueError("root must have an empty path label")
        parents: dict[str, str] = {}
        for parent_id, edges in self.children.items():
            if parent_id not in self.nodes:
                raise ValueError(f"unknown parent {parent_id!r}")
            for label, cid in edges:
                if cid not in self.nodes:
                    raise ValueError(f"unknown child {cid!r}")
                if cid in parents:
                    raise ValueError(f"{cid!r} has more than one parent")
                if cid == self.root_id:
                    raise ValueError("root cannot be a child")
                parents[cid] = parent_id
                child = self.nodes[cid]
                expected = self.nodes[parent_id].path_label + ("T" if label else "F")
                if child.path_label != expected:
                    raise ValueError(
                        f"{cid!r} path label {child.path_label!r} does not extend its parent")
        for node_id in self.nodes:
            if node_id != self.root_id and node_id not in parents:
                raise ValueError(f"{node_id!r} is disconnected from the root")
        reached = set()
        stack = [self.root_id]
        while stack:
            current = stack.pop()
            if current in reached:
                raise ValueError("cycle detected")
            reached.add(current)
            stack.extend(cid for _, cid in self.children_of(current))
        if reached != set(self.nodes):
            raise ValueError("children map does not span the node set")
        bound = self.config.max_nodes_excluding_root()
        if self.node_count() - 1 > bound:
            raise ValueError(
                f"{self.node_count() - 1} generated nodes exceed the bound {bound}")
        for node in self.nodes.values():
            if node.depth > self.config.depth_limit:
                raise ValueError(f"{node.id!r} exceeds the depth limit")


def tree_nodes(tree: MaieuticTree) -> list[Proposition]:
    """All propositions in deterministic pre-order, root first."""
    out: list[Proposition] = []
    stack = [tree.root_id]
    while stack:
        node_id = stack.pop()
        out.append(tree.nodes[node_id])
        stack.extend(cid for _, cid in reversed(tree.children_of(node_id)))
    return out


def tree_leaves(tree: MaieuticTree) -> list[Proposition]:
    """Propositions without children, in pre-order. A childless root is its own leaf."""
    return [node for node in tree_nodes(tree) if not tree.children_of(node.id)]


def variable_map(tree: MaieuticTree) -> dict[int, str]:
    """One boolean variable per node: 1-based, pre-order, root first."""
    return {position: node.id for position, node in enumerate(tree_nodes(tree), start=1)}


# --- weighted clauses ---

Literal = tuple[int, bool]  # (variable id, polarity; True for the positive literal)


@dataclass(frozen=True)
class WeightedClause:
    """Disjunction of literals with a positive weight and a provenance tag."""

    literals: tuple[Literal, ...]
    weight: float
    origin: ClauseOrigin

    def __post_init__(self):
        object.__setattr__(self, "literals",
                           tuple((int(v), bool(p)) for v, p in self.literals))
        if not self.literals:
            raise ValueError("a clause needs at least one literal")
        seen = [v for v, _ in self.literals]
        if len(seen) != len(set(seen)):
            raise ValueError("duplicate variable within one clause")
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise ValueError("clause weight must be positive and finite")


@dataclass
class WeightedCnf:
    """Clause collection plus the variable-to-node binding.

    Every tree node, the root included, owns exactly one boolean
    variable; the root variable is declared even when no clause
    mentions it.
    """

    variables: dict[int, str]
    clauses: list[WeightedClause] = field(default_factory=list)

    def __post_init__(self):
        declared = set(self.variables)
        for clause in self.clauses:
            for var, _ in clause.literals:
                if var not in declared:
                    raise ValueError(f"clause references undeclared variable {var}")

    def variable_for_node(self, node_id: str) -> int:
        for var, nid in self.variables.items():
            if nid == node_id:
                return var
        raise KeyError(node_id)

    def total_weight(self) -> float:
        return sum(c.weight for c in self.clauses)


# --- serialization ---

_CANONICAL = {"sort_keys": False, "separators": (",", ": "), "indent": 2}


def _proposition_to_dict(node: Proposition) -> dict:
    return {
        "id": node.id,
        "text": node.text,
        "negated_text": node.negated_text,
        "path_label": node.path_label,
        "source_answer": node.source_answer,
        "integrity": node.integrity.value,
        "belief": node.belief,
        "true_prob": node.true_prob,
        "neg_true_prob": node.neg_true_prob,
    }


def _proposition_from_dict(data: dict) -> Proposition:
    return Proposition(
        id=data["id"],
        text=data["text"],
        negated_text=data.get("negated_text", ""),
        path_label=data.get("path_label", ""),
        source_answer=data.get("source_answer"),
        integrity=Integrity(data.get("integrity", "unchecked")),
        belief=data.get("belief"),
        true_prob=data.get("true_prob"),
        neg_true_prob=data.get("neg_true_prob"),
    )


def tree_to_dict(tree: MaieuticTree) -> dict:
    nodes = [_proposition_to_dict(n) for n in tree_nodes(tree)]
    edges = [{"parent": p, "label": label, "child": c} for p, label, c in tree.edges()]
    return {"root": tree.root_id, "nodes": nodes, "edges": edges,
            "config": tree.config.to_dict()}


def tree_from_dict(data: dict) -> MaieuticTree:
    nodes = {d["id"]: _proposition_from_dict(d) for d in data["nodes"]}
    children: dict[str, list[Edge]] = {}
    for edge in data["edges"]:
        children.setdefault(edge["parent"], []).append(
            (bool(edge["label"]), edge["child"]))
    tree = MaieuticTree(
        nodes=nodes,
        children=children,
        config=TreeConfig.from_dict(data.get("config", {})),
        root_id=data["root"],
    )
    tree.validate()
    return tree


def tree_to_json(tree: MaieuticTree) -> str:
    return json.dumps(tree_to_dict(tree), **_CANONICAL) + "\n"


def tree_from_json(text: str) -> MaieuticTree:
    return tree_from_dict(json.loads(text))


_DOT_JSON_MARKER = "// tree-json: "


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _dot_label(node: Proposition, limit: int = 40) -> str:
    text = node.text if len(node.text) <= limit else node.text[:limit - 3] + "..."
    return _dot_escape(f"{node.id}: {text}")


def tree_to_dot(tree: MaieuticTree, assignment: Optional[dict[str, bool]] = None) -> str:
    """Graphviz rendering; node fill encodes the assigned truth value.

    The canonical JSON form rides along in a comment line so the DOT
    file can be converted back without loss.
    """
    assignment = assignment or {}
    lines = ["digraph maieutic_tree {", "  node [shape=box, style=filled];"]
    for node in tree_nodes(tree):
        value = assignment.get(node.id)
        color = "lightgray" if value is None else ("palegreen" if value else "lightcoral")
        lines.append(f'  "{_dot_escape(node.id)}" [label="{_dot_label(node)}", '
                     f'fillcolor="{color}"];')
    for parent, label, child in tree.edges():
        lines.append(f'  "{_dot_escape(parent)}" -> "{_dot_escape(child)}" '
                     f'[label="{"T" if label else "F"}"];')
    compact = json.dumps(tree_to_dict(tree), sort_keys=False, separators=(",", ":"))
    lines.append(f"  {_DOT_JSON_MARKER}{compact}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def tree_from_dot(text: str) -> MaieuticTree:
    """Recover a tree from a DOT file produced by :func:`tree_to_dot`."""
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith(_DOT_JSON_MARKER):
            return tree_from_dict(json.loads(stripped[len(_DOT_JSON_MARKER):]))
    raise ValueError("DOT input carries no embedded tree JSON")


def replace_node(tree: MaieuticTree, node: Proposition, **changes) -> MaieuticTree:
    """Copy of the tree with one proposition replaced."""
    nodes = dict(tree.nodes)
    nodes[node.id] = replace(node, **changes)
    return MaieuticTree(nodes=nodes, children={k: list(v) for k, v in tree.children.items()},
                        config=tree.config, root_id=tree.root_id)


def prompt_set_to_dict(prompts: PromptSet) -> dict:
    return {
        "mode": prompts.mode.value,
        "examples": [
            {"question": e.question, "answer": e.answer, "explanation": e.explanation}
            for e in prompts.examples
        ],
    }


def prompt_set_from_dict(data: dict) -> PromptSet:
    return PromptSet(
        mode=PromptMode(data["mode"]),
        examples=tuple(
            PromptExample(question=e["question"], answer=bool(e["answer"]),
                          explanation=e.get("explanation"))
            for e in data["examples"]
        ),
    )


def load_prompt_set(path) -> PromptSet:
    with open(path, "r", encoding="utf-8") as handle:
        return prompt_set_from_dict(json.load(handle))


def label_word(label: bool) -> str:
    """Surface form of an answer label as it appears in prompts."""
    return "True" if label else "False"
