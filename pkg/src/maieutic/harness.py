"""Inference entry points and the evaluation pipeline.

Three ways to answer a question: direct answer-token scoring, a
generate-then-answer baseline, and the full tree/clause/solve
pipeline. Dataset evaluation runs records through a worker pool,
writes per-record JSONL plus a run manifest, and reports overall and
pairwise accuracy.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from . import compiler, prompts as prompt_templates, solver, tree_builder
from .backend import LmBackend
from .compiler import CompileMode
from .core import (
    MaieuticTree,
    PromptExample,
    PromptMode,
    PromptSet,
    TreeConfig,
    WeightedCnf,
    label_word,
    tree_nodes,
    tree_to_dict,
    tree_to_dot,
)
from .errors import ArgmaxTie, EmptyGeneration, MissingGold
from .solver import Assignment, assignment_by_node, solve
from .verifier import NliVerifier


class Method(str, Enum):
    STANDARD = "standard"
    EXPLANATION_BASED = "explanation_based"
    MAIEUTIC = "maieutic"


@dataclass
class InferenceResult:
    """Answer plus everything needed to justify it."""

    question: str
    answer: bool
    method: Method
    fallback_used: bool = False
    explanation: Optional[str] = None
    tree: Optional[MaieuticTree] = None
    cnf: Optional[WeightedCnf] = None
    assignment: Optional[Assignment] = None
    true_propositions: list[str] = field(default_factory=list)


def _assignment_to_dict(cnf: WeightedCnf, assignment: Assignment) -> dict:
    by_node = assignment_by_node(cnf, assignment)
    return {
        "values": {node_id: by_node[node_id] for node_id in sorted(by_node)},
        "satisfied_weight": assignment.satisfied_weight,
        "violated": list(assignment.violated),
    }


def result_to_dict(result: InferenceResult) -> dict:
    out = {
        "question": result.question,
        "answer": result.answer,
        "method": result.method.value,
        "fallback_used": result.fallback_used,
        "explanation": result.explanation,
        "true_propositions": list(result.true_propositions),
        "tree": tree_to_dict(result.tree) if result.tree is not None else None,
        "clauses": compiler.cnf_to_dict(result.cnf) if result.cnf is not None else None,
        "assignment": _assignment_to_dict(result.cnf, result.assignment)
        if result.assignment is not None and result.cnf is not None else None,
    }
    return out


def result_to_json(result: InferenceResult) -> str:
    return json.dumps(result_to_dict(result), sort_keys=False,
                      separators=(",", ": "), indent=2) + "\n"


@dataclass
class Engine:
    """Wired-together runtime: backend, verifier, prompt sets, tree shape."""

    backend: LmBackend
    tree_config: Optional[TreeConfig] = None
    mode: CompileMode = CompileMode.LIKELIHOOD
    verifier: Optional[NliVerifier] = None
    truth_prompts: Optional[PromptSet] = None
    abductive_prompts: Optional[PromptSet] = None
    explanation_prompts: Optional[PromptSet] = None
    seed: int = 0

    def __post_init__(self):
        if self.tree_config is None:
            self.tree_config = TreeConfig()
        if self.truth_prompts is None:
            self.truth_prompts = prompt_templates.default_prompt_set(PromptMode.QA_PAIRS)
        if self.abductive_prompts is None:
            self.abductive_prompts = prompt_templates.default_prompt_set(
                PromptMode.ABDUCTIVE_TRIPLES)
        if self.explanation_prompts is None:
            self.explanation_prompts = prompt_templates.default_prompt_set(
                PromptMode.QA_EXPLANATION_TRIPLES)


def _qa_pairs_view(prompts: PromptSet) -> PromptSet:
    """The same demonstrations with explanations stripped."""
    if prompts.mode is PromptMode.QA_PAIRS:
        return prompts
    return PromptSet(mode=PromptMode.QA_PAIRS, examples=tuple(
        PromptExample(question=ex.question, answer=ex.answer)
        for ex in prompts.examples))


def infer_standard(question: str, backend: LmBackend,
                   prompts: PromptSet) -> InferenceResult:
    """Answer by scoring the two answer tokens directly.

    An exact tie carries no information; the answer defaults to False
    with the fallback flag raised.
    """
    response = backend.true_prob(question, prompts)
    try:
        answer = response.argmax()
        fallback = False
    except ArgmaxTie:
        answer = False
        fallback = True
    return InferenceResult(question=question, answer=answer,
                           method=Method.STANDARD, fallback_used=fallback)


def infer_explanation_based(question: str, backend: LmBackend,
                            prompts: PromptSet) -> InferenceResult:
    """Generate one explanation, then answer conditioned on it.

    When no usable explanation comes back, the answer falls through to
    direct scoring (with the same demonstrations minus explanations)
    and the fallback flag is raised.
    """
    if prompts.mode is not PromptMode.QA_EXPLANATION_TRIPLES:
        raise ValueError("explanation-based inference needs qa_explanation_triples prompts")
    try:
        explanation = backend.sample_explanations(question, prompts)[0]
    except EmptyGeneration:
        direct = infer_standard(question, backend, _qa_pairs_view(prompts))
        return replace(direct, method=Method.EXPLANATION_BASED, fallback_used=True)
    response = backend.explained_answer_prob(question, explanation, prompts)
    try:
        answer = response.argmax()
        fallback = False
    except ArgmaxTie:
        answer = False
        fallback = True
    return InferenceResult(question=question, answer=answer,
                           method=Method.EXPLANATION_BASED, fallback_used=fallback,
                           explanation=explanation)


def infer_maieutic(question: str, engine: Engine) -> InferenceResult:
    """Grow, prune, compile and solve; the answer is the root's assigned value.

    A tree pruned down to its root carries no usable evidence, so the
    answer falls back to direct scoring with the fallback flag raised.
    """
    tree = tree_builder.build_tree(question, engine.tree_config, engine.backend,
                                   engine.truth_prompts, engine.abductive_prompts)
    pruned = tree_builder.prune(tree)
    if pruned.is_root_only():
        direct = infer_standard(question, engine.backend, engine.truth_prompts)
        return InferenceResult(question=question, answer=direct.answer,
                               method=Method.MAIEUTIC, fallback_used=True, tree=pruned)
    cnf = compiler.compile(pruned, engine.mode, backend=engine.backend,
                           verifier=engine.verifier, prompts=engine.abductive_prompts)
    assignment = solve(cnf)
    by_node = assignment_by_node(cnf, assignment)
    answer = by_node[pruned.root_id]
    true_propositions = [node.text for node in tree_nodes(pruned)
                         if node.id != pruned.root_id and by_node[node.id]]
    result = InferenceResult(question=question, answer=answer, method=Method.MAIEUTIC,
                             tree=pruned, cnf=cnf, assignment=assignment,
                             true_propositions=true_propositions)
    if result.answer != by_node[pruned.root_id]:
        raise AssertionError("answer diverged from the root variable's value")
    return result


def infer(question: str, method: Method, engine: Engine) -> InferenceResult:
    if method is Method.STANDARD:
        return infer_standard(question, engine.backend, engine.truth_prompts)
    if method is Method.EXPLANATION_BASED:
        return infer_explanation_based(question, engine.backend,
                                       engine.explanation_prompts)
    return infer_maieutic(question, engine)


# --- datasets ---

@dataclass(frozen=True)
class DatasetRecord:
    id: str
    question: str
    gold: bool
    pair_id: Optional[str] = None


def _parse_label(value, record_id: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
    raise MissingGold(f"record {record_id!r} has no usable gold label ({value!r})")


def _adapt_native(data: dict, fallback_id: str) -> DatasetRecord:
    record_id = str(data.get("id", fallback_id))
    if "label" not in data:
        raise MissingGold(f"record {record_id!r} has no gold label")
    return DatasetRecord(id=record_id, question=str(data["question"]),
                         gold=_parse_label(data["label"], record_id),
                         pair_id=None if data.get("pair_id") is None
                         else str(data["pair_id"]))


def _adapt_com2sense(data: dict, fallback_id: str) -> DatasetRecord:
    record_id = str(data.get("id", fallback_id))
    if "label" not in data:
        raise MissingGold(f"record {record_id!r} has no gold label")
    return DatasetRecord(id=record_id, question=str(data.get("sent", data.get("sentence"))),
                         gold=_parse_label(data["label"], record_id),
                         pair_id=None if data.get("pair_id") is None
                         else str(data["pair_id"]))


def _adapt_csqa2(data: dict, fallback_id: str) -> DatasetRecord:
    record_id = str(data.get("id", fallback_id))
    if "answer" not in data:
        raise MissingGold(f"record {record_id!r} has no gold label")
    return DatasetRecord(id=record_id, question=str(data["question"]),
                         gold=_parse_label(data["answer"], record_id))


def _adapt_creak(data: dict, fallback_id: str) -> DatasetRecord:
    record_id = str(data.get("ex_id", data.get("id", fallback_id)))
    if "label" not in data:
        raise MissingGold(f"record {record_id!r} has no gold label")
    return DatasetRecord(id=record_id, question=str(data["sentence"]),
                         gold=_parse_label(data["label"], record_id))


DATASET_ADAPTERS: dict[str, Callable[[dict, str], DatasetRecord]] = {
    "native": _adapt_native,
    "com2sense": _adapt_com2sense,
    "csqa2": _adapt_csqa2,
    "creak": _adapt_creak,
}


def load_dataset(path: Union[str, Path], adapter: str = "native") -> list[DatasetRecord]:
    """Read a JSONL dataset, normalizing benchmark-specific field names."""
    if adapter not in DATASET_ADAPTERS:
        raise ValueError(f"unknown adapter {adapter!r}; "
                         f"available: {', '.join(sorted(DATASET_ADAPTERS))}")
    adapt = DATASET_ADAPTERS[adapter]
    records: list[DatasetRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except ValueError as exc:
                raise ValueError(f"{path}: line {line_no}: not valid JSON: {exc}") from exc
            records.append(adapt(data, f"r{line_no}"))
    return records


# --- evaluation ---

@dataclass
class MetricsReport:
    accuracy: float
    pairwise_accuracy: Optional[float]
    record_count: int
    correct_count: int
    pair_count: int
    pair_correct_count: int
    warnings: list[str] = field(default_factory=list)
    results: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "pairwise_accuracy": self.pairwise_accuracy,
            "record_count": self.record_count,
            "correct_count": self.correct_count,
            "pair_count": self.pair_count,
            "pair_correct_count": self.pair_correct_count,
            "warnings": list(self.warnings),
        }


def _complete_pairs(records: Sequence[DatasetRecord],
                    warnings: list[str]) -> list[tuple[str, str]]:
    """Mutually resolvable pairs as sorted id tuples, order of first sighting."""
    by_id = {record.id: record for record in records}
    seen: set[tuple[str, str]] = set()
    pairs: list[tuple[str, str]] = []
    for record in records:
        if record.pair_id is None:
            continue
        if record.pair_id == record.id:
            warnings.append(f"record {record.id!r} is paired with itself; ignored")
            continue
        if record.pair_id not in by_id:
            warnings.append(f"record {record.id!r} references missing "
                            f"counterpart {record.pair_id!r}; pair skipped")
            continue
        key = tuple(sorted((record.id, record.pair_id)))
        if key not in seen:
            seen.add(key)
            pairs.append(key)
    return pairs


def pair_metrics(records: Sequence[DatasetRecord], correct_by_id: dict[str, bool],
                 warnings: list[str]) -> tuple[int, int, Optional[float]]:
    pairs = _complete_pairs(records, warnings)
    if not pairs:
        return 0, 0, None
    both = sum(1 for left, right in pairs
               if correct_by_id[left] and correct_by_id[right])
    return len(pairs), both, both / len(pairs)


def _result_line(record: DatasetRecord, result: InferenceResult) -> dict:
    return {
        "id": record.id,
        "question": record.question,
        "gold": record.gold,
        "pair_id": record.pair_id,
        "answer": result.answer,
        "correct": result.answer == record.gold,
        "method": result.method.value,
        "fallback_used": result.fallback_used,
        "true_propositions": list(result.true_propositions),
        "satisfied_weight": result.assignment.satisfied_weight
        if result.assignment is not None else None,
    }


def _config_hash(engine: Engine, method: Method) -> str:
    payload = {
        "method": method.value,
        "mode": engine.mode.value,
        "tree": engine.tree_config.to_dict(),
        "seed": engine.seed,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def run_manifest(engine: Engine, method: Method, record_count: int) -> dict:
    backend_ids = [engine.backend.backend_id]
    if engine.verifier is not None:
        backend_ids.append(engine.verifier.verifier_id)
    return {
        "config_hash": _config_hash(engine, method),
        "method": method.value,
        "mode": engine.mode.value,
        "seed": engine.seed,
        "record_count": record_count,
        "backend_ids": backend_ids,
        "prompt_hashes": {
            "truth": engine.truth_prompts.content_hash(),
            "abductive": engine.abductive_prompts.content_hash(),
            "explanation": engine.explanation_prompts.content_hash(),
        },
    }


def evaluate(records: Sequence[DatasetRecord], method: Method, engine: Engine,
             workers: int = 4, results_path: Optional[Union[str, Path]] = None,
             manifest_path: Optional[Union[str, Path]] = None) -> MetricsReport:
    """Run inference over a dataset and score it.

    Records are processed by a thread pool but reported strictly in
    input order, so two runs over the same fixtures produce identical
    JSONL bytes. Pairwise accuracy credits a pair only when both
    members are answered correctly.
    """
    if not records:
        raise ValueError("empty dataset")
    identifiers = [record.id for record in records]
    if len(set(identifiers)) != len(identifiers):
        raise ValueError("duplicate record ids in dataset")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(
            lambda record: infer(record.question, method, engine), records))
    lines = [_result_line(record, result) for record, result in zip(records, outcomes)]
    warnings: list[str] = []
    correct_by_id = {line["id"]: line["correct"] for line in lines}
    correct = sum(1 for line in lines if line["correct"])
    pair_count, pair_correct, pairwise = pair_metrics(records, correct_by_id, warnings)
    report = MetricsReport(
        accuracy=correct / len(records),
        pairwise_accuracy=pairwise,
        record_count=len(records),
        correct_count=correct,
        pair_count=pair_count,
        pair_correct_count=pair_correct,
        warnings=warnings,
        results=lines,
    )
    if results_path is not None:
        with open(results_path, "w", encoding="utf-8") as handle:
            for line in lines:
                handle.write(json.dumps(line, sort_keys=True,
                                        separators=(",", ":")) + "\n")
        if manifest_path is None:
            manifest_path = Path(str(results_path) + ".manifest.json")
    if manifest_path is not None:
        manifest = run_manifest(engine, method, len(records))
        Path(manifest_path).write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return report


# --- rendering ---

def _render_literal(cnf: WeightedCnf, literal: tuple[int, bool]) -> str:
    var, polarity = literal
    name = cnf.variables[var]
    return name if polarity else f"¬{name}"


def explain(result: InferenceResult, fmt: str = "text") -> str:
    """Human-readable account of an inference: tree, clauses, objective."""
    if fmt == "json":
        return result_to_json(result)
    if fmt == "dot":
        if result.tree is None:
            raise ValueError("nothing to draw: result carries no tree")
        by_node = assignment_by_node(result.cnf, result.assignment) \
            if result.cnf is not None and result.assignment is not None else None
        return tree_to_dot(result.tree, by_node)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")

    lines = [f"Question: {result.question}",
             f"Answer: {label_word(result.answer)} ({result.method.value})"]
    if result.explanation:
        lines.append(f"Explanation: {result.explanation}")
    if result.fallback_used:
        lines.append("Fallback: answered by direct prompting "
                     "(no usable evidence for the full pipeline).")
        return "\n".join(lines) + "\n"
    if result.tree is None or result.cnf is None or result.assignment is None:
        return "\n".join(lines) + "\n"

    by_node = assignment_by_node(result.cnf, result.assignment)
    lines.append("Propositions:")
    for node in tree_nodes(result.tree):
        value = by_node.get(node.id)
        mark = "?" if value is None else ("T" if value else "F")
        indent = "  " * node.depth
        lines.append(f"  [{mark}] {indent}{node.id}: {node.text} "
                     f"<{node.integrity.value}>")
    lines.append("Clauses:")
    violated = set(result.assignment.violated)
    for index, clause in enumerate(result.cnf.clauses):
        rendered = " ∨ ".join(_render_literal(result.cnf, literal)
                                   for literal in clause.literals)
        status = "violated" if index in violated else "satisfied"
        lines.append(f"  [{status}] ({rendered}) "
                     f"weight {clause.weight:.6g} <{clause.origin.value}>")
    lines.append(f"Satisfied weight: {result.assignment.satisfied_weight:.6g}"
                 f" of {result.cnf.total_weight():.6g}")
    return "\n".join(lines) + "\n"
