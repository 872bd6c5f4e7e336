"""Natural-language-inference verifier: scripted and HTTP clients, and
the conversion of pairwise NLI judgments into implication clauses.

Each ordered pair of distinct tree nodes (the root included) is judged
as entailment, contradiction or neutral. Entailment compiles to
premise implies hypothesis, contradiction to premise implies
not-hypothesis, neutral to nothing. Clause weights default to the
constant 1; weighting by the judged label's probability is available
but off by default.
"""
from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .core import ClauseOrigin, MaieuticTree, WeightedClause, tree_nodes, variable_map
from .errors import BackendUnavailable, MalformedResponse, MissingFixture

PROB_ORDER = ("entail", "contradict", "neutral")


class NliLabel(str, Enum):
    ENTAIL = "entail"
    CONTRADICT = "contradict"
    NEUTRAL = "neutral"


def _one_hot(label: NliLabel) -> tuple[float, float, float]:
    return tuple(1.0 if name == label.value else 0.0 for name in PROB_ORDER)


@dataclass(frozen=True)
class NliJudgment:
    """Three-way judgment over an ordered sentence pair.

    ``label_probs`` follows the fixed order (entail, contradict,
    neutral), sums to one and must rank the chosen label first.
    """

    premise: str
    hypothesis: str
    label: NliLabel
    label_probs: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "label_probs", tuple(self.label_probs))
        if len(self.label_probs) != 3:
            raise ValueError("label_probs must hold three values")
        for prob in self.label_probs:
            if not (math.isfinite(prob) and 0.0 <= prob <= 1.0):
                raise ValueError(f"label probability {prob!r} outside [0, 1]")
        if abs(sum(self.label_probs) - 1.0) > 1e-6:
            raise ValueError("label probabilities must sum to 1")
        winner = PROB_ORDER[self.label_probs.index(max(self.label_probs))]
        if winner != self.label.value:
            raise ValueError(f"label {self.label.value!r} is not the argmax")

    def label_prob(self) -> float:
        return self.label_probs[PROB_ORDER.index(self.label.value)]


class NliVerifier:
    """Interface: judge one ordered (premise, hypothesis) pair."""

    verifier_id: str = "nli"

    def nli(self, premise: str, hypothesis: str) -> NliJudgment:
        raise NotImplementedError


def _judgment_from_record(premise: str, hypothesis: str, record: Mapping) -> NliJudgment:
    try:
        label = NliLabel(str(record["label"]).lower())
    except (KeyError, ValueError) as exc:
        raise MalformedResponse(f"unusable NLI label in {record!r}") from exc
    probs = record.get("probs")
    if probs is None:
        probs = _one_hot(label)
    return NliJudgment(premise=premise, hypothesis=hypothesis, label=label,
                       label_probs=tuple(float(p) for p in probs))


class ScriptedNliVerifier(NliVerifier):
    """Fixture-driven verifier for offline tests.

    The fixture is a list of ``{premise, hypothesis, label, probs?}``
    records. Identical sentence pairs entail reflexively without a
    fixture entry. Unlisted pairs raise ``MissingFixture`` when strict
    (the default) and judge Neutral otherwise.
    """

    def __init__(self, fixtures: Union[str, Path, Iterable[Mapping]] = (),
                 strict: bool = True, verifier_id: str = "scripted-nli"):
        if isinstance(fixtures, (str, Path)):
            with open(fixtures, "r", encoding="utf-8") as handle:
                records = json.load(handle)
        else:
            records = list(fixtures)
        self._table: dict[tuple[str, str], Mapping] = {}
        for record in records:
            key = (str(record["premise"]), str(record["hypothesis"]))
            self._table[key] = record
        self.strict = strict
        self.verifier_id = verifier_id

    def nli(self, premise: str, hypothesis: str) -> NliJudgment:
        if not premise.strip() or not hypothesis.strip():
            raise ValueError("premise and hypothesis must be non-empty")
        record = self._table.get((premise, hypothesis))
        if record is not None:
            return _judgment_from_record(premise, hypothesis, record)
        if premise == hypothesis:
            return NliJudgment(premise, hypothesis, NliLabel.ENTAIL,
                               _one_hot(NliLabel.ENTAIL))
        if not self.strict:
            return NliJudgment(premise, hypothesis, NliLabel.NEUTRAL,
                               _one_hot(NliLabel.NEUTRAL))
        raise MissingFixture(f"no NLI fixture for ({premise!r}, {hypothesis!r})")


class HttpNliVerifier(NliVerifier):
    """Client for an NLI service: POST {premise, hypothesis} -> {label, probs}.

    The endpoint may come from the ``MAIEUTIC_NLI_ENDPOINT``
    environment variable; transient failures retry with exponential
    backoff.
    """

    def __init__(self, endpoint: Optional[str] = None, timeout: float = 30.0,
                 retries: int = 3, backoff: float = 1.0):
        self.endpoint = endpoint or os.environ.get("MAIEUTIC_NLI_ENDPOINT")
        if not self.endpoint:
            raise ValueError("no NLI endpoint configured (MAIEUTIC_NLI_ENDPOINT unset)")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.verifier_id = f"http-nli:{self.endpoint}"

    def nli(self, premise: str, hypothesis: str) -> NliJudgment:
        import requests

        if not premise.strip() or not hypothesis.strip():
            raise ValueError("premise and hypothesis must be non-empty")
        body = {"premise": premise, "hypothesis": hypothesis}
        last_error: Optional[Exception] = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(self.endpoint, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailable(f"server returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendUnavailable(
                    f"server returned {response.status_code}: {response.text[:200]}")
            try:
                payload = response.json()
            except ValueError as exc:
                raise MalformedResponse(f"response body is not JSON: {exc}") from exc
            return _judgment_from_record(premise, hypothesis, payload)
        raise BackendUnavailable(f"request failed after {self.retries} attempts: {last_error}")


def relation_clauses(tree: MaieuticTree, verifier: NliVerifier,
                     label_prob_weights: bool = False) -> list[WeightedClause]:
    """Implication clauses from NLI judgments over all ordered node pairs.

    Pairs are visited in pre-order; clauses with an identical literal
    set (for instance a contradiction judged in both orders) merge into
    one, keeping the first. Weights are 1 unless ``label_prob_weights``
    substitutes the judged label's probability.
    """
    variables = {node_id: var for var, node_id in variable_map(tree).items()}
    ordered = tree_nodes(tree)
    merged: dict[frozenset, WeightedClause] = {}
    for first in ordered:
        for second in ordered:
            if first.id == second.id:
                continue
            judgment = verifier.nli(first.text, second.text)
            if judgment.label is NliLabel.NEUTRAL:
                continue
            hypothesis_polarity = judgment.label is NliLabel.ENTAIL
            literals = tuple(sorted(((variables[first.id], False),
                                     (variables[second.id], hypothesis_polarity))))
            key = frozenset(literals)
            if key in merged:
                continue
            weight = judgment.label_prob() if label_prob_weights else 1.0
            merged[key] = WeightedClause(literals=literals, weight=weight,
                                         origin=ClauseOrigin.NLI)
    return list(merged.values())
