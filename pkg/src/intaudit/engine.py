"""Three-valued evaluation of compiled graphs under partial answers.

Every attribute is either resolved to a level or unknown. A derived
attribute resolves through row R exactly when R definitely matches (each
position is a wildcard or its child is resolved inside the pattern set) and
every earlier row definitely fails (some position has a resolved child
outside the set). Anything less definite leaves the attribute unknown, which
makes evaluation monotone: adding answers never changes or retracts a
resolved value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Optional

from .compiler import CompiledGraph

Assignment = Mapping[str, str]


class EvaluationError(ValueError):
    """Unknown input name or a level outside the input's scale."""


@dataclass(frozen=True)
class FiredRule:
    """Which row resolved a derived attribute, with the child levels it saw."""

    row_index: int
    row_text: str
    output: str
    children: tuple[tuple[str, Optional[str]], ...]  # (child name, level or None)


@dataclass(frozen=True)
class EvaluationResult:
    kb_id: str
    values: dict[str, str]  # resolved attribute -> level
    unknowns: tuple[str, ...]
    trace: dict[str, FiredRule]  # per resolved derived attribute
    timestamp: datetime = field(compare=False, repr=False, default_factory=lambda: datetime.now(timezone.utc))

    def status(self, name: str) -> Optional[str]:
        return self.values.get(name)


@dataclass(frozen=True)
class ExplanationNode:
    attribute: str
    kind: str  # input / derived
    value: Optional[str]  # None = unknown
    fired: Optional[FiredRule]
    children: tuple[ExplanationNode, ...]

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "kind": self.kind,
            "status": "resolved" if self.value is not None else "unknown",
            "value": self.value,
            "fired": None
            if self.fired is None
            else {
                "row": self.fired.row_index,
                "pattern": self.fired.row_text,
                "output": self.fired.output,
            },
            "children": [c.to_dict() for c in self.children],
        }


def _statuses(graph: CompiledGraph, answers: Assignment) -> tuple[list[int], dict[int, int]]:
    """Run the three-valued pass; returns per-attribute level index (-1 =
    unknown) and the fired-row index per resolved derived attribute."""
    status = [-1] * len(graph.names)
    index = graph.index
    for name, level in answers.items():
        idx = index.get(name)
        if idx is None or graph.kinds[idx] != "input":
            raise EvaluationError(f"unknown input {name!r}")
        li = graph.level_index[idx].get(level)
        if li is None:
            raise EvaluationError(
                f"{level!r} not in scale {graph.scale_names[idx]!r} of input {name!r}"
            )
        status[idx] = li

    fired: dict[int, int] = {}
    for d in graph.topo:
        block = graph.blocks[d]
        assert block is not None
        for ri, row in enumerate(block.rows):
            definite = True
            failed = False
            for child, mask in row.checks:
                s = status[child]
                if s < 0:
                    definite = False
                elif not (mask >> s) & 1:
                    failed = True
                    break
            if failed:
                continue  # this row definitely fails; try the next
            if definite:
                status[d] = row.output
                fired[d] = ri
            break  # matched, or undecidable and blocking every later row
    return status, fired


def evaluate(graph: CompiledGraph, answers: Assignment) -> EvaluationResult:
    """Resolve every attribute the answers determine; the rest stay unknown.

    Pure: identical (graph, answers) give identical results and traces.
    """
    status, fired = _statuses(graph, answers)
    values: dict[str, str] = {}
    unknowns: list[str] = []
    for idx, name in enumerate(graph.names):
        if status[idx] >= 0:
            values[name] = graph.levels[idx][status[idx]]
        else:
            unknowns.append(name)

    trace: dict[str, FiredRule] = {}
    for d, ri in fired.items():
        block = graph.blocks[d]
        assert block is not None
        row = block.rows[ri]
        trace[graph.names[d]] = FiredRule(
            row_index=ri,
            row_text=row.text,
            output=graph.levels[d][row.output],
            children=tuple(
                (
                    graph.names[c],
                    graph.levels[c][status[c]] if status[c] >= 0 else None,
                )
                for c in block.children
            ),
        )
    return EvaluationResult(
        kb_id=graph.kb_id, values=values, unknowns=tuple(unknowns), trace=trace
    )


def explain(result: EvaluationResult, graph: CompiledGraph, attribute: str) -> ExplanationNode:
    """Explanation tree for one attribute, descending to the inputs."""
    idx = graph.index.get(attribute)
    if idx is None:
        raise EvaluationError(f"unknown attribute {attribute!r}")

    def build(i: int) -> ExplanationNode:
        name = graph.names[i]
        block = graph.blocks[i]
        if block is None:
            return ExplanationNode(name, "input", result.status(name), None, ())
        children = tuple(build(c) for c in block.children)
        return ExplanationNode(name, "derived", result.status(name), result.trace.get(name), children)

    return build(idx)


def next_questions(graph: CompiledGraph, answers: Assignment, k: int) -> list[str]:
    """The k most useful unanswered inputs.

    Inputs are ranked by how many currently-unknown derived attributes carry
    them in their input ancestry, ties kept in declaration order. Empty once
    the goal resolves; inputs that appear in no unknown ancestry are omitted
    (answering them cannot resolve anything).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    status, _ = _statuses(graph, answers)
    if status[graph.goal] >= 0:
        return []
    unknown_derived = [d for d in graph.topo if status[d] < 0]
    scored: list[tuple[int, int, str]] = []
    for i in graph.input_indices:
        if status[i] >= 0:
            continue
        count = sum(1 for d in unknown_derived if i in (graph.input_ancestry[d] or ()))
        if count > 0:
            scored.append((-count, i, graph.names[i]))
    scored.sort()
    return [name for _, _, name in scored[:k]]
