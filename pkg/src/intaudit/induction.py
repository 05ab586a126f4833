"""ID3 induction of rule trees from cases, and case/KB consistency checks.

Plain ID3: split on the attribute with maximum information gain (Shannon
entropy in bits), recurse per scale level, stop on pure sets or exhausted
attribute pools. Empty partitions become leaves carrying the parent's
majority outcome; majority ties go to the level earliest in the target
scale. Gain ties go to the attribute declared first. Induced trees convert
to rule blocks so they live in the same representation as expert rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from .compiler import CompiledGraph
from .engine import evaluate
from .kbdl import ParseFailure, ParseError
from .model import (
    Attribute,
    KnowledgeBase,
    Pattern,
    RuleBlock,
    RuleRow,
    Scale,
)


class InductionError(ValueError):
    pass


class InconsistentCasesError(InductionError):
    """Identical inputs recorded with different outcomes."""

    def __init__(self, conflicts: list[tuple[str, str]]):
        self.conflicts = conflicts
        pairs = "; ".join(f"{a} vs {b}" for a, b in conflicts)
        super().__init__(f"inconsistent duplicate cases: {pairs}")


@dataclass(frozen=True)
class Case:
    values: dict[str, str]
    outcome: str
    label: Optional[str] = None


@dataclass(frozen=True)
class CaseSet:
    attributes: tuple[tuple[str, Scale], ...]  # declaration order matters
    target: Scale
    cases: tuple[Case, ...]

    def __post_init__(self) -> None:
        for i, case in enumerate(self.cases):
            for name, scale in self.attributes:
                if name not in case.values:
                    raise InductionError(f"{self.case_label(i)} misses attribute {name!r}")
                if case.values[name] not in scale:
                    raise InductionError(
                        f"{self.case_label(i)}: {case.values[name]!r} not in scale of {name!r}"
                    )
            if case.outcome not in self.target:
                raise InductionError(
                    f"{self.case_label(i)}: outcome {case.outcome!r} not in target scale"
                )

    def case_label(self, i: int) -> str:
        label = self.cases[i].label
        return label if label else f"case {i + 1}"


@dataclass(frozen=True)
class Leaf:
    outcome: str


@dataclass(frozen=True)
class Split:
    attribute: str
    branches: tuple[tuple[str, "Node"], ...]  # one per level, scale order


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class DecisionTree:
    root: Node
    depth: int
    leaf_count: int

    def classify(self, values: dict[str, str]) -> str:
        node = self.root
        while isinstance(node, Split):
            level = values[node.attribute]
            node = dict(node.branches)[level]
        return node.outcome

    def split_attributes(self) -> list[str]:
        """Attributes used anywhere in the tree, discovery order."""
        seen: list[str] = []

        def walk(node: Node) -> None:
            if isinstance(node, Split):
                if node.attribute not in seen:
                    seen.append(node.attribute)
                for _, child in node.branches:
                    walk(child)

        walk(self.root)
        return seen


def entropy(counts: dict[str, int]) -> float:
    """Shannon entropy in bits of an outcome histogram."""
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = 0.0
    for n in counts.values():
        if n:
            p = n / total
            h -= p * math.log2(p)
    return h


def _outcome_counts(cases: list[Case]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for case in cases:
        counts[case.outcome] = counts.get(case.outcome, 0) + 1
    return counts


def information_gain(cases: list[Case], attribute: str, levels: tuple[str, ...]) -> float:
    """Entropy reduction from splitting `cases` on `attribute`."""
    base = entropy(_outcome_counts(cases))
    total = len(cases)
    remainder = 0.0
    for level in levels:
        subset = [c for c in cases if c.values[attribute] == level]
        if subset:
            remainder += len(subset) / total * entropy(_outcome_counts(subset))
    return base - remainder


def _majority(counts: dict[str, int], target: Scale) -> str:
    """Most common outcome; ties resolved by target scale order."""
    best = max(counts.values())
    for level in target.levels:
        if counts.get(level, 0) == best:
            return level
    raise AssertionError("unreachable: counts keys are target levels")


def _check_consistency(cases: CaseSet) -> None:
    seen: dict[tuple[str, ...], tuple[int, str]] = {}
    names = [name for name, _ in cases.attributes]
    conflicts: list[tuple[str, str]] = []
    for i, case in enumerate(cases.cases):
        key = tuple(case.values[n] for n in names)
        if key in seen:
            j, outcome = seen[key]
            if outcome != case.outcome:
                conflicts.append((cases.case_label(j), cases.case_label(i)))
        else:
            seen[key] = (i, case.outcome)
    if conflicts:
        raise InconsistentCasesError(conflicts)


def induce_tree(cases: CaseSet) -> DecisionTree:
    """Standard ID3 over a consistent case set."""
    if not cases.cases:
        raise InductionError("empty case set")
    if not cases.attributes:
        raise InductionError("no candidate attributes")
    _check_consistency(cases)

    scale_of = dict(cases.attributes)
    order = {name: i for i, (name, _) in enumerate(cases.attributes)}

    def build(subset: list[Case], candidates: list[str]) -> Node:
        counts = _outcome_counts(subset)
        if len(counts) == 1:
            return Leaf(next(iter(counts)))
        if not candidates:
            return Leaf(_majority(counts, cases.target))
        best_attr = max(
            candidates,
            key=lambda a: (information_gain(subset, a, scale_of[a].levels), -order[a]),
        )
        majority = _majority(counts, cases.target)
        remaining = [a for a in candidates if a != best_attr]
        branches = []
        for level in scale_of[best_attr].levels:
            partition = [c for c in subset if c.values[best_attr] == level]
            if partition:
                branches.append((level, build(partition, remaining)))
            else:
                branches.append((level, Leaf(majority)))
        return Split(best_attr, tuple(branches))

    root = build(list(cases.cases), [name for name, _ in cases.attributes])

    def measure(node: Node) -> tuple[int, int]:
        if isinstance(node, Leaf):
            return 0, 1
        depths, leaves = zip(*(measure(child) for _, child in node.branches))
        return 1 + max(depths), sum(leaves)

    depth, leaf_count = measure(root)
    return DecisionTree(root, depth, leaf_count)


def tree_to_ruleblock(tree: DecisionTree, cases: CaseSet) -> RuleBlock:
    """Rewrite a tree as a first-match rule block over the case attributes.

    One row per root-to-leaf path, wildcards where the path never tested an
    attribute, plus a majority default. Paths are mutually exclusive, so
    first-match evaluation reproduces the tree's classification exactly; a
    single-leaf tree becomes a default-only block.
    """
    children = tuple(name for name, _ in cases.attributes)
    rows: list[RuleRow] = []

    def walk(node: Node, bound: dict[str, str]) -> None:
        if isinstance(node, Leaf):
            patterns: list[Pattern] = [
                (bound[c],) if c in bound else None for c in children
            ]
            rows.append(RuleRow(tuple(patterns), node.outcome))
            return
        for level, child in node.branches:
            walk(child, {**bound, node.attribute: level})

    if isinstance(tree.root, Split):
        walk(tree.root, {})
    default = _majority(_outcome_counts(list(cases.cases)), cases.target)
    return RuleBlock(children, tuple(rows), default)


def caseset_to_kb(
    cases: CaseSet,
    block: RuleBlock,
    kb_id: str = "induced",
    goal_name: str = "outcome",
) -> KnowledgeBase:
    """Wrap an induced rule block in a minimal knowledge base.

    Inputs get placeholder questions; useful for compiling and flattening an
    induced block through the regular pipeline.
    """
    scales: dict[str, Scale] = {}

    def register(scale: Scale) -> str:
        for name, existing in scales.items():
            if existing.levels == scale.levels:
                return name
        name = scale.name
        if name in scales:  # same name, different levels
            name = f"{name}_{len(scales)}"
            scale = Scale(name, scale.levels)
        scales[name] = scale
        return name

    attrs: list[Attribute] = []
    block_children = set(block.children)
    for name, scale in cases.attributes:
        if name not in block_children:
            continue  # block may span fewer attributes when built by hand
        attrs.append(
            Attribute(
                name=name,
                scale=register(scale),
                kind="input",
                question=f"What is the level of {name}?",
            )
        )
    target_scale = register(Scale("outcome_scale", cases.target.levels))
    attrs.append(Attribute(name=goal_name, scale=target_scale, kind="derived", rules=block))
    return KnowledgeBase(
        id=kb_id,
        version=1,
        scales=tuple(scales.values()),
        attributes=tuple(attrs),
        goal=goal_name,
    )


@dataclass(frozen=True)
class CaseCheck:
    label: str
    expected: str
    actual: Optional[str]  # None when the engine leaves the goal unknown

    @property
    def agrees(self) -> Optional[bool]:
        return None if self.actual is None else self.actual == self.expected


@dataclass(frozen=True)
class CaseReport:
    checks: tuple[CaseCheck, ...]

    @property
    def agreements(self) -> int:
        return sum(1 for c in self.checks if c.agrees is True)

    @property
    def disagreements(self) -> int:
        return sum(1 for c in self.checks if c.agrees is False)

    @property
    def unresolved(self) -> int:
        return sum(1 for c in self.checks if c.agrees is None)


def check_cases(graph: CompiledGraph, cases: CaseSet) -> CaseReport:
    """Replay each case through the engine and compare with its outcome."""
    input_names = {graph.names[i] for i in graph.input_indices}
    for name, scale in cases.attributes:
        if name not in input_names:
            raise InductionError(f"case attribute {name!r} is not an input of {graph.kb_id!r}")
        levels = graph.levels[graph.index[name]]
        if scale.levels != levels:
            raise InductionError(
                f"scale mismatch for {name!r}: cases have {scale.levels}, kb has {levels}"
            )
    if cases.target.levels != graph.levels[graph.goal]:
        raise InductionError(
            f"target scale {cases.target.levels} does not match goal scale "
            f"{graph.levels[graph.goal]}"
        )

    checks = []
    for i, case in enumerate(cases.cases):
        result = evaluate(graph, case.values)
        checks.append(
            CaseCheck(
                label=cases.case_label(i),
                expected=case.outcome,
                actual=result.values.get(graph.goal_name),
            )
        )
    return CaseReport(tuple(checks))


# --- CSV ingestion ----------------------------------------------------------


def load_cases_csv(
    text: str,
    attributes: Optional[tuple[tuple[str, Scale], ...]] = None,
    target: Optional[Scale] = None,
) -> CaseSet:
    """Read cases from CSV: header `attr1,...,outcome`, one case per line,
    `#` lines ignored.

    Without explicit scales, each column's levels are inferred in order of
    first appearance (which fixes the ordinal order for tie-breaking).
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InductionError("empty case file")
    header = [cell.strip() for cell in lines[0].split(",")]
    if len(header) < 2:
        raise InductionError("case header needs at least one attribute and an outcome column")
    names = header[:-1]

    rows: list[list[str]] = []
    for ln_no, line in enumerate(lines[1:], start=2):
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) != len(header):
            raise InductionError(
                f"line {ln_no}: expected {len(header)} columns, got {len(cells)}"
            )
        rows.append(cells)
    if not rows:
        raise InductionError("case file has a header but no cases")

    if attributes is None:
        inferred: list[tuple[str, Scale]] = []
        for col, name in enumerate(names):
            levels = list(dict.fromkeys(row[col] for row in rows))
            if len(levels) == 1:
                levels.append(f"not_{levels[0]}")  # scales need two levels
            inferred.append((name, Scale(name, tuple(levels))))
        attributes = tuple(inferred)
    else:
        declared = {name for name, _ in attributes}
        unknown = [n for n in names if n not in declared]
        if unknown:
            raise InductionError(f"undeclared case attributes: {', '.join(unknown)}")
    if target is None:
        outcomes = list(dict.fromkeys(row[-1] for row in rows))
        if len(outcomes) == 1:
            outcomes.append(f"not_{outcomes[0]}")
        target = Scale("outcome", tuple(outcomes))

    cases = tuple(
        Case(values={name: row[i] for i, name in enumerate(names)}, outcome=row[-1])
        for row in rows
    )
    return CaseSet(attributes=attributes, target=target, cases=cases)
