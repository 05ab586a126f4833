"""Semantic validation and compilation of knowledge bases.

`validate` re-checks everything a programmatic (non-parsed) model could get
wrong and analyzes rule tables for exhaustiveness and shadowed rows;
`compile_kb` turns a clean model into an immutable, index-resolved
`CompiledGraph`; `flatten` expands a graph into the equivalent single-level
tuple table (and doubles as a brute-force oracle for the engine, so it uses
its own plain first-match interpreter); `kb_stats` reports structural size.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from functools import cached_property
from math import prod
from typing import Optional

from .model import DERIVED, INPUT, Attribute, KnowledgeBase, RuleBlock

ERROR = "error"
WARNING = "warning"

# Rule tables whose child-level product exceeds this are not enumerated;
# exhaustiveness then requires a default row and shadowing falls back to a
# pairwise subsumption check.
EXHAUSTIVE_CHECK_BOUND = 100_000

# Refuse to flatten beyond this many input tuples.
FLATTEN_LIMIT = 1_000_000


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # ERROR or WARNING
    code: str
    message: str
    attribute: Optional[str] = None
    row: Optional[int] = None  # 1-based explicit-row index

    def __str__(self) -> str:
        where = f" [{self.attribute}]" if self.attribute else ""
        return f"{self.severity}: {self.message}{where}"


class CompileError(Exception):
    """Raised when compiling a knowledge base with error diagnostics."""

    def __init__(self, kb_id: str, diagnostics: list[Diagnostic]):
        self.kb_id = kb_id
        self.diagnostics = diagnostics
        errors = [d for d in diagnostics if d.severity == ERROR]
        super().__init__(
            f"knowledge base {kb_id!r} has {len(errors)} error(s):\n"
            + "\n".join(str(d) for d in errors)
        )


class FlattenTooLargeError(Exception):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"too large to flatten: {count} input tuples exceed the {limit} limit")


# --- compiled form ---------------------------------------------------------


@dataclass(frozen=True)
class CompiledRow:
    """One rule row with patterns resolved to bitmasks over child scales.

    `checks` lists only the non-wildcard positions as (child attribute
    index, level bitmask); an empty tuple is an always-matching row.
    """

    checks: tuple[tuple[int, int], ...]
    output: int
    text: str
    is_default: bool = False


@dataclass(frozen=True)
class CompiledBlock:
    children: tuple[int, ...]
    rows: tuple[CompiledRow, ...]  # default folded in as a final wildcard row


@dataclass(frozen=True)
class InputSpec:
    """Input-manifest entry: everything a questionnaire needs to ask."""

    name: str
    index: int
    scale: str
    levels: tuple[str, ...]
    question: str
    help: tuple[str, ...]


@dataclass(frozen=True)
class CompiledGraph:
    kb_id: str
    version: int
    names: tuple[str, ...]
    kinds: tuple[str, ...]  # INPUT / DERIVED per attribute
    scale_names: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]
    blocks: tuple[Optional[CompiledBlock], ...]
    topo: tuple[int, ...]  # derived attributes in evaluation order
    input_indices: tuple[int, ...]
    manifest: tuple[InputSpec, ...]
    goal: int
    input_ancestry: tuple[Optional[frozenset[int]], ...]  # per derived attribute

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    @cached_property
    def level_index(self) -> tuple[dict[str, int], ...]:
        return tuple({lvl: i for i, lvl in enumerate(levels)} for levels in self.levels)

    @property
    def goal_name(self) -> str:
        return self.names[self.goal]

    def is_input(self, idx: int) -> bool:
        return self.kinds[idx] == INPUT


@dataclass(frozen=True)
class FlatRuleList:
    """Total mapping from every concrete input tuple to the goal level."""

    kb_id: str
    goal: str
    inputs: tuple[str, ...]
    input_levels: tuple[tuple[str, ...], ...]
    rows: dict[tuple[str, ...], str]

    def value(self, assignment: dict[str, str]) -> str:
        key = tuple(assignment[name] for name in self.inputs)
        return self.rows[key]


@dataclass(frozen=True)
class KbStats:
    attribute_count: int
    input_count: int
    derived_count: int
    hierarchical_rule_count: int
    flat_tuple_count: int
    max_depth: int

    def to_dict(self) -> dict:
        return {
            "attribute_count": self.attribute_count,
            "input_count": self.input_count,
            "derived_count": self.derived_count,
            "hierarchical_rule_count": self.hierarchical_rule_count,
            "flat_tuple_count": self.flat_tuple_count,
            "max_depth": self.max_depth,
        }


# --- validation ------------------------------------------------------------


def _pattern_mask(pattern: Optional[tuple[str, ...]], levels: tuple[str, ...]) -> Optional[int]:
    """Bitmask of the pattern over a scale; None for wildcard."""
    if pattern is None:
        return None
    mask = 0
    for lvl in pattern:
        mask |= 1 << levels.index(lvl)
    return mask


def _row_checks(
    block: RuleBlock, child_levels: list[tuple[str, ...]]
) -> list[list[tuple[int, int]]]:
    """Per row: (position, mask) pairs for non-wildcard positions."""
    out = []
    for row in block.rows:
        checks = []
        for pos, pat in enumerate(row.patterns):
            mask = _pattern_mask(pat, child_levels[pos])
            if mask is not None:
                checks.append((pos, mask))
        out.append(checks)
    return out


def _analyze_block(
    attr: Attribute, block: RuleBlock, child_levels: list[tuple[str, ...]], diags: list[Diagnostic]
) -> None:
    """Exhaustiveness (error) and shadowed-row (warning) analysis."""
    sizes = [len(levels) for levels in child_levels]
    product = prod(sizes)
    checks = _row_checks(block, child_levels)
    has_default = block.default is not None

    if product <= EXHAUSTIVE_CHECK_BOUND:
        fired = [False] * len(checks)
        pending = len(checks)
        uncovered_example: Optional[tuple[int, ...]] = None
        for combo in itertools.product(*[range(n) for n in sizes]):
            for ri, row_checks in enumerate(checks):
                for pos, mask in row_checks:
                    if not (mask >> combo[pos]) & 1:
                        break
                else:
                    if not fired[ri]:
                        fired[ri] = True
                        pending -= 1
                    break
            else:
                if uncovered_example is None:
                    uncovered_example = combo
            if pending == 0 and has_default:
                break  # every row reachable and the default guarantees totality
        if not has_default and uncovered_example is not None:
            example = ", ".join(
                child_levels[pos][lvl] for pos, lvl in enumerate(uncovered_example)
            )
            diags.append(
                Diagnostic(
                    ERROR,
                    "not-exhaustive",
                    f"rule block is neither exhaustive nor defaulted: "
                    f"no row matches ({example})",
                    attr.name,
                )
            )
        for ri, hit in enumerate(fired):
            if not hit:
                diags.append(
                    Diagnostic(
                        WARNING,
                        "unreachable-row",
                        f"unreachable row {ri + 1} (shadowed by earlier rows)",
                        attr.name,
                        row=ri + 1,
                    )
                )
    else:
        if not has_default:
            diags.append(
                Diagnostic(
                    ERROR,
                    "not-exhaustive",
                    f"rule block over {product} child tuples cannot be verified "
                    f"exhaustive; add a default row",
                    attr.name,
                )
            )
        # Subsumption is a sound (if incomplete) shadowing test at any size.
        full = [(1 << n) - 1 for n in sizes]
        masks = []
        for row in block.rows:
            row_masks = []
            for pos, pat in enumerate(row.patterns):
                m = _pattern_mask(pat, child_levels[pos])
                row_masks.append(full[pos] if m is None else m)
            masks.append(row_masks)
        for i in range(len(masks)):
            for j in range(i):
                if all(mi & mj == mi for mi, mj in zip(masks[i], masks[j])):
                    diags.append(
                        Diagnostic(
                            WARNING,
                            "unreachable-row",
                            f"unreachable row {i + 1} (subsumed by row {j + 1})",
                            attr.name,
                            row=i + 1,
                        )
                    )
                    break


def validate(kb: KnowledgeBase) -> list[Diagnostic]:
    """All structural diagnostics for a knowledge base; empty means compilable."""
    diags: list[Diagnostic] = []
    attrs = kb.attribute_by_name

    # reference and level checks (parsed models already guarantee these;
    # programmatic ones may not)
    for attr in kb.attributes:
        scale = kb.scale_by_name.get(attr.scale)
        if scale is None:
            diags.append(
                Diagnostic(ERROR, "unknown-scale", f"unknown scale {attr.scale!r}", attr.name)
            )
            continue
        if attr.is_input:
            continue
        block = attr.rules
        assert block is not None
        bad_ref = False
        for child in block.children:
            if child not in attrs:
                diags.append(
                    Diagnostic(
                        ERROR,
                        "unknown-child",
                        f"undeclared child reference {child!r}",
                        attr.name,
                    )
                )
                bad_ref = True
            elif attrs[child].scale not in kb.scale_by_name:
                bad_ref = True
        if bad_ref:
            continue
        child_levels = [kb.scale_of(c).levels for c in block.children]
        bad_level = False
        for ri, row in enumerate(block.rows):
            for pos, pat in enumerate(row.patterns):
                if pat is None:
                    continue
                for lvl in pat:
                    if lvl not in child_levels[pos]:
                        diags.append(
                            Diagnostic(
                                ERROR,
                                "bad-level",
                                f"row {ri + 1}: level {lvl!r} not in scale of "
                                f"{block.children[pos]!r}",
                                attr.name,
                                row=ri + 1,
                            )
                        )
                        bad_level = True
            if row.output not in scale:
                diags.append(
                    Diagnostic(
                        ERROR,
                        "bad-level",
                        f"row {ri + 1}: output {row.output!r} not in scale {scale.name!r}",
                        attr.name,
                        row=ri + 1,
                    )
                )
                bad_level = True
        if block.default is not None and block.default not in scale:
            diags.append(
                Diagnostic(
                    ERROR,
                    "bad-level",
                    f"default output {block.default!r} not in scale {scale.name!r}",
                    attr.name,
                )
            )
            bad_level = True
        if not bad_level:
            _analyze_block(attr, block, child_levels, diags)

    # goal
    goal_attr = attrs.get(kb.goal)
    if goal_attr is None:
        diags.append(Diagnostic(ERROR, "bad-goal", f"unknown goal attribute {kb.goal!r}"))
    elif goal_attr.is_input:
        diags.append(Diagnostic(ERROR, "bad-goal", f"goal {kb.goal!r} must be derived"))

    # dependency cycles (colored DFS, declaration order, deterministic)
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[str, int] = {a.name: WHITE for a in kb.attributes}
    stack: list[str] = []

    def visit(name: str) -> None:
        attr = attrs.get(name)
        if attr is None or attr.is_input:
            return
        color[name] = GREY
        stack.append(name)
        assert attr.rules is not None
        for child in attr.rules.children:
            if child not in color:
                continue
            if color[child] == GREY:
                cycle = stack[stack.index(child):] + [child]
                diags.append(
                    Diagnostic(
                        ERROR,
                        "cycle",
                        "dependency cycle: " + " -> ".join(cycle),
                        attribute=name,
                    )
                )
            elif color[child] == WHITE:
                visit(child)
        stack.pop()
        color[name] = BLACK

    for attr in kb.attributes:
        if color[attr.name] == WHITE:
            visit(attr.name)

    # attributes unreachable from the goal
    if goal_attr is not None and not goal_attr.is_input and not any(
        d.code == "cycle" for d in diags
    ):
        reachable: set[str] = set()
        frontier = [kb.goal]
        while frontier:
            name = frontier.pop()
            if name in reachable or name not in attrs:
                continue
            reachable.add(name)
            attr = attrs[name]
            if not attr.is_input and attr.rules is not None:
                frontier.extend(attr.rules.children)
        for attr in kb.attributes:
            if attr.name not in reachable:
                diags.append(
                    Diagnostic(
                        WARNING,
                        "unreachable-attribute",
                        f"attribute {attr.name!r} is unreachable from goal {kb.goal!r}",
                        attr.name,
                    )
                )

    return diags


# --- compilation -----------------------------------------------------------


def _topo_order(kb: KnowledgeBase) -> list[str]:
    """Derived attributes in dependency order, ties by declaration order."""
    position = {a.name: i for i, a in enumerate(kb.attributes)}
    pending: dict[str, set[str]] = {}
    dependents: dict[str, list[str]] = {}
    for attr in kb.derived:
        assert attr.rules is not None
        deps = {c for c in attr.rules.children if not kb.attribute_by_name[c].is_input}
        pending[attr.name] = deps
        for dep in deps:
            dependents.setdefault(dep, []).append(attr.name)

    order: list[str] = []
    heap = [(position[name], name) for name, deps in pending.items() if not deps]
    heapq.heapify(heap)
    while heap:
        _, name = heapq.heappop(heap)
        order.append(name)
        for dep in dependents.get(name, ()):
            deps = pending[dep]
            deps.discard(name)
            if not deps:
                heapq.heappush(heap, (position[dep], dep))
    return order


def _row_text(row_patterns, output: str) -> str:
    pats = ", ".join("*" if p is None else "|".join(p) for p in row_patterns)
    return f"({pats}) -> {output}"


def compile_kb(kb: KnowledgeBase) -> CompiledGraph:
    """Compile a validated knowledge base into an executable graph.

    Raises CompileError when `validate` reports any error-severity
    diagnostic. Compilation is pure and deterministic: identical models
    give structurally identical graphs.
    """
    diagnostics = validate(kb)
    if any(d.severity == ERROR for d in diagnostics):
        raise CompileError(kb.id, diagnostics)

    names = tuple(a.name for a in kb.attributes)
    index = {name: i for i, name in enumerate(names)}
    kinds = tuple(a.kind for a in kb.attributes)
    scale_names = tuple(a.scale for a in kb.attributes)
    levels = tuple(kb.scale_by_name[a.scale].levels for a in kb.attributes)

    blocks: list[Optional[CompiledBlock]] = []
    for attr in kb.attributes:
        if attr.is_input:
            blocks.append(None)
            continue
        block = attr.rules
        assert block is not None
        children = tuple(index[c] for c in block.children)
        rows: list[CompiledRow] = []
        for row in block.rows:
            checks = []
            for pos, pat in enumerate(row.patterns):
                mask = _pattern_mask(pat, levels[children[pos]])
                if mask is not None:
                    checks.append((children[pos], mask))
            rows.append(
                CompiledRow(
                    checks=tuple(checks),
                    output=levels[index[attr.name]].index(row.output),
                    text=_row_text(row.patterns, row.output),
                )
            )
        if block.default is not None:
            rows.append(
                CompiledRow(
                    checks=(),
                    output=levels[index[attr.name]].index(block.default),
                    text=f"default -> {block.default}",
                    is_default=True,
                )
            )
        blocks.append(CompiledBlock(children=children, rows=tuple(rows)))

    topo = tuple(index[name] for name in _topo_order(kb))
    input_indices = tuple(i for i, kind in enumerate(kinds) if kind == INPUT)
    manifest = tuple(
        InputSpec(
            name=names[i],
            index=i,
            scale=scale_names[i],
            levels=levels[i],
            question=kb.attributes[i].question or "",
            help=tuple(kb.attributes[i].help.chain()) if kb.attributes[i].help else (),
        )
        for i in input_indices
    )

    # transitive input ancestry per derived attribute, in topo order
    ancestry: list[Optional[frozenset[int]]] = [None] * len(names)
    for idx in topo:
        block = blocks[idx]
        assert block is not None
        acc: set[int] = set()
        for child in block.children:
            if kinds[child] == INPUT:
                acc.add(child)
            else:
                acc |= ancestry[child] or frozenset()
        ancestry[idx] = frozenset(acc)

    graph = CompiledGraph(
        kb_id=kb.id,
        version=kb.version,
        names=names,
        kinds=kinds,
        scale_names=scale_names,
        levels=levels,
        blocks=tuple(blocks),
        topo=topo,
        input_indices=input_indices,
        manifest=manifest,
        goal=index[kb.goal],
        input_ancestry=tuple(ancestry),
    )
    # materialize the lookup caches now so first-evaluation latency stays flat
    graph.index
    graph.level_index
    return graph


# --- flattening ------------------------------------------------------------


def flatten(graph: CompiledGraph, limit: int = FLATTEN_LIMIT) -> FlatRuleList:
    """Expand the goal's rule hierarchy into a total single-level table.

    Uses a plain two-valued first-match interpreter (not the engine), so the
    result is an independent oracle for `engine.evaluate` on full
    assignments.
    """
    goal_anc = graph.input_ancestry[graph.goal] or frozenset()
    inputs = tuple(i for i in graph.input_indices if i in goal_anc)
    sizes = [len(graph.levels[i]) for i in inputs]
    count = prod(sizes) if sizes else 1
    if count > limit:
        raise FlattenTooLargeError(count, limit)

    # only derived attributes the goal actually needs
    needed_set: set[int] = set()
    frontier = [graph.goal]
    while frontier:
        idx = frontier.pop()
        if idx in needed_set or graph.kinds[idx] == INPUT:
            continue
        needed_set.add(idx)
        block = graph.blocks[idx]
        assert block is not None
        frontier.extend(block.children)
    needed = [d for d in graph.topo if d in needed_set]
    status = [-1] * len(graph.names)
    rows: dict[tuple[str, ...], str] = {}
    goal_levels = graph.levels[graph.goal]

    for combo in itertools.product(*[range(n) for n in sizes]):
        for i, lvl in zip(inputs, combo):
            status[i] = lvl
        for d in needed:
            block = graph.blocks[d]
            assert block is not None
            for row in block.rows:
                for child, mask in row.checks:
                    if not (mask >> status[child]) & 1:
                        break
                else:
                    status[d] = row.output
                    break
        key = tuple(graph.levels[i][lvl] for i, lvl in zip(inputs, combo))
        rows[key] = goal_levels[status[graph.goal]]

    return FlatRuleList(
        kb_id=graph.kb_id,
        goal=graph.goal_name,
        inputs=tuple(graph.names[i] for i in inputs),
        input_levels=tuple(graph.levels[i] for i in inputs),
        rows=rows,
    )


# --- stats ------------------------------------------------------------------


def kb_stats(kb: KnowledgeBase) -> KbStats:
    """Structural size measures of a valid knowledge base."""
    attrs = kb.attribute_by_name
    inputs = kb.inputs
    derived = kb.derived

    rule_count = sum(a.rules.row_count for a in derived if a.rules is not None)

    depth: dict[str, int] = {}

    def depth_of(name: str, trail: tuple[str, ...] = ()) -> int:
        if name in depth:
            return depth[name]
        if name in trail:
            raise ValueError(f"dependency cycle through {name!r}; validate first")
        attr = attrs[name]
        if attr.is_input:
            depth[name] = 0
            return 0
        assert attr.rules is not None
        d = 1 + max(depth_of(c, trail + (name,)) for c in attr.rules.children)
        depth[name] = d
        return d

    max_depth = max((depth_of(a.name) for a in kb.attributes), default=0)

    # cartesian size over the goal's input ancestry
    goal_inputs: set[str] = set()
    frontier = [kb.goal]
    seen: set[str] = set()
    while frontier:
        name = frontier.pop()
        if name in seen:
            continue
        seen.add(name)
        attr = attrs[name]
        if attr.is_input:
            goal_inputs.add(name)
        elif attr.rules is not None:
            frontier.extend(attr.rules.children)
    flat_count = prod(len(kb.scale_of(name).levels) for name in goal_inputs) if goal_inputs else 1

    return KbStats(
        attribute_count=len(kb.attributes),
        input_count=len(inputs),
        derived_count=len(derived),
        hierarchical_rule_count=rule_count,
        flat_tuple_count=flat_count,
        max_depth=max_depth,
    )
