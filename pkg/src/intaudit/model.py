"""Declarative domain model: knowledge bases, rule blocks, and overlay definitions.

Everything here is an immutable value object. Parsed models and
programmatically built models share these types; semantic validation
(cycles, exhaustiveness, reference resolution) lives in `compiler` and
`metalayer`, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional

INPUT = "input"
DERIVED = "derived"

MAX_HELP_DEPTH = 5

# A pattern position is either a wildcard (None) or a non-empty set of
# level names, kept in source order.
Pattern = Optional[tuple[str, ...]]


@dataclass(frozen=True)
class Scale:
    """Ordered enumeration of qualitative levels, lowest first."""

    name: str
    levels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.levels) < 2:
            raise ValueError(f"scale {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"scale {self.name!r} has duplicate levels")

    def index(self, level: str) -> int:
        return self.levels.index(level)

    def __contains__(self, level: str) -> bool:
        return level in self.levels


@dataclass(frozen=True)
class HelpNode:
    """One layer of drill-down help; `deeper` is the next layer, if any."""

    text: str
    deeper: Optional[HelpNode] = None

    def chain(self) -> list[str]:
        """Flatten the drill-down chain into a list of texts."""
        out, node = [], self
        while node is not None:
            out.append(node.text)
            node = node.deeper
        return out

    @staticmethod
    def from_chain(texts: list[str]) -> Optional[HelpNode]:
        node: Optional[HelpNode] = None
        for text in reversed(texts):
            node = HelpNode(text, node)
        return node


@dataclass(frozen=True)
class RuleRow:
    """One production rule: per-child patterns and the output level."""

    patterns: tuple[Pattern, ...]
    output: str

    def __post_init__(self) -> None:
        for pat in self.patterns:
            if pat is not None:
                if not pat:
                    raise ValueError("pattern level-set may not be empty")
                if len(set(pat)) != len(pat):
                    raise ValueError("pattern level-set has duplicates")


@dataclass(frozen=True)
class RuleBlock:
    """Decision table for one derived attribute.

    Rows fire first-match in declaration order; `default` acts as a final
    all-wildcard row.
    """

    children: tuple[str, ...]
    rows: tuple[RuleRow, ...]
    default: Optional[str] = None

    def __post_init__(self) -> None:
        for i, row in enumerate(self.rows):
            if len(row.patterns) != len(self.children):
                raise ValueError(
                    f"row {i + 1}: arity mismatch, expected {len(self.children)} "
                    f"patterns, got {len(row.patterns)}"
                )

    @property
    def row_count(self) -> int:
        """Total rows including the default, when present."""
        return len(self.rows) + (1 if self.default is not None else 0)


@dataclass(frozen=True)
class Attribute:
    name: str
    scale: str  # scale name; resolved through the owning KnowledgeBase
    kind: str  # INPUT or DERIVED
    question: Optional[str] = None
    help: Optional[HelpNode] = None
    rules: Optional[RuleBlock] = None

    def __post_init__(self) -> None:
        if self.kind == INPUT:
            if self.question is None or self.rules is not None:
                raise ValueError(f"input attribute {self.name!r} needs a question and no rules")
        elif self.kind == DERIVED:
            if self.rules is None or self.question is not None:
                raise ValueError(f"derived attribute {self.name!r} needs rules and no question")
        else:
            raise ValueError(f"attribute kind must be {INPUT!r} or {DERIVED!r}")

    @property
    def is_input(self) -> bool:
        return self.kind == INPUT


@dataclass(frozen=True)
class KnowledgeBase:
    id: str
    version: int
    scales: tuple[Scale, ...]
    attributes: tuple[Attribute, ...]
    goal: str

    @cached_property
    def scale_by_name(self) -> dict[str, Scale]:
        return {s.name: s for s in self.scales}

    @cached_property
    def attribute_by_name(self) -> dict[str, Attribute]:
        return {a.name: a for a in self.attributes}

    def scale_of(self, attr_name: str) -> Scale:
        return self.scale_by_name[self.attribute_by_name[attr_name].scale]

    @property
    def inputs(self) -> list[Attribute]:
        return [a for a in self.attributes if a.is_input]

    @property
    def derived(self) -> list[Attribute]:
        return [a for a in self.attributes if not a.is_input]


# --- overlay definitions -------------------------------------------------
#
# Overlays are parsed by kbdl and resolved against compiled graphs by
# metalayer; the definition types sit here because both sides need them.


class Severity(str, Enum):
    INFO = "info"
    WARNING = "warning"
    CRITICAL = "critical"


class Comparator(str, Enum):
    EQ = "="
    GE = ">="
    LE = "<="


@dataclass(frozen=True)
class QualifiedRef:
    """`kb_id.attr_name` reference into some knowledge base."""

    kb_id: str
    attr: str

    def __str__(self) -> str:
        return f"{self.kb_id}.{self.attr}"


@dataclass(frozen=True)
class ConditionTerm:
    ref: QualifiedRef
    comparator: Comparator
    level: str


@dataclass(frozen=True)
class RedFlagDef:
    id: str
    severity: Severity
    conditions: tuple[ConditionTerm, ...]
    message: str

    def __post_init__(self) -> None:
        if not self.conditions:
            raise ValueError(f"red flag {self.id!r} needs at least one condition term")


@dataclass(frozen=True)
class RiskEntry:
    ref: QualifiedRef
    weight: float
    severity_map: tuple[tuple[str, float], ...]  # level -> score in [0,1], 1 = worst


@dataclass(frozen=True)
class ValuationDriver:
    ref: QualifiedRef
    multipliers: tuple[tuple[str, float], ...]  # level -> positive factor


@dataclass(frozen=True)
class ValuationCategory:
    name: str
    base: float
    drivers: tuple[ValuationDriver, ...] = ()


@dataclass(frozen=True)
class OverlaySpec:
    """Parsed overlay file; attribute references are not yet resolved."""

    name: str
    red_flags: tuple[RedFlagDef, ...] = ()
    risk_entries: tuple[RiskEntry, ...] = ()
    valuation_categories: tuple[ValuationCategory, ...] = ()


def merge_overlays(specs: list[OverlaySpec]) -> OverlaySpec:
    """Concatenate several overlay files into one logical overlay."""
    return OverlaySpec(
        name="+".join(s.name for s in specs),
        red_flags=tuple(f for s in specs for f in s.red_flags),
        risk_entries=tuple(r for s in specs for r in s.risk_entries),
        valuation_categories=tuple(c for s in specs for c in s.valuation_categories),
    )
