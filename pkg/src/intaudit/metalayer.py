"""Second-order reasoning over evaluation results: red flags, risk, valuation.

Overlay definitions reference attributes across knowledge bases as
`kb_id.attr`. Binding resolves every reference against the compiled graphs
and validates levels and map totality up front, so the three analysis
operations can run without further checks. All three are pure over
(BoundOverlay, results) and respect the engine's three-valued statuses:
unresolved attributes make flags "potential", drop risk entries from the
weighted mean, and contribute neutral factors to valuation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

from .compiler import ERROR, CompiledGraph, Diagnostic
from .engine import EvaluationResult
from .model import Comparator, OverlaySpec, QualifiedRef, Severity


class OverlayBindError(Exception):
    """Raised when an overlay fails to bind; carries all diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics) or "overlay binding failed")


class FlagState(str, Enum):
    TRIGGERED = "triggered"
    POTENTIAL = "potential"
    CLEAR = "clear"


@dataclass(frozen=True)
class BoundTerm:
    ref: QualifiedRef
    comparator: Comparator
    level_index: int
    levels: tuple[str, ...]

    def truth(self, results: Mapping[str, EvaluationResult]) -> Optional[bool]:
        level = results[self.ref.kb_id].values.get(self.ref.attr)
        if level is None:
            return None
        li = self.levels.index(level)
        if self.comparator is Comparator.EQ:
            return li == self.level_index
        if self.comparator is Comparator.GE:
            return li >= self.level_index
        return li <= self.level_index


@dataclass(frozen=True)
class BoundFlag:
    id: str
    severity: Severity
    terms: tuple[BoundTerm, ...]
    message: str


@dataclass(frozen=True)
class BoundRisk:
    ref: QualifiedRef
    weight: float
    scores: tuple[float, ...]  # by level index
    levels: tuple[str, ...]


@dataclass(frozen=True)
class BoundDriver:
    ref: QualifiedRef
    multipliers: tuple[float, ...]  # by level index
    levels: tuple[str, ...]


@dataclass(frozen=True)
class BoundCategory:
    name: str
    base: float
    drivers: tuple[BoundDriver, ...]


@dataclass(frozen=True)
class BoundOverlay:
    name: str
    flags: tuple[BoundFlag, ...]
    risks: tuple[BoundRisk, ...]
    categories: tuple[BoundCategory, ...]

    @property
    def referenced_kbs(self) -> frozenset[str]:
        refs = [t.ref for f in self.flags for t in f.terms]
        refs += [r.ref for r in self.risks]
        refs += [d.ref for c in self.categories for d in c.drivers]
        return frozenset(r.kb_id for r in refs)


@dataclass(frozen=True)
class RedFlagStatus:
    flag_id: str
    state: FlagState
    severity: Severity
    message: str
    term_truth: tuple[Optional[bool], ...]


@dataclass(frozen=True)
class RiskContribution:
    ref: str
    weight: float
    level: str
    score: float  # severity at the resolved level, in [0,1]


@dataclass(frozen=True)
class RiskReport:
    score: Optional[float]  # 0..100; None when no entry resolved
    coverage: float  # resolved entries / total entries
    contributions: tuple[RiskContribution, ...]


@dataclass(frozen=True)
class CategoryValue:
    name: str
    raw: float
    share: float
    confidence: float  # resolved drivers / drivers; 1.0 when driverless


@dataclass(frozen=True)
class ValuationReport:
    categories: tuple[CategoryValue, ...]

    @property
    def total_raw(self) -> float:
        return sum(c.raw for c in self.categories)


# --- binding ----------------------------------------------------------------


def _resolve_ref(
    ref: QualifiedRef, graphs: Mapping[str, CompiledGraph], diags: list[Diagnostic]
) -> Optional[tuple[str, ...]]:
    """Scale levels of the referenced attribute, or None with a diagnostic."""
    graph = graphs.get(ref.kb_id)
    if graph is None:
        diags.append(Diagnostic(ERROR, "unknown-kb", f"unknown kb id {ref.kb_id!r}"))
        return None
    idx = graph.index.get(ref.attr)
    if idx is None:
        diags.append(Diagnostic(ERROR, "unknown-attribute", f"unknown attribute {ref}"))
        return None
    return graph.levels[idx]


def _bind_map(
    entries: tuple[tuple[str, float], ...],
    levels: tuple[str, ...],
    scale_name: str,
    kind: str,
    diags: list[Diagnostic],
    lo: Optional[float] = None,
    hi: Optional[float] = None,
    strict_lo: bool = False,
) -> Optional[tuple[float, ...]]:
    """Level->number map checked for totality and range, as a dense tuple."""
    by_level = dict(entries)
    bad = False
    for level in by_level:
        if level not in levels:
            diags.append(
                Diagnostic(ERROR, "bad-level", f"level {level!r} not in scale {scale_name!r}")
            )
            bad = True
    missing = [lvl for lvl in levels if lvl not in by_level]
    if missing:
        diags.append(
            Diagnostic(
                ERROR,
                "incomplete-map",
                f"{kind} map must cover all levels of {scale_name} "
                f"(missing: {', '.join(missing)})",
            )
        )
        bad = True
    for level, value in entries:
        if lo is not None and (value <= lo if strict_lo else value < lo):
            diags.append(
                Diagnostic(ERROR, "bad-value", f"{kind} value {value} at {level!r} out of range")
            )
            bad = True
        if hi is not None and value > hi:
            diags.append(
                Diagnostic(ERROR, "bad-value", f"{kind} value {value} at {level!r} out of range")
            )
            bad = True
    if bad:
        return None
    return tuple(by_level[lvl] for lvl in levels)


def bind_overlay(
    spec: OverlaySpec, graphs: Mapping[str, CompiledGraph]
) -> BoundOverlay:
    """Resolve an overlay against compiled graphs.

    Raises OverlayBindError listing every unresolved reference, unknown
    level, range violation and incomplete map.
    """
    diags: list[Diagnostic] = []

    flags: list[BoundFlag] = []
    for flag in spec.red_flags:
        terms: list[BoundTerm] = []
        ok = True
        for term in flag.conditions:
            levels = _resolve_ref(term.ref, graphs, diags)
            if levels is None:
                ok = False
                continue
            if term.level not in levels:
                diags.append(
                    Diagnostic(
                        ERROR,
                        "bad-level",
                        f"level {term.level!r} not in scale of {term.ref}",
                    )
                )
                ok = False
                continue
            terms.append(BoundTerm(term.ref, term.comparator, levels.index(term.level), levels))
        if ok:
            flags.append(BoundFlag(flag.id, flag.severity, tuple(terms), flag.message))

    risks: list[BoundRisk] = []
    for entry in spec.risk_entries:
        levels = _resolve_ref(entry.ref, graphs, diags)
        if levels is None:
            continue
        graph = graphs[entry.ref.kb_id]
        scale_name = graph.scale_names[graph.index[entry.ref.attr]]
        if entry.weight <= 0:
            diags.append(
                Diagnostic(ERROR, "bad-value", f"risk weight for {entry.ref} must be positive")
            )
            continue
        scores = _bind_map(entry.severity_map, levels, scale_name, "severity", diags, lo=0.0, hi=1.0)
        if scores is not None:
            risks.append(BoundRisk(entry.ref, entry.weight, scores, levels))

    categories: list[BoundCategory] = []
    for cat in spec.valuation_categories:
        if cat.base <= 0:
            diags.append(
                Diagnostic(ERROR, "bad-value", f"valuation base for {cat.name!r} must be positive")
            )
            continue
        drivers: list[BoundDriver] = []
        ok = True
        for drv in cat.drivers:
            levels = _resolve_ref(drv.ref, graphs, diags)
            if levels is None:
                ok = False
                continue
            graph = graphs[drv.ref.kb_id]
            scale_name = graph.scale_names[graph.index[drv.ref.attr]]
            multipliers = _bind_map(
                drv.multipliers, levels, scale_name, "multiplier", diags, lo=0.0, strict_lo=True
            )
            if multipliers is None:
                ok = False
                continue
            drivers.append(BoundDriver(drv.ref, multipliers, levels))
        if ok:
            categories.append(BoundCategory(cat.name, cat.base, tuple(drivers)))

    if diags:
        raise OverlayBindError(diags)
    return BoundOverlay(
        name=spec.name, flags=tuple(flags), risks=tuple(risks), categories=tuple(categories)
    )


# --- analyses ---------------------------------------------------------------


def detect_red_flags(
    bound: BoundOverlay, results: Mapping[str, EvaluationResult]
) -> list[RedFlagStatus]:
    """Three-valued status per flag: triggered / potential / clear."""
    statuses = []
    for flag in bound.flags:
        truths = tuple(term.truth(results) for term in flag.terms)
        if any(t is False for t in truths):
            state = FlagState.CLEAR
        elif all(t is True for t in truths):
            state = FlagState.TRIGGERED
        else:
            state = FlagState.POTENTIAL
        statuses.append(RedFlagStatus(flag.id, state, flag.severity, flag.message, truths))
    return statuses


def risk_score(bound: BoundOverlay, results: Mapping[str, EvaluationResult]) -> RiskReport:
    """Weighted mean of per-attribute severities over resolved entries,
    scaled to 0..100. Undefined (None) until at least one entry resolves."""
    contributions: list[RiskContribution] = []
    weight_sum = 0.0
    weighted = 0.0
    for entry in bound.risks:
        level = results[entry.ref.kb_id].values.get(entry.ref.attr)
        if level is None:
            continue
        score = entry.scores[entry.levels.index(level)]
        contributions.append(RiskContribution(str(entry.ref), entry.weight, level, score))
        weight_sum += entry.weight
        weighted += entry.weight * score
    if not contributions:
        return RiskReport(score=None, coverage=0.0, contributions=())
    coverage = len(contributions) / len(bound.risks)
    return RiskReport(
        score=100.0 * weighted / weight_sum,
        coverage=coverage,
        contributions=tuple(contributions),
    )


def compute_valuation(
    bound: BoundOverlay, results: Mapping[str, EvaluationResult]
) -> ValuationReport:
    """Relative category values: base times resolved driver multipliers,
    normalized to shares. Unresolved drivers contribute factor 1 and lower
    the category's confidence."""
    values: list[tuple[str, float, float]] = []
    for cat in bound.categories:
        raw = cat.base
        resolved = 0
        for drv in cat.drivers:
            level = results[drv.ref.kb_id].values.get(drv.ref.attr)
            if level is None:
                continue
            raw *= drv.multipliers[drv.levels.index(level)]
            resolved += 1
        confidence = resolved / len(cat.drivers) if cat.drivers else 1.0
        values.append((cat.name, raw, confidence))

    total = sum(raw for _, raw, _ in values)
    return ValuationReport(
        categories=tuple(
            CategoryValue(name, raw, raw / total if total > 0 else 0.0, confidence)
            for name, raw, confidence in values
        )
    )
