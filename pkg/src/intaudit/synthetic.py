"""Random and scale-target knowledge-base generators.

`random_kb` builds small valid KBs for property tests (exhaustive by
construction: every block carries a default; acyclic: children only come
from earlier attributes). `scale_bundle` emits a 5-KB bundle sized like a
production deployment (hundreds of inputs, five-digit rule counts) together
with an overlay, for compile/evaluate performance checks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .kbdl import serialize_kb, serialize_overlay
from .model import (
    Attribute,
    Comparator,
    ConditionTerm,
    KnowledgeBase,
    OverlaySpec,
    Pattern,
    QualifiedRef,
    RedFlagDef,
    RiskEntry,
    RuleBlock,
    RuleRow,
    Scale,
    Severity,
    ValuationCategory,
    ValuationDriver,
)

_LEVEL_SETS = (
    ("low", "high"),
    ("low", "medium", "high"),
    ("none", "partial", "full"),
    ("poor", "fair", "good", "strong"),
)


def random_kb(
    rng: random.Random,
    kb_id: str = "rand",
    max_inputs: int = 6,
    max_derived: int = 6,
    max_children: int = 3,
    max_depth: int = 3,
    max_levels: int = 4,
    max_rows: int = 5,
) -> KnowledgeBase:
    """A small random knowledge base that always validates error-free."""
    n_scales = rng.randint(1, 3)
    scales = []
    for i in range(n_scales):
        size = rng.randint(2, max_levels)
        scales.append(Scale(f"s{i}", tuple(f"v{j}" for j in range(size))))

    def pick_scale() -> Scale:
        return rng.choice(scales)

    attributes: list[Attribute] = []
    depth: dict[str, int] = {}

    n_inputs = rng.randint(2, max(2, max_inputs))
    for i in range(n_inputs):
        scale = pick_scale()
        name = f"in{i}"
        attributes.append(
            Attribute(name, scale.name, "input", question=f"Level of factor {i}?")
        )
        depth[name] = 0

    scale_of = {a.name: next(s for s in scales if s.name == a.scale) for a in attributes}
    n_derived = rng.randint(1, max(1, max_derived))
    for i in range(n_derived):
        name = f"d{i}"
        pool = [a.name for a in attributes if depth[a.name] < max_depth]
        children = tuple(rng.sample(pool, k=min(len(pool), rng.randint(1, max_children))))
        scale = pick_scale()
        rows = []
        for _ in range(rng.randint(1, max_rows)):
            patterns: list[Pattern] = []
            for child in children:
                child_levels = scale_of[child].levels
                if rng.random() < 0.3:
                    patterns.append(None)
                else:
                    k = rng.randint(1, min(2, len(child_levels)))
                    patterns.append(tuple(sorted(rng.sample(child_levels, k=k),
                                                 key=child_levels.index)))
            rows.append(RuleRow(tuple(patterns), rng.choice(scale.levels)))
        block = RuleBlock(children, tuple(rows), default=rng.choice(scale.levels))
        attributes.append(Attribute(name, scale.name, "derived", rules=block))
        depth[name] = 1 + max(depth[c] for c in children)
        scale_of[name] = scale

    goal = attributes[-1].name
    return KnowledgeBase(
        id=kb_id, version=1, scales=tuple(scales), attributes=tuple(attributes), goal=goal
    )


def random_full_assignment(rng: random.Random, kb: KnowledgeBase) -> dict[str, str]:
    return {a.name: rng.choice(kb.scale_of(a.name).levels) for a in kb.inputs}


def random_overlay(
    rng: random.Random,
    kbs: list[KnowledgeBase],
    name: str = "random overlay",
    n_flags: int = 3,
    n_risks: int = 4,
    n_categories: int = 3,
) -> OverlaySpec:
    """An overlay over random attributes of `kbs` that always binds cleanly."""

    def pick_ref() -> tuple[QualifiedRef, Scale]:
        kb = rng.choice(kbs)
        attr = rng.choice(kb.attributes)
        return QualifiedRef(kb.id, attr.name), kb.scale_of(attr.name)

    flags = []
    for i in range(n_flags):
        terms = []
        for _ in range(rng.randint(1, 3)):
            ref, scale = pick_ref()
            terms.append(
                ConditionTerm(ref, rng.choice(list(Comparator)), rng.choice(scale.levels))
            )
        flags.append(
            RedFlagDef(
                id=f"flag_{i}",
                severity=rng.choice(list(Severity)),
                conditions=tuple(terms),
                message=f"synthetic flag {i}",
            )
        )

    risks = []
    for _ in range(n_risks):
        ref, scale = pick_ref()
        risks.append(
            RiskEntry(
                ref=ref,
                weight=rng.uniform(0.25, 4.0),
                severity_map=tuple((lvl, round(rng.random(), 3)) for lvl in scale.levels),
            )
        )

    categories = []
    for i in range(n_categories):
        drivers = []
        for _ in range(rng.randint(0, 2)):
            ref, scale = pick_ref()
            drivers.append(
                ValuationDriver(
                    ref=ref,
                    multipliers=tuple(
                        (lvl, round(rng.uniform(0.25, 3.0), 3)) for lvl in scale.levels
                    ),
                )
            )
        categories.append(
            ValuationCategory(name=f"category {i}", base=rng.uniform(0.5, 5.0),
                              drivers=tuple(drivers))
        )

    return OverlaySpec(
        name=name,
        red_flags=tuple(flags),
        risk_entries=tuple(risks),
        valuation_categories=tuple(categories),
    )


@dataclass(frozen=True)
class BundleSummary:
    kb_paths: tuple[Path, ...]
    overlay_path: Path
    input_count: int
    rule_count: int


def scale_kb(
    rng: random.Random,
    kb_id: str,
    n_inputs: int = 42,
    n_blocks: int = 430,
    rows_per_block: int = 5,
) -> KnowledgeBase:
    """One production-sized KB: `n_blocks` rule tables over `n_inputs` inputs."""
    scales = (
        Scale("l3", ("low", "medium", "high")),
        Scale("grade", ("poor", "fair", "good", "strong")),
    )
    attributes: list[Attribute] = []
    scale_of: dict[str, Scale] = {}
    for i in range(n_inputs):
        scale = scales[rng.randrange(len(scales))]
        name = f"q{i}"
        attributes.append(
            Attribute(name, scale.name, "input", question=f"How developed is factor {i}?")
        )
        scale_of[name] = scale

    for i in range(n_blocks):
        name = f"d{i}"
        scale = scales[rng.randrange(len(scales))]
        # bias children toward recent attributes so the graph gets deep
        hi = len(attributes)
        lo = max(0, hi - 40)
        k = rng.randint(2, 3)
        picks = rng.sample(range(lo, hi), k=min(k, hi - lo))
        children = tuple(attributes[j].name for j in picks)
        rows = []
        for _ in range(rows_per_block):
            patterns: list[Pattern] = []
            for child in children:
                levels = scale_of[child].levels
                if rng.random() < 0.25:
                    patterns.append(None)
                else:
                    size = rng.randint(1, 2)
                    patterns.append(
                        tuple(sorted(rng.sample(levels, k=size), key=levels.index))
                    )
            rows.append(RuleRow(tuple(patterns), rng.choice(scale.levels)))
        block = RuleBlock(children, tuple(rows), default=rng.choice(scale.levels))
        attributes.append(Attribute(name, scale.name, "derived", rules=block))
        scale_of[name] = scale

    return KnowledgeBase(
        id=kb_id,
        version=1,
        scales=scales,
        attributes=tuple(attributes),
        goal=attributes[-1].name,
    )


def scale_bundle(
    out_dir: Path,
    seed: int = 7,
    kb_count: int = 5,
    inputs_per_kb: int = 42,
    blocks_per_kb: int = 430,
    rows_per_block: int = 5,
) -> BundleSummary:
    """Write a 5-KB bundle (plus overlay) at production scale.

    Defaults give 210 inputs and 12,900 hierarchical rule rows.
    """
    rng = random.Random(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    kbs = [
        scale_kb(rng, f"synth{i}", inputs_per_kb, blocks_per_kb, rows_per_block)
        for i in range(kb_count)
    ]
    kb_paths = []
    for kb in kbs:
        path = out_dir / f"{kb.id}.kb"
        path.write_text(serialize_kb(kb), encoding="utf-8")
        kb_paths.append(path)

    overlay = random_overlay(
        rng, kbs, name="synthetic overlay", n_flags=10, n_risks=20, n_categories=10
    )
    overlay_path = out_dir / "synth.overlay"
    overlay_path.write_text(serialize_overlay(overlay), encoding="utf-8")

    input_count = sum(len(kb.inputs) for kb in kbs)
    rule_count = sum(
        a.rules.row_count for kb in kbs for a in kb.derived if a.rules is not None
    )
    return BundleSummary(
        kb_paths=tuple(kb_paths),
        overlay_path=overlay_path,
        input_count=input_count,
        rule_count=rule_count,
    )
