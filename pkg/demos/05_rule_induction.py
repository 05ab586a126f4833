"""Inducing rules from recorded cases and checking cases against a KB.

Run from the repository root:  python demos/05_rule_induction.py
"""

import itertools
from pathlib import Path

from intaudit import compile_kb, flatten, format_rule_block, parse_kb
from intaudit.induction import (
    caseset_to_kb,
    check_cases,
    induce_tree,
    load_cases_csv,
    tree_to_ruleblock,
)
from intaudit.model import Scale

CSV = """\
secrecy,documentation,retention_risk
high,high,low
high,medium,low
high,low,high
medium,high,low
medium,low,high
low,high,high
low,medium,high
low,low,high
"""

cases = load_cases_csv(CSV)
tree = induce_tree(cases)
print(f"induced tree: depth {tree.depth}, {tree.leaf_count} leaves")

block = tree_to_ruleblock(tree, cases)
print("\nas a rule block (reviewable, same form as expert rules):")
print(format_rule_block(block))

# the conversion is exact on every input tuple, not just the training cases
flat = flatten(compile_kb(caseset_to_kb(cases, block)))
agree = sum(
    flat.rows[combo] == tree.classify(dict(zip(flat.inputs, combo)))
    for combo in itertools.product(*flat.input_levels)
)
print(f"\ntree vs compiled block: {agree}/{len(flat.rows)} tuples agree")

# replaying cases through an existing KB reports agreements per case
demo_graph = compile_kb(
    parse_kb((Path(__file__).parent.parent / "bundles/demo/demo.kb").read_text())
)
replay = load_cases_csv(
    "policy,coverage,protection\nlow,high,low\nhigh,high,high\nmedium,medium,low\n",
    attributes=tuple(
        (spec.name, Scale(spec.scale, spec.levels)) for spec in demo_graph.manifest
    ),
    target=Scale("l3", ("low", "medium", "high")),
)
report = check_cases(demo_graph, replay)
for check in report.checks:
    verdict = "agree" if check.agrees else f"engine says {check.actual!r}"
    print(f"  {check.label}: expected {check.expected!r} -> {verdict}")
print(f"{report.agreements} agree, {report.disagreements} disagree")
