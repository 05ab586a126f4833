"""Flattening a rule hierarchy into its single-level equivalent.

The flat table doubles as a brute-force oracle: it is computed by a plain
two-valued interpreter, so comparing it against the engine on every tuple
cross-checks two independent implementations.

Run from the repository root:  python demos/03_flatten_oracle.py
"""

import itertools
from pathlib import Path

from intaudit import compile_kb, evaluate, flatten, kb_stats, parse_kb

kb = parse_kb((Path(__file__).parent.parent / "bundles/demo/demo.kb").read_text())
graph = compile_kb(kb)
flat = flatten(graph)

stats = kb_stats(kb)
print(f"{stats.hierarchical_rule_count} hierarchical rules expand to "
      f"{stats.flat_tuple_count} flat tuples\n")

print(",".join(flat.inputs + (flat.goal,)))
for combo in itertools.product(*flat.input_levels):
    print(",".join(combo + (flat.rows[combo],)))

mismatches = 0
for combo in itertools.product(*flat.input_levels):
    result = evaluate(graph, dict(zip(flat.inputs, combo)))
    if result.values[flat.goal] != flat.rows[combo]:
        mismatches += 1
print(f"\nengine vs flat table: {mismatches} mismatches over {len(flat.rows)} tuples")
