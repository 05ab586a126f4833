"""Three-valued evaluation under partial answers, traces, and question ranking.

Run from the repository root:  python demos/02_partial_evaluation_and_explanations.py
"""

from pathlib import Path

from intaudit import compile_kb, evaluate, explain, next_questions, parse_kb

graph = compile_kb(parse_kb((Path(__file__).parent.parent / "bundles/demo/demo.kb").read_text()))


def show(answers):
    result = evaluate(graph, answers)
    print(f"answers={answers}")
    print(f"  resolved: {result.values}")
    print(f"  unknown:  {list(result.unknowns)}")
    for name, fired in result.trace.items():
        print(f"  {name} fired row {fired.row_index}: {fired.row_text}")
    print(f"  ask next: {next_questions(graph, answers, 3)}")
    print()


# one answer can already settle the goal: (low, *) fires regardless of coverage
show({"policy": "low"})

# but policy=high alone cannot: the (*, low) row *might* still match, so the
# engine refuses to guess and the goal stays unknown (monotonicity)
show({"policy": "high"})

show({"policy": "high", "coverage": "high"})

# the explanation tree walks from the goal down to the answered inputs
result = evaluate(graph, {"policy": "low", "coverage": "high"})
node = explain(result, graph, "protection")


def render(n, indent=0):
    status = n.value if n.value is not None else "?"
    detail = f"  <- {n.fired.row_text}" if n.fired else ""
    print("  " * indent + f"{n.attribute} = {status}{detail}")
    for child in n.children:
        render(child, indent + 1)


print("explanation for protection:")
render(node)
