"""Production-scale bundle generation, timing, and a full API session.

Generates a 5-KB bundle (210 inputs, ~13k rules), times compilation and a
full evaluation, then drives the HTTP API in-process through a complete
questionnaire.

Run from the repository root:  python demos/06_scale_and_service.py
"""

import random
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from intaudit import compute_valuation, detect_red_flags, evaluate, risk_score
from intaudit.service import PlatformService, load_bundle_dir
from intaudit.service.api import create_app
from intaudit.synthetic import scale_bundle

with tempfile.TemporaryDirectory() as td:
    summary = scale_bundle(Path(td) / "bundle", seed=7)
    print(f"generated {len(summary.kb_paths)} KBs: {summary.input_count} inputs, "
          f"{summary.rule_count} hierarchical rules")

    t0 = time.perf_counter()
    state = load_bundle_dir(Path(td) / "bundle")
    print(f"parse + validate + compile + bind: {time.perf_counter() - t0:.2f}s")

    rng = random.Random(0)
    answers = {
        kb_id: {spec.name: rng.choice(spec.levels) for spec in graph.manifest}
        for kb_id, graph in state.graphs.items()
    }
    timings = []
    for _ in range(3):
        t0 = time.perf_counter()
        results = {kb_id: evaluate(g, answers[kb_id]) for kb_id, g in state.graphs.items()}
        detect_red_flags(state.overlay, results)
        risk_score(state.overlay, results)
        compute_valuation(state.overlay, results)
        timings.append((time.perf_counter() - t0) * 1000)
    print(f"full evaluation of all graphs + overlay analyses: best "
          f"{min(timings):.1f}ms over 3 runs")

# now the small audit bundle through the HTTP surface
state = load_bundle_dir(Path(__file__).parent.parent / "bundles/ia")
client = TestClient(create_app(PlatformService(state)))

session = client.post("/api/sessions", json={"kb_ids": list(state.graphs)}).json()
sid = session["id"]
print(f"\nsession {sid[:8]}… over {session['kb_ids']}")

# answer the questionnaire one question at a time, as the UI would
answered = 0
while True:
    questions = client.get(f"/api/sessions/{sid}/questions?k=1").json()
    if not questions:
        break
    q = questions[0]
    graph = state.graphs[q["kb_id"]]
    level = graph.levels[graph.index[q["attr"]]][0]  # pessimistic answer
    client.patch(f"/api/sessions/{sid}/answers", json={q["kb_id"]: {q["attr"]: level}})
    answered += 1

assessment = client.get(f"/api/sessions/{sid}/assessment").json()
print(f"answered {answered} questions until every goal resolved")
print(f"risk: {assessment['risk']['score']:.1f}, "
      f"triggered flags: {[f['id'] for f in assessment['red_flags'] if f['state'] == 'triggered']}")
top = max(assessment["valuation"]["categories"], key=lambda c: c["share"])
print(f"largest valuation share: {top['name']} at {top['share']:.1%}")
