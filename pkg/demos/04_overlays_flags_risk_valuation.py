"""Second-order reasoning: red flags, risk score and the 25-category valuation.

Loads the shipped intangible-asset audit bundle (five knowledge bases plus
one overlay) and walks a company profile through it.

Run from the repository root:  python demos/04_overlays_flags_risk_valuation.py
"""

from pathlib import Path

from intaudit import compute_valuation, detect_red_flags, evaluate, risk_score
from intaudit.service import load_bundle_dir

state = load_bundle_dir(Path(__file__).parent.parent / "bundles/ia")
print(f"loaded {len(state.graphs)} knowledge bases, "
      f"{len(state.overlay.flags)} red flags, {len(state.overlay.risks)} risk entries, "
      f"{len(state.overlay.categories)} valuation categories\n")

# an early-stage software company: strong know-how hygiene, patchy paperwork
profile = {
    "ip_audit": {
        "patent_filings": "partial",
        "trademark_registrations": "none",
        "design_registrations": "none",
        "registry_hygiene": "medium",
    },
    "know_how": {
        "secrecy_policy": "high",
        "nda_coverage": "high",
        "process_documentation": "medium",
        "key_person_dependency": "high",
    },
    "data_assets": {
        "data_inventory": "partial",
        "consent_basis": "medium",
        "data_quality": "high",
        "license_terms": "medium",
    },
    "brand": {
        "brand_recognition": "medium",
        "domain_control": "partial",
        "content_ownership": "medium",
    },
    "contracts": {
        "ip_assignment": "low",
        "licenses_in": "medium",
        "licenses_out": "low",
        "dispute_history": "none",
    },
}

results = {kb_id: evaluate(graph, profile[kb_id]) for kb_id, graph in state.graphs.items()}
for kb_id, result in results.items():
    goal = state.graphs[kb_id].goal_name
    print(f"{kb_id}: {goal} = {result.values[goal]}")

print("\nred flags:")
for status in detect_red_flags(state.overlay, results):
    marker = {"triggered": "!!", "potential": "??", "clear": "ok"}[status.state.value]
    print(f"  [{marker}] {status.flag_id} ({status.severity.value}): {status.message}")

report = risk_score(state.overlay, results)
print(f"\nrisk score: {report.score:.1f} / 100 (coverage {report.coverage:.0%})")
for c in sorted(report.contributions, key=lambda c: -c.weight * c.score)[:4]:
    print(f"  {c.ref} = {c.level}  (weight {c.weight}, severity {c.score})")

valuation = compute_valuation(state.overlay, results)
print("\ntop valuation categories (relative shares):")
for cat in sorted(valuation.categories, key=lambda c: -c.share)[:8]:
    bar = "#" * round(cat.share * 120)
    print(f"  {cat.name:<24} {cat.share:6.1%} {bar}")
