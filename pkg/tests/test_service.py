"""Bundle loading, sessions, persistence, and snapshot consistency."""

import json
import threading
import random

import pytest

from intaudit import compute_valuation, detect_red_flags, evaluate, risk_score
from intaudit.service import (
    BundleError,
    InvalidAnswerError,
    PlatformService,
    UnknownKbError,
    UnknownSessionError,
    load_bundle,
    load_bundle_dir,
)
from tests.conftest import DEMO_DIR, IA_DIR


class TestLoadBundle:
    def test_demo_bundle(self):
        state = load_bundle([DEMO_DIR / "demo.kb", DEMO_DIR / "demo.overlay"])
        assert list(state.graphs) == ["demo"]
        assert len(state.overlay.flags) == 1
        assert state.warnings == ()

    def test_cyclic_kb_aborts_with_diagnostic(self, tmp_path):
        (tmp_path / "cyc.kb").write_text(
            'kb "cyc" version 1\n'
            "scale s = a | b\n"
            "attribute x : s derived rules (y) { default -> a }\n"
            "attribute y : s derived rules (x) { default -> a }\n"
            "goal x\n"
        )
        with pytest.raises(BundleError) as exc:
            load_bundle([tmp_path / "cyc.kb"])
        assert any("dependency cycle" in p for p in exc.value.problems)

    def test_empty_bundle(self):
        with pytest.raises(BundleError, match="no knowledge bases loaded"):
            load_bundle([])

    def test_every_problem_listed(self, tmp_path):
        (tmp_path / "bad1.kb").write_text("kb \"b1\" version 1\n")  # missing goal
        (tmp_path / "bad2.kb").write_text("")  # missing header
        with pytest.raises(BundleError) as exc:
            load_bundle([tmp_path / "bad1.kb", tmp_path / "bad2.kb"])
        text = "\n".join(exc.value.problems)
        assert "missing goal" in text and "missing header" in text

    def test_overlay_binding_failure_aborts(self, tmp_path):
        (tmp_path / "o.overlay").write_text(
            'overlay "x"\nrisk demo.ghost weight 1.0 { low -> 1.0, medium -> 0.0, high -> 0.0 }\n'
        )
        with pytest.raises(BundleError) as exc:
            load_bundle([DEMO_DIR / "demo.kb", tmp_path / "o.overlay"])
        assert any("unknown attribute demo.ghost" in p for p in exc.value.problems)

    def test_startup_determinism(self):
        a = load_bundle_dir(DEMO_DIR)
        b = load_bundle_dir(DEMO_DIR)
        assert a == b


@pytest.fixture()
def demo_service(tmp_path):
    return PlatformService(load_bundle_dir(DEMO_DIR), data_dir=tmp_path / "sessions")


class TestSessions:
    def test_create_empty_answers(self, demo_service):
        doc = demo_service.create_session(["demo"])
        assert doc["answers"] == {}
        assert doc["schema_version"] == 1
        assert doc["kb_ids"] == ["demo"]
        assert doc["updated_at"] >= doc["created_at"]

    def test_create_unknown_kb(self, demo_service):
        with pytest.raises(UnknownKbError):
            demo_service.create_session(["ghost"])

    def test_submit_and_assess(self, demo_service):
        doc = demo_service.create_session(["demo"])
        demo_service.submit_answers(doc["id"], {"demo": {"policy": "low"}})
        payload = demo_service.assessment(doc["id"])
        assert payload["values"]["demo"]["protection"] == "low"
        assert payload["red_flags"][0]["state"] == "triggered"
        assert payload["risk"]["score"] == 100.0
        assert payload["next_questions"] == []

    def test_submit_atomicity(self, demo_service):
        doc = demo_service.create_session(["demo"])
        with pytest.raises(InvalidAnswerError, match="'purple' not in scale 'l3'"):
            demo_service.submit_answers(
                doc["id"], {"demo": {"coverage": "high", "policy": "purple"}}
            )
        # nothing from the failed patch may stick
        assert demo_service.export_session(doc["id"])["answers"] == {}

    def test_unknown_session(self, demo_service):
        with pytest.raises(UnknownSessionError):
            demo_service.assessment("nope")

    def test_submit_bumps_updated(self, demo_service):
        doc = demo_service.create_session(["demo"])
        after = demo_service.submit_answers(doc["id"], {"demo": {"policy": "low"}})
        assert after["updated_at"] >= doc["updated_at"]

    def test_export_schema_keys(self, demo_service):
        doc = demo_service.create_session(["demo"])
        exported = demo_service.export_session(doc["id"])
        assert list(exported) == [
            "schema_version", "id", "kb_ids", "answers", "created_at", "updated_at",
        ]

    def test_export_import_round_trip(self, demo_service, tmp_path):
        doc = demo_service.create_session(["demo"])
        demo_service.submit_answers(doc["id"], {"demo": {"policy": "medium"}})
        exported = demo_service.export_session(doc["id"])

        fresh = PlatformService(load_bundle_dir(DEMO_DIR), data_dir=tmp_path / "other")
        fresh.import_session(exported)
        assert fresh.assessment(doc["id"]) == demo_service.assessment(doc["id"])

    def test_persistence_survives_restart(self, tmp_path):
        data = tmp_path / "sessions"
        first = PlatformService(load_bundle_dir(DEMO_DIR), data_dir=data)
        doc = first.create_session(["demo"])
        first.submit_answers(doc["id"], {"demo": {"policy": "high", "coverage": "high"}})
        payload = first.assessment(doc["id"])

        reborn = PlatformService(load_bundle_dir(DEMO_DIR), data_dir=data)
        assert reborn.export_session(doc["id"]) == first.export_session(doc["id"])
        assert reborn.assessment(doc["id"]) == payload

    def test_session_files_are_valid_json(self, tmp_path):
        data = tmp_path / "sessions"
        service = PlatformService(load_bundle_dir(DEMO_DIR), data_dir=data)
        doc = service.create_session(["demo"])
        service.submit_answers(doc["id"], {"demo": {"policy": "low"}})
        on_disk = json.loads((data / f"{doc['id']}.json").read_text())
        assert on_disk == service.export_session(doc["id"])


class TestSchema:
    def test_kb_listing(self, demo_service):
        listing = demo_service.kb_listing()
        assert listing[0]["id"] == "demo"
        assert listing[0]["stats"]["hierarchical_rule_count"] == 4

    def test_schema_shape(self, demo_service):
        schema = demo_service.kb_schema("demo")
        assert [i["name"] for i in schema["inputs"]] == ["policy", "coverage"]
        policy = schema["inputs"][0]
        assert policy["scale"] == ["low", "medium", "high"]
        assert policy["help"] == [
            "Covers trade-secret and assignment policies",
            "See your employment contracts and NDAs",
        ]


class TestIaBundle:
    def test_loads_clean_with_25_categories(self):
        state = load_bundle_dir(IA_DIR)
        assert len(state.graphs) == 5
        assert len(state.overlay.categories) == 25
        assert state.warnings == ()

    def test_overlay_spanning_kbs_outside_session(self):
        state = load_bundle_dir(IA_DIR)
        service = PlatformService(state)
        doc = service.create_session(["brand"])  # overlay references all five
        payload = service.assessment(doc["id"])
        assert set(payload["values"]) == {"brand"}
        states = {f["id"]: f["state"] for f in payload["red_flags"]}
        assert states["assignment_gap"] == "potential"  # other kbs unknown


def _payload_is_snapshot_consistent(state, payload, kb_ids) -> bool:
    """Re-derive everything from the payload's own input values."""
    results = {}
    for kb_id in kb_ids:
        graph = state.graphs[kb_id]
        answers = {
            name: level
            for name, level in payload["values"].get(kb_id, {}).items()
            if graph.is_input(graph.index[name])
        }
        results[kb_id] = evaluate(graph, answers)
        if dict(results[kb_id].values) != payload["values"][kb_id]:
            return False
        if list(results[kb_id].unknowns) != payload["unknowns"][kb_id]:
            return False
    for kb_id in state.overlay.referenced_kbs:
        if kb_id not in results:
            results[kb_id] = evaluate(state.graphs[kb_id], {})
    flags = [
        {"id": s.flag_id, "state": s.state.value, "severity": s.severity.value,
         "message": s.message}
        for s in detect_red_flags(state.overlay, results)
    ]
    if flags != payload["red_flags"]:
        return False
    risk = risk_score(state.overlay, results)
    if risk.score != payload["risk"]["score"]:
        return False
    valuation = compute_valuation(state.overlay, results)
    return [c.share for c in valuation.categories] == [
        c["share"] for c in payload["valuation"]["categories"]
    ]


class TestConcurrency:
    def test_submit_get_storm(self):
        state = load_bundle_dir(IA_DIR)
        service = PlatformService(state)
        kb_ids = list(state.graphs)
        doc = service.create_session(kb_ids)
        sid = doc["id"]

        writes: list[list[tuple[str, str, str]]] = [[] for _ in range(8)]
        inconsistencies: list[str] = []
        errors: list[Exception] = []

        def writer(w: int) -> None:
            rng = random.Random(1000 + w)
            try:
                for _ in range(63):
                    kb_id = rng.choice(kb_ids)
                    graph = state.graphs[kb_id]
                    spec = rng.choice(graph.manifest)
                    level = rng.choice(spec.levels)
                    service.submit_answers(sid, {kb_id: {spec.name: level}})
                    writes[w].append((kb_id, spec.name, level))
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        def reader(r: int) -> None:
            try:
                for _ in range(63):
                    payload = service.assessment(sid)
                    if not _payload_is_snapshot_consistent(state, payload, kb_ids):
                        inconsistencies.append("torn payload")
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer, args=(w,)) for w in range(8)]
        threads += [threading.Thread(target=reader, args=(r,)) for r in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        assert errors == []
        assert inconsistencies == []
        # final state must be a per-key last-write from the submitted values
        final = service.export_session(sid)["answers"]
        written: dict[tuple[str, str], set] = {}
        for per_writer in writes:
            for kb_id, attr, level in per_writer:
                written.setdefault((kb_id, attr), set()).add(level)
        for kb_id, answers in final.items():
            for attr, level in answers.items():
                assert level in written[(kb_id, attr)]
        assert set(written) == {
            (kb_id, attr) for kb_id, answers in final.items() for attr in answers
        }
