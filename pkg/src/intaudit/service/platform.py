"""Platform state and sessions.

`load_bundle` turns a set of .kb/.overlay files into immutable shared state,
failing fast with every diagnostic if anything is broken. Sessions hold user
answers; submits are validated against the graphs and applied atomically
(all-or-nothing), serialized per session, and persisted as one JSON document
per session via write-then-rename.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from ..compiler import CompiledGraph, ERROR, KbStats, compile_kb, kb_stats, validate
from ..engine import evaluate, explain, next_questions
from ..kbdl import ParseFailure, parse_kb, parse_overlay
from ..metalayer import (
    BoundOverlay,
    OverlayBindError,
    bind_overlay,
    compute_valuation,
    detect_red_flags,
    risk_score,
)
from ..model import KnowledgeBase, OverlaySpec, merge_overlays

SCHEMA_VERSION = 1
DEFAULT_QUESTION_COUNT = 5


class BundleError(Exception):
    """Startup failure; carries every problem found across the bundle."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems) or "bundle failed to load")


class UnknownSessionError(KeyError):
    pass


class UnknownKbError(ValueError):
    pass


class InvalidAnswerError(ValueError):
    pass


@dataclass(frozen=True)
class PlatformState:
    kbs: dict[str, KnowledgeBase]
    graphs: dict[str, CompiledGraph]
    stats: dict[str, KbStats]
    overlay: BoundOverlay
    warnings: tuple[str, ...] = ()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def load_bundle(paths: Iterable[Path | str]) -> PlatformState:
    """Parse, validate, compile and bind a whole bundle.

    Any parse error, validation error or binding problem aborts with a
    BundleError listing all of them; warnings are kept on the state.
    """
    kb_paths: list[Path] = []
    overlay_paths: list[Path] = []
    problems: list[str] = []
    warnings: list[str] = []

    for raw in paths:
        path = Path(raw)
        if path.suffix == ".kb":
            kb_paths.append(path)
        elif path.suffix == ".overlay":
            overlay_paths.append(path)
        else:
            problems.append(f"{path}: unknown file type (expected .kb or .overlay)")

    kbs: dict[str, KnowledgeBase] = {}
    for path in kb_paths:
        try:
            kb = parse_kb(path.read_text(encoding="utf-8"))
        except OSError as exc:
            problems.append(f"{path}: {exc}")
            continue
        except ParseFailure as exc:
            problems.extend(f"{path}:{err}" for err in exc.errors)
            continue
        if kb.id in kbs:
            problems.append(f"{path}: duplicate kb id {kb.id!r}")
            continue
        kbs[kb.id] = kb

    graphs: dict[str, CompiledGraph] = {}
    stats: dict[str, KbStats] = {}
    for kb in kbs.values():
        diags = validate(kb)
        errors = [d for d in diags if d.severity == ERROR]
        warnings.extend(f"{kb.id}: {d}" for d in diags if d.severity != ERROR)
        if errors:
            problems.extend(f"{kb.id}: {d}" for d in errors)
            continue
        graphs[kb.id] = compile_kb(kb)
        stats[kb.id] = kb_stats(kb)

    specs: list[OverlaySpec] = []
    for path in overlay_paths:
        try:
            specs.append(parse_overlay(path.read_text(encoding="utf-8")))
        except OSError as exc:
            problems.append(f"{path}: {exc}")
        except ParseFailure as exc:
            problems.extend(f"{path}:{err}" for err in exc.errors)

    if not kbs and not problems:
        problems.append("no knowledge bases loaded")

    overlay: Optional[BoundOverlay] = None
    if not problems:
        try:
            overlay = bind_overlay(merge_overlays(specs), graphs)
        except OverlayBindError as exc:
            problems.extend(f"overlay: {d}" for d in exc.diagnostics)

    if problems:
        raise BundleError(problems)
    assert overlay is not None
    return PlatformState(
        kbs=kbs, graphs=graphs, stats=stats, overlay=overlay, warnings=tuple(warnings)
    )


def load_bundle_dir(bundle_dir: Path | str) -> PlatformState:
    """Load every .kb and .overlay file under a directory (sorted by name)."""
    bundle_dir = Path(bundle_dir)
    paths = sorted(bundle_dir.glob("*.kb")) + sorted(bundle_dir.glob("*.overlay"))
    if not paths:
        raise BundleError([f"{bundle_dir}: no .kb or .overlay files found"])
    return load_bundle(paths)


@dataclass
class Session:
    id: str
    kb_ids: list[str]
    answers: dict[str, dict[str, str]]
    created_at: str
    updated_at: str
    schema_version: int = SCHEMA_VERSION

    def to_document(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "id": self.id,
            "kb_ids": list(self.kb_ids),
            "answers": {kb: dict(ans) for kb, ans in self.answers.items()},
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @staticmethod
    def from_document(doc: dict) -> "Session":
        return Session(
            id=doc["id"],
            kb_ids=list(doc["kb_ids"]),
            answers={kb: dict(ans) for kb, ans in doc.get("answers", {}).items()},
            created_at=doc["created_at"],
            updated_at=doc["updated_at"],
            schema_version=doc.get("schema_version", SCHEMA_VERSION),
        )


class PlatformService:
    """Sessions plus assessment assembly over immutable platform state.

    Submits to the same session apply in some total order, each atomic;
    distinct sessions are independent. Readers always see a committed
    snapshot of the answers.
    """

    def __init__(self, state: PlatformState, data_dir: Optional[Path | str] = None):
        self.state = state
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.data_dir.glob("*.json")):
                doc = json.loads(path.read_text(encoding="utf-8"))
                session = Session.from_document(doc)
                self._sessions[session.id] = session
                self._locks[session.id] = threading.Lock()

    # --- session lifecycle ----------------------------------------------

    def create_session(self, kb_ids: list[str]) -> dict:
        if not kb_ids:
            raise UnknownKbError("a session needs at least one kb id")
        for kb_id in kb_ids:
            if kb_id not in self.state.graphs:
                raise UnknownKbError(f"unknown kb id {kb_id!r}")
        now = _now()
        session = Session(
            id=uuid.uuid4().hex,
            kb_ids=list(kb_ids),
            answers={},
            created_at=now,
            updated_at=now,
        )
        with self._registry_lock:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self._persist(session.id, session.to_document())
        return session.to_document()

    def import_session(self, doc: dict) -> dict:
        """Register an exported session document (round-trip support)."""
        session = Session.from_document(doc)
        for kb_id in session.kb_ids:
            if kb_id not in self.state.graphs:
                raise UnknownKbError(f"unknown kb id {kb_id!r}")
        self._validate_patch(session, session.answers)
        with self._registry_lock:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self._persist(session.id, session.to_document())
        return session.to_document()

    def _get(self, session_id: str) -> tuple[Session, threading.Lock]:
        with self._registry_lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise UnknownSessionError(session_id)
            return session, self._locks[session_id]

    def _snapshot(self, session_id: str) -> Session:
        session, lock = self._get(session_id)
        with lock:
            return Session.from_document(session.to_document())

    def _validate_patch(self, session: Session, patch: dict[str, dict[str, str]]) -> None:
        for kb_id, answers in patch.items():
            if kb_id not in session.kb_ids:
                raise UnknownKbError(f"kb {kb_id!r} is not part of this session")
            graph = self.state.graphs[kb_id]
            for attr, level in answers.items():
                idx = graph.index.get(attr)
                if idx is None or not graph.is_input(idx):
                    raise InvalidAnswerError(f"unknown input {attr!r} in kb {kb_id!r}")
                if level not in graph.levels[idx]:
                    raise InvalidAnswerError(
                        f"{level!r} not in scale {graph.scale_names[idx]!r} "
                        f"of {kb_id}.{attr}"
                    )

    def submit_answers(self, session_id: str, patch: dict[str, dict[str, str]]) -> dict:
        """Merge new answers; all-or-nothing on validation failure."""
        session, lock = self._get(session_id)
        self._validate_patch(session, patch)
        with lock:
            merged = {kb: dict(ans) for kb, ans in session.answers.items()}
            for kb_id, answers in patch.items():
                merged.setdefault(kb_id, {}).update(answers)
            session.answers = merged
            session.updated_at = _now()
            doc = session.to_document()
            # persist inside the lock so file contents follow commit order
            self._persist(session.id, doc)
        return doc

    def export_session(self, session_id: str) -> dict:
        return self._snapshot(session_id).to_document()

    def _persist(self, session_id: str, doc: dict) -> None:
        if self.data_dir is None:
            return
        target = self.data_dir / f"{session_id}.json"
        fd, tmp = tempfile.mkstemp(dir=self.data_dir, prefix=".session-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, ensure_ascii=False, indent=2)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # --- read side --------------------------------------------------------

    def kb_listing(self) -> list[dict]:
        return [
            {"id": kb_id, "version": kb.version, "stats": self.state.stats[kb_id].to_dict()}
            for kb_id, kb in self.state.kbs.items()
        ]

    def kb_schema(self, kb_id: str) -> dict:
        graph = self.state.graphs.get(kb_id)
        if graph is None:
            raise UnknownKbError(f"unknown kb id {kb_id!r}")
        return {
            "inputs": [
                {
                    "name": spec.name,
                    "scale": list(spec.levels),
                    "question": spec.question,
                    "help": list(spec.help),
                }
                for spec in graph.manifest
            ]
        }

    def _evaluate_all(self, session: Session) -> dict:
        """One evaluation pass per kb the session or the overlay needs."""
        results = {}
        for kb_id in session.kb_ids:
            results[kb_id] = evaluate(self.state.graphs[kb_id], session.answers.get(kb_id, {}))
        # overlays may span kbs outside the session; those are evaluated
        # with no answers so their attributes read as unknown
        for kb_id in self.state.overlay.referenced_kbs:
            if kb_id not in results and kb_id in self.state.graphs:
                results[kb_id] = evaluate(self.state.graphs[kb_id], {})
        return results

    def assessment(self, session_id: str) -> dict:
        """Everything derived from one snapshot of the session's answers."""
        session = self._snapshot(session_id)
        results = self._evaluate_all(session)
        flags = detect_red_flags(self.state.overlay, results)
        risk = risk_score(self.state.overlay, results)
        valuation = compute_valuation(self.state.overlay, results)
        return {
            "values": {kb_id: dict(results[kb_id].values) for kb_id in session.kb_ids},
            "unknowns": {kb_id: list(results[kb_id].unknowns) for kb_id in session.kb_ids},
            "red_flags": [
                {
                    "id": s.flag_id,
                    "state": s.state.value,
                    "severity": s.severity.value,
                    "message": s.message,
                }
                for s in flags
            ],
            "risk": {
                "score": risk.score,
                "coverage": risk.coverage,
                "contributions": [
                    {
                        "attribute": c.ref,
                        "weight": c.weight,
                        "level": c.level,
                        "score": c.score,
                    }
                    for c in risk.contributions
                ],
            },
            "valuation": {
                "categories": [
                    {
                        "name": c.name,
                        "raw": c.raw,
                        "share": c.share,
                        "confidence": c.confidence,
                    }
                    for c in valuation.categories
                ],
            },
            "next_questions": self._next_questions(session, DEFAULT_QUESTION_COUNT),
        }

    def _next_questions(self, session: Session, k: int) -> list[dict]:
        out: list[dict] = []
        for kb_id in session.kb_ids:
            graph = self.state.graphs[kb_id]
            for name in next_questions(graph, session.answers.get(kb_id, {}), k):
                spec = next(s for s in graph.manifest if s.name == name)
                out.append({"kb_id": kb_id, "attr": name, "question": spec.question})
                if len(out) >= k:
                    return out
        return out

    def questions(self, session_id: str, k: int = DEFAULT_QUESTION_COUNT) -> list[dict]:
        if k < 1:
            raise InvalidAnswerError("k must be >= 1")
        return self._next_questions(self._snapshot(session_id), k)

    def explain(self, session_id: str, kb_id: str, attribute: str) -> dict:
        session = self._snapshot(session_id)
        if kb_id not in session.kb_ids:
            raise UnknownKbError(f"kb {kb_id!r} is not part of this session")
        graph = self.state.graphs[kb_id]
        if attribute not in graph.index:
            raise InvalidAnswerError(f"unknown attribute {attribute!r} in kb {kb_id!r}")
        result = evaluate(graph, session.answers.get(kb_id, {}))
        return explain(result, graph, attribute).to_dict()

    def prefill_suggestions(self, session_id: str) -> dict:
        """Extension hook for document-extraction pre-fill; intentionally a
        no-op that returns no suggestions."""
        self._snapshot(session_id)  # 404 on unknown session
        return {"suggestions": {}}
