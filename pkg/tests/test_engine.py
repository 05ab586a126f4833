"""Three-valued evaluation, explanation trees, and question ranking."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intaudit import compile_kb, evaluate, explain, flatten, next_questions, parse_kb
from intaudit.engine import EvaluationError
from intaudit.synthetic import random_full_assignment, random_kb


class TestEvaluate:
    def test_full_assignment_direct_match(self, demo_graph):
        result = evaluate(demo_graph, {"policy": "high", "coverage": "high"})
        assert result.values["protection"] == "high"
        assert result.trace["protection"].row_text == "(high, high) -> high"
        assert result.unknowns == ()

    def test_partial_resolves_through_wildcard(self, demo_graph):
        # row 1 `(low, *)` definitely matches with no earlier rows
        result = evaluate(demo_graph, {"policy": "low"})
        assert result.values["protection"] == "low"
        assert result.unknowns == ("coverage",)

    def test_partial_blocked_by_possible_row(self, demo_graph):
        # row 2 `(*, low)` might match while coverage is unanswered,
        # so row 3 cannot fire and protection stays unknown
        result = evaluate(demo_graph, {"policy": "high"})
        assert "protection" not in result.values
        assert set(result.unknowns) == {"coverage", "protection"}

    def test_inputs_echo_answers(self, demo_graph):
        result = evaluate(demo_graph, {"policy": "medium"})
        assert result.values["policy"] == "medium"

    def test_unknown_input_rejected(self, demo_graph):
        with pytest.raises(EvaluationError, match="unknown input"):
            evaluate(demo_graph, {"nope": "low"})
        with pytest.raises(EvaluationError, match="unknown input"):
            evaluate(demo_graph, {"protection": "low"})  # derived, not an input

    def test_illegal_level_rejected(self, demo_graph):
        with pytest.raises(EvaluationError, match="'purple' not in scale"):
            evaluate(demo_graph, {"policy": "purple"})

    def test_purity(self, demo_graph):
        a = evaluate(demo_graph, {"policy": "low"})
        b = evaluate(demo_graph, {"policy": "low"})
        assert a == b  # timestamps excluded from comparison
        assert a.trace == b.trace

    def test_full_assignment_totality_random(self):
        rng = random.Random(11)
        for _ in range(50):
            kb = random_kb(rng)
            graph = compile_kb(kb)
            result = evaluate(graph, random_full_assignment(rng, kb))
            assert result.unknowns == ()

    def test_trace_soundness_random(self):
        # re-check every fired row: it must definitely match the recorded
        # child statuses and every earlier row must definitely fail
        rng = random.Random(23)
        for _ in range(40):
            kb = random_kb(rng)
            graph = compile_kb(kb)
            answers = {
                name: level
                for name, level in random_full_assignment(rng, kb).items()
                if rng.random() < 0.6
            }
            result = evaluate(graph, answers)
            status = {
                name: result.values.get(name) for name in graph.names
            }
            for name, fr in result.trace.items():
                block = graph.blocks[graph.index[name]]
                rows = block.rows
                for ri in range(fr.row_index):
                    assert _definitely_fails(graph, rows[ri], status), (name, ri)
                assert _definitely_matches(graph, rows[fr.row_index], status)


def _definitely_matches(graph, row, status: dict) -> bool:
    for child, mask in row.checks:
        level = status[graph.names[child]]
        if level is None:
            return False
        if not (mask >> graph.levels[child].index(level)) & 1:
            return False
    return True


def _definitely_fails(graph, row, status: dict) -> bool:
    for child, mask in row.checks:
        level = status[graph.names[child]]
        if level is not None and not (mask >> graph.levels[child].index(level)) & 1:
            return True
    return False


class TestMonotonicity:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_adding_answers_never_retracts(self, seed):
        rng = random.Random(seed)
        kb = random_kb(rng)
        graph = compile_kb(kb)
        full = random_full_assignment(rng, kb)
        order = list(full)
        rng.shuffle(order)
        answers: dict = {}
        previous: dict = {}
        for name in order:
            answers[name] = full[name]
            current = evaluate(graph, answers).values
            for attr, level in previous.items():
                assert current.get(attr) == level, f"{attr} changed or vanished"
            previous = current

    def test_flatten_agreement_demo(self, demo_graph):
        flat = flatten(demo_graph)
        for combo in itertools.product(*flat.input_levels):
            result = evaluate(demo_graph, dict(zip(flat.inputs, combo)))
            assert result.values["protection"] == flat.rows[combo]


class TestExplain:
    def test_resolved_tree(self, demo_graph):
        result = evaluate(demo_graph, {"policy": "low", "coverage": "high"})
        node = explain(result, demo_graph, "protection")
        assert node.value == "low"
        assert node.fired.row_text == "(low, *) -> low"
        assert [(c.attribute, c.value) for c in node.children] == [
            ("policy", "low"),
            ("coverage", "high"),
        ]

    def test_input_is_leaf(self, demo_graph):
        result = evaluate(demo_graph, {"policy": "low"})
        node = explain(result, demo_graph, "policy")
        assert node.kind == "input"
        assert node.children == ()
        assert node.value == "low"

    def test_unknown_derived_shows_gaps(self, demo_graph):
        result = evaluate(demo_graph, {"policy": "high"})
        node = explain(result, demo_graph, "protection")
        assert node.value is None
        gaps = [c.attribute for c in node.children if c.value is None]
        assert gaps == ["coverage"]

    def test_unknown_attribute_rejected(self, demo_graph):
        result = evaluate(demo_graph, {})
        with pytest.raises(EvaluationError, match="unknown attribute"):
            explain(result, demo_graph, "nope")

    def test_depth_bounded(self):
        src = """kb "chain" version 1
        scale s = lo | hi
        attribute c : s input question "q?"
        attribute b : s derived rules (c) { default -> lo }
        attribute a : s derived rules (b) { default -> lo }
        goal a
        """
        graph = compile_kb(parse_kb(src))
        node = explain(evaluate(graph, {"c": "lo"}), graph, "a")

        def depth(n):
            return 1 + max((depth(c) for c in n.children), default=0)

        assert depth(node) == 3  # kb max_depth 2, plus the root level


class TestNextQuestions:
    def test_empty_answers_ranks_by_declaration(self, demo_graph):
        assert next_questions(demo_graph, {}, 5) == ["policy", "coverage"]

    def test_goal_resolved_means_empty(self, demo_graph):
        assert next_questions(demo_graph, {"policy": "low"}, 5) == []

    def test_single_missing_input(self, demo_graph):
        assert next_questions(demo_graph, {"policy": "high"}, 5) == ["coverage"]

    def test_k_truncates(self, demo_graph):
        assert next_questions(demo_graph, {}, 1) == ["policy"]

    def test_k_must_be_positive(self, demo_graph):
        with pytest.raises(ValueError):
            next_questions(demo_graph, {}, 0)

    def test_ranking_prefers_more_unknowns(self):
        src = """kb "rank" version 1
        scale s = lo | hi
        attribute shared : s input question "q?"
        attribute solo : s input question "q?"
        attribute d1 : s derived rules (shared) { (lo) -> lo (hi) -> hi }
        attribute d2 : s derived rules (shared, solo) { (lo, *) -> lo (hi, lo) -> lo (hi, hi) -> hi }
        attribute g : s derived rules (d1, d2) { (lo, *) -> lo (hi, lo) -> lo (hi, hi) -> hi }
        goal g
        """
        graph = compile_kb(parse_kb(src))
        # shared appears in the ancestry of d1, d2 and g (3 unknowns);
        # solo only in d2 and g (2)
        assert next_questions(graph, {}, 5) == ["shared", "solo"]
