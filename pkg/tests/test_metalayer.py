"""Red flags, risk scoring and valuation, with brute-force oracles."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intaudit import (
    bind_overlay,
    compile_kb,
    compute_valuation,
    detect_red_flags,
    evaluate,
    parse_kb,
    parse_overlay,
    risk_score,
)
from intaudit.metalayer import FlagState, OverlayBindError
from intaudit.model import (
    Comparator,
    ConditionTerm,
    OverlaySpec,
    QualifiedRef,
    RedFlagDef,
    RiskEntry,
    Severity,
)
from intaudit.synthetic import random_full_assignment, random_kb, random_overlay


def results_for(graph, answers):
    return {graph.kb_id: evaluate(graph, answers)}


class TestBindOverlay:
    def test_demo_overlay_binds(self, demo_bound):
        assert demo_bound.referenced_kbs == frozenset({"demo"})
        assert len(demo_bound.risks) == 1
        assert demo_bound.risks[0].scores == (1.0, 0.4, 0.0)

    def test_unknown_attribute(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nredflag "f" severity info when demo.missing = low message "m"'
        )
        with pytest.raises(OverlayBindError) as exc:
            bind_overlay(spec, {"demo": demo_graph})
        assert any("unknown attribute demo.missing" in str(d) for d in exc.value.diagnostics)

    def test_unknown_kb(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nrisk ghost.attr weight 1.0 { low -> 1.0 }'
        )
        with pytest.raises(OverlayBindError) as exc:
            bind_overlay(spec, {"demo": demo_graph})
        assert any("unknown kb id 'ghost'" in str(d) for d in exc.value.diagnostics)

    def test_incomplete_severity_map(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nrisk demo.protection weight 1.0 { low -> 1.0, medium -> 0.4 }'
        )
        with pytest.raises(OverlayBindError) as exc:
            bind_overlay(spec, {"demo": demo_graph})
        assert any(
            "severity map must cover all levels of l3" in str(d)
            for d in exc.value.diagnostics
        )

    def test_score_out_of_range(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nrisk demo.protection weight 1.0 '
            "{ low -> 1.5, medium -> 0.4, high -> 0.0 }"
        )
        with pytest.raises(OverlayBindError):
            bind_overlay(spec, {"demo": demo_graph})

    def test_nonpositive_weight(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nrisk demo.protection weight 0.0 '
            "{ low -> 1.0, medium -> 0.4, high -> 0.0 }"
        )
        with pytest.raises(OverlayBindError):
            bind_overlay(spec, {"demo": demo_graph})


class TestRedFlags:
    def test_triggered(self, demo_bound, demo_graph):
        results = results_for(demo_graph, {"policy": "low"})  # protection = low
        status = detect_red_flags(demo_bound, results)[0]
        assert status.state is FlagState.TRIGGERED
        assert status.term_truth == (True,)

    def test_potential_on_unknown(self, demo_bound, demo_graph):
        results = results_for(demo_graph, {"policy": "high"})  # protection unknown
        status = detect_red_flags(demo_bound, results)[0]
        assert status.state is FlagState.POTENTIAL
        assert status.term_truth == (None,)

    def test_clear_on_false_term(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nredflag "f" severity warning '
            'when demo.protection <= medium and demo.policy = high message "m"'
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        # protection=medium (first term true), policy=low (second false)
        results = results_for(demo_graph, {"policy": "medium", "coverage": "medium"})
        status = detect_red_flags(bound, results)[0]
        assert status.state is FlagState.CLEAR
        assert status.term_truth == (True, False)

    def test_order_comparators(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\n'
            'redflag "ge" severity info when demo.policy >= medium message "m"\n'
            'redflag "le" severity info when demo.policy <= medium message "m"\n'
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        by_id = {
            s.flag_id: s.state
            for s in detect_red_flags(bound, results_for(demo_graph, {"policy": "high"}))
        }
        assert by_id == {"ge": FlagState.TRIGGERED, "le": FlagState.CLEAR}

    def test_three_valued_oracle_small(self, demo_graph):
        # enumerate all completions of the unknown attributes and compare;
        # terms reference distinct attributes, as red flags combine states
        # from different parts of a knowledge base
        rng = random.Random(99)
        levels = ("low", "medium", "high")
        for _ in range(200):
            attrs = rng.sample(("policy", "coverage", "protection"), k=rng.randint(1, 3))
            terms = tuple(
                ConditionTerm(
                    QualifiedRef("demo", attr),
                    rng.choice(list(Comparator)),
                    rng.choice(levels),
                )
                for attr in attrs
            )
            flag = RedFlagDef("f", Severity.INFO, terms, "m")
            bound = bind_overlay(OverlaySpec("o", red_flags=(flag,)), {"demo": demo_graph})
            answers = {
                name: rng.choice(levels)
                for name in ("policy", "coverage")
                if rng.random() < 0.5
            }
            results = results_for(demo_graph, answers)
            state = detect_red_flags(bound, results)[0].state
            _assert_state_matches_enumeration(flag, results["demo"], levels, state)

    def test_contradictory_terms_on_one_attribute_stay_potential(self, demo_graph):
        # `x = low and x = high` can never fire, but the three-valued table
        # is normative: with x unknown neither term is false, so the flag is
        # potential until x resolves and one term goes false
        spec = parse_overlay(
            'overlay "x"\nredflag "f" severity info '
            'when demo.protection = low and demo.protection = high message "m"'
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        unknown = detect_red_flags(bound, results_for(demo_graph, {"policy": "high"}))
        assert unknown[0].state is FlagState.POTENTIAL
        resolved = detect_red_flags(bound, results_for(demo_graph, {"policy": "low"}))
        assert resolved[0].state is FlagState.CLEAR


def _term_truth(term, level):
    if level is None:
        return None
    li = ("low", "medium", "high").index(level)
    ti = ("low", "medium", "high").index(term.level)
    if term.comparator is Comparator.EQ:
        return li == ti
    if term.comparator is Comparator.GE:
        return li >= ti
    return li <= ti


def _assert_state_matches_enumeration(flag, result, levels, state):
    current = {t.ref.attr: result.values.get(t.ref.attr) for t in flag.conditions}
    truths = [_term_truth(t, current[t.ref.attr]) for t in flag.conditions]
    unknown_attrs = sorted({a for a, lvl in current.items() if lvl is None})
    fires, total = 0, 0
    for combo in itertools.product(levels, repeat=len(unknown_attrs)):
        filled = dict(current) | dict(zip(unknown_attrs, combo))
        total += 1
        if all(_term_truth(t, filled[t.ref.attr]) for t in flag.conditions):
            fires += 1
    if state is FlagState.TRIGGERED:
        assert all(t is True for t in truths)
        assert fires == total  # fires under every completion
    elif state is FlagState.CLEAR:
        assert any(t is False for t in truths)
        assert fires == 0  # a resolved false term can never come true
    else:
        assert fires >= 1  # some completion fires
        assert not all(t is True for t in truths)


class TestRiskScore:
    def test_single_worst_case_entry(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nrisk demo.protection weight 2.0 '
            "{ low -> 1.0, medium -> 0.4, high -> 0.0 }"
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        report = risk_score(bound, results_for(demo_graph, {"policy": "low"}))
        assert report.score == 100.0
        assert report.coverage == 1.0

    def test_weighted_mean_of_two_entries(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\n'
            "risk demo.protection weight 2.0 { low -> 1.0, medium -> 0.4, high -> 0.0 }\n"
            "risk demo.policy weight 1.0 { low -> 0.1, medium -> 0.4, high -> 0.9 }\n"
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        # protection=low (s=1.0), policy=medium (s=0.4): (2*1.0 + 1*0.4)/3 * 100 = 80
        results = results_for(demo_graph, {"policy": "medium", "coverage": "low"})
        report = risk_score(bound, results)
        assert report.score == pytest.approx(80.0, abs=1e-9)
        assert len(report.contributions) == 2

    def test_undefined_when_nothing_resolved(self, demo_bound, demo_graph):
        report = risk_score(demo_bound, results_for(demo_graph, {}))
        assert report.score is None
        assert report.coverage == 0.0
        assert report.contributions == ()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_bounds_and_weight_scale_invariance(self, seed):
        rng = random.Random(seed)
        kbs = [random_kb(rng, kb_id=f"kb{i}") for i in range(2)]
        graphs = {kb.id: compile_kb(kb) for kb in kbs}
        spec = random_overlay(rng, kbs, n_flags=0, n_categories=0, n_risks=5)
        results = {
            kb.id: evaluate(
                graphs[kb.id],
                {
                    k: v
                    for k, v in random_full_assignment(rng, kb).items()
                    if rng.random() < 0.7
                },
            )
            for kb in kbs
        }
        base = risk_score(bind_overlay(spec, graphs), results)
        if base.score is not None:
            assert 0.0 <= base.score <= 100.0
        for c in (0.1, 10.0):
            scaled_spec = OverlaySpec(
                spec.name,
                risk_entries=tuple(
                    RiskEntry(e.ref, e.weight * c, e.severity_map)
                    for e in spec.risk_entries
                ),
            )
            scaled = risk_score(bind_overlay(scaled_spec, graphs), results)
            if base.score is None:
                assert scaled.score is None
            else:
                assert scaled.score == pytest.approx(base.score, abs=1e-9)


class TestValuation:
    def test_two_categories_share(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\n'
            'valuation category "brand" base 1.0\n'
            "  driver demo.protection { low -> 0.5, medium -> 1.0, high -> 2.0 }\n"
            'valuation category "data" base 1.0\n'
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        results = results_for(demo_graph, {"policy": "high", "coverage": "high"})
        report = compute_valuation(bound, results)
        by_name = {c.name: c for c in report.categories}
        assert by_name["brand"].raw == pytest.approx(2.0)
        assert by_name["data"].raw == pytest.approx(1.0)
        assert by_name["brand"].share == pytest.approx(2 / 3)
        assert by_name["data"].share == pytest.approx(1 / 3)

    def test_single_category_share_is_one(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nvaluation category "solo" base 3.5\n'
            "  driver demo.protection { low -> 0.5, medium -> 1.0, high -> 2.0 }\n"
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        report = compute_valuation(bound, results_for(demo_graph, {}))
        assert report.categories[0].share == 1.0

    def test_unresolved_driver_neutral(self, demo_graph):
        spec = parse_overlay(
            'overlay "x"\nvaluation category "c" base 2.0\n'
            "  driver demo.protection { low -> 0.5, medium -> 1.0, high -> 2.0 }\n"
        )
        bound = bind_overlay(spec, {"demo": demo_graph})
        report = compute_valuation(bound, results_for(demo_graph, {}))
        cat = report.categories[0]
        assert cat.raw == 2.0  # base only; unresolved driver contributes factor 1
        assert cat.confidence == 0.0

    def test_driverless_category_confidence(self, demo_bound, demo_graph):
        report = compute_valuation(demo_bound, results_for(demo_graph, {}))
        by_name = {c.name: c for c in report.categories}
        assert by_name["data"].confidence == 1.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_shares_sum_to_one(self, seed):
        rng = random.Random(seed)
        kbs = [random_kb(rng, kb_id=f"kb{i}") for i in range(2)]
        graphs = {kb.id: compile_kb(kb) for kb in kbs}
        spec = random_overlay(rng, kbs, n_flags=0, n_risks=0, n_categories=4)
        results = {
            kb.id: evaluate(graphs[kb.id], random_full_assignment(rng, kb)) for kb in kbs
        }
        report = compute_valuation(bind_overlay(spec, graphs), results)
        assert sum(c.share for c in report.categories) == pytest.approx(1.0, abs=1e-9)
        assert all(0.0 <= c.share <= 1.0 for c in report.categories)


class TestMonotoneRefinement:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_flags_never_flip_between_definite_states(self, seed):
        rng = random.Random(seed)
        kb = random_kb(rng)
        graph = compile_kb(kb)
        spec = random_overlay(rng, [kb], n_flags=4, n_risks=0, n_categories=0)
        bound = bind_overlay(spec, {kb.id: graph})
        full = random_full_assignment(rng, kb)
        order = list(full)
        rng.shuffle(order)
        answers: dict = {}
        previous: dict[str, FlagState] = {}
        for name in order:
            answers[name] = full[name]
            states = {
                s.flag_id: s.state
                for s in detect_red_flags(bound, {kb.id: evaluate(graph, answers)})
            }
            for flag_id, old in previous.items():
                new = states[flag_id]
                if old is FlagState.TRIGGERED:
                    assert new is FlagState.TRIGGERED
                elif old is FlagState.CLEAR:
                    assert new is FlagState.CLEAR
            previous = states
