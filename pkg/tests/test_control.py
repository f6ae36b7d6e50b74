from __future__ import annotations

import numpy as np
import pytest

from pwagrn.control import (
    ContradictoryTarget, effective_terms, extend_with_controller, fast_controller_report, focal_region_for_box,
    synthesize, u_interval, verify_law,
)
from pwagrn.graph import ControlLaw, TransitionGraph, build_transition_graph, fixed_boxes, parse_box
from pwagrn.model import Factor, Network, StepPolynomial, Term, focal_point

B = parse_box


def _retarget(net, tg, drop, add):
    pairs = (tg.edge_pairs - {(B(a), B(b)) for a, b in drop}) | {(B(a), B(b)) for a, b in add}
    return TransitionGraph.from_edges(net.boxes(), pairs)


@pytest.fixture(scope="module")
def squeeze():
    """Both coordinates have focal value 1/(1+u); x1 must stay above 0.5 while x2 drops below 0.25."""
    return Network(
        ("x1", "x2"),
        ((0.0, 0.5, 2.0), (0.0, 0.25, 2.0)),
        (StepPolynomial.constant(1.0), StepPolynomial.constant(1.0)),
        (StepPolynomial.constant(1.0), StepPolynomial.constant(1.0)),
        (StepPolynomial.constant(1.0), StepPolynomial.constant(1.0)),
        5.0,
    )


class TestFocalRegion:
    def test_fixed_box(self, ex1):
        assert focal_region_for_box(ex1, B("10"), []) == ((1, 2), (0, 1))

    def test_two_exits(self, ex1):
        assert focal_region_for_box(ex1, B("20"), [B("10"), B("21")]) == ((1, 2), (1, 2))

    def test_exact_policy_reaches_the_cap(self, ex1):
        assert focal_region_for_box(ex1, B("00"), [B("10")], "exact") == ((1, 3), (0, 1))
        assert focal_region_for_box(ex1, B("20"), [B("10")], "exact") == ((0, 2), (0, 1))

    def test_contradiction(self, ex1):
        with pytest.raises(ContradictoryTarget):
            focal_region_for_box(ex1, B("10"), [B("00"), B("20")])

    def test_non_unit_step(self, ex1):
        with pytest.raises(ValueError):
            focal_region_for_box(ex1, B("00"), [B("11")])

    def test_unknown_policy(self, ex1):
        with pytest.raises(ValueError):
            focal_region_for_box(ex1, B("00"), [], "loose")


class TestInterval:
    def test_example1_box00(self, ex1):
        # phi_1 = 0.9 / (1 + u) must sit in (0.5, 0.75)
        iv = u_interval(ex1, B("00"), ((1, 2), (0, 1)))
        assert abs(iv.lo - 0.2) < 1e-12 and abs(iv.hi - 0.8) < 1e-12
        for u in (iv.lo + 1e-6, iv.midpoint, iv.hi - 1e-6):
            assert 0.5 < focal_point(ex1, B("00"), u)[0] < 0.75

    def test_input_free_coordinate(self, ex1):
        # x2 has no input term: phi_2 = 0 can never exceed 0.5
        iv = u_interval(ex1, B("00"), ((0, 1), (1, 2)))
        assert not iv.feasible
        cert = iv.certificate()
        assert cert["reason"] == "fixed focal bound violated" and cert["variable"] == 1 and cert["focal"] == 0.0

    def test_clashing_bounds(self, squeeze):
        iv = u_interval(squeeze, (0, 0), ((1, 2), (0, 1)))
        assert abs(iv.hi - 1.0) < 1e-12 and abs(iv.lo - 3.0) < 1e-12
        cert = iv.certificate()
        assert cert["reason"] == "empty interval"
        assert cert["lower"]["value"] > cert["upper"]["value"]

    def test_to_dict(self, ex1):
        doc = u_interval(ex1, B("00"), ((1, 2), (0, 1))).to_dict()
        assert doc["feasible"] and doc["box"] == [0, 0]


class TestSynthesis:
    def test_example1_result(self, ex1, ex1_target):
        res = synthesize(ex1, ex1_target)
        assert res.status == "ok" and res.changed == (B("10"), B("20"))
        assert verify_law(ex1, res.law, ex1_target)
        assert res.law(B("00")) == 0.0

    @pytest.mark.parametrize("u", [0.3, 0.35, 0.21, 0.49])
    def test_example2_uniform_values(self, ex2, ex2_target, u):
        assert verify_law(ex2, ControlLaw(default=u), ex2_target)

    @pytest.mark.parametrize("u", [0.1, 0.6])
    def test_example2_outside_interval(self, ex2, ex2_target, u):
        assert not verify_law(ex2, ControlLaw(default=u), ex2_target)

    def test_example2_common_interval(self, ex2, ex2_target):
        res = synthesize(ex2, ex2_target)
        lo, hi = res.common
        assert abs(lo - 0.2) < 1e-12 and abs(hi - 0.5) < 1e-12
        assert abs(res.uniform_value - 0.35) < 1e-12

    def test_untouched_target_needs_nothing(self, ex1):
        res = synthesize(ex1, build_transition_graph(ex1))
        assert res.changed == () and res.status == "ok" and res.common is None

    def test_infeasible_target(self, ex1, ex1_target):
        bad = _retarget(ex1, ex1_target, [("00", "10")], [("00", "01")])
        res = synthesize(ex1, bad)
        assert res.status == "infeasible" and res.law is None
        assert any(c["box"] == [0, 0] for c in res.certificates)

    def test_contradictory_target(self, ex1, ex1_target):
        bad = _retarget(ex1, ex1_target, [], [("10", "00"), ("10", "20")])
        res = synthesize(ex1, bad)
        assert res.status == "infeasible"
        assert "both ways" in res.certificates[0]["reason"]

    def test_to_dict_names_variables(self, ex2, ex2_target):
        doc = synthesize(ex2, ex2_target).to_dict(ex2)
        assert doc["status"] == "ok"
        assert {t["variable"] for t in doc["effective_terms"]} <= set(ex2.names)

    def test_effective_terms_keep_tightest(self, ex2, ex2_target):
        res = synthesize(ex2, ex2_target)
        terms = effective_terms(res.intervals.values())
        assert len({(t.variable, t.threshold, t.side) for t in terms}) == len(terms)
        assert max(t.value for t in terms if t.side == "lower") == res.common[0]
        assert min(t.value for t in terms if t.side == "upper") == res.common[1]


class TestController:
    def test_example1_structure(self, ex1):
        ext = extend_with_controller(ex1, [B("10"), B("20")], 0.5, 0.5, 0.1)
        assert ext.names == ("x1", "x2", "y")
        assert ext.thresholds[2] == (0.0, 0.5, 10.0)
        # y is produced on x1 >= 0.5 and x2 < 0.5
        (term,) = ext.production[2].terms
        assert set(term.factors) == {Factor(0, 1, 1), Factor(1, 1, -1)}
        switch = Factor(2, 1, 1)
        for t in ex1.decay1[0].terms:
            assert Term(t.coefficient * 0.5, t.factors + (switch,)) in ext.decay0[0].terms
        assert not ext.decay1[0].terms and ext.input_bound == ex1.input_bound

    def test_y_production_is_the_indicator(self, ex2, ex2_target):
        res = synthesize(ex2, ex2_target)
        ext = extend_with_controller(ex2, res.changed, 0.35, 0.5, 0.1)
        for a in ex2.boxes():
            want = 1.0 if a in res.changed else 0.0
            assert ext.production[3](a + (0,)) == want

    def test_extended_graph_fixes_the_target_box(self, ex1):
        ext = extend_with_controller(ex1, [B("10"), B("20")], 0.5, 0.5, 0.1)
        assert fixed_boxes(build_transition_graph(ext)) == {(1, 0, 1)}

    def test_empty_region_gives_an_inert_controller(self, ex1):
        ext = extend_with_controller(ex1, [], 0.5, 0.5, 0.1)
        tg = build_transition_graph(ext)
        lower = {(a[:2], b[:2]) for a, b in tg.edge_pairs if a[2] == b[2] == 0}
        assert lower == build_transition_graph(ex1).edge_pairs
        rep = fast_controller_report(ext)
        assert rep.boxes == [] and not rep.satisfied

    @pytest.mark.parametrize("theta, gamma", [(0.5, 2.0), (0.0, 1.0), (-1.0, 1.0)])
    def test_bad_controller_parameters(self, ex1, theta, gamma):
        with pytest.raises(ValueError):
            extend_with_controller(ex1, [B("10")], 0.5, theta, gamma)

    def test_value_outside_bound(self, ex1):
        with pytest.raises(ValueError):
            extend_with_controller(ex1, [B("10")], 1.5, 0.5, 0.1)

    @pytest.mark.parametrize("gamma, ok", [(0.1, True), (1.7, False)])
    def test_fast_controller_report(self, ex1, gamma, ok):
        ext = extend_with_controller(ex1, [B("10"), B("20")], 0.5, 0.5, gamma)
        rep = fast_controller_report(ext)
        assert rep.satisfied is ok
        assert (1, 0, 0) in rep.boxes
        f = rep.factors[(1, 0, 0)]
        winner = max(f, key=lambda i: f[i])
        assert rep.winners[(1, 0, 0)] == winner
        doc = rep.to_dict(ext)
        assert doc["controller"] == "y" and doc["satisfied"] is ok

    def test_controller_law_matches_static_law_on_a_fixed_y(self, ex1, ex1_law):
        # with y held high the extended focal point equals the static one at u = value
        ext = extend_with_controller(ex1, [B("10"), B("20")], 0.5, 0.5, 0.1)
        for a in ex1.boxes():
            assert np.allclose(focal_point(ext, a + (1,))[:2], focal_point(ex1, a, 0.5), atol=1e-15)
