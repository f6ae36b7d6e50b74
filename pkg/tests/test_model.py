from __future__ import annotations

import math

import numpy as np
import pytest

from pwagrn.model import (
    Factor, Network, NoExitError, SingularFocalError, StepPolynomial, StructureError, Term, TieError,
    WallError, exit_directions, exit_event, exit_times, flow_at, focal_point, is_fixed_box,
    transition_map, transition_step, validate_network,
)


def _net(**kw):
    base = dict(
        names=("x1",),
        thresholds=((0.0, 0.5, 1.0),),
        production=(StepPolynomial.constant(0.9),),
        decay0=(StepPolynomial.constant(1.0),),
        decay1=(StepPolynomial(),),
        input_bound=0.0,
    )
    base.update(kw)
    return Network(**base)


class TestStructure:
    def test_step_factor_values(self):
        up, down = Factor(0, 2, 1), Factor(0, 2, -1)
        assert [up.value((k,)) for k in range(3)] == [0, 0, 1]
        assert [down.value((k,)) for k in range(3)] == [1, 1, 0]

    def test_polynomial_evaluation(self):
        p = StepPolynomial((Term(0.2, (Factor(0, 1, 1), Factor(1, 1, 1))), Term(0.2, (Factor(0, 2, 1), Factor(1, 1, -1)))))
        assert p((2, 0)) == pytest.approx(0.2)
        assert p((1, 1)) == pytest.approx(0.2)
        assert p((1, 0)) == 0.0
        assert p.variables() == {0, 1}

    @pytest.mark.parametrize("ths", [(0.0, 0.5, 0.5), (0.1, 0.5, 1.0), (0.0,)])
    def test_bad_thresholds(self, ths):
        with pytest.raises(StructureError):
            _net(thresholds=(ths,))

    def test_factor_must_use_interior_threshold(self):
        with pytest.raises(StructureError):
            _net(production=(StepPolynomial((Term(1.0, (Factor(0, 2, 1),)),)),))

    def test_repeated_factor_rejected(self):
        t = Term(1.0, (Factor(0, 1, 1), Factor(0, 1, -1)))
        with pytest.raises(StructureError):
            _net(production=(StepPolynomial((t,)),))

    def test_decay_must_stay_positive(self):
        with pytest.raises(StructureError):
            _net(decay0=(StepPolynomial.constant(0.0),))
        with pytest.raises(StructureError):
            _net(decay1=(StepPolynomial.constant(-2.0),), input_bound=1.0)
        # fine when the input cannot reach the bad value
        _net(decay1=(StepPolynomial.constant(-0.5),), input_bound=1.0)

    def test_negative_production_rejected(self):
        with pytest.raises(StructureError):
            _net(production=(StepPolynomial.constant(-1.0),))

    def test_boxes_and_bounds(self, ex1):
        assert ex1.q == (3, 2)
        assert len(list(ex1.boxes())) == 6
        lo, hi = ex1.bounds((2, 1))
        assert list(lo) == [0.75, 0.5] and list(hi) == [1.0, 1.0]
        with pytest.raises(ValueError):
            ex1.check_box((3, 0))

    def test_box_of(self, ex1):
        assert ex1.box_of([0.85, 0.15]) == (2, 0)
        with pytest.raises(WallError):
            ex1.box_of([0.5, 0.2])
        assert ex1.box_of([0.5, 0.2], strict=False) == (1, 0)
        with pytest.raises(ValueError):
            ex1.box_of([1.2, 0.2])


class TestFocalPoint:
    def test_example1_box10(self, ex1):
        assert np.allclose(focal_point(ex1, (1, 0)), [0.9, 0.0], atol=1e-15)

    def test_example1_box11(self, ex1):
        assert np.allclose(focal_point(ex1, (1, 1)), [0.0, 0.2 / 0.3], atol=1e-15)

    def test_example1_box10_controlled(self, ex1):
        assert np.allclose(focal_point(ex1, (1, 0), 0.5), [0.6, 0.0], atol=1e-15)

    def test_no_production_gives_origin(self):
        net = _net(production=(StepPolynomial(),), decay1=(StepPolynomial.constant(1.0),), input_bound=2.0)
        for u in (0.0, 1.0, 2.0):
            assert focal_point(net, (1,), u)[0] == 0.0

    def test_input_outside_bound(self, ex1):
        with pytest.raises(ValueError):
            focal_point(ex1, (1, 0), 1.5)


class TestFlow:
    def test_identity_at_zero(self, ex1):
        x = np.array([0.3, 0.2])
        assert np.array_equal(flow_at(ex1, (0, 0), x, 0.0), x)

    def test_long_time_limit(self, ex1):
        t = 1e3 / 0.3
        assert np.allclose(flow_at(ex1, (0, 0), [0.1, 0.1], t), focal_point(ex1, (0, 0)), atol=1e-9)

    def test_example1_box00_at_t1(self, ex1):
        want = [0.9 + math.exp(-1.0) * (0.1 - 0.9), 0.0 + math.exp(-0.3) * 0.1]
        assert np.allclose(flow_at(ex1, (0, 0), [0.1, 0.1], 1.0), want, rtol=0, atol=1e-15)

    def test_negative_time(self, ex1):
        with pytest.raises(ValueError):
            flow_at(ex1, (0, 0), [0.1, 0.1], -1.0)


class TestExits:
    def test_example1_box10(self, ex1):
        assert exit_directions(ex1, (1, 0)) == ({0}, set())

    def test_example1_box10_controlled_is_fixed(self, ex1):
        assert exit_directions(ex1, (1, 0), 0.5) == (set(), set())
        assert is_fixed_box(ex1, (1, 0), 0.5)

    def test_range_caps_never_escape(self, ex1):
        # phi_1 = 0.9 < 1.0 = cap: box 2x has nothing above
        up, _ = exit_directions(ex1, (2, 0))
        assert 0 not in up

    def test_focal_on_threshold_is_singular(self):
        net = _net(production=(StepPolynomial.constant(0.5),))
        with pytest.raises(SingularFocalError):
            exit_directions(net, (0,))

    def test_exit_time_example1(self, ex1):
        ev = exit_event(ex1, (0, 0), [0.1, 0.1])
        assert (ev.direction, ev.sign) == (0, 1)
        assert abs(ev.tau - math.log(2)) < 1e-14

    def test_exit_time_matches_bisection(self, ex1):
        tau = exit_event(ex1, (0, 0), [0.1, 0.1]).tau
        lo, hi = 0.0, 5.0
        for _ in range(200):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if flow_at(ex1, (0, 0), [0.1, 0.1], mid)[0] < 0.5 else (lo, mid)
        assert abs(tau - hi) < 1e-12

    def test_start_on_exit_wall_rejected(self, ex1):
        with pytest.raises(WallError):
            exit_times(ex1, (0, 0), [0.5, 0.1])

    def test_fixed_box_has_no_exit(self, ex1):
        with pytest.raises(NoExitError):
            exit_event(ex1, (1, 0), [0.6, 0.1], 0.5)
        with pytest.raises(NoExitError):
            transition_map(ex1, (1, 0), [0.6, 0.1], 0.5)

    def test_symmetric_race_is_a_tie(self, toy):
        # both coordinates race to 0.5 from the same distance at the same rate
        with pytest.raises(TieError):
            exit_event(toy, (0, 0), [0.2, 0.2])

    def test_point_outside_box(self, ex1):
        with pytest.raises(ValueError):
            exit_times(ex1, (0, 0), [0.7, 0.1])


class TestTransitionMap:
    def test_example1_box00(self, ex1):
        y, b = transition_map(ex1, (0, 0), [0.1, 0.1])
        assert b == (1, 0)
        assert y[0] == 0.5
        assert abs(y[1] - 0.1 * 2 ** -0.3) < 1e-15

    def test_step_reports_time(self, ex1):
        y, b, tau = transition_step(ex1, (0, 0), [0.1, 0.1])
        assert abs(tau - math.log(2)) < 1e-14

    def test_landing_at_a_corner_is_a_tie(self, toy):
        with pytest.raises(TieError):
            transition_map(toy, (0, 0), [0.2, 0.2])

    def test_box_flow_agrees(self, ex2):
        rng = np.random.default_rng(1)
        for a in ex2.boxes():
            lo, hi = ex2.bounds(a)
            for _ in range(5):
                x = lo + (hi - lo) * rng.uniform(0.05, 0.95, size=3)
                flow = ex2.box_flow(a, 0.3)
                if flow.fixed:
                    continue
                y1, b1, t1 = transition_step(ex2, a, x, 0.3)
                y2, i, sign, t2 = flow.step(list(x))
                assert np.allclose(y1, y2, rtol=0, atol=1e-15) and abs(t1 - t2) < 1e-15
                assert b1[i] == a[i] + sign


class TestValidation:
    def test_example1(self, ex1):
        rep = validate_network(ex1)
        assert (1, (1, 0)) in rep.h1_violations
        assert all(i == 1 for i, _ in rep.h1_violations)
        walls = {(w.lower, w.upper) for w, _ in rep.unstable_walls}
        assert ((1, 0), (1, 1)) in walls
        assert not rep.clean

    def test_toy_is_clean(self, toy):
        assert validate_network(toy).clean

    def test_focal_on_threshold_reported(self):
        # kappa = gamma * theta exactly
        net = _net(production=(StepPolynomial.constant(0.5),))
        rep = validate_network(net)
        assert rep.h2_violations

    def test_report_is_json_ready(self, ex1):
        doc = validate_network(ex1).to_dict(ex1)
        assert doc["h1_violations"][0]["variable"] == "x2"
