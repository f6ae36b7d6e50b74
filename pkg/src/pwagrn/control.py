"""Qualitative feedback synthesis for decay-controlled PWA networks.

A law ``u: boxes -> [0, U]`` realises a target transition graph exactly when,
in every box, each focal coordinate ``kappa_i / (g1_i u + g0_i)`` falls in a
range of thresholds fixed by the target edges.  Each such condition is an
open interval in ``u``, so the admissible laws form a product of intervals.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cycle import crossing_direction, opposite_wall_times
from .graph import ControlLaw, TransitionGraph, box_label, build_transition_graph, graph_diff
from .model import (
    Box, Factor, Network, PWAError, SingularFocalError, StepPolynomial, Term, exit_directions,
)

#: an interval narrower than this counts as empty
MIN_WIDTH = 1e-9


class ContradictoryTarget(PWAError):
    """The target asks a box to leave through both walls of one direction."""


@dataclass(frozen=True)
class BoundTerm:
    """One constraint ``u > value`` (side "lower") or ``u < value`` (side "upper")."""

    box: Box
    variable: int
    threshold: int
    side: str
    value: float


@dataclass(frozen=True)
class FixedConstraint:
    """A focal-coordinate bound that does not depend on ``u`` (``g1_i = 0`` or ``kappa_i = 0``)."""

    box: Box
    variable: int
    threshold: int
    kind: str   # "above" (phi_i > theta) or "below" (phi_i < theta)
    focal: float
    satisfied: bool


def focal_region_for_box(net: Network, a: Box, targets: Iterable[Box],
                         policy: str = "adjacent") -> tuple[tuple[int, int], ...]:
    """Threshold-index bounds ``(j_lo, j_hi)`` on each focal coordinate of box ``a``.

    ``targets`` are the successors demanded for ``a``.  Index ``0`` and ``q_i``
    are range caps and impose nothing.  With ``policy="exact"`` an edge up in
    direction ``i`` only asks ``phi_i > theta_i^+(a)``; with ``"adjacent"`` the
    focal coordinate must also land in the next slab, which is the choice
    that makes every box of a controlled region share one interval.
    """
    if policy not in ("adjacent", "exact"):
        raise ValueError(f"unknown policy {policy!r}")
    a = net.check_box(a)
    up, down = set(), set()
    for b in targets:
        b = net.check_box(b)
        diff = [i for i in range(net.n) if a[i] != b[i]]
        if len(diff) != 1 or abs(b[diff[0]] - a[diff[0]]) != 1:
            raise ValueError(f"{box_label(a)} -> {box_label(b)} is not a unit step")
        (up if b[diff[0]] > a[diff[0]] else down).add(diff[0])
    both = up & down
    if both:
        raise ContradictoryTarget(f"box {box_label(a)} cannot leave both ways in direction {sorted(both)}")
    region = []
    for i in range(net.n):
        q, k = net.q[i], a[i]
        if i in up:
            region.append((k + 1, min(k + 2, q) if policy == "adjacent" else q))
        elif i in down:
            region.append((max(k - 1, 0) if policy == "adjacent" else 0, k))
        else:
            region.append((k, k + 1))
    return tuple(region)


@dataclass
class BoxInterval:
    box: Box
    lo: float
    hi: float
    terms: list[BoundTerm] = field(default_factory=list)
    fixed: list[FixedConstraint] = field(default_factory=list)
    contradiction: str | None = None

    @property
    def feasible(self) -> bool:
        return (self.contradiction is None and all(c.satisfied for c in self.fixed)
                and self.hi - self.lo > MIN_WIDTH)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def certificate(self) -> dict | None:
        """Why the interval is empty: the clashing pair of bounds, or the violated fixed bound."""
        if self.feasible:
            return None
        if self.contradiction:
            return {"box": list(self.box), "reason": self.contradiction}
        bad = [c for c in self.fixed if not c.satisfied]
        if bad:
            c = bad[0]
            return {"box": list(self.box), "reason": "fixed focal bound violated",
                    "variable": c.variable, "threshold": c.threshold, "kind": c.kind, "focal": c.focal}
        lows = [t for t in self.terms if t.side == "lower"]
        highs = [t for t in self.terms if t.side == "upper"]
        lo_t = max(lows, key=lambda t: t.value) if lows else None
        hi_t = min(highs, key=lambda t: t.value) if highs else None
        return {"box": list(self.box), "reason": "empty interval",
                "lower": _term_dict(lo_t) if lo_t else {"bound": 0.0},
                "upper": _term_dict(hi_t) if hi_t else {"bound": "U"}}

    def to_dict(self) -> dict:
        return {"box": list(self.box), "lo": self.lo, "hi": self.hi, "feasible": self.feasible,
                "terms": [_term_dict(t) for t in self.terms]}


def _term_dict(t: BoundTerm) -> dict:
    return {"variable": t.variable, "threshold": t.threshold, "side": t.side, "value": t.value}


def u_interval(net: Network, a: Box, region: Sequence[tuple[int, int]]) -> BoxInterval:
    """Open interval of inputs putting the focal point of ``a`` inside ``region``, within ``[0, U]``."""
    a = net.check_box(a)
    kappa = net.kappa(a)
    g0, g1 = net.decay_parts(a)
    out = BoxInterval(a, 0.0, net.input_bound)
    for i, (jlo, jhi) in enumerate(region):
        for j, kind in ((jlo, "above"), (jhi, "below")):
            if not net.is_interior_threshold(i, j):
                continue
            th = net.thresholds[i][j]
            if g1[i] == 0 or kappa[i] == 0:
                phi = kappa[i] / g0[i]
                ok = phi > th if kind == "above" else phi < th
                out.fixed.append(FixedConstraint(a, i, j, kind, float(phi), bool(ok)))
                continue
            # kappa / (g1 u + g0) > th  <=>  g1 th u < kappa - g0 th  (decay is positive)
            with np.errstate(over="ignore", divide="ignore"):  # subnormal g1 gives an infinite, inert bound
                value = float((kappa[i] - g0[i] * th) / (g1[i] * th))
            u_below = (kind == "above") == (g1[i] > 0)
            out.terms.append(BoundTerm(a, i, j, "upper" if u_below else "lower", value))
    for t in out.terms:
        if t.side == "lower":
            out.lo = max(out.lo, t.value)
        else:
            out.hi = min(out.hi, t.value)
    return out


@dataclass
class SynthesisResult:
    changed: tuple[Box, ...]               # A*: boxes whose successors must change
    intervals: dict[Box, BoxInterval]
    law: ControlLaw | None                 # per-box midpoints on A*, 0 elsewhere
    verified: bool
    policy: str
    common: tuple[float, float] | None = None   # one value valid on all of A*
    effective_terms: list[BoundTerm] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return all(iv.feasible for iv in self.intervals.values())

    @property
    def certificates(self) -> list[dict]:
        return [iv.certificate() for iv in self.intervals.values() if not iv.feasible]

    @property
    def uniform_value(self) -> float | None:
        if self.common is None or self.common[1] - self.common[0] <= MIN_WIDTH:
            return None
        return 0.5 * (self.common[0] + self.common[1])

    @property
    def status(self) -> str:
        if not self.feasible:
            return "infeasible"
        return "ok" if self.verified else "failed-verification"

    def to_dict(self, net: Network | None = None) -> dict:
        name = (lambda i: net.names[i]) if net is not None else (lambda i: i)
        return {
            "status": self.status,
            "feasible": self.feasible,
            "verified": self.verified,
            "policy": self.policy,
            "changed_boxes": [list(a) for a in self.changed],
            "intervals": [iv.to_dict() for iv in self.intervals.values()],
            "certificates": self.certificates,
            "law": self.law.to_dict() if self.law else None,
            "common_interval": list(self.common) if self.common else None,
            "uniform_value": self.uniform_value,
            "effective_terms": [{**_term_dict(t), "variable": name(t.variable)} for t in self.effective_terms],
        }


def effective_terms(intervals: Iterable[BoxInterval]) -> list[BoundTerm]:
    """Tightest bound per (variable, threshold, side) across boxes.

    This is the termwise form of the interval shared by all boxes: its lower
    end is the max of the "lower" terms, its upper end the min of the "upper"
    ones.  Boxes are reported as the one giving the tightest value.
    """
    best: dict[tuple[int, int, str], BoundTerm] = {}
    for iv in intervals:
        for t in iv.terms:
            key = (t.variable, t.threshold, t.side)
            cur = best.get(key)
            tighter = cur is None or (t.value > cur.value if t.side == "lower" else t.value < cur.value)
            if tighter:
                best[key] = t
    return sorted(best.values(), key=lambda t: (t.side, t.variable, t.threshold))


def synthesize(net: Network, target: TransitionGraph, policy: str = "adjacent") -> SynthesisResult:
    """Find a qualitative law whose closed-loop transition graph is ``target``.

    Only boxes whose successors differ from the uncontrolled graph are
    constrained; every other box keeps ``u = 0``.
    """
    tg0 = build_transition_graph(net)
    diff = graph_diff(tg0, target)
    intervals: dict[Box, BoxInterval] = {}
    for a in diff.changed:
        try:
            region = focal_region_for_box(net, a, target.successors(a), policy)
        except ContradictoryTarget as err:
            intervals[a] = BoxInterval(a, 0.0, 0.0, contradiction=str(err))
            continue
        intervals[a] = u_interval(net, a, region)
    feasible = all(iv.feasible for iv in intervals.values())
    common = None
    if intervals:
        common = (max(iv.lo for iv in intervals.values()), min(iv.hi for iv in intervals.values()))
    law, verified = None, False
    if feasible:
        law = ControlLaw({a: iv.midpoint for a, iv in intervals.items()})
        verified = verify_law(net, law, target)
    return SynthesisResult(diff.changed, intervals, law, verified, policy, common,
                           effective_terms(intervals.values()))


def verify_law(net: Network, law: ControlLaw, target: TransitionGraph) -> bool:
    """Closed-loop graph equals ``target`` exactly (H2 trouble counts as failure)."""
    try:
        return graph_diff(build_transition_graph(net, law), target).empty
    except SingularFocalError:
        return False


def _box_products(net: Network, boxes: Sequence[Box]) -> list[tuple[Factor, ...]]:
    """Step-function products whose sum is the indicator of the union of ``boxes``.

    Each box is a product of slab indicators; products differing in one
    variable's adjacent slab ranges are merged until nothing changes.
    """
    # a cube is a tuple of inclusive slab ranges (lo, hi), one per variable
    cubes = {tuple((k, k) for k in a) for a in boxes}
    merged = True
    while merged:
        merged = False
        for c1, c2 in itertools.combinations(sorted(cubes), 2):
            diff = [i for i in range(net.n) if c1[i] != c2[i]]
            if len(diff) != 1:
                continue
            i = diff[0]
            (l1, h1), (l2, h2) = sorted((c1[i], c2[i]))
            if h1 + 1 == l2:
                new = c1[:i] + ((l1, h2),) + c1[i + 1:]
                cubes -= {c1, c2}
                cubes.add(new)
                merged = True
                break
    out = []
    for cube in sorted(cubes):
        factors = []
        for i, (lo, hi) in enumerate(cube):
            if lo > 0:
                factors.append(Factor(i, lo, 1))
            if hi < net.q[i] - 1:
                factors.append(Factor(i, hi + 1, -1))
        out.append(tuple(factors))
    return out


def extend_with_controller(net: Network, boxes: Iterable[Sequence[int]], value: float,
                           theta_y: float, gamma_y: float, controlled: Iterable[int] | None = None,
                           name: str = "y") -> Network:
    """Replace the static input by a controller gene ``y``.

    ``y`` is produced at unit rate while the state is in one of ``boxes``,
    decays at ``gamma_y`` and lives in ``[0, 1/gamma_y]`` with one threshold
    ``theta_y``.  In every controlled variable the input term ``g1 u`` becomes
    ``g1 * value * s+(y, theta_y)``.  ``controlled`` defaults to the
    variables whose decay depends on the input.
    """
    boxes = [net.check_box(a) for a in boxes]
    if not 0 < theta_y * gamma_y < 1 or theta_y <= 0:
        raise ValueError("need theta_y > 0 and theta_y * gamma_y < 1 so that y can cross its threshold")
    if not 0 <= value <= net.input_bound:
        raise ValueError(f"controller value {value} outside [0, {net.input_bound}]")
    if controlled is None:
        controlled = [i for i in range(net.n) if net.decay1[i].terms]
    controlled = set(controlled)
    y = net.n
    switch = Factor(y, 1, 1)
    decay0 = list(net.decay0)
    decay1 = list(net.decay1)
    for i in controlled:
        extra = tuple(Term(t.coefficient * value, t.factors + (switch,)) for t in net.decay1[i].terms)
        decay0[i] = StepPolynomial(net.decay0[i].terms + extra)
        decay1[i] = StepPolynomial()
    y_prod = StepPolynomial(tuple(Term(1.0, f) for f in _box_products(net, boxes)))
    return Network(
        net.names + (name,),
        net.thresholds + ((0.0, float(theta_y), 1.0 / gamma_y),),
        net.production + (y_prod,),
        tuple(decay0) + (StepPolynomial.constant(gamma_y),),
        tuple(decay1) + (StepPolynomial(),),
        net.input_bound,
    )



@dataclass
class FastControllerReport:
    """Crossing race in every box where the controller ``y`` switches on.

    ``factors[box][i]`` is ``exp(-tau_i)``, with ``tau_i`` the time to cross
    the box in direction ``i`` from wall to wall; the largest factor (shortest time) wins.
    """

    controller: int
    boxes: list[Box]
    factors: dict[Box, dict[int, float]]
    winners: dict[Box, int | None]

    @property
    def satisfied(self) -> bool:
        return bool(self.boxes) and all(self.winners[a] == self.controller for a in self.boxes)

    def to_dict(self, net: Network) -> dict:
        return {
            "satisfied": self.satisfied,
            "controller": net.names[self.controller],
            "boxes": [{"box": list(a),
                       "factors": {net.names[i]: f for i, f in sorted(self.factors[a].items())},
                       "winner": None if self.winners[a] is None else net.names[self.winners[a]]}
                      for a in self.boxes],
        }


def fast_controller_report(net_ext: Network, controller: int | None = None) -> FastControllerReport:
    """Check that the controller crosses its threshold before any other variable leaves."""
    y = net_ext.n - 1 if controller is None else controller
    boxes, factors, winners = [], {}, {}
    for a in net_ext.boxes():
        up, down = exit_directions(net_ext, a)
        if y not in up or len(up | down) < 2:
            continue
        boxes.append(a)
        factors[a] = {i: math.exp(-t) for i, t in opposite_wall_times(net_ext, None, a).items()}
        winners[a] = crossing_direction(net_ext, None, a)
    return FastControllerReport(y, boxes, factors, winners)
