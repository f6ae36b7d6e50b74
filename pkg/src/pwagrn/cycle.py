"""Periodic box sequences: alignment, first-return maps and their classification.

Along an aligned cycle of boxes in which every variable switches, the
first-return map ``T`` on the wall ``W`` between the first two boxes either
drives every point to the corner point ``theta_C`` (spectral radius of
``DT(theta_C)`` at most 1) or has a unique attracting fixed point ``q``
(spectral radius above 1, or two distinct thresholds crossed in some
direction).  This module computes those quantities numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import ZERO_LAW, ControlLaw, box_label, build_transition_graph, is_invariant
from .model import (
    EPS_THETA, EPS_TIE, Box, Network, PWAError, StepPolynomial, Term, exit_directions,
    focal_point,
)

#: spectral radii this close to 1 are flagged as inconclusive
LAMBDA_BOUNDARY = 1e-9


class CycleDeviation(PWAError):
    """The trajectory left the prescribed box sequence."""


class SingularStepError(PWAError):
    """A focal coordinate coincides with the state coordinate it must move."""


@dataclass(frozen=True)
class CycleSequence:
    boxes: tuple[Box, ...]
    switching: tuple[int, ...]   # switching[k]: coordinate changed from boxes[k] to boxes[k+1]
    signs: tuple[int, ...]
    crossed: tuple[int, ...]     # threshold index crossed at each step

    @classmethod
    def from_boxes(cls, boxes: Sequence[Sequence[int]]) -> CycleSequence:
        boxes = tuple(tuple(int(v) for v in a) for a in boxes)
        if len(boxes) < 2 or len(set(boxes)) != len(boxes):
            raise ValueError("a cycle needs at least two distinct boxes")
        switching, signs, crossed = [], [], []
        for k, a in enumerate(boxes):
            b = boxes[(k + 1) % len(boxes)]
            diff = [i for i in range(len(a)) if a[i] != b[i]]
            if len(b) != len(a) or len(diff) != 1 or abs(b[diff[0]] - a[diff[0]]) != 1:
                raise ValueError(f"{box_label(a)} -> {box_label(b)} is not a unit step")
            i = diff[0]
            switching.append(i)
            signs.append(b[i] - a[i])
            crossed.append(max(a[i], b[i]))
        return cls(boxes, tuple(switching), tuple(signs), tuple(crossed))

    def __len__(self):
        return len(self.boxes)

    @property
    def n(self) -> int:
        return len(self.boxes[0])

    def wall_coordinate(self) -> int:
        """Fixed coordinate of ``W``, the wall between ``boxes[0]`` and ``boxes[1]``."""
        return self.switching[0]

    def thresholds_by_direction(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {}
        for i, t in zip(self.switching, self.crossed):
            out.setdefault(i, set()).add(t)
        return out

    def wall_face(self, net: Network) -> tuple[np.ndarray, np.ndarray]:
        """Closure bounds of ``W``; the fixed coordinate has ``lo == hi``."""
        a = self.boxes[0]
        lo, hi = net.bounds(a)
        s = self.wall_coordinate()
        lo[s] = hi[s] = net.thresholds[s][self.crossed[0]]
        return lo, hi

    def labels(self) -> list[str]:
        return [box_label(a) for a in self.boxes]


@dataclass
class Alignment:
    aligned: bool
    offending: list[tuple[int, list[int]]]  # (step k, coordinates that change)
    all_variables_switch: bool
    single_threshold_per_direction: bool


def check_alignment(net: Network, law: ControlLaw | None, cyc: CycleSequence) -> Alignment:
    """Consecutive focal points along the cycle differ in at most one coordinate."""
    law = law or ZERO_LAW
    phis = [focal_point(net, a, law(a)) for a in cyc.boxes]
    offending = []
    for k in range(len(cyc)):
        d = np.abs(phis[(k + 1) % len(cyc)] - phis[k]) > EPS_THETA
        if d.sum() > 1:
            offending.append((k, [int(j) for j in np.flatnonzero(d)]))
    by_dir = cyc.thresholds_by_direction()
    return Alignment(
        aligned=not offending,
        offending=offending,
        all_variables_switch=set(by_dir) == set(range(cyc.n)),
        single_threshold_per_direction=all(len(t) == 1 for t in by_dir.values()),
    )


def cycle_point(net: Network, cyc: CycleSequence) -> np.ndarray | None:
    """The common corner ``theta_C`` of all walls crossed by ``cyc``, if any."""
    by_dir = cyc.thresholds_by_direction()
    if set(by_dir) != set(range(cyc.n)):
        raise ValueError("theta_C needs every variable to switch along the cycle")
    if any(len(t) > 1 for t in by_dir.values()):
        return None
    return np.array([net.thresholds[i][next(iter(by_dir[i]))] for i in range(cyc.n)])


def _step_jacobian(net: Network, a: Box, x: np.ndarray, u: float, s: int, tau: float) -> np.ndarray:
    # d/dx of phi + exp(-tau(x) G)(x - phi), with tau depending on x_s only
    phi = focal_point(net, a, u)
    gamma = net.decay(a, u)
    alpha = np.exp(-gamma * tau)
    gap = phi[s] - x[s]
    if abs(gap) <= EPS_THETA:
        raise SingularStepError(f"focal coordinate {s} of box {box_label(a)} equals the state")
    jac = np.diag(alpha)
    jac[:, s] += gamma * alpha * (x - phi) / (gamma[s] * gap)
    return jac


def _on_wall(net: Network, cyc: CycleSequence, x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    lo, hi = cyc.wall_face(net)
    if x.shape != (cyc.n,) or np.any(x < lo - EPS_THETA) or np.any(x > hi + EPS_THETA):
        raise ValueError(f"{x} is not on the wall between {cyc.labels()[0]} and {cyc.labels()[1]}")
    s = cyc.wall_coordinate()
    x[s] = lo[s]
    return x


@dataclass
class Orbit:
    point: np.ndarray          # T(x)
    time: float                # return time
    jacobian: np.ndarray | None = None  # full n x n product of step differentials


def follow_cycle(net: Network, law: ControlLaw | None, cyc: CycleSequence, x,
                 jacobian: bool = False) -> Orbit:
    """Follow the trajectory from ``x`` on ``W`` once around ``cyc``."""
    law = law or ZERO_LAW
    x = _on_wall(net, cyc, x).tolist()
    ell = len(cyc)
    total = 0.0
    jac = np.eye(cyc.n) if jacobian else None
    for k in range(1, ell + 1):
        a = cyc.boxes[k % ell]
        nxt = cyc.boxes[(k + 1) % ell]
        u = law(a)
        y, i, sign, tau = net.box_flow(a, u).step(x, check_landing=False)
        if a[i] + sign != nxt[i] or a[:i] + a[i + 1:] != nxt[:i] + nxt[i + 1:]:
            b = a[:i] + (a[i] + sign,) + a[i + 1:]
            raise CycleDeviation(f"from {box_label(a)} the flow goes to {box_label(b)}, "
                                 f"not {box_label(nxt)}")
        if jacobian:
            jac = _step_jacobian(net, a, np.array(x), u, i, tau) @ jac
        x = y
        total += tau
    x = np.array(x)
    return Orbit(x, total, jac)


def return_map(net: Network, law: ControlLaw | None, cyc: CycleSequence, x) -> np.ndarray:
    """First-return map ``T: W -> W``; ``theta_C`` is mapped to itself."""
    tc = cycle_point(net, cyc) if _all_switch(cyc) else None
    if tc is not None and np.max(np.abs(np.asarray(x, dtype=float) - tc)) <= EPS_THETA:
        return tc
    return follow_cycle(net, law, cyc, x).point


def _all_switch(cyc: CycleSequence) -> bool:
    return set(cyc.switching) == set(range(cyc.n))


def wall_indices(cyc: CycleSequence) -> list[int]:
    s = cyc.wall_coordinate()
    return [j for j in range(cyc.n) if j != s]


def return_map_jacobian(net: Network, law: ControlLaw | None, cyc: CycleSequence, x) -> np.ndarray:
    """``DT(x)`` in wall coordinates, an ``(n-1) x (n-1)`` matrix.

    At ``theta_C`` (exit times all zero) the product of the first-order step
    maps is returned, which is the differential of the continuous extension.
    """
    law = law or ZERO_LAW
    x = np.asarray(x, dtype=float)
    idx = wall_indices(cyc)
    tc = cycle_point(net, cyc) if _all_switch(cyc) else None
    if tc is not None and np.max(np.abs(x - tc)) <= EPS_THETA:
        jac = np.eye(cyc.n)
        for k in range(1, len(cyc) + 1):
            a = cyc.boxes[k % len(cyc)]
            jac = _step_jacobian(net, a, tc, law(a), cyc.switching[k % len(cyc)], 0.0) @ jac
    else:
        jac = follow_cycle(net, law, cyc, x, jacobian=True).jacobian
    return jac[np.ix_(idx, idx)]


def spectral_radius(m: np.ndarray, dense_max: int = 8, iterations: int = 1000, seed: int = 0) -> float:
    """Largest eigenvalue modulus; dense solver for small matrices, power iteration beyond."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] <= dense_max:
        return float(np.max(np.abs(np.linalg.eigvals(m)))) if m.size else 0.0
    v = np.random.default_rng(seed).standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    half = iterations // 2
    log_growth = 0.0
    for k in range(iterations):
        v = m @ v
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        if k >= half:
            log_growth += math.log(nv)
    # the averaged growth rate also converges for complex dominant pairs
    return math.exp(log_growth / (iterations - half))


def find_periodic_point(net: Network, law: ControlLaw | None, cyc: CycleSequence, x0=None,
                        tol: float = 1e-12, max_iter: int = 100_000) -> tuple[np.ndarray, int]:
    """Iterate ``T`` from ``x0`` (default: centre of ``W``) until steps drop below ``tol``."""
    if x0 is None:
        lo, hi = cyc.wall_face(net)
        x0 = (lo + hi) / 2
    x = _on_wall(net, cyc, x0)
    for k in range(1, max_iter + 1):
        y = follow_cycle(net, law, cyc, x).point
        if np.max(np.abs(y - x)) < tol:
            return y, k
        x = y
    raise PWAError(f"return map did not converge in {max_iter} iterations")


@dataclass
class CycleVerdict:
    cycle: list[str]
    aligned: bool = False
    all_variables_switch: bool = False
    single_threshold_per_direction: bool = False
    theta_c: np.ndarray | None = None
    spectral_radius: float | None = None
    boundary: bool = False
    case: str = "inapplicable"   # "A-i", "A-ii", "B" or "inapplicable"
    periodic_point: np.ndarray | None = None
    residual: float | None = None
    period: float | None = None
    iterations: int | None = None
    reasons: list[str] = field(default_factory=list)

    @property
    def limit_cycle(self) -> bool:
        return self.case in ("A-ii", "B")

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else [float(c) for c in v]
        return {
            "cycle": self.cycle,
            "case": self.case,
            "aligned": self.aligned,
            "all_variables_switch": self.all_variables_switch,
            "single_threshold_per_direction": self.single_threshold_per_direction,
            "theta_c": arr(self.theta_c),
            "lambda": self.spectral_radius,
            "lambda_boundary": self.boundary,
            "periodic_point": arr(self.periodic_point),
            "residual": self.residual,
            "period": self.period,
            "iterations": self.iterations,
            "reasons": self.reasons,
        }


def classify_cycle(net: Network, law: ControlLaw | None, cyc: CycleSequence,
                   tol: float = 1e-12, max_iter: int = 100_000) -> CycleVerdict:
    law = law or ZERO_LAW
    verdict = CycleVerdict(cyc.labels())
    tg = build_transition_graph(net, law)
    pairs = tg.edge_pairs
    for k, a in enumerate(cyc.boxes):
        b = cyc.boxes[(k + 1) % len(cyc)]
        if (a, b) not in pairs:
            verdict.reasons.append(f"{box_label(a)} -> {box_label(b)} is not an edge of the graph")
    if not verdict.reasons and not is_invariant(tg, cyc.boxes):
        verdict.reasons.append("the cycle has an escaping edge")
    al = check_alignment(net, law, cyc)
    verdict.aligned = al.aligned
    verdict.all_variables_switch = al.all_variables_switch
    verdict.single_threshold_per_direction = al.single_threshold_per_direction
    if not al.aligned:
        verdict.reasons.append(f"focal points not aligned at steps {[k for k, _ in al.offending]}")
    if not al.all_variables_switch:
        verdict.reasons.append("not every variable switches along the cycle")
    if verdict.reasons:
        return verdict

    if al.single_threshold_per_direction:
        tc = cycle_point(net, cyc)
        verdict.theta_c = tc
        lam = spectral_radius(return_map_jacobian(net, law, cyc, tc))
        verdict.spectral_radius = float(lam)
        verdict.boundary = abs(lam - 1.0) < LAMBDA_BOUNDARY
        if lam <= 1.0 or verdict.boundary:
            verdict.case = "A-i"
            return verdict
        verdict.case = "A-ii"
    else:
        verdict.case = "B"
    q, iters = find_periodic_point(net, law, cyc, tol=tol, max_iter=max_iter)
    orbit = follow_cycle(net, law, cyc, q)
    verdict.periodic_point = q
    verdict.residual = float(np.max(np.abs(orbit.point - q)))
    verdict.period = float(orbit.time)
    verdict.iterations = iters
    return verdict


@dataclass(frozen=True)
class InteractionEdge:
    source: int
    target: int
    sign: int
    threshold: int


@dataclass(frozen=True)
class InteractionGraph:
    n: int
    edges: tuple[InteractionEdge, ...]

    def regulators(self, i: int) -> set[int]:
        return {e.source for e in self.edges if e.target == i}


def interaction_graph(net: Network) -> InteractionGraph:
    """Signed edges ``j -> i`` for every step factor on ``x_j`` in the production of ``x_i``."""
    edges = {InteractionEdge(f.var, i, f.sign, f.threshold)
             for i, poly in enumerate(net.production) for t in poly.terms for f in t.factors}
    return InteractionGraph(net.n, tuple(sorted(edges, key=lambda e: (e.target, e.source, e.threshold, e.sign))))


def is_negative_feedback_loop(ig: InteractionGraph) -> bool:
    """A single cycle through all variables, one regulator each, odd number of inhibitions."""
    succ = {}
    negatives = 0
    for i in range(ig.n):
        regs = ig.regulators(i)
        if len(regs) != 1:
            return False
        (j,) = regs
        signs = {e.sign for e in ig.edges if e.target == i}
        if len(signs) != 1:
            return False
        negatives += signs.pop() < 0
        if j in succ:
            return False
        succ[j] = i
    seen, i = set(), 0
    while i not in seen:
        seen.add(i)
        i = succ[i]
    return len(seen) == ig.n and negatives % 2 == 1


def restrict(net: Network, var: int, threshold: int, sign: int) -> Network:
    """Network seen in the region where ``s^sign(x_var, theta_var^threshold) = 1``.

    Terms needing the opposite step vanish; the fixed factor is dropped from
    the others.  The variable keeps its thresholds.
    """
    def fix(poly: StepPolynomial) -> StepPolynomial:
        terms = []
        for t in poly.terms:
            keep = []
            dead = False
            for f in t.factors:
                if f.var == var and f.threshold == threshold:
                    dead = f.sign != sign
                else:
                    keep.append(f)
            if not dead:
                terms.append(Term(t.coefficient, tuple(keep)))
        return StepPolynomial(tuple(terms))

    return Network(net.names, net.thresholds, tuple(map(fix, net.production)),
                   tuple(map(fix, net.decay0)), tuple(map(fix, net.decay1)), net.input_bound)


def opposite_wall_times(net: Network, law: ControlLaw | None, a: Box) -> dict[int, float]:
    """For each escaping direction, the time to cross box ``a`` from the opposite wall.

    Lower exits are mirrored, so every time is measured from the wall the flow
    enters through to the one it leaves through.
    """
    law = law or ZERO_LAW
    u = law(a)
    up, down = exit_directions(net, a, u)
    phi = focal_point(net, a, u)
    gamma = net.decay(a, u)
    out = {}
    for i in sorted(up | down):
        enter, leave = (net.lower(a, i), net.upper(a, i)) if i in up else (net.upper(a, i), net.lower(a, i))
        out[i] = math.log((phi[i] - enter) / (phi[i] - leave)) / gamma[i]
    return out


def crossing_direction(net: Network, law: ControlLaw | None, a: Box) -> int | None:
    """The only direction whose two parallel walls can be crossed in succession.

    Direction ``i`` qualifies when its crossing time is strictly below that of
    every other escaping direction.  ``None`` for boxes with fewer than two
    escaping directions or when the minimum is tied.
    """
    times = opposite_wall_times(net, law, a)
    if len(times) < 2:
        return None
    winners = [i for i, t in times.items() if all(t < s for j, s in times.items() if j != i)]
    assert len(winners) <= 1, "two directions cannot both be crossed in succession"
    if not winners:
        return None
    i = winners[0]
    second = min(t for j, t in times.items() if j != i)
    if second - times[i] <= EPS_TIE * max(times[i], 1e-300):
        return None
    return i


def check_fast_controller(net_ext: Network, box: Sequence[int], direction: int) -> bool:
    """True when the controller direction wins the crossing race in ``box``.

    With the controller variable as ``direction`` and the box where the
    uncontrolled cycle re-enters, this is the condition under which the
    controlled steady state attracts every trajectory.
    """
    box = net_ext.check_box(box)
    up, down = exit_directions(net_ext, box)
    if len(up | down) < 2 or direction not in up | down:
        raise ValueError(f"box {box_label(box)} needs >= 2 escaping directions including {direction}")
    return crossing_direction(net_ext, None, box) == direction
