"""Piecewise-affine network models and their exact in-box dynamics.

A network is ``dx_i/dt = kappa_i(x) - (g1_i(x) u + g0_i(x)) x_i`` where
``kappa``, ``g0`` and ``g1`` are polynomials of step functions
``s+(x_j, theta_j^k)`` / ``s-(x_j, theta_j^k)``.  All three are constant on
each box, so inside a box the flow relaxes exponentially toward a focal
point and every quantity below has a closed form.

Boxes are integer tuples ``a`` with ``0 <= a_i < q_i``; box ``a`` is the open
rectangle ``prod_i (theta_i^{a_i}, theta_i^{a_i + 1})``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

Box = tuple[int, ...]

#: absolute tolerance for "equal to a threshold" (concentrations are O(1))
EPS_THETA = 1e-9
#: relative tolerance for two exit times to count as a tie
EPS_TIE = 1e-12


class PWAError(Exception):
    """Base class for errors raised by this package."""


class StructureError(PWAError, ValueError):
    """The network is malformed (thresholds, factor indices, decay signs)."""


class SingularFocalError(PWAError):
    """A focal coordinate lies on an interior threshold (H2 violated)."""

    def __init__(self, box: Box, variable: int, u: float):
        super().__init__(f"focal coordinate {variable} of box {box} is on a threshold (u={u})")
        self.box = box
        self.variable = variable
        self.u = u


class NoExitError(PWAError):
    """The box contains its own focal point; trajectories never leave it."""


class WallError(PWAError):
    """The start point already sits on the wall it is supposed to reach."""


class TieError(PWAError):
    """Two exit directions are reached at the same time (a wall intersection)."""

    def __init__(self, box: Box, point: np.ndarray, directions: Sequence[int], tau: float):
        super().__init__(f"exit tie in box {box} between directions {list(directions)} at tau={tau:.6g}")
        self.box = box
        self.point = np.array(point, dtype=float)
        self.directions = tuple(directions)
        self.tau = tau


@dataclass(frozen=True)
class Factor:
    """``s^sign(x_var, theta_var^threshold)``; sign is +1 or -1."""

    var: int
    threshold: int
    sign: int

    def value(self, box: Box) -> int:
        above = box[self.var] >= self.threshold
        return int(above) if self.sign > 0 else int(not above)


@dataclass(frozen=True)
class Term:
    """A coefficient times a product of step factors."""

    coefficient: float
    factors: tuple[Factor, ...] = ()

    def value(self, box: Box) -> float:
        for f in self.factors:
            if not f.value(box):
                return 0.0
        return self.coefficient


@dataclass(frozen=True)
class StepPolynomial:
    terms: tuple[Term, ...] = ()

    def __call__(self, box: Box) -> float:
        return float(sum(t.value(box) for t in self.terms))

    @classmethod
    def constant(cls, c: float) -> StepPolynomial:
        return cls((Term(float(c)),)) if c else cls()

    def variables(self) -> set[int]:
        return {f.var for t in self.terms for f in t.factors}


# production terms and decay pieces share the same structure
ProductionTerm = Term


@dataclass(frozen=True)
class Network:
    """An immutable PWA network with a scalar decay input ``u in [0, U]``.

    ``thresholds[i]`` is ``(0, theta_i^1, ..., theta_i^{q_i})``; the first and
    last entries bound the range of ``x_i`` and are never crossed.
    """

    names: tuple[str, ...]
    thresholds: tuple[tuple[float, ...], ...]
    production: tuple[StepPolynomial, ...]
    decay0: tuple[StepPolynomial, ...]
    decay1: tuple[StepPolynomial, ...]
    input_bound: float = 0.0
    _kappa: np.ndarray = field(init=False, repr=False, compare=False)
    _g0: np.ndarray = field(init=False, repr=False, compare=False)
    _g1: np.ndarray = field(init=False, repr=False, compare=False)
    _flows: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.names)
        for seq, what in ((self.thresholds, "thresholds"), (self.production, "production"),
                          (self.decay0, "decay0"), (self.decay1, "decay1")):
            if len(seq) != n:
                raise StructureError(f"{what} has {len(seq)} entries for {n} variables")
        for i, th in enumerate(self.thresholds):
            if len(th) < 2:
                raise StructureError(f"variable {self.names[i]} needs at least the range [0, cap]")
            if th[0] != 0:
                raise StructureError(f"first threshold of {self.names[i]} must be 0")
            if any(b <= a for a, b in zip(th, th[1:])):
                raise StructureError(f"thresholds of {self.names[i]} are not strictly increasing")
        if self.input_bound < 0:
            raise StructureError("input bound must be >= 0")
        for poly in itertools.chain(self.production, self.decay0, self.decay1):
            for term in poly.terms:
                seen = set()
                for f in term.factors:
                    if not 0 <= f.var < n:
                        raise StructureError(f"factor refers to unknown variable {f.var}")
                    if not 1 <= f.threshold <= len(self.thresholds[f.var]) - 2:
                        raise StructureError(
                            f"factor threshold index {f.threshold} is not interior for {self.names[f.var]}")
                    if f.sign not in (1, -1):
                        raise StructureError("factor sign must be +1 or -1")
                    if (f.var, f.threshold) in seen:
                        raise StructureError("two factors on the same threshold in one term")
                    seen.add((f.var, f.threshold))
        for term in itertools.chain.from_iterable(p.terms for p in self.production):
            if term.coefficient < 0:
                raise StructureError("production coefficients must be >= 0")

        shape = self.q + (n,)
        kappa, g0, g1 = np.empty(shape), np.empty(shape), np.empty(shape)
        for a in self.boxes():
            kappa[a] = [p(a) for p in self.production]
            g0[a] = [p(a) for p in self.decay0]
            g1[a] = [p(a) for p in self.decay1]
        if np.any(g0 <= 0):
            raise StructureError("decay0 must be positive in every box")
        if self.input_bound > 0 and np.any(g1 * self.input_bound + g0 <= 0):
            raise StructureError("decay must stay positive for all u in [0, U]")
        for arr in (kappa, g0, g1):
            arr.flags.writeable = False
        object.__setattr__(self, "_kappa", kappa)
        object.__setattr__(self, "_g0", g0)
        object.__setattr__(self, "_g1", g1)
        object.__setattr__(self, "_flows", {})

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def q(self) -> tuple[int, ...]:
        return tuple(len(th) - 1 for th in self.thresholds)

    def boxes(self) -> Iterator[Box]:
        """All boxes in lexicographic order."""
        return itertools.product(*(range(k) for k in self.q))

    def check_box(self, a: Sequence[int]) -> Box:
        a = tuple(int(v) for v in a)
        if len(a) != self.n or any(not 0 <= v < k for v, k in zip(a, self.q)):
            raise ValueError(f"{a} is not a box of this network")
        return a

    def lower(self, a: Box, i: int) -> float:
        return self.thresholds[i][a[i]]

    def upper(self, a: Box, i: int) -> float:
        return self.thresholds[i][a[i] + 1]

    def bounds(self, a: Box) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.thresholds[i][a[i]] for i in range(self.n)])
        hi = np.array([self.thresholds[i][a[i] + 1] for i in range(self.n)])
        return lo, hi

    def is_interior_threshold(self, i: int, k: int) -> bool:
        return 1 <= k <= self.q[i] - 1

    def kappa(self, a: Box) -> np.ndarray:
        return self._kappa[a]

    def decay(self, a: Box, u: float = 0.0) -> np.ndarray:
        """Total decay rates ``g1(a) u + g0(a)``."""
        return self._g1[a] * u + self._g0[a]

    def decay_parts(self, a: Box) -> tuple[np.ndarray, np.ndarray]:
        return self._g0[a], self._g1[a]

    def box_flow(self, a: Box, u: float = 0.0) -> BoxFlow:
        """Cached :class:`BoxFlow` of box ``a`` under input ``u``."""
        key = (tuple(a), float(u))
        flow = self._flows.get(key)
        if flow is None:
            flow = self._flows[key] = BoxFlow(self, key[0], key[1])
        return flow

    def box_of(self, x: Sequence[float], *, strict: bool = True) -> Box:
        """Box containing ``x``.

        With ``strict`` the point must be at least ``EPS_THETA`` away from every
        interior threshold, since the dynamics are undefined on walls.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"point must have {self.n} coordinates")
        a = []
        for i, th in enumerate(self.thresholds):
            if not th[0] <= x[i] <= th[-1]:
                raise ValueError(f"{self.names[i]}={x[i]} is outside its range [0, {th[-1]}]")
            k = int(np.searchsorted(th, x[i], side="right")) - 1
            k = min(max(k, 0), len(th) - 2)
            if strict:
                for j in range(1, len(th) - 1):
                    if abs(x[i] - th[j]) <= EPS_THETA:
                        raise WallError(f"{self.names[i]}={x[i]} lies on threshold {j}")
            a.append(k)
        return tuple(a)

    def with_input_bound(self, bound: float) -> Network:
        return Network(self.names, self.thresholds, self.production, self.decay0, self.decay1, bound)


def _check_u(net: Network, u: float) -> float:
    u = float(u)
    if u < 0 or u > net.input_bound + 1e-15:
        raise ValueError(f"input {u} outside [0, {net.input_bound}]")
    return u


def focal_point(net: Network, a: Box, u: float = 0.0) -> np.ndarray:
    """``kappa(a) / (g1(a) u + g0(a))``, the attractor of the affine flow in box ``a``."""
    u = _check_u(net, u)
    return net.kappa(a) / net.decay(a, u)


def flow_at(net: Network, a: Box, x: Sequence[float], t: float, u: float = 0.0) -> np.ndarray:
    """Exact solution after time ``t`` of the affine dynamics of box ``a``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    phi = focal_point(net, a, u)
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    return phi + np.exp(-net.decay(a, u) * t) * (x - phi)


def exit_directions(net: Network, a: Box, u: float = 0.0) -> tuple[frozenset[int], frozenset[int]]:
    """Escaping directions ``(I_out^+, I_out^-)`` of box ``a``.

    Raises :class:`SingularFocalError` when a focal coordinate is within
    ``EPS_THETA`` of one of the box's interior bounding thresholds.
    """
    phi = focal_point(net, a, u)
    up, down = set(), set()
    for i in range(net.n):
        if a[i] + 1 < net.q[i]:
            th = net.upper(a, i)
            if abs(phi[i] - th) <= EPS_THETA:
                raise SingularFocalError(a, i, u)
            if phi[i] > th:
                up.add(i)
        if a[i] > 0:
            th = net.lower(a, i)
            if abs(phi[i] - th) <= EPS_THETA:
                raise SingularFocalError(a, i, u)
            if phi[i] < th:
                down.add(i)
    return frozenset(up), frozenset(down)


def is_fixed_box(net: Network, a: Box, u: float = 0.0) -> bool:
    up, down = exit_directions(net, a, u)
    return not up and not down


@dataclass(frozen=True)
class ExitEvent:
    tau: float
    direction: int
    sign: int  # +1 through the upper wall, -1 through the lower one

    @property
    def threshold_offset(self) -> int:
        return 1 if self.sign > 0 else 0


def exit_times(net: Network, a: Box, x: Sequence[float], u: float = 0.0) -> dict[tuple[int, int], float]:
    """Hitting time of every escaping wall, keyed by ``(direction, sign)``."""
    x = np.asarray(x, dtype=float)
    up, down = exit_directions(net, a, u)
    phi = focal_point(net, a, u)
    gamma = net.decay(a, u)
    lo, hi = net.bounds(a)
    if np.any(x < lo - EPS_THETA) or np.any(x > hi + EPS_THETA):
        raise ValueError(f"point {x} is not in the closure of box {a}")
    times = {}
    for i, sign in [(i, 1) for i in sorted(up)] + [(i, -1) for i in sorted(down)]:
        target = hi[i] if sign > 0 else lo[i]
        gap = (target - x[i]) * sign
        if gap <= EPS_THETA:
            raise WallError(f"coordinate {i} of {x} already on its exit wall in box {a}")
        # log((phi - x) / (phi - target)) written for accuracy near the wall
        times[(i, sign)] = math.log1p((target - x[i]) / (phi[i] - target)) / gamma[i]
    return times


def exit_event(net: Network, a: Box, x: Sequence[float], u: float = 0.0) -> ExitEvent:
    """First wall reached from ``x`` inside box ``a``."""
    times = exit_times(net, a, x, u)
    if not times:
        raise NoExitError(f"box {a} has no escaping direction")
    ordered = sorted(times.items(), key=lambda kv: kv[1])
    (i, sign), tau = ordered[0]
    if len(ordered) > 1 and ordered[1][1] - tau <= EPS_TIE * tau:
        raise TieError(a, np.asarray(x, dtype=float), [d for (d, _), t in ordered if t - tau <= EPS_TIE * tau], tau)
    return ExitEvent(tau, i, sign)


def transition_map(net: Network, a: Box, x: Sequence[float], u: float = 0.0) -> tuple[np.ndarray, Box]:
    """Map ``x`` to the point where its trajectory leaves box ``a``, and the next box."""
    y, b, _ = transition_step(net, a, x, u)
    return y, b


def transition_step(net: Network, a: Box, x: Sequence[float], u: float = 0.0) -> tuple[np.ndarray, Box, float]:
    """``transition_map`` plus the time spent in ``a``."""
    ev = exit_event(net, a, x, u)
    y = flow_at(net, a, x, ev.tau, u)
    lo, hi = net.bounds(a)
    i = ev.direction
    y[i] = hi[i] if ev.sign > 0 else lo[i]
    for j in range(net.n):
        if j == i:
            continue
        near_lo = a[j] > 0 and y[j] - lo[j] <= EPS_THETA
        near_hi = a[j] + 1 < net.q[j] and hi[j] - y[j] <= EPS_THETA
        if near_lo or near_hi:
            raise TieError(a, np.asarray(x, dtype=float), (i, j), ev.tau)
    b = list(a)
    b[i] += ev.sign
    return y, tuple(b), ev.tau


class BoxFlow:
    """Constants of the affine flow of one box, for repeated wall-to-wall steps.

    ``step`` agrees with :func:`transition_step` up to rounding but works on plain floats,
    which matters in long simulations and return-map iterations.
    """

    def __init__(self, net: Network, a: Box, u: float):
        self.box = a
        up, down = exit_directions(net, a, u)
        self.phi = [float(v) for v in focal_point(net, a, u)]
        self.gamma = [float(v) for v in net.decay(a, u)]
        self.exits = [(i, 1, net.upper(a, i)) for i in sorted(up)] + \
                     [(i, -1, net.lower(a, i)) for i in sorted(down)]
        # interior walls bounding the box, for the landing check
        self.walls = [(j, net.lower(a, j) if a[j] > 0 else None,
                       net.upper(a, j) if a[j] + 1 < net.q[j] else None) for j in range(net.n)]

    @property
    def fixed(self) -> bool:
        return not self.exits

    def step(self, x: Sequence[float], check_landing: bool = True) -> tuple[list[float], int, int, float]:
        """Exit point, direction, sign and time from ``x``.

        With ``check_landing`` a :class:`TieError` is raised when the exit point
        is within ``EPS_THETA`` of another interior threshold.
        """
        if not self.exits:
            raise NoExitError(f"box {self.box} has no escaping direction")
        phi, gamma = self.phi, self.gamma
        times = []
        for i, sign, target in self.exits:
            if (target - x[i]) * sign <= EPS_THETA:
                raise WallError(f"coordinate {i} of {list(x)} already on its exit wall in box {self.box}")
            times.append((math.log1p((target - x[i]) / (phi[i] - target)) / gamma[i], i, sign, target))
        times.sort()
        tau, i, sign, target = times[0]
        if len(times) > 1 and times[1][0] - tau <= EPS_TIE * tau:
            raise TieError(self.box, np.array(x, dtype=float),
                           [d for t, d, _, _ in times if t - tau <= EPS_TIE * tau], tau)
        y = [p + math.exp(-g * tau) * (v - p) for p, g, v in zip(phi, gamma, x)]
        y[i] = target
        if check_landing:
            for j, lo, hi in self.walls:
                if j != i and ((lo is not None and y[j] - lo <= EPS_THETA)
                               or (hi is not None and hi - y[j] <= EPS_THETA)):
                    raise TieError(self.box, np.array(x, dtype=float), (i, j), tau)
        return y, i, sign, tau


@dataclass(frozen=True)
class Wall:
    """The wall ``x_direction = theta_direction^{lower[direction] + 1}`` above box ``lower``."""

    lower: Box
    direction: int

    @property
    def upper(self) -> Box:
        b = list(self.lower)
        b[self.direction] += 1
        return tuple(b)


@dataclass
class ValidityReport:
    h1_violations: list[tuple[int, Box]] = field(default_factory=list)
    h2_violations: list[tuple[Box, int, float]] = field(default_factory=list)
    unstable_walls: list[tuple[Wall, float]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.h1_violations or self.h2_violations or self.unstable_walls)

    def to_dict(self, net: Network) -> dict:
        return {
            "clean": self.clean,
            "h1_violations": [{"variable": net.names[i], "box": list(a)} for i, a in self.h1_violations],
            "h2_violations": [{"box": list(a), "variable": net.names[i], "u": u}
                              for a, i, u in self.h2_violations],
            "unstable_walls": [{"lower": list(w.lower), "upper": list(w.upper),
                                "variable": net.names[w.direction], "u": u}
                               for w, u in self.unstable_walls],
        }


def unstable_walls(net: Network, law) -> list[Wall]:
    """Walls where both adjacent boxes push trajectories away.

    ``law`` maps a box to its input value.  Such walls can only occur when
    some variable regulates itself (H1 violated).
    """
    out = []
    for a in net.boxes():
        for i in range(net.n):
            if a[i] + 1 >= net.q[i]:
                continue
            w = Wall(a, i)
            th = net.upper(a, i)
            below = focal_point(net, a, law(a))[i]
            above = focal_point(net, w.upper, law(w.upper))[i]
            if below < th - EPS_THETA and above > th + EPS_THETA:
                out.append(w)
    return out


def validate_network(net: Network, inputs: Iterable[float] | None = None) -> ValidityReport:
    """Check hypotheses H1 and H2 and look for repelling walls.

    H1 is checked per box: variable ``i`` is reported at box ``a`` when its
    production or decay differs across the wall above ``a`` in direction ``i``.
    H2 and wall stability depend on the input, so they are checked for every
    value in ``inputs`` (default ``{0, U}``) applied uniformly.
    """
    if inputs is None:
        inputs = sorted({0.0, net.input_bound})
    inputs = [_check_u(net, u) for u in inputs]
    report = ValidityReport()
    selfreg = [i for i in range(net.n)
               if i in (net.production[i].variables() | net.decay0[i].variables() | net.decay1[i].variables())]
    for i in selfreg:
        for a in net.boxes():
            if a[i] + 1 >= net.q[i]:
                continue
            b = a[:i] + (a[i] + 1,) + a[i + 1:]
            g0a, g1a = net.decay_parts(a)
            g0b, g1b = net.decay_parts(b)
            if (net.kappa(a)[i] != net.kappa(b)[i] or g0a[i] != g0b[i] or g1a[i] != g1b[i]):
                report.h1_violations.append((i, a))
    for u in inputs:
        for a in net.boxes():
            phi = focal_point(net, a, u)
            for i in range(net.n):
                th = np.asarray(net.thresholds[i][1:-1])
                if th.size and np.min(np.abs(th - phi[i])) <= EPS_THETA:
                    report.h2_violations.append((a, i, u))
        for w in unstable_walls(net, lambda _a, u=u: u):
            report.unstable_walls.append((w, u))
    return report
