"""Exact event-driven simulation.

Inside a box the flow is known in closed form, so a trajectory is the
sequence of its wall crossings.  ``simulate`` composes transition maps and
stops with a verdict on the asymptotic behaviour.
"""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import ControlLaw, ZERO_LAW, box_label
from .model import Box, Network, SingularFocalError, TieError, WallError, flow_at


RECURRENCE_WINDOW = 8


@dataclass(frozen=True)
class Budget:
    max_events: int = 100_000
    max_time: float = 1e6
    zeno_eps: float = 1e-8
    zeno_count: int = 10
    recurrence_tol: float = 1e-9

    def __post_init__(self):
        if self.max_events < 1 or self.max_time <= 0 or self.zeno_eps <= 0 or self.zeno_count < 1:
            raise ValueError("budget values must be positive")


@dataclass(frozen=True)
class Event:
    time: float
    point: np.ndarray
    box: Box  # box entered at this time


@dataclass(frozen=True)
class Verdict:
    kind: str  # equilibrium | periodic | zeno | budget_exhausted | tie_abort
    box: Box | None = None
    point: np.ndarray | None = None
    cycle: tuple[Box, ...] = ()
    period: float | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "box": list(self.box) if self.box is not None else None,
            "point": None if self.point is None else [float(v) for v in self.point],
            "cycle": [list(b) for b in self.cycle],
            "period": self.period,
            "message": self.message,
        }


@dataclass
class Trajectory:
    net: Network
    law: ControlLaw
    events: list[Event]
    verdict: Verdict

    def __repr__(self):
        return f"Trajectory({len(self.events)} events, verdict={self.verdict.kind!r})"

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    @property
    def boxes(self) -> list[Box]:
        return [e.box for e in self.events]

    def intervals(self) -> np.ndarray:
        """Inter-event times."""
        return np.diff(self.times)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.to_dict(),
            "n_events": len(self.events),
            "events": [{"time": e.time, "point": [float(v) for v in e.point], "box": list(e.box)}
                       for e in self.events],
        }


def _verdict_zeno(events: list[Event], k: int) -> Verdict:
    # geometric extrapolation of the accumulation time from the last gaps
    t = np.array([e.time for e in events[-k - 1:]])
    d = np.diff(t)
    ratio = d[-1] / d[-2] if len(d) > 1 and d[-2] > 0 else 0.0
    tail = d[-1] * ratio / (1 - ratio) if 0 < ratio < 1 else 0.0
    return Verdict("zeno", events[-1].box, events[-1].point.copy(),
                   message=f"accumulation near t={t[-1] + tail:.12g}")


def simulate(net: Network, law: ControlLaw | None, x0, budget: Budget | None = None) -> Trajectory:
    """Follow the trajectory from ``x0`` wall to wall until a verdict is reached.

    Points that land on a wall stay exactly on it and continue with the
    dynamics of the box they enter.  Raises ``WallError`` when ``x0`` itself
    lies on an interior threshold.
    """
    law = law or ZERO_LAW
    law.check(net)
    budget = budget or Budget()
    x = np.asarray(x0, dtype=float)
    if x.shape != (net.n,):
        raise ValueError(f"x0 needs {net.n} coordinates")
    a = net.box_of(x, strict=True)
    events = [Event(0.0, x.copy(), a)]
    # only wall points (not x0) take part in recurrence checks
    by_box: dict[Box, list[int]] = {}
    pts = [x.tolist()]  # event points as lists, for cheap comparisons
    t, small = 0.0, 0
    while True:
        u = law(a)
        try:
            flow = net.box_flow(a, u)
        except SingularFocalError as err:
            return Trajectory(net, law, events, Verdict("tie_abort", a, x.copy(), message=str(err)))
        if flow.fixed:
            return Trajectory(net, law, events, Verdict("equilibrium", a, np.array(flow.phi)))
        if len(events) > budget.max_events:
            return Trajectory(net, law, events, Verdict("budget_exhausted", a, x.copy(), message="max events"))
        try:
            yl, i, sign, tau = flow.step(pts[-1])
        except (TieError, WallError) as err:
            if small >= budget.zeno_count // 2:
                return Trajectory(net, law, events, _verdict_zeno(events, small))
            return Trajectory(net, law, events, Verdict("tie_abort", a, x.copy(), message=str(err)))
        b = a[:i] + (a[i] + sign,) + a[i + 1:]
        y = np.array(yl)
        t += tau
        if t > budget.max_time:
            return Trajectory(net, law, events, Verdict("budget_exhausted", a, x.copy(), message="max time"))
        events.append(Event(t, y, b))
        x, a = y, b
        small = small + 1 if tau < budget.zeno_eps else 0
        if small >= budget.zeno_count:
            return Trajectory(net, law, events, _verdict_zeno(events, small))
        pts.append(yl)
        hit = _recurrence_indexed(events, pts, by_box, budget.recurrence_tol)
        if hit is not None:
            j, k = hit
            cycle = tuple(e.box for e in events[j:k])
            return Trajectory(net, law, events, Verdict("periodic", b, y.copy(), cycle,
                                                        float(events[k].time - events[j].time)))
        by_box.setdefault(b, []).append(len(events) - 1)


def _recurrence_indexed(events: list[Event], pts: list[list[float]], by_box: dict[Box, list[int]],
                        tol: float) -> tuple[int, int] | None:
    """Earlier wall event with the same box and point as the last one, preceded by a repeat of the box cycle."""
    k = len(events) - 1
    boxes = None
    # the latest few visits suffice once the orbit has settled
    for j in reversed(by_box.get(events[k].box, ())[-RECURRENCE_WINDOW:]):
        if not all(abs(p - q) < tol for p, q in zip(pts[j], pts[k])):
            continue
        p = k - j
        if j - p < 1:
            continue
        if boxes is None:
            boxes = [e.box for e in events]
        if boxes[j - p:j] == boxes[j:k]:
            return j, k
    return None


@dataclass
class Samples:
    times: np.ndarray
    points: np.ndarray
    boxes: list[Box] = field(default_factory=list)

    def to_csv(self, names, path=None) -> str:
        """``t,<names...>,box`` rows; written to ``path`` when given."""
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *names, "box"])
        for t, x, a in zip(self.times, self.points, self.boxes):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in x), box_label(a)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def sample(net: Network, law: ControlLaw | None, traj: Trajectory, dt: float,
           t_end: float | None = None) -> Samples:
    """Closed-form samples every ``dt`` on ``[0, t_end]`` (default: last event time).

    Both endpoints are always included.  Past the last event the flow of the
    final box is used, which is exact for equilibrium verdicts.
    """
    law = law or ZERO_LAW
    if dt <= 0:
        raise ValueError("dt must be positive")
    if traj.net is not net and traj.net != net:
        raise ValueError("trajectory was computed for another network")
    if any(law(e.box) != traj.law(e.box) for e in traj.events):
        raise ValueError("trajectory was computed under another law")
    times_ev = traj.times
    end = times_ev[-1] if t_end is None else float(t_end)
    if end < times_ev[-1]:
        raise ValueError("t_end precedes the last event")
    ts = np.arange(0.0, end, dt)
    ts = np.append(ts, end) if (len(ts) == 0 or ts[-1] < end) else ts
    pts, boxes = np.empty((len(ts), net.n)), []
    for m, t in enumerate(ts):
        k = int(np.searchsorted(times_ev, t, side="right")) - 1
        e = traj.events[k]
        pts[m] = e.point if t == e.time else flow_at(net, e.box, e.point, t - e.time, law(e.box))
        boxes.append(e.box)
    return Samples(ts, pts, boxes)
