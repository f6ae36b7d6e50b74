"""State transition graphs of controlled PWA networks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx

from .model import Box, Network, exit_directions, focal_point, unstable_walls


def box_label(a: Box) -> str:
    if all(0 <= v < 10 for v in a):
        return "".join(str(v) for v in a)
    return ",".join(str(v) for v in a)


def parse_box(text: str, n: int | None = None) -> Box:
    """``"101"`` or ``"1,0,1"`` to ``(1, 0, 1)``."""
    text = text.strip()
    box = tuple(int(v) for v in text.split(",")) if "," in text else tuple(int(c) for c in text)
    if n is not None and len(box) != n:
        raise ValueError(f"box {text!r} needs {n} digits")
    return box


class ControlLaw:
    """Qualitative feedback: one input value per box, ``default`` elsewhere."""

    def __init__(self, values: Mapping[Box, float] | None = None, default: float = 0.0):
        self._values = {tuple(int(v) for v in k): float(u) for k, u in (values or {}).items()}
        self.default = float(default)

    def __call__(self, a: Box) -> float:
        return self._values.get(tuple(a), self.default)

    @property
    def values(self) -> dict[Box, float]:
        return dict(self._values)

    def check(self, net: Network) -> None:
        for a, u in list(self._values.items()) + [(None, self.default)]:
            if a is not None:
                net.check_box(a)
            if not 0 <= u <= net.input_bound:
                raise ValueError(f"law value {u} at {a} outside [0, {net.input_bound}]")

    def to_dict(self) -> dict:
        return {"default": self.default,
                "boxes": [{"box": list(a), "u": u} for a, u in sorted(self._values.items())]}

    @classmethod
    def from_dict(cls, doc: dict) -> ControlLaw:
        extra = set(doc) - {"default", "boxes"}
        if extra:
            raise ValueError(f"unknown keys in law: {sorted(extra)}")
        return cls({tuple(e["box"]): e["u"] for e in doc.get("boxes", [])}, doc.get("default", 0.0))

    def __repr__(self):
        items = ", ".join(f"{box_label(a)}: {u:g}" for a, u in sorted(self._values.items()))
        return f"ControlLaw({{{items}}}, default={self.default:g})"


ZERO_LAW = ControlLaw()


@dataclass(frozen=True, order=True)
class Edge:
    source: Box
    target: Box
    direction: int
    sign: int


def _edge(a: Box, b: Box) -> Edge:
    diff = [(i, b[i] - a[i]) for i in range(len(a)) if b[i] != a[i]]
    if len(a) != len(b) or len(diff) != 1 or abs(diff[0][1]) != 1:
        raise ValueError(f"{a} -> {b} is not a unit lattice step")
    return Edge(tuple(a), tuple(b), diff[0][0], diff[0][1])


@dataclass(frozen=True)
class TransitionGraph:
    nodes: tuple[Box, ...]
    edges: tuple[Edge, ...]
    # pairs (lower box, upper box) of walls that repel on both sides; not edges
    unstable_walls: tuple[tuple[Box, Box], ...] = ()
    _succ: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        succ = {a: [] for a in self.nodes}
        for e in self.edges:
            if e.source not in succ or e.target not in succ:
                raise ValueError(f"edge {e} leaves the node set")
            succ[e.source].append(e.target)
        object.__setattr__(self, "_succ", succ)

    @classmethod
    def from_edges(cls, nodes: Iterable[Box], pairs: Iterable[tuple[Box, Box]]) -> TransitionGraph:
        """Build a (target) graph from explicit box pairs, checking every pair is a unit step."""
        edges = sorted({_edge(tuple(a), tuple(b)) for a, b in pairs})
        return cls(tuple(sorted(tuple(a) for a in nodes)), tuple(edges))

    @classmethod
    def from_dict(cls, net: Network, doc: dict) -> TransitionGraph:
        pairs = [(tuple(e["source"]), tuple(e["target"])) for e in doc["edges"]]
        for a, b in pairs:
            net.check_box(a)
            net.check_box(b)
        return cls.from_edges(net.boxes(), pairs)

    def successors(self, a: Box) -> list[Box]:
        return list(self._succ[tuple(a)])

    @property
    def edge_pairs(self) -> set[tuple[Box, Box]]:
        return {(e.source, e.target) for e in self.edges}

    @property
    def fixed(self) -> list[Box]:
        return [a for a in self.nodes if not self._succ[a]]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((e.source, e.target) for e in self.edges)
        return g

    def to_dict(self) -> dict:
        return {
            "nodes": [list(a) for a in self.nodes],
            "edges": [{"source": list(e.source), "target": list(e.target),
                       "direction": e.direction, "sign": "+" if e.sign > 0 else "-"} for e in self.edges],
            "fixed": [list(a) for a in self.fixed],
            "unstable_walls": [[list(a), list(b)] for a, b in self.unstable_walls],
        }

    def to_dot(self, name: str = "TG") -> str:
        lines = [f"digraph {name} {{"]
        fixed = set(self.fixed)
        for a in self.nodes:
            shape = "doublecircle" if a in fixed else "circle"
            lines.append(f'  "{box_label(a)}" [shape={shape}];')
        for e in self.edges:
            lines.append(f'  "{box_label(e.source)}" -> "{box_label(e.target)}";')
        for a, b in self.unstable_walls:
            lines.append(f'  "{box_label(a)}" -> "{box_label(b)}" [style=dotted, dir=none];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_transition_graph(net: Network, law: ControlLaw | None = None) -> TransitionGraph:
    """Edges ``a -> a +/- e_i`` for every escaping direction of every box under ``law``."""
    law = law or ZERO_LAW
    law.check(net)
    edges = []
    for a in net.boxes():
        up, down = exit_directions(net, a, law(a))
        for i in up:
            edges.append(Edge(a, a[:i] + (a[i] + 1,) + a[i + 1:], i, 1))
        for i in down:
            edges.append(Edge(a, a[:i] + (a[i] - 1,) + a[i + 1:], i, -1))
    walls = tuple((w.lower, w.upper) for w in unstable_walls(net, law))
    return TransitionGraph(tuple(net.boxes()), tuple(sorted(edges)), walls)


def fixed_boxes(tg: TransitionGraph) -> set[Box]:
    return set(tg.fixed)


def fixed_boxes_by_focal(net: Network, law: ControlLaw | None = None) -> set[Box]:
    """Boxes containing their own focal point (independent of the graph)."""
    law = law or ZERO_LAW
    out = set()
    for a in net.boxes():
        phi = focal_point(net, a, law(a))
        lo, hi = net.bounds(a)
        inside = all(
            (lo[i] < phi[i] or a[i] == 0) and (phi[i] < hi[i] or a[i] == net.q[i] - 1)
            for i in range(net.n))
        if inside:
            out.add(a)
    return out


@dataclass
class CycleReport:
    sccs: list[list[Box]]
    cycles: list[list[Box]]
    max_length: int
    exceeded: bool


def _rotate(cycle: list[Box]) -> list[Box]:
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]


def strongly_connected_cycles(tg: TransitionGraph, max_length: int | None = None,
                              max_cycles: int = 10_000) -> CycleReport:
    """Non-trivial SCCs (exact) and elementary cycles up to a budget.

    The default length budget is ``2 n max(q_i)``.  ``exceeded`` is set when a
    longer cycle is met or more than ``max_cycles`` cycles exist; SCCs are
    always complete.
    """
    g = tg.to_networkx()
    if max_length is None:
        n = len(tg.nodes[0]) if tg.nodes else 0
        qmax = max((max(a) for a in tg.nodes), default=0) + 1
        max_length = 2 * n * qmax
    sccs = [sorted(c) for c in nx.strongly_connected_components(g) if len(c) > 1]
    sccs.sort()
    cycles, exceeded, seen = [], False, 0
    for c in nx.simple_cycles(g):
        seen += 1
        if seen > max_cycles:
            exceeded = True
            break
        if len(c) > max_length:
            exceeded = True
            continue
        cycles.append(_rotate(list(c)))
    cycles.sort(key=lambda c: (len(c), c))
    return CycleReport(sccs, cycles, max_length, exceeded)


def is_invariant(tg: TransitionGraph, boxes: Iterable[Box]) -> bool:
    s = {tuple(a) for a in boxes}
    missing = s - set(tg.nodes)
    if missing:
        raise ValueError(f"boxes {sorted(missing)} are not nodes of the graph")
    return all(b in s for a in s for b in tg.successors(a))


@dataclass(frozen=True)
class GraphDiff:
    missing: tuple[Edge, ...]  # in the target, absent from the graph
    extra: tuple[Edge, ...]    # in the graph, absent from the target
    changed: tuple[Box, ...]   # boxes whose successor sets differ

    @property
    def empty(self) -> bool:
        return not (self.missing or self.extra)


def graph_diff(tg: TransitionGraph, tg_star: TransitionGraph) -> GraphDiff:
    if set(tg.nodes) != set(tg_star.nodes):
        raise ValueError("graphs have different node sets")
    mine = {(e.source, e.target): e for e in tg.edges}
    theirs = {(e.source, e.target): e for e in tg_star.edges}
    missing = tuple(sorted(theirs[k] for k in set(theirs) - set(mine)))
    extra = tuple(sorted(mine[k] for k in set(mine) - set(theirs)))
    changed = tuple(sorted({e.source for e in missing + extra}))
    return GraphDiff(missing, extra, changed)
