"""Command-line front end.

Exit codes: 0 ok, 2 input error, 3 infeasible synthesis, 4 numerical abort
(tie or Zeno verdict, only with ``--strict``).
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .control import extend_with_controller, fast_controller_report, synthesize
from .cycle import CycleSequence, classify_cycle
from .graph import ControlLaw, TransitionGraph, build_transition_graph, parse_box, strongly_connected_cycles
from .io import dumps, example_path, load_network, network_to_dict, read_json
from .model import PWAError, StructureError, WallError, validate_network
from .sim import Budget, sample, simulate

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
EXAMPLES = ("toy", "example1", "example2", "example1_law", "example2_law",
            "example1_target", "example2_target")


class InputError(Exception):
    pass


def _vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _load_net(args):
    net = load_network(args.network)
    if getattr(args, "u_bound", None) is not None:
        net = net.with_input_bound(args.u_bound)
    return net


def _load_law(args, net):
    if not getattr(args, "law", None):
        return None
    law = ControlLaw.from_dict(read_json(args.law))
    law.check(net)
    return law


def _emit(args, name: str, doc) -> None:
    text = dumps(doc) + "\n"
    sys.stdout.write(text)
    if getattr(args, "out_dir", None):
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def cmd_check(args) -> int:
    net = _load_net(args)
    report = validate_network(net)
    _emit(args, "check.json", {"network": str(args.network), **report.to_dict(net)})
    return EXIT_OK


def cmd_graph(args) -> int:
    net = _load_net(args)
    tg = build_transition_graph(net, _load_law(args, net))
    cycles = strongly_connected_cycles(tg)
    doc = {**tg.to_dict(),
           "sccs": [[list(a) for a in c] for c in cycles.sccs],
           "cycles": [[list(a) for a in c] for c in cycles.cycles],
           "cycle_budget_exceeded": cycles.exceeded}
    if args.format == "dot":
        sys.stdout.write(tg.to_dot())
    else:
        sys.stdout.write(dumps(doc) + "\n")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "graph.json").write_text(dumps(doc) + "\n")
        (out / "graph.dot").write_text(tg.to_dot())
    return EXIT_OK


def _run_one(job):
    net, law, x0, budget, dt = job
    traj = simulate(net, law, x0, budget)
    samples = sample(net, law, traj, dt) if dt else None
    return traj, samples


def cmd_simulate(args) -> int:
    net = _load_net(args)
    law = _load_law(args, net)
    budget = Budget(max_events=args.max_events, max_time=args.max_time, zeno_eps=args.zeno_eps)
    for x0 in args.x0:
        if len(x0) != net.n:
            raise InputError(f"--x0 needs {net.n} values, got {len(x0)}")
        try:
            net.box_of(x0, strict=True)
        except WallError as err:
            raise InputError(f"--x0 {x0}: {err}") from None
    jobs = [(net, law, x0, budget, args.dt) for x0 in args.x0]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    out = Path(args.out_dir) if args.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    docs, aborted = [], False
    for k, (traj, samples) in enumerate(results):
        suffix = "" if len(results) == 1 else f"_{k}"
        doc = {"x0": list(args.x0[k]), **traj.verdict.to_dict(), "n_events": len(traj.events),
               "final_time": float(traj.events[-1].time)}
        docs.append(doc)
        aborted |= traj.verdict.kind in ("tie_abort", "zeno")
        if out:
            (out / f"verdict{suffix}.json").write_text(dumps(doc) + "\n")
            (out / f"events{suffix}.json").write_text(dumps(traj.to_dict()["events"]) + "\n")
            if samples is not None:
                samples.to_csv(net.names, out / f"trajectory{suffix}.csv")
    sys.stdout.write(dumps(docs[0] if len(docs) == 1 else docs) + "\n")
    return EXIT_NUMERIC if (args.strict and aborted) else EXIT_OK


def cmd_analyze(args) -> int:
    net = _load_net(args)
    law = _load_law(args, net)
    if args.cycle:
        sep = ";" if ";" in args.cycle else ","
        seqs = [[parse_box(b, net.n) for b in args.cycle.split(sep)]]
    else:
        seqs = strongly_connected_cycles(build_transition_graph(net, law)).cycles
    verdicts = []
    for boxes in seqs:
        try:
            cyc = CycleSequence.from_boxes(boxes)
        except ValueError as err:
            raise InputError(str(err)) from None
        verdicts.append(classify_cycle(net, law, cyc, tol=args.tol, max_iter=args.max_iter).to_dict())
    _emit(args, "analysis.json", verdicts[0] if args.cycle else verdicts)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    net = _load_net(args)
    target = TransitionGraph.from_dict(net, read_json(args.target))
    result = synthesize(net, target, policy=args.policy)
    _emit(args, "synthesis.json", result.to_dict(net))
    if args.law_out and result.law is not None:
        Path(args.law_out).write_text(dumps(result.law.to_dict()) + "\n")
    return EXIT_OK if result.status == "ok" else EXIT_INFEASIBLE


def cmd_extend(args) -> int:
    net = _load_net(args)
    synth = read_json(args.synthesis)
    if synth.get("status") != "ok":
        raise InputError("synthesis result is not feasible")
    boxes = [tuple(a) for a in synth["changed_boxes"]]
    value = args.value if args.value is not None else synth.get("uniform_value")
    if value is None:
        raise InputError("no single input value fits every controlled box; pass --value")
    try:
        ext = extend_with_controller(net, boxes, value, args.theta_y, args.gamma_y, name=args.name)
    except ValueError as err:
        raise InputError(str(err)) from None
    report = fast_controller_report(ext)
    doc = {"value": value, "theta_y": args.theta_y, "gamma_y": args.gamma_y,
           "fast_controller": report.to_dict(ext)}
    if args.network_out:
        Path(args.network_out).write_text(dumps(network_to_dict(ext)) + "\n")
    _emit(args, "extend.json", doc)
    return EXIT_OK


def cmd_example(args) -> int:
    sys.stdout.write(example_path(f"{args.name}.json").read_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pwagrn", description="Analysis and feedback synthesis for PWA gene networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, law=True):
        sp.add_argument("network", help="network JSON file")
        sp.add_argument("--u-bound", type=float, default=None, help="override the input bound U")
        sp.add_argument("--out-dir", default=None, help="also write outputs into this directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomised steps; current commands are deterministic")
        if law:
            sp.add_argument("--law", default=None, help="control law JSON file (default u = 0)")

    sp = sub.add_parser("check", help="validate a network and report H1/H2 warnings")
    common(sp, law=False)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("graph", help="transition graph as JSON or DOT")
    common(sp)
    sp.add_argument("--format", choices=("json", "dot"), default="json")
    sp.set_defaults(func=cmd_graph)

    sp = sub.add_parser("simulate", help="exact event-driven simulation")
    common(sp)
    sp.add_argument("--x0", type=_vector, action="append", required=True,
                    help="initial point v1,v2,...; repeat for a batch")
    sp.add_argument("--max-events", type=int, default=Budget.max_events)
    sp.add_argument("--max-time", type=_positive, default=Budget.max_time)
    sp.add_argument("--zeno-eps", type=_positive, default=Budget.zeno_eps)
    sp.add_argument("--dt", type=_positive, default=0.01, help="sampling step of the CSV export")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for batch runs")
    sp.add_argument("--strict", action="store_true", help="exit 4 on tie or Zeno verdicts")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="classify cycles of the transition graph")
    common(sp)
    sp.add_argument("--cycle", default=None,
                    help='box sequence, e.g. "00,10,20,21,11,01" or "0,0;1,0;..." (default: every elementary cycle)')
    sp.add_argument("--tol", type=_positive, default=1e-12)
    sp.add_argument("--max-iter", type=int, default=100_000)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("synthesize", help="qualitative law realising a target graph")
    common(sp, law=False)
    sp.add_argument("target", help="target graph JSON file")
    sp.add_argument("--policy", choices=("adjacent", "exact"), default="adjacent")
    sp.add_argument("--law-out", default=None, help="write the synthesised law here")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("extend", help="replace the input by a controller gene")
    common(sp, law=False)
    sp.add_argument("synthesis", help="output of the synthesize command")
    sp.add_argument("--theta-y", type=_positive, required=True)
    sp.add_argument("--gamma-y", type=_positive, required=True)
    sp.add_argument("--value", type=float, default=None, help="input value when y is on")
    sp.add_argument("--name", default="y")
    sp.add_argument("--network-out", default=None, help="write the extended network here")
    sp.set_defaults(func=cmd_extend)

    sp = sub.add_parser("example", help="print a bundled fixture")
    sp.add_argument("name", choices=EXAMPLES)
    sp.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, StructureError, ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except PWAError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
