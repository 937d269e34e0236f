"""Command-line surface.

Subcommands: validate (net structure + SMART checks), simulate (run a
scenario, write trace and report), verify (monitors and formulas on a
stored or fresh trace), explore (bounded reachability + formula
verdicts), report (summary of a stored trace). Exit status: 0 all checks
pass, 1 violations, 2 inconclusive, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .analysis import ExplorationConfig, check_formula, explore
from .builder import validate_smart
from .net import validate_net
from .netio import NetDocumentError, load_net, smart_from_document
from .scenario import ScenarioError, parse_scenario, run, verify
from .trace import read_trace, write_trace

EXIT_PASS = 0
EXIT_VIOLATION = 1
EXIT_INCONCLUSIVE = 2
EXIT_INPUT_ERROR = 3


class _ArgumentError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 3
        raise _ArgumentError(self, message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="smart-tgpn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_validate = sub.add_parser("validate", help="check a net description file")
    p_validate.add_argument("net_file")

    p_sim = sub.add_parser("simulate", help="run a scenario, write trace and report")
    p_sim.add_argument("scenario")
    p_sim.add_argument("--policy", choices=["earliest", "latest", "random"])
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out", default="runs", help="output directory (default: runs)")

    p_verify = sub.add_parser("verify", help="run monitors/formulas only")
    p_verify.add_argument("scenario")
    p_verify.add_argument("--trace", help="stored trace to verify instead of running fresh")

    p_explore = sub.add_parser("explore", help="bounded exploration + formula verdicts")
    p_explore.add_argument("scenario")
    p_explore.add_argument("--horizon", type=int)
    p_explore.add_argument("--cap", type=int)
    p_explore.add_argument("--export", help="write the reach graph to this file")

    p_report = sub.add_parser("report", help="summarize a stored trace")
    p_report.add_argument("trace")
    p_report.add_argument("--scenario", help="scenario file to rebind net annotations")

    return parser


def _status_code(status: str) -> int:
    return {"pass": EXIT_PASS, "violation": EXIT_VIOLATION, "inconclusive": EXIT_INCONCLUSIVE}[status]


def cmd_validate(args) -> int:
    from .hierarchy import check_interface
    from .netio import subnet_from_document

    with open(args.net_file, encoding="utf-8") as fh:
        doc = json.load(fh)
    net = load_net(args.net_file)
    report = validate_net(net)
    print(report.summary())
    if not report.ok:
        return EXIT_INPUT_ERROR
    status = EXIT_PASS
    if "smart" in doc:
        smart = smart_from_document(doc)
        structure = validate_smart(smart)
        print(structure.summary())
        if not structure.ok:
            status = EXIT_VIOLATION
    for raw in doc.get("subnets", []):
        name, sub, iface = subnet_from_document(raw)
        interface = check_interface(net, sub, iface)
        print(f"subnet {name}:")
        print(interface.summary())
        if not interface.ok:
            status = EXIT_VIOLATION
    return status


def cmd_simulate(args) -> int:
    scenario = parse_scenario(args.scenario)
    if args.policy:
        scenario.policy = args.policy
    if args.seed is not None:
        scenario.seed = args.seed
    for warning in scenario.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    trace, report = run(scenario)

    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, scenario.name)
    write_trace(trace, base + ".trace.jsonl")
    with open(base + ".report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_record(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(base + ".report.txt", "w", encoding="utf-8") as fh:
        fh.write(report.table() + "\n")
    print(report.table())
    print(f"trace: {base}.trace.jsonl")
    return _status_code(report.status)


def cmd_verify(args) -> int:
    scenario = parse_scenario(args.scenario)
    if args.trace:
        trace = read_trace(args.trace)
        trace.smart = scenario.smart
        report = verify(trace, scenario)
    else:
        _, report = run(scenario)
    print(report.table())
    return _status_code(report.status)


def cmd_explore(args) -> int:
    scenario = parse_scenario(args.scenario)
    section = dict(scenario.exploration or {})
    if args.horizon is not None:
        section["horizon"] = args.horizon
    if args.cap is not None:
        section["cap"] = args.cap
    if "horizon" not in section:
        raise ScenarioError("explore needs an exploration section or --horizon")
    cfg = ExplorationConfig(
        horizon=int(section["horizon"]),
        alphabet=list(section.get("alphabet", [])),
        flip_budget=section.get("flip_budget"),
        weak_branching=section.get("branching", "earliest-only"),
        state_cap=int(section.get("cap", 1_000_000)),
    )
    graph = explore(scenario.smart, cfg)
    print(f"states: {graph.state_count}  violations: {len(graph.violations)}"
          f"{'  (incomplete: state cap hit)' if graph.incomplete else ''}")
    for violation in graph.violations[:10]:
        print(f"  invariant violation at tick {violation.tick}: {violation.description}")

    worst = EXIT_PASS
    for formula in scenario.formulas:
        verdict = check_formula(graph, formula)
        print(f"  formula {formula.label():<30} {verdict.status}  {verdict.detail}")
        if verdict.status == "violated":
            worst = max(worst, EXIT_VIOLATION)
        elif verdict.status == "inconclusive":
            worst = max(worst, EXIT_INCONCLUSIVE)
    if graph.violations:
        worst = max(worst, EXIT_VIOLATION)
    if args.export:
        with open(args.export, "w", encoding="utf-8") as fh:
            for line in graph.export_lines():
                fh.write(line + "\n")
        print(f"graph: {args.export}")
    return worst


def cmd_report(args) -> int:
    trace = read_trace(args.trace)
    if args.scenario:
        trace.smart = parse_scenario(args.scenario).smart
    stats = trace.stats()
    print(json.dumps(stats, indent=2, sort_keys=True))
    if trace.quiesced_at is not None:
        print(f"quiesced at t={trace.quiesced_at}")
    return EXIT_PASS


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        exc.parser.print_usage(sys.stderr)
        return EXIT_INPUT_ERROR
    handlers = {
        "validate": cmd_validate,
        "simulate": cmd_simulate,
        "verify": cmd_verify,
        "explore": cmd_explore,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ScenarioError, NetDocumentError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
