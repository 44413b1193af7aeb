"""Command line entry points: run a scenario, verify a replay, render reports."""

import argparse
import sys

from .metrics import FORMAT_VERSION, MetricsLog, compare_records
from .scenario import parse_scenario
from .sim import Simulation


def _cmd_run(args) -> int:
    with open(args.scenario, "r", encoding="utf-8") as fh:
        text = fh.read()
    spec = parse_scenario(text, name=args.scenario)
    if args.seed is not None:
        spec.seed = args.seed
    sim = Simulation(spec, scenario_text=text,
                     monitoring=not args.no_monitoring,
                     omniscient=args.omniscient)
    if args.serve is not None:
        print(f"serving operator gateway on port {args.serve} "
              f"(realtime factor {args.realtime_factor})")
        log = sim.run_serve(args.serve, realtime_factor=args.realtime_factor)
    else:
        log = sim.run_headless()
    summary = log.summary()
    print(f"done: t={summary.get('t')}s coverage={summary.get('coverage'):.3f} "
          f"wire={summary.get('wire_total')}B checksum={log.checksum()[:16]}…")
    if args.metrics_out:
        log.write(args.metrics_out)
        print(f"metrics written to {args.metrics_out}")
    if args.figures:
        from .report import render_figures
        for path in render_figures(log.records, args.figures):
            print(f"figure written to {path}")
    return 0


def _cmd_replay(args) -> int:
    header, records = MetricsLog.read(args.log)
    if header.get("format_version") != FORMAT_VERSION:
        print(f"refusing replay: log format {header.get('format_version')} "
              f"!= supported {FORMAT_VERSION}")
        return 2
    text = header.get("scenario_text", "")
    if not text:
        print("refusing replay: log has no embedded scenario")
        return 2
    spec = parse_scenario(text, name=header["scenario"].get("name", "replay"))
    spec.seed = header["seed"]
    sim = Simulation(spec, scenario_text=text)
    log = sim.run_headless()
    verdict = compare_records(records, log.records)
    print(f"replay verdict: {verdict['verdict']}")
    if verdict["verdict"] != "identical":
        print(f"first divergence at record {verdict['first_divergence']}")
        return 1
    print(f"{verdict['records']} records match; checksum {log.checksum()[:16]}…")
    return 0


def _cmd_report(args) -> int:
    from .report import render_figures
    _header, records = MetricsLog.read(args.log)
    for path in render_figures(records, args.out):
        print(f"figure written to {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="meshfleet",
        description="Deterministic multi-rover exploration simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--serve", type=int, default=None, metavar="PORT",
                       help="serve the operator gateway while running")
    p_run.add_argument("--realtime-factor", type=float, default=1.0,
                       help="simulated seconds per wall second in serve mode")
    p_run.add_argument("--metrics-out", default=None)
    p_run.add_argument("--figures", default=None, metavar="DIR",
                       help="render figures next to the metrics output")
    p_run.add_argument("--omniscient", action="store_true",
                       help="debug: include true poses in snapshots")
    p_run.add_argument("--no-monitoring", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_rep = sub.add_parser("replay", help="re-run a metrics log and compare")
    p_rep.add_argument("--log", required=True)
    p_rep.set_defaults(fn=_cmd_replay)

    p_fig = sub.add_parser("report", help="render figures from a metrics log")
    p_fig.add_argument("--log", required=True)
    p_fig.add_argument("--out", required=True)
    p_fig.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
