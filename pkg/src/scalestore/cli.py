"""Command-line entry points.

One multiplexed binary with three subcommands:

  scalestore check schema.json a.qt b.qt   admit + compile templates
  scalestore simulate scenario.json        run a scenario, write metrics CSV
  scalestore report metrics.csv            plots + text summary from a CSV

Exit codes are stable: 0 success, 1 usage error, 2 admission rejection,
3 scenario acceptance unmet, 4 internal invariant violation.  The env var
SCALESTORE_LOG (error|warn|info|debug) controls diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ScaleStoreError, ScenarioError, SchemaMismatch
from .query import DEFAULT_FANOUT_BUDGET, Catalog, Rejection, parse_template
from .schema import parse_schema

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REJECTED = 2
EXIT_ACCEPTANCE = 3
EXIT_INVARIANT = 4

log = logging.getLogger("scalestore")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("SCALESTORE_LOG", "error").lower()
    logging.basicConfig(stream=sys.stderr, level=_LOG_LEVELS.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


# ----------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    try:
        schema = parse_schema(_read(args.schema))
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    catalog = Catalog(schema, budget=args.budget)
    rejected = False
    for path in args.templates:
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            text = _read(path)
        except OSError as exc:
            print("error: %s" % exc, file=sys.stderr)
            return EXIT_USAGE
        try:
            template = parse_template(text, schema, name=name)
            report = catalog.add(template)
        except Rejection as exc:
            rejected = True
            print("%s: REJECTED (%s)" % (name, exc.offending))
            continue
        parts = ", ".join("%s=%d" % kv for kv in sorted(report.per_source.items()))
        print("%s: admissible, worst-case fan-out %d (budget %d) [%s]"
              % (name, report.product, report.budget, parts))
    if catalog.rules:
        print()
        print(catalog.maintenance_table_text())
    return EXIT_REJECTED if rejected else EXIT_OK


# ----------------------------------------------------------------------
# simulate

def _eval_acceptance(metrics, acceptance, tick_ms):
    """Evaluate declared scenario thresholds against the metrics log.

    Supported keys: min_mean_success, min_success (with optional
    from_h/to_h window), max_nodes_at_end, max_nodes_after_h paired with
    max_nodes_value, max_deadline_misses, max_data_loss_events.
    """
    results = []
    if not metrics.rows:
        return results
    t_h = [t / 3_600_000.0 for t in metrics.column("t_ms")]
    succ = metrics.column("success_frac")
    nodes = metrics.column("node_count")

    if "min_mean_success" in acceptance:
        mean = sum(succ) / len(succ)
        results.append(("min_mean_success", mean >= acceptance["min_mean_success"],
                        "mean success %.4f vs >= %s" % (mean, acceptance["min_mean_success"])))
    if "min_success" in acceptance:
        lo = acceptance.get("from_h", 0.0)
        hi = acceptance.get("to_h", t_h[-1] + 1)
        window = [s for s, t in zip(succ, t_h) if lo <= t <= hi]
        worst = min(window) if window else 1.0
        results.append(("min_success", worst >= acceptance["min_success"],
                        "min success %.4f in [%gh,%gh] vs >= %s"
                        % (worst, lo, hi, acceptance["min_success"])))
    if "max_nodes_at_end" in acceptance:
        results.append(("max_nodes_at_end", nodes[-1] <= acceptance["max_nodes_at_end"],
                        "final nodes %d vs <= %s" % (nodes[-1], acceptance["max_nodes_at_end"])))
    if "max_nodes_after_h" in acceptance:
        after = acceptance["max_nodes_after_h"]
        bound = acceptance["max_nodes_value"]
        tail = [n for n, t in zip(nodes, t_h) if t >= after]
        ok = bool(tail) and min(tail) <= bound
        results.append(("max_nodes_after_h", ok,
                        "min nodes after %gh = %s vs <= %s"
                        % (after, min(tail) if tail else "n/a", bound)))
    if "max_deadline_misses" in acceptance:
        misses = metrics.column("deadline_misses")[-1]
        results.append(("max_deadline_misses", misses <= acceptance["max_deadline_misses"],
                        "deadline misses %d vs <= %s" % (misses, acceptance["max_deadline_misses"])))
    if "max_data_loss_events" in acceptance:
        lost = metrics.column("data_loss_events")[-1]
        results.append(("max_data_loss_events", lost <= acceptance["max_data_loss_events"],
                        "data loss events %d vs <= %s" % (lost, acceptance["max_data_loss_events"])))
    return results


def cmd_simulate(args) -> int:
    from .sim import Simulation, load_scenario
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    log.info("scenario %s: %d ticks", args.scenario, scenario.n_ticks)
    sim = Simulation(scenario)
    metrics = sim.run()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(metrics.to_csv())
        log.info("wrote %s (%d rows)", args.out, len(metrics.rows))
    summary = metrics.summary()
    for key in ("ticks", "mean_success", "min_success", "max_p999_ms",
                "stale_reads", "failed_reads", "deadline_misses",
                "final_nodes", "node_hours", "cost_per_user",
                "arbitration_events", "data_loss_events"):
        print("%s: %s" % (key, ("%.6g" % summary[key])
                          if isinstance(summary[key], float) else summary[key]))
    if args.trace:
        for row in metrics.rows:
            print(",".join(str(v) for v in row))
    results = _eval_acceptance(metrics, scenario.acceptance, scenario.tick_ms)
    failed = False
    for name, ok, detail in results:
        print("acceptance %s: %s (%s)" % (name, "PASS" if ok else "FAIL", detail))
        failed = failed or not ok
    return EXIT_ACCEPTANCE if failed else EXIT_OK


# ----------------------------------------------------------------------
# report

def _load_csv(path):
    from .sim.harness import METRICS_COLUMNS, MetricsLog
    try:
        text = _read(path)
    except OSError as exc:
        raise SchemaMismatch(str(exc))
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != METRICS_COLUMNS:
        raise SchemaMismatch("metrics header does not match %s" % (METRICS_COLUMNS,))
    logm = MetricsLog()
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(METRICS_COLUMNS):
            raise SchemaMismatch("row width %d != %d" % (len(parts), len(METRICS_COLUMNS)))
        logm.rows.append(tuple(float(p) for p in parts))
    return logm


def cmd_report(args) -> int:
    try:
        metrics = _load_csv(args.metrics)
    except (SchemaMismatch, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.metrics))
    os.makedirs(out_dir, exist_ok=True)
    if metrics.rows:
        summary = metrics.summary()
        for k, v in summary.items():
            print("%s: %s" % (k, ("%.6g" % v) if isinstance(v, float) else v))
    else:
        print("empty metrics (header only)")
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib unavailable; skipping plots")
        return EXIT_OK
    t = [v / 3_600_000.0 for v in metrics.column("t_ms")]
    panels = [
        ("latency", [("p50_ms", "p50"), ("p99_ms", "p99"), ("p999_ms", "p99.9")], "ms"),
        ("staleness", [("staleness_max_ms", "max staleness")], "ms"),
        ("nodes", [("node_count", "nodes"), ("active_users", "active users")], ""),
        ("cost", [("cost_per_user", "node-hours / user-hour")], ""),
    ]
    for name, series, ylabel in panels:
        fig, ax = plt.subplots(figsize=(8, 3))
        for col, label in series:
            ax.plot(t, metrics.column(col), label=label)
        ax.set_xlabel("hours")
        ax.set_ylabel(ylabel)
        ax.set_title(name)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        path = os.path.join(out_dir, "%s.png" % name)
        fig.savefig(path)
        plt.close(fig)
        print("wrote %s" % path)
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="scalestore",
        description="compile query templates, run scenarios, render reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="admit and compile query templates")
    p.add_argument("schema", help="schema JSON file")
    p.add_argument("templates", nargs="+", help="query template files")
    p.add_argument("--budget", type=int, default=DEFAULT_FANOUT_BUDGET,
                   help="global fan-out budget (default %(default)s)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="run a scenario")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out", help="write per-tick metrics CSV here")
    p.add_argument("--trace", action="store_true",
                   help="dump every metrics row to stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render plots and summary from a metrics CSV")
    p.add_argument("metrics", help="metrics CSV produced by simulate")
    p.add_argument("--out-dir", help="directory for plot PNGs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; our contract reserves 2 for
        # admission rejection, so remap usage problems to 1
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except Rejection as exc:
        print("rejected: %s" % exc, file=sys.stderr)
        return EXIT_REJECTED
    except (ScenarioError, SchemaMismatch, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (ScaleStoreError, AssertionError) as exc:
        log.exception("invariant violation")
        print("internal invariant violation: %s" % exc, file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
