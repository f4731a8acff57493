"""Command-line front end.

Exit codes: 0 ok, 2 config error, 3 all gates closed, 4 bound violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from . import runner
from .config import ConfigError, load_config
from .errors import AllGatesClosed, BoundViolation, GateMeasureError

EXIT_OK, EXIT_CONFIG, EXIT_CLOSED, EXIT_BOUND = 0, 2, 3, 4

COMMANDS = ("simulate", "born-check", "independence", "trace-ops", "entangle")


def parse_times(text: str) -> list[float]:
    try:
        times = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"invalid --times list {text!r}") from None
    if not times:
        raise ConfigError("--times must list at least one time")
    return times


def _run_one(command: str, path: str, opts: dict):
    """Run one scenario. Returns ``(exit_code, report_or_None, csv_rows, message)``."""
    rows = [] if opts.get("format") == "csv" and command == "simulate" else None
    try:
        cfg = load_config(path, opts.get("seed"))
        if command == "simulate":
            report = runner.simulate(cfg, rows=rows)
        elif command == "born-check":
            report = runner.born_check(cfg, iid=opts.get("iid", False))
        elif command == "independence":
            report = runner.independence(cfg)
        elif command == "trace-ops":
            report = runner.trace_ops(cfg, parse_times(opts.get("times", "0,1")), opts.get("h", 1e-4))
        else:
            report = runner.entangle(cfg, fresh_ledgers=opts.get("fresh_ledgers", False))
    except ConfigError as err:
        return EXIT_CONFIG, None, None, f"config error: {err}"
    except AllGatesClosed as err:
        return EXIT_CLOSED, None, None, f"all gates closed: {err}"
    except BoundViolation as err:
        return EXIT_BOUND, None, None, f"bound violation: {err}"
    except (GateMeasureError, ValueError) as err:
        # non-Hermitian custom matrices, bad partitions and similar input faults
        return EXIT_CONFIG, None, None, f"config error: {err}"
    return EXIT_OK, report, rows, None


def format_csv(report: dict, rows: list) -> str:
    n = len(report["closeness"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "chosen"] + [f"c_{j + 1}" for j in range(n)]
               + [f"rho_{j + 1}" for j in range(n)] + ["deviation"])
    for step, chosen, c, rho, dev in rows:
        w.writerow([step, chosen] + [repr(x) for x in c] + [repr(x) for x in rho] + [repr(dev)])
    return buf.getvalue()


def _summary(command: str, report: dict) -> str:
    if command == "born-check":
        lines = [f"n = {sum(report['counts'])}"]
        n = max(sum(report["counts"]), 1)
        for j, err in enumerate(report["frequency_errors"]):
            lines.append(f"gate {j + 1}: |n_j/n - c_j| = {err:.3e}  (bound {report['deviation_envelope'] / n:.3e})")
        if "iid_frequency_errors" in report:
            lines.append("iid baseline: " + ", ".join(f"{e:.3e}" for e in report["iid_frequency_errors"]))
        lines.append("PASS" if report["passed"] else "FAIL")
        return "\n".join(lines)
    if command == "independence":
        lines = [f"gate {j + 1}: r = {r:.3e}" for j, r in enumerate(report["residuals"])]
        lines.append(f"verdict: {report['verdict']}")
        return "\n".join(lines)
    if command == "trace-ops":
        lines = []
        for row in report["times"]:
            lines.append(f"t = {row['t']}: sum residual {row['sum_residual']:.3e}, "
                         f"max Schrodinger residual {max(row['schrodinger_residuals']):.3e}")
        return "\n".join(lines)
    return f"counts: {report['counts']}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gatemeasure", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", action="append", required=True,
                       help="scenario JSON (or a previous JSON report); repeat for several runs")
        s.add_argument("--output", help="write the report here instead of stdout")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--jobs", type=int, default=1, help="parallel workers for several configs")
        if name == "born-check":
            s.add_argument("--iid", action="store_true", help="add an i.i.d. sampling baseline")
        if name == "trace-ops":
            s.add_argument("--times", default="0,1", help="comma-separated times, e.g. 0,0.37,1")
            s.add_argument("--h", type=float, default=1e-4, help="central-difference step")
        if name == "entangle":
            s.add_argument("--fresh-ledgers", action="store_true",
                           help="start every trial from a copy of the initial ledger")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "config", "output", "jobs")}
    paths = args.config
    if len(paths) > 1 and args.format == "csv":
        print("config error: --format csv takes a single --config", file=sys.stderr)
        return EXIT_CONFIG

    if len(paths) == 1:
        results = [_run_one(args.command, paths[0], opts)]
    elif args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, [args.command] * len(paths), paths, [opts] * len(paths)))
    else:
        results = [_run_one(args.command, path, opts) for path in paths]

    code = EXIT_OK
    for path, (rc, report, _, msg) in zip(paths, results):
        if rc:
            print(f"{path}: {msg}", file=sys.stderr)
            code = code or rc
        elif args.command != "simulate":
            # human-readable summary; stdout is reserved for the report unless --output is set
            print(_summary(args.command, report), file=sys.stdout if args.output else sys.stderr)

    if len(paths) == 1:
        rc, report, rows, _ = results[0]
        if report is None:
            return rc
        if args.format == "csv" and rows is not None:
            text = format_csv(report, rows)
        else:
            text = json.dumps(report, indent=1) + "\n"
    else:
        text = json.dumps([r if r is not None else {"config_path": p, "exit_code": rc, "error": m}
                           for p, (rc, r, _, m) in zip(paths, results)], indent=1) + "\n"
        if code and all(r is None for _, r, _, _ in results):
            return code

    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
