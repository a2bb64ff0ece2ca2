"""Command-line entry point: ``unistab {bounds,tail,excess,clamp-audit,audit}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from . import harness
from .bounds import bound_table, table_to_csv
from .core import CertificateViolation

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--n", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--delta", type=_float_list, help="comma-separated confidence levels")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unistab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="tabulate the closed-form bounds")
    _common(p)
    p.add_argument("--gamma-rule", default="inv_sqrt_n", help="fixed:V, inv_sqrt_n or inv_n")
    p.add_argument("--range", dest="R", type=float, default=1.0)

    for name, text in (("tail", "estimation-error tail experiment"), ("excess", "excess-loss experiment")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--problem", choices=harness.PROBLEMS)
        p.add_argument("--solver", choices=harness.SOLVERS)
        p.add_argument("--lam", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--workers", type=int)
        p.add_argument("--write-config", help="also save the resolved config to this path")

    p = sub.add_parser("clamp-audit", help="adaptive-clamp property run on random instances")
    _common(p)

    p = sub.add_parser("audit", help="neighbour-pair stability audits of the shipped solvers")
    _common(p)
    return parser


_CONFIG_KEYS = ("problem", "solver", "n", "trials", "delta", "seed", "lam", "epsilon", "workers", "out", "format")


def resolve_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    data = harness.ExperimentConfig.load(args.config).to_dict() if args.config else {}
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    return harness.ExperimentConfig.from_dict(data)


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc}") from exc


def _emit_report(report, cfg: harness.ExperimentConfig) -> None:
    if cfg.out:
        harness.emit(report, cfg.out, cfg.format)
        return
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "report")
        harness.emit(report, path, cfg.format)
        with open(path) as fh:
            sys.stdout.write(fh.read())


def cmd_bounds(args) -> int:
    ns = args.n or [16, 64, 256, 1024, 4096, 16384]
    deltas = args.delta or [0.01]
    rows = []
    for d in deltas:
        rows.extend(bound_table(ns, args.gamma_rule, d, args.R))
    if (args.format or "csv") == "json":
        _write_text(json.dumps(rows, indent=2) + "\n", args.out)
    else:
        _write_text(table_to_csv(rows), args.out)
    return EXIT_OK


def cmd_tail(args) -> int:
    cfg = resolve_config(args)
    if args.write_config:
        _write_text(cfg.to_json() + "\n", args.write_config)
    _emit_report(harness.run_tail_experiment(cfg), cfg)
    return EXIT_OK


def cmd_excess(args) -> int:
    cfg = resolve_config(args)
    if args.write_config:
        _write_text(cfg.to_json() + "\n", args.write_config)
    _emit_report(harness.run_excess_experiment(cfg), cfg)
    return EXIT_OK


def cmd_clamp_audit(args) -> int:
    instances = args.trials or 200
    summary = harness.clamp_suite(instances, args.seed or 0)
    b, mean = harness.worked_clamp_instance()
    lines = [
        f"instances {summary.instances}",
        f"max |E_z clamped| {summary.max_abs_mean:.3e}",
        f"max |b|/w {summary.max_shift_ratio:.6f}",
        f"max stability excess {summary.max_stability_excess:.3e}",
        f"max budget excess {summary.max_budget_excess:.3e}",
        f"worked instance b={b:.12f} mean={mean:.3e}",
        f"failures {summary.failures}",
    ]
    _write_text("\n".join(lines) + "\n", args.out)
    worked_ok = abs(b - 0.5) <= 1e-9 and abs(mean) <= 1e-12
    return EXIT_OK if summary.ok and worked_ok else EXIT_VIOLATION


def cmd_audit(args) -> int:
    n = (args.n or [50])[0]
    rows = harness.stability_audits(n=n, pairs=args.trials or 1000, seed=args.seed or 0)
    lines = ["name,declared,observed,ok"]
    lines += [f"{r.name},{r.declared:.17g},{r.observed:.17g},{'true' if r.ok else 'false'}" for r in rows]
    _write_text("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all(r.ok for r in rows) else EXIT_VIOLATION


COMMANDS = {
    "bounds": cmd_bounds,
    "tail": cmd_tail,
    "excess": cmd_excess,
    "clamp-audit": cmd_clamp_audit,
    "audit": cmd_audit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CertificateViolation as exc:
        print(f"unistab: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (OSError, ValueError) as exc:
        print(f"unistab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
