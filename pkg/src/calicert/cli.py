"""Command line entry point: ``calicert <subcommand> [flags]``.

Every flag mirrors a :class:`~calicert.pipeline.RunConfig` field.  A JSON or
YAML file given with ``--config`` (or through ``CALICERT_CONFIG``) supplies
defaults; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .admm import solve
from .brier import certified_brier
from .certify import ABSTAIN, certified_radius, evidence_bounds
from .dece import maximize_dece
from .errors import CalicertError, InfeasibleError, InputError, TooLargeError
from .metrics import BinningScheme, PredictionRecord, accuracy, compute_adaece, compute_ece, compute_tlbs
from .mip import build_instance
from .oracle import brute_force_cce
from .pipeline import (
    EvidenceRecord,
    RunConfig,
    _atomic_write,
    _certified_at,
    _scheme,
    emit_report,
    evaluate_radius,
    ingest,
    parse_radii,
    report_json,
    run_pipeline,
    write_plot_table,
)

ENV_CONFIG = "CALICERT_CONFIG"
EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _kv(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON or YAML file with default settings")
    p.add_argument("--input", help="JSONL or CSV records")
    p.add_argument("--format", choices=("auto", "jsonl", "csv"))
    p.add_argument("--mode", choices=("precertified", "evidence"))
    p.add_argument("--binning", choices=("equal-width", "equal-count"))
    p.add_argument("--bins", type=int)
    p.add_argument("--radii", help="comma separated radii, e.g. 0,0.25,0.5")
    p.add_argument("--method", choices=("standard", "cdf"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--admm", type=_kv, action="append", metavar="KEY=VALUE",
                   help="ADMM option override, repeatable")
    p.add_argument("--ensemble", action="store_true", default=None, help="best of the 16-run grid")
    p.add_argument("--dece", action="store_true", default=None)
    p.add_argument("--oracle", action="store_true", default=None)
    p.add_argument("--oracle-guard", type=int, dest="oracle_guard")
    p.add_argument("--traces", action="store_true", default=None)
    p.add_argument("--abstain", choices=("exclude", "incorrect"))
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--plot-table", dest="plot_table")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--json", action="store_true", help="print JSON instead of plain lines")


COMMANDS = {
    "metrics": "ECE, AdaECE and top-label Brier score of the clean confidences",
    "certify": "certified radius and confidence bounds from smoothing evidence",
    "cbs": "certified Brier score per radius",
    "acce": "approximate certified calibration error (ADMM) per radius",
    "dece": "dECE gradient-ascent baseline per radius",
    "oracle": "exact certified calibration error by enumeration (small inputs only)",
    "report": "full radius sweep written as a versioned JSON report",
    "diagnostics": "ADMM trace per radius",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="calicert", description="Certified calibration metrics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in COMMANDS.items():
        _add_common(sub.add_parser(name, help=help_text, description=help_text))
    return parser


def load_config_file(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    if p.suffix.lower() in (".yaml", ".yml"):
        import yaml

        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise InputError(f"config {p}: {exc}") from exc
    else:
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise InputError(f"config {p}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config {p} must hold a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    path = args.config or environ.get(ENV_CONFIG)
    data = load_config_file(path) if path else {}
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "command", "json") and v is not None}
    if "admm" in flags:
        flags["admm"] = {**dict(data.get("admm") or {}), **dict(flags["admm"])}
    if "radii" in flags:
        flags["radii"] = parse_radii(flags["radii"])
    data.update(flags)
    try:
        return RunConfig.from_mapping(data)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def _out(args, config: RunConfig, text: str):
    if config.output:
        _atomic_write(Path(config.output), text)
    else:
        sys.stdout.write(text)


def _lines(rows, keys, as_json: bool) -> str:
    if as_json:
        return "".join(json.dumps({k: r.get(k) for k in keys}) + "\n" for r in rows)
    out = []
    for r in rows:
        out.append(" ".join(f"{k}={_show(r.get(k))}" for k in keys))
    return "\n".join(out) + "\n"


def _show(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _records(config: RunConfig):
    if config.input is None:
        raise InputError("--input is required")
    return ingest(config.input, config.format, config.mode)


def cmd_metrics(args, config):
    records = _records(config)
    if any(isinstance(r, EvidenceRecord) for r in records):
        records = [PredictionRecord(r.id, r.confidence, r.correct) for r in records]
    scheme = BinningScheme.equal_width(config.bins)
    row = {
        "n": len(records),
        "ece": compute_ece(records, scheme).ece,
        "adaece": compute_adaece(records, min(config.bins, len(records))).ece,
        "tlbs": compute_tlbs(records),
        "accuracy": accuracy(records),
    }
    if args.json:
        _out(args, config, json.dumps(row) + "\n")
    else:
        _out(args, config, "".join(f"{k} {_show(v)}\n" for k, v in row.items()))


def cmd_certify(args, config):
    if config.mode != "evidence":
        raise InputError("certify needs --mode evidence")
    out = []
    for rec in _records(config):
        ev = rec.evidence if config.alpha is None else replace(rec.evidence, alpha=config.alpha)
        radius = certified_radius(ev)
        row = {"id": rec.id, "correct": rec.correct, "confidence": rec.confidence,
               "radius": None if radius is ABSTAIN else radius}
        for R in config.radii:
            if radius is ABSTAIN or radius < R:
                row[f"bounds@{R!r}"] = None
            else:
                cert = evidence_bounds(ev, R, config.method)
                row[f"bounds@{R!r}"] = [cert.lower, cert.upper]
        out.append(row)
    _out(args, config, "".join(json.dumps(r) + "\n" for r in out))


def _per_radius(args, config, key: str, compute):
    records = _records(config)
    rows = []
    for R in config.radii:
        subset, _ = _certified_at(records, R, config)
        rows.append({"radius": R, "n_certified": len(subset), key: compute(subset, R) if subset else None})
    _out(args, config, _lines(rows, ("radius", "n_certified", key), args.json))


def cmd_cbs(args, config):
    _per_radius(args, config, "cbs", lambda subset, R: certified_brier(subset))


def cmd_acce(args, config):
    records = _records(config)
    rows = [evaluate_radius(records, R, replace(config, dece=False, oracle=False, traces=False))[0]
            for R in config.radii]
    _out(args, config, _lines(rows, ("radius", "n_certified", "acce_admm", "admm_converged"), args.json))


def cmd_dece(args, config):
    def run(subset, R):
        scheme = _scheme(config, subset)
        return maximize_dece(build_instance(subset, scheme)).ece

    _per_radius(args, config, "acce_dece", run)


def cmd_oracle(args, config):
    def run(subset, R):
        return brute_force_cce(build_instance(subset, _scheme(config, subset)), config.oracle_guard)[0]

    _per_radius(args, config, "cce_oracle", run)


def cmd_report(args, config):
    report = run_pipeline(config)
    if config.output:
        emit_report(report, config.output, config.plot_table)
        return
    sys.stdout.write(report_json(report))
    if config.plot_table:
        write_plot_table(report, config.plot_table)


def cmd_diagnostics(args, config):
    records = _records(config)
    cfg = replace(config.admm_config(), trace=True, stop_on_convergence=False)
    out = []
    for R in config.radii:
        subset, _ = _certified_at(records, R, config)
        if not subset:
            continue
        instance = build_instance(subset, _scheme(config, subset))
        for start in ("clean", "brier"):
            rep = solve(instance, replace(cfg, z_init=start))
            for row in rep.trace_rows():
                out.append({"radius": R, "start": start, **{k: float(v) for k, v in row.items()}})
    if args.json:
        _out(args, config, "".join(json.dumps(r) + "\n" for r in out))
        return
    keys = ("radius", "start", "step", "lagrangian", "relaxed_ece", "projected_ece", "unique", "valid",
            "binary", "box")
    lines = [",".join(keys)] + [",".join(_show(r[k]) for k in keys) for r in out]
    _out(args, config, "\n".join(lines) + "\n")


HANDLERS = {
    "metrics": cmd_metrics,
    "certify": cmd_certify,
    "cbs": cmd_cbs,
    "acce": cmd_acce,
    "dece": cmd_dece,
    "oracle": cmd_oracle,
    "report": cmd_report,
    "diagnostics": cmd_diagnostics,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        HANDLERS[args.command](args, config)
    except (InputError, TooLargeError, InfeasibleError) as exc:
        print(f"calicert: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CalicertError as exc:
        print(f"calicert: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"calicert: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"calicert: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
