"""Ingestion, the radius sweep and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .admm import AdmmConfig, default_grid, ensemble_solve, multi_start_solve
from .brier import brier_worst_confidences, certified_brier
from .certify import ABSTAIN, SmoothingEvidence, certified_radius, evidence_bounds, standard_bound
from .dece import hard_ece, maximize_dece
from .errors import InputError, TooLargeError
from .metrics import BinningScheme, PredictionRecord, compute_adaece, compute_ece, compute_tlbs
from .mip import build_instance
from .oracle import ENUMERATION_GUARD, brute_force_cce

FORMAT_VERSION = 1

PRECERTIFIED_FIELDS = ("id", "confidence", "correct", "radius", "lower", "upper", "sigma")
EVIDENCE_FIELDS = ("id", "correct", "n_samples", "sigma", "alpha", "top_count", "runner_count",
                   "mean_top_confidence", "confidence_samples")

ROW_KEYS = ("radius", "n_total", "n_certified", "certified_fraction", "certified_accuracy", "accuracy",
            "ece", "adaece", "tlbs", "cbs", "acce_admm", "acce_dece", "ece_brier", "cce_oracle",
            "mean_width", "admm_converged")


@dataclass(frozen=True)
class EvidenceRecord:
    """A prediction whose certificate is derived from raw smoothing evidence."""

    id: Any
    correct: bool
    evidence: SmoothingEvidence
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def confidence(self) -> float:
        ev = self.evidence
        if ev.mean_top_confidence is not None:
            return float(ev.mean_top_confidence)
        if ev.confidence_samples:
            return float(np.mean(ev.confidence_samples))
        raise InputError(f"record {self.id!r} has neither mean_top_confidence nor confidence_samples")


@dataclass(frozen=True)
class RunConfig:
    input: Optional[str] = None
    format: str = "auto"  # jsonl, csv, or auto (by extension)
    mode: str = "precertified"  # or evidence
    binning: str = "equal-width"
    bins: int = 15
    radii: tuple = (0.0,)
    method: str = "standard"  # certificate for evidence records: standard or cdf
    alpha: Optional[float] = None  # overrides the per-record alpha of evidence records
    admm: dict = field(default_factory=dict)  # AdmmConfig overrides
    ensemble: bool = False
    dece: bool = False
    oracle: bool = False
    oracle_guard: int = ENUMERATION_GUARD
    traces: bool = False
    abstain: str = "exclude"  # or incorrect: count uncertified samples as wrong, without slack
    output: Optional[str] = None
    plot_table: Optional[str] = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        radii = tuple(float(r) for r in (self.radii if np.ndim(self.radii) else (self.radii,)))
        if not radii:
            raise InputError("at least one radius is required")
        if any(not (r >= 0 and math.isfinite(r)) for r in radii):
            raise InputError("radii must be finite and nonnegative")
        object.__setattr__(self, "radii", tuple(sorted(radii)))
        if int(self.bins) < 1:
            raise InputError("bins must be >= 1")
        object.__setattr__(self, "bins", int(self.bins))
        if self.format not in ("auto", "jsonl", "csv"):
            raise InputError(f"unknown format {self.format!r}")
        if self.mode not in ("precertified", "evidence"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.binning not in ("equal-width", "equal-count"):
            raise InputError(f"unknown binning {self.binning!r}")
        if self.method not in ("standard", "cdf"):
            raise InputError(f"unknown certificate method {self.method!r}")
        if self.abstain not in ("exclude", "incorrect"):
            raise InputError(f"unknown abstain policy {self.abstain!r}")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if int(self.workers) < 1:
            raise InputError("workers must be >= 1")
        object.__setattr__(self, "admm", dict(self.admm or {}))
        self.admm_config()  # validate overrides early

    def admm_config(self) -> AdmmConfig:
        known = {f.name for f in fields(AdmmConfig)}
        bad = sorted(set(self.admm) - known)
        if bad:
            raise InputError(f"unknown ADMM options: {bad}")
        opts = dict(self.admm)
        if "rho" in opts and isinstance(opts["rho"], list):
            opts["rho"] = tuple(opts["rho"])
        opts.setdefault("seed", self.seed)
        opts.setdefault("trace", self.traces)
        return AdmmConfig(**opts)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["radii"] = list(self.radii)
        return d

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        bad = sorted(set(data) - known)
        if bad:
            raise InputError(f"unknown configuration keys: {bad}")
        data = dict(data)
        if "radii" in data:
            data["radii"] = parse_radii(data["radii"])
        return cls(**data)


def parse_radii(value) -> tuple:
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
        try:
            return tuple(float(p) for p in parts)
        except ValueError as exc:
            raise InputError(f"cannot parse radii {value!r}") from exc
    if np.ndim(value) == 0:
        return (float(value),)
    return tuple(float(v) for v in value)


# ---------------------------------------------------------------- ingestion


def _as_bool(value, where: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)) and value in (0, 1):
        return bool(value)
    if isinstance(value, str) and value.strip().lower() in ("true", "1", "yes"):
        return True
    if isinstance(value, str) and value.strip().lower() in ("false", "0", "no"):
        return False
    raise InputError(f"{where}: cannot read {value!r} as a boolean")


def _opt_float(obj: dict, key: str, where: str) -> Optional[float]:
    v = obj.get(key)
    if v is None or v == "":
        return None
    try:
        return float(v)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: field {key!r} is not a number: {v!r}") from exc


def _opt_int(obj: dict, key: str, where: str) -> Optional[int]:
    v = _opt_float(obj, key, where)
    if v is None:
        return None
    if v != int(v):
        raise InputError(f"{where}: field {key!r} must be an integer, got {v!r}")
    return int(v)


def _require(obj: dict, keys: Sequence[str], where: str):
    missing = [k for k in keys if obj.get(k) in (None, "")]
    if missing:
        raise InputError(f"{where}: missing required fields {missing}")


def _precertified(obj: dict, where: str) -> PredictionRecord:
    _require(obj, ("confidence", "correct"), where)
    extra = {k: v for k, v in obj.items() if k not in PRECERTIFIED_FIELDS}
    try:
        return PredictionRecord(
            obj.get("id", where),
            _opt_float(obj, "confidence", where),
            _as_bool(obj["correct"], where),
            radius=_opt_float(obj, "radius", where),
            lower=_opt_float(obj, "lower", where),
            upper=_opt_float(obj, "upper", where),
            sigma=_opt_float(obj, "sigma", where),
            extra=extra,
        )
    except InputError as exc:
        raise InputError(f"{where}: {exc}") from exc


def _samples(value, where: str):
    if value is None or value == "":
        return None
    if isinstance(value, str):
        value = value.replace(";", " ").split()
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: confidence_samples must be numbers") from exc


def _evidence(obj: dict, where: str) -> EvidenceRecord:
    _require(obj, ("correct", "n_samples", "sigma", "alpha", "top_count"), where)
    extra = {k: v for k, v in obj.items() if k not in EVIDENCE_FIELDS}
    try:
        ev = SmoothingEvidence(
            _opt_int(obj, "n_samples", where),
            _opt_float(obj, "sigma", where),
            _opt_float(obj, "alpha", where),
            _opt_int(obj, "top_count", where),
            _opt_int(obj, "runner_count", where),
            _opt_float(obj, "mean_top_confidence", where),
            _samples(obj.get("confidence_samples"), where),
        )
    except InputError as exc:
        raise InputError(f"{where} (record {obj.get('id')!r}): {exc}") from exc
    rec = EvidenceRecord(obj.get("id", where), _as_bool(obj["correct"], where), ev, extra)
    rec.confidence  # must be derivable
    return rec


def _rows_jsonl(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise InputError(f"line {lineno}: expected an object")
        yield lineno, obj


def _rows_csv(text: str):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return
    for row in reader:
        if None in row:
            raise InputError(f"line {reader.line_num}: more values than header fields")
        yield reader.line_num, row


def ingest(path, format: str = "auto", mode: str = "precertified") -> list:
    """Read prediction records (precertified) or evidence records from a file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {p}: {exc.strerror or exc}") from exc
    if format == "auto":
        format = "csv" if p.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise InputError(f"unknown format {format!r}")
    if mode not in ("precertified", "evidence"):
        raise InputError(f"unknown mode {mode!r}")
    rows = _rows_jsonl(text) if format == "jsonl" else _rows_csv(text)
    make = _precertified if mode == "precertified" else _evidence
    records = [make(obj, f"line {lineno}") for lineno, obj in rows]
    if not records:
        raise InputError(f"{p} contains no records")
    ids = [r.id for r in records]
    if len(set(map(str, ids))) != len(ids):
        raise InputError(f"{p}: duplicate record ids")
    return records


# ---------------------------------------------------------------- the sweep


@dataclass
class CertifiedReport:
    config: dict
    rows: list
    reliability: dict = field(default_factory=dict)
    traces: Optional[dict] = None
    version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {"version": self.version, "config": self.config, "rows": self.rows,
                "reliability": self.reliability, "traces": self.traces}

    @classmethod
    def from_dict(cls, data: dict) -> "CertifiedReport":
        if data.get("version") != FORMAT_VERSION:
            raise InputError(f"unsupported report version {data.get('version')!r}")
        return cls(data["config"], data["rows"], data.get("reliability", {}), data.get("traces"))

    def row(self, radius: float) -> dict:
        for r in self.rows:
            if r["radius"] == radius:
                return r
        raise KeyError(radius)


def _certified_at(records, R: float, config: RunConfig) -> tuple[list, int]:
    """Records certified at R with bounds attached, plus the number abstaining."""
    out, dropped = [], 0
    for rec in records:
        if isinstance(rec, EvidenceRecord):
            ev = rec.evidence
            if config.alpha is not None:
                ev = replace(ev, alpha=config.alpha)
            radius = certified_radius(ev)
            z = rec.confidence
            if radius is ABSTAIN or radius < R:
                dropped += 1
                if config.abstain == "incorrect":
                    out.append(PredictionRecord(rec.id, z, False, lower=z, upper=z, sigma=ev.sigma))
                continue
            cert = evidence_bounds(ev, R, config.method)
            lo, hi = min(cert.lower, z), max(cert.upper, z)
            out.append(PredictionRecord(rec.id, z, rec.correct, radius, lo, hi, ev.sigma, rec.extra))
            continue
        if rec.radius is not None and rec.radius < R:
            dropped += 1
            if config.abstain == "incorrect":
                z = rec.confidence
                out.append(PredictionRecord(rec.id, z, False, lower=z, upper=z))
            continue
        if rec.has_bounds:
            out.append(rec)
        elif rec.sigma is not None:
            cert = standard_bound(rec.confidence, rec.confidence, R, rec.sigma)
            out.append(rec.with_bounds(cert.lower, cert.upper))
        elif R == 0:
            out.append(rec.with_bounds(rec.confidence, rec.confidence))
        else:
            raise InputError(f"record {rec.id!r} has neither bounds nor sigma for radius {R}")
    return out, dropped


def _scheme(config: RunConfig, records) -> BinningScheme:
    if config.binning == "equal-width":
        return BinningScheme.equal_width(config.bins)
    return compute_adaece(records, min(config.bins, len(records))).binning


def _empty_row(R: float, n_total: int) -> dict:
    row = dict.fromkeys(ROW_KEYS)
    row.update(radius=R, n_total=n_total, n_certified=0, certified_fraction=0.0, certified_accuracy=0.0)
    return row


def evaluate_radius(records, R: float, config: RunConfig) -> tuple[dict, Optional[list], Optional[list]]:
    """One report row, its reliability rows and (optionally) the ADMM trace."""
    n_total = len(records)
    subset, _ = _certified_at(records, R, config)
    if not subset:
        return _empty_row(R, n_total), None, None
    scheme = _scheme(config, subset)
    ece = compute_ece(subset, scheme)
    correct = np.array([r.correct for r in subset], dtype=float)
    lower = np.array([r.lower for r in subset])
    upper = np.array([r.upper for r in subset])
    instance = build_instance(subset, scheme)
    base = config.admm_config()
    if config.ensemble:
        solved = ensemble_solve(instance, [replace(base, z_init="both")] + default_grid(base), config.workers)
    else:
        solved = multi_start_solve(instance, base)
    brier_z = brier_worst_confidences(subset)
    row = _empty_row(R, n_total)
    row.update(
        n_certified=len(subset),
        certified_fraction=len(subset) / n_total,
        certified_accuracy=float(correct.sum()) / n_total,
        accuracy=float(correct.mean()),
        ece=ece.ece,
        adaece=compute_adaece(subset, min(config.bins, len(subset))).ece,
        tlbs=compute_tlbs(subset),
        cbs=certified_brier(subset),
        acce_admm=solved.best_acce,
        ece_brier=hard_ece(brier_z, correct, scheme),
        mean_width=float(np.mean(upper - lower)),
        admm_converged=bool(solved.converged),
    )
    if config.dece and scheme.kind == "equal-width":
        row["acce_dece"] = maximize_dece(instance).ece
    if config.oracle:
        try:
            row["cce_oracle"] = brute_force_cce(instance, config.oracle_guard)[0]
        except TooLargeError:
            row["cce_oracle"] = None
    trace = solved.trace_rows() if config.traces else None
    return row, ece.to_dict()["rows"], trace


def run_pipeline(config: RunConfig, records=None) -> CertifiedReport:
    if records is None:
        if config.input is None:
            raise InputError("no input given")
        records = ingest(config.input, config.format, config.mode)
    records = list(records)
    if config.workers > 1 and len(config.radii) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda R: evaluate_radius(records, R, config), config.radii))
    else:
        results = [evaluate_radius(records, R, config) for R in config.radii]
    rows = [r for r, _, _ in results]
    reliability = {_key(R): rel for R, (_, rel, _) in zip(config.radii, results)}
    traces = {_key(R): tr for R, (_, _, tr) in zip(config.radii, results)} if config.traces else None
    return CertifiedReport(_plain(config.to_dict()), _plain(rows), _plain(reliability), _plain(traces))


def _plain(obj):
    """Numpy scalars to Python scalars, recursively; keeps JSON and CSV output stable."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _key(R: float) -> str:
    return repr(float(R))


# ---------------------------------------------------------------- output

PLOT_SERIES = (
    ("certified_accuracy", "smoothing", "certified_accuracy"),
    ("cbs", "closed-form", "cbs"),
    ("acce", "admm", "acce_admm"),
    ("acce", "brier", "ece_brier"),
    ("acce", "dece", "acce_dece"),
    ("acce", "oracle", "cce_oracle"),
)


def plot_series(config: dict) -> list[tuple]:
    out = []
    for metric, method, key in PLOT_SERIES:
        if method == "dece" and not config.get("dece"):
            continue
        if method == "oracle" and not config.get("oracle"):
            continue
        out.append((metric, method, key))
    return out


def plot_rows(report: CertifiedReport) -> list[tuple]:
    """Flat (radius, metric, value, method) rows, one per radius and enabled series."""
    series = plot_series(report.config)
    return [(row["radius"], metric, row[key], method) for row in report.rows for metric, method, key in series]


def _atomic_write(path: Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _fmt(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def report_json(report: CertifiedReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_plot_table(report: CertifiedReport, path):
    rows = [(_fmt(R), metric, _fmt(value), method) for R, metric, value, method in plot_rows(report)]
    _atomic_write(Path(path), _csv_text(("radius", "metric", "value", "method"), rows))


def write_reliability_table(report: CertifiedReport, path):
    rows = [
        (key, r["bin"], r["count"], _fmt(r["mean_confidence"]), _fmt(r["accuracy"]), _fmt(r["gap"]))
        for key, bins in report.reliability.items()
        for r in bins or ()
    ]
    header = ("radius", "bin", "count", "mean_confidence", "accuracy", "gap")
    _atomic_write(Path(path), _csv_text(header, rows))


def emit_report(report: CertifiedReport, path, plot_path=None, reliability_path=None):
    """Write the JSON report; optionally the plot table and the reliability table as CSV."""
    _atomic_write(Path(path), report_json(report))
    if plot_path is not None:
        write_plot_table(report, plot_path)
    if reliability_path is not None:
        write_reliability_table(report, reliability_path)


def load_report(path) -> CertifiedReport:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return CertifiedReport.from_dict(data)
