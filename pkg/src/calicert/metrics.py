"""Binned calibration metrics: ECE, AdaECE, top-label Brier score.

All functions accept either a sequence of :class:`PredictionRecord` or plain
arrays through :func:`as_arrays`.  Bins are half-open ``[b_{m-1}, b_m)``
except the last one, which is closed so that a confidence of exactly 1 is
binned.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import InputError

CLAMP_TOL = 1e-9


def clamp_unit(value: float, name: str = "confidence", ident: Any = None) -> float:
    """Clamp float noise just outside [0, 1]; reject anything further out."""
    v = float(value)
    if not math.isfinite(v):
        raise InputError(f"{name} of record {ident!r} is not finite: {value!r}")
    if v < -CLAMP_TOL or v > 1 + CLAMP_TOL:
        raise InputError(f"{name} of record {ident!r} outside [0, 1]: {value!r}")
    if v < 0.0 or v > 1.0:
        warnings.warn(f"{name} of record {ident!r} clamped from {value!r}", stacklevel=3)
        v = min(max(v, 0.0), 1.0)
    return v


@dataclass(frozen=True)
class PredictionRecord:
    """One certified prediction.

    ``lower``/``upper`` are the confidence certificate at the radius of
    interest; ``radius`` is the certified radius of the prediction itself.
    """

    id: Any
    confidence: float
    correct: bool
    radius: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    sigma: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        z = clamp_unit(self.confidence, "confidence", self.id)
        object.__setattr__(self, "confidence", z)
        object.__setattr__(self, "correct", bool(self.correct))
        if self.radius is not None:
            r = float(self.radius)
            if not r >= 0:
                raise InputError(f"radius of record {self.id!r} must be >= 0, got {self.radius!r}")
            object.__setattr__(self, "radius", r)
        if (self.lower is None) != (self.upper is None):
            raise InputError(f"record {self.id!r} must carry both lower and upper or neither")
        if self.lower is not None:
            lo = clamp_unit(self.lower, "lower", self.id)
            hi = clamp_unit(self.upper, "upper", self.id)
            if not lo - CLAMP_TOL <= z <= hi + CLAMP_TOL:
                raise InputError(
                    f"record {self.id!r} violates lower <= confidence <= upper: {lo}, {z}, {hi}"
                )
            object.__setattr__(self, "lower", min(lo, z))
            object.__setattr__(self, "upper", max(hi, z))
        if self.sigma is not None and not float(self.sigma) > 0:
            raise InputError(f"sigma of record {self.id!r} must be > 0")

    @property
    def has_bounds(self) -> bool:
        return self.lower is not None

    def with_bounds(self, lower: float, upper: float) -> "PredictionRecord":
        return PredictionRecord(
            self.id, self.confidence, self.correct, self.radius, lower, upper, self.sigma, self.extra
        )


@dataclass(frozen=True)
class BinningScheme:
    kind: str
    bin_count: int
    edges: tuple

    def __post_init__(self):
        if self.kind not in ("equal-width", "equal-count"):
            raise InputError(f"unknown binning kind {self.kind!r}")
        if int(self.bin_count) < 1:
            raise InputError("bin_count must be a positive integer")
        e = np.asarray(self.edges, dtype=float)
        if e.shape != (self.bin_count + 1,) or e[0] != 0.0 or e[-1] != 1.0:
            raise InputError("edges must run from 0 to 1 with bin_count + 1 entries")
        diffs = np.diff(e)
        if self.kind == "equal-width" and np.any(diffs <= 0):
            raise InputError("equal-width edges must be strictly increasing")
        if np.any(diffs < 0):
            raise InputError("edges must be nondecreasing")

    @classmethod
    def equal_width(cls, bin_count: int) -> "BinningScheme":
        if bin_count < 1:
            raise InputError("bin_count must be a positive integer")
        return cls("equal-width", int(bin_count), tuple(m / bin_count for m in range(bin_count + 1)))

    @property
    def lower_edges(self) -> np.ndarray:
        return np.asarray(self.edges[:-1], dtype=float)

    @property
    def upper_edges(self) -> np.ndarray:
        return np.asarray(self.edges[1:], dtype=float)

    def assign(self, z) -> np.ndarray:
        """Bin index of each confidence, 0-based, half-open with closed last bin."""
        z = np.asarray(z, dtype=float)
        idx = np.searchsorted(np.asarray(self.edges, dtype=float), z, side="right") - 1
        return np.clip(idx, 0, self.bin_count - 1)


@dataclass(frozen=True)
class BinRow:
    count: int
    mean_confidence: float
    accuracy: float
    gap: float  # mean confidence - accuracy (overconfidence > 0); 0 for empty bins


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    rows: tuple
    binning: BinningScheme
    n: int

    def to_dict(self) -> dict:
        return {
            "ece": self.ece,
            "n": self.n,
            "binning": {"kind": self.binning.kind, "bin_count": self.binning.bin_count,
                        "edges": list(self.binning.edges)},
            "rows": [
                {"bin": m + 1, "count": r.count, "mean_confidence": r.mean_confidence,
                 "accuracy": r.accuracy, "gap": r.gap}
                for m, r in enumerate(self.rows)
            ],
        }


def as_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """(confidences, correctness) from records or from a ``(z, c)`` pair."""
    if isinstance(records, tuple) and len(records) == 2 and not isinstance(records[0], PredictionRecord):
        z, c = records
        z = np.asarray([clamp_unit(v) for v in np.ravel(z)], dtype=float)
        c = np.asarray(c, dtype=float).ravel()
    else:
        records = list(records)
        z = np.fromiter((r.confidence for r in records), dtype=float, count=len(records))
        c = np.fromiter((float(r.correct) for r in records), dtype=float, count=len(records))
    if z.size == 0:
        raise InputError("no records given")
    if z.shape != c.shape:
        raise InputError("confidence and correctness lengths differ")
    return z, c


def _report(z: np.ndarray, c: np.ndarray, idx: np.ndarray, scheme: BinningScheme) -> CalibrationReport:
    n = z.size
    M = scheme.bin_count
    counts = np.bincount(idx, minlength=M)
    zsum = np.bincount(idx, weights=z, minlength=M)
    csum = np.bincount(idx, weights=c, minlength=M)
    rows = []
    total = 0.0
    for m in range(M):
        k = int(counts[m])
        if k == 0:
            rows.append(BinRow(0, 0.0, 0.0, 0.0))
            continue
        rows.append(BinRow(k, zsum[m] / k, csum[m] / k, (zsum[m] - csum[m]) / k))
        total += abs(csum[m] - zsum[m])
    return CalibrationReport(total / n, tuple(rows), scheme, n)


def compute_ece(records, scheme: BinningScheme) -> CalibrationReport:
    z, c = as_arrays(records)
    return _report(z, c, scheme.assign(z), scheme)


def reliability_data(records, scheme: BinningScheme) -> CalibrationReport:
    """Same as :func:`compute_ece`; rows carry the reliability-diagram data."""
    return compute_ece(records, scheme)


def compute_adaece(records, M: int) -> CalibrationReport:
    z, c = as_arrays(records)
    n = z.size
    if M < 1 or M > n:
        raise InputError(f"equal-count binning needs 1 <= M <= N, got M={M}, N={n}")
    order = np.argsort(z, kind="stable")
    idx = np.empty(n, dtype=np.intp)
    edges = [0.0]
    for m, chunk in enumerate(np.array_split(order, M)):
        idx[chunk] = m
        if m > 0:
            edges.append(float(z[chunk[0]]))
    edges.append(1.0)
    # A confidence of 0 opening bin 2 would duplicate the leading sentinel; keep edges monotone.
    edges = tuple(np.maximum.accumulate(edges))
    scheme = BinningScheme("equal-count", M, edges)
    return _report(z, c, idx, scheme)


def compute_tlbs(records) -> float:
    z, c = as_arrays(records)
    return float(np.mean((c - z) ** 2))


def accuracy(records) -> float:
    _, c = as_arrays(records)
    return float(c.mean())
