"""Certified Brier score: the worst top-label Brier score over confidence boxes."""

from __future__ import annotations

import numpy as np

from .errors import InputError


def _box_arrays(records):
    records = list(records)
    if not records:
        raise InputError("no records given")
    missing = [r.id for r in records if not r.has_bounds]
    if missing:
        raise InputError(f"records without confidence bounds: {missing[:5]}")
    lo = np.array([r.lower for r in records], dtype=float)
    hi = np.array([r.upper for r in records], dtype=float)
    c = np.array([float(r.correct) for r in records], dtype=float)
    return lo, hi, c


def brier_worst_confidences(records) -> np.ndarray:
    """Box vertex maximising the Brier score: lower bound if correct, else upper."""
    lo, hi, c = _box_arrays(records)
    return np.where(c == 1.0, lo, hi)


def certified_brier(records) -> float:
    lo, hi, c = _box_arrays(records)
    z = np.where(c == 1.0, lo, hi)
    return float(np.mean((c - z) ** 2))


def certified_brier_arrays(lower, upper, correct) -> float:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    c = np.asarray(correct, dtype=float)
    if lo.size == 0:
        raise InputError("no samples given")
    return float(np.mean((c - np.where(c == 1.0, lo, hi)) ** 2))
