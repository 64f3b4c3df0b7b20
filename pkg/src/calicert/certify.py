"""Certificates from Gaussian smoothing statistics.

Covers the certified radius of a smoothed prediction, the Standard and CDF
bounds on the smoothed confidence at a radius, and the Hoeffding and DKW
bands that feed them.  ``Phi_sigma(x)`` is the Gaussian CDF with standard
deviation ``sigma``, i.e. ``Phi(x / sigma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InputError

EPS = 1e-12


class _Abstain:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSTAIN"

    def __bool__(self):
        return False


#: Returned by :func:`certified_radius` when the evidence cannot certify.
ABSTAIN = _Abstain()


@dataclass(frozen=True)
class SmoothingEvidence:
    n_samples: int
    sigma: float
    alpha: float
    top_count: int
    runner_count: Optional[int] = None
    mean_top_confidence: Optional[float] = None
    confidence_samples: Optional[tuple] = None

    def __post_init__(self):
        if int(self.n_samples) <= 0:
            raise InputError("n_samples must be positive")
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if not 0 <= self.top_count <= self.n_samples:
            raise InputError("top_count must lie in [0, n_samples]")
        if self.runner_count is not None and (
            self.runner_count < 0 or self.top_count + self.runner_count > self.n_samples
        ):
            raise InputError("top_count + runner_count exceeds n_samples")
        if self.mean_top_confidence is not None and not 0 <= self.mean_top_confidence <= 1:
            raise InputError("mean_top_confidence must lie in [0, 1]")
        if self.confidence_samples is not None:
            s = tuple(float(v) for v in self.confidence_samples)
            if any(not 0 <= v <= 1 for v in s):
                raise InputError("confidence_samples must lie in [0, 1]")
            object.__setattr__(self, "confidence_samples", s)


@dataclass(frozen=True)
class ConfidenceCertificate:
    lower: float
    upper: float
    radius: float
    method: str

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class EcdfPartition:
    """Thresholds ``s_1 <= ... <= s_n`` inside (0, 1) with probability bands.

    ``tail_lower``/``tail_upper`` bound ``P(conf >= s_j)`` and are what the
    CDF certificate integrates.  ``cdf_lower``/``cdf_upper`` bound
    ``P(conf <= s_j)``; they are informational and may be absent for
    partitions built by hand.
    """

    thresholds: tuple
    tail_lower: tuple
    tail_upper: tuple
    cdf_lower: Optional[tuple] = None
    cdf_upper: Optional[tuple] = None

    def __post_init__(self):
        s = np.asarray(self.thresholds, dtype=float)
        lo = np.asarray(self.tail_lower, dtype=float)
        hi = np.asarray(self.tail_upper, dtype=float)
        if s.ndim != 1 or s.size == 0 or lo.shape != s.shape or hi.shape != s.shape:
            raise InputError("partition needs matching, nonempty threshold and band arrays")
        if np.any(np.diff(s) < 0) or s[0] <= 0 or s[-1] >= 1:
            raise InputError("thresholds must be nondecreasing and strictly inside (0, 1)")
        if np.any(lo > hi) or np.any(lo < 0) or np.any(hi > 1):
            raise InputError("probability bands must satisfy 0 <= lower <= upper <= 1")
        if np.any(np.diff(lo) > 1e-15) or np.any(np.diff(hi) > 1e-15):
            raise InputError("exceedance bands must be nonincreasing in the threshold")

    @classmethod
    def from_tail(cls, thresholds, lower, upper) -> "EcdfPartition":
        return cls(tuple(map(float, thresholds)), tuple(map(float, lower)), tuple(map(float, upper)))


def _clip_p(p):
    return np.clip(p, EPS, 1 - EPS)


def gaussian_shift(p, shift: float, sigma: float):
    """``Phi_sigma(Phi_sigma^{-1}(p) + shift)``, with p clamped away from 0 and 1."""
    return ndtr(ndtri(_clip_p(np.asarray(p, dtype=float))) + shift / sigma)


def hoeffding_bound(mean: float, count: int, alpha: float, sided: str = "two") -> tuple[float, float]:
    if not 0 <= mean <= 1:
        raise InputError("mean must lie in [0, 1]")
    if count < 1:
        raise InputError("count must be >= 1")
    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    if sided not in ("one", "two"):
        raise InputError("sided must be 'one' or 'two'")
    c = 2.0 if sided == "two" else 1.0
    half = math.sqrt(math.log(c / alpha) / (2 * count))
    return max(mean - half, 0.0), min(mean + half, 1.0)


def certified_radius(evidence: SmoothingEvidence, exact: bool = False, p_a=None, p_b=None):
    """Certified l2 radius ``(sigma/2)(Phi^-1(pA) - Phi^-1(pB))`` or :data:`ABSTAIN`.

    With ``exact=True`` the vote fractions (or the explicit ``p_a``/``p_b``)
    are used as is; otherwise ``pA`` is replaced by a one-sided Hoeffding
    lower bound at level alpha and ``pB`` by the matching upper bound on the
    runner-up votes, or by ``1 - pA_lower`` when runner-up votes are absent.
    """
    n = evidence.n_samples
    if n <= 0:
        raise InputError("degenerate evidence: n_samples = 0")
    pa = evidence.top_count / n if p_a is None else float(p_a)
    if p_b is not None:
        pb = float(p_b)
    elif evidence.runner_count is not None:
        pb = evidence.runner_count / n
    else:
        pb = None
    if not exact:
        pa = hoeffding_bound(pa, n, evidence.alpha, "one")[0]
        pb = 1.0 - pa if pb is None else hoeffding_bound(pb, n, evidence.alpha, "one")[1]
    elif pb is None:
        pb = 1.0 - pa
    if pa <= pb:
        return ABSTAIN
    r = 0.5 * evidence.sigma * (ndtri(_clip_p(pa)) - ndtri(_clip_p(pb)))
    return float(max(r, 0.0))


def standard_bound(z_lower: float, z_upper: float, R: float, sigma: float) -> ConfidenceCertificate:
    if not 0 <= z_lower <= z_upper <= 1:
        raise InputError("need 0 <= z_lower <= z_upper <= 1")
    if not R >= 0:
        raise InputError("radius must be >= 0")
    if not sigma > 0:
        raise InputError("sigma must be > 0")
    if R == 0:
        return ConfidenceCertificate(float(z_lower), float(z_upper), 0.0, "standard")
    lo = float(gaussian_shift(z_lower, -R, sigma))
    hi = float(gaussian_shift(z_upper, R, sigma))
    return ConfidenceCertificate(min(lo, z_lower), max(hi, z_upper), float(R), "standard")


def cdf_bound(partition: EcdfPartition, R: float, sigma: float, origin_term: bool = True) -> ConfidenceCertificate:
    """CDF certificate from exceedance-probability bands.

    The lower bound is the Riemann lower sum ``sum_j (s_j - s_{j-1}) p_lo_j``
    of ``E[conf] = int_0^1 P(conf >= s) ds`` under shifted bands.  The upper
    sum runs over ``j = 1..n`` and, with ``origin_term`` (default), adds the
    ``[0, s_1]`` slab where ``P(conf >= s) <= 1``; without it the upper sum
    can undershoot the mean.
    """
    if not R >= 0:
        raise InputError("radius must be >= 0")
    if not sigma > 0:
        raise InputError("sigma must be > 0")
    s = np.asarray(partition.thresholds, dtype=float)
    lo_p = np.asarray(partition.tail_lower, dtype=float)
    hi_p = np.asarray(partition.tail_upper, dtype=float)
    left = np.diff(s, prepend=0.0)
    right = np.diff(s, append=1.0)
    if R == 0:
        shifted_lo, shifted_hi = lo_p, hi_p
    else:
        shifted_lo = gaussian_shift(lo_p, -R, sigma)
        shifted_hi = gaussian_shift(hi_p, R, sigma)
    lower = float(np.dot(left, shifted_lo))
    upper = float(np.dot(right, shifted_hi)) + (s[0] if origin_term else 0.0)
    lower = min(max(lower, 0.0), 1.0)
    upper = min(max(upper, lower), 1.0)
    return ConfidenceCertificate(lower, upper, float(R), "cdf")


def default_thresholds(count: int) -> np.ndarray:
    return np.arange(1, count + 1) / (count + 1)


def dkw_band(samples: Sequence[float], alpha: float, thresholds=None) -> EcdfPartition:
    """DKW confidence band on the empirical CDF at level alpha.

    ``cdf_*`` bands the fraction of samples ``<= s_j``; ``tail_*`` bands the
    fraction ``>= s_j``.  Both use radius ``sqrt(ln(2/alpha) / (2 n))``.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InputError("dkw_band needs at least one sample")
    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    s = default_thresholds(10) if thresholds is None else np.asarray(thresholds, dtype=float)
    eps = math.sqrt(math.log(2.0 / alpha) / (2 * x.size))
    xs = np.sort(x)
    cdf = np.searchsorted(xs, s, side="right") / x.size
    tail = 1.0 - np.searchsorted(xs, s, side="left") / x.size
    return EcdfPartition(
        tuple(s.tolist()),
        tuple(np.clip(tail - eps, 0, 1).tolist()),
        tuple(np.clip(tail + eps, 0, 1).tolist()),
        tuple(np.clip(cdf - eps, 0, 1).tolist()),
        tuple(np.clip(cdf + eps, 0, 1).tolist()),
    )


def evidence_bounds(evidence: SmoothingEvidence, R: float, method: str = "standard",
                    thresholds=None, exact: bool = False) -> ConfidenceCertificate:
    """Confidence certificate for one sample at radius R from its evidence."""
    if method == "standard":
        mean = evidence.mean_top_confidence
        if mean is None:
            if evidence.confidence_samples is None:
                raise InputError("standard certificate needs mean_top_confidence or confidence_samples")
            mean = float(np.mean(evidence.confidence_samples))
        if exact:
            lo = hi = mean
        else:
            count = len(evidence.confidence_samples) if evidence.confidence_samples else evidence.n_samples
            lo, hi = hoeffding_bound(mean, count, evidence.alpha, "two")
        return standard_bound(lo, hi, R, evidence.sigma)
    if method == "cdf":
        if not evidence.confidence_samples:
            raise InputError("cdf certificate needs confidence_samples")
        alpha = 1.0 if exact else evidence.alpha
        band = dkw_band(evidence.confidence_samples, alpha, thresholds)
        return cdf_bound(band, R, evidence.sigma)
    raise InputError(f"unknown certificate method {method!r}")


def certificate_width_report(evidences: Sequence[SmoothingEvidence], radii: Sequence[float],
                             sigma: Optional[float] = None, thresholds=None,
                             methods=("standard", "cdf")) -> list[dict]:
    """Mean certificate width ``u - l`` per radius and method.

    ``sigma`` overrides the per-evidence smoothing level when given.
    """
    rows = []
    for R in radii:
        row = {"radius": float(R)}
        for method in methods:
            widths = []
            for ev in evidences:
                if sigma is not None and sigma != ev.sigma:
                    ev = SmoothingEvidence(ev.n_samples, sigma, ev.alpha, ev.top_count, ev.runner_count,
                                           ev.mean_top_confidence, ev.confidence_samples)
                widths.append(evidence_bounds(ev, R, method, thresholds).width)
            row[method] = float(np.mean(widths)) if widths else None
        rows.append(row)
    return rows
