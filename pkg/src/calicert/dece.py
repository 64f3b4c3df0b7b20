"""Soft-binned differentiable ECE and a projected-gradient-ascent CCE baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import InputError
from .metrics import BinningScheme
from .mip import MipInstance


@dataclass(frozen=True)
class SoftBinning:
    """Tempered-softmax relaxation of equal-width binning.

    Bin logits are ``(w * z + b) / tau`` with ``w = [1..M]`` and
    ``b_i = -sum_{m<i} beta_m`` over the interior cut-offs ``beta``; the
    logit of bin i+1 exceeds that of bin i exactly when ``z > beta_i``.
    """

    M: int
    tau: float

    def __post_init__(self):
        if self.M < 1:
            raise InputError("M must be positive")
        if not self.tau > 0:
            raise InputError("tau must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.arange(1, self.M + 1, dtype=float)

    @property
    def offsets(self) -> np.ndarray:
        cuts = np.arange(1, self.M) / self.M
        return -np.concatenate(([0.0], np.cumsum(cuts)))

    def with_tau(self, tau: float) -> "SoftBinning":
        return SoftBinning(self.M, tau)

    def assign(self, z) -> np.ndarray:
        """(N, M) soft assignment matrix."""
        z = np.asarray(z, dtype=float)
        logits = (np.outer(z, self.weights) + self.offsets) / self.tau
        return softmax(logits, axis=1)


def _check(z, c):
    z = np.asarray(z, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    if z.size == 0 or z.shape != c.shape:
        raise InputError("z and c must be nonempty and of equal length")
    if np.any(z < 0) or np.any(z > 1):
        raise InputError("confidences must lie in [0, 1]")
    return z, c


def dece_value(z, c, binning: SoftBinning) -> float:
    z, c = _check(z, c)
    S = binning.assign(z)
    return float(np.abs(S.T @ (c - z)).sum() / z.size)


def dece_gradient(z, c, binning: SoftBinning) -> np.ndarray:
    z, c = _check(z, c)
    S = binning.assign(z)
    e = c - z
    sgn = np.sign(S.T @ e)  # (M,)
    w = binning.weights
    # ds_nm/dz_n = s_nm (w_m - sum_k s_nk w_k) / tau
    dS = S * (w[None, :] - (S @ w)[:, None]) / binning.tau
    return ((dS * e[:, None] - S) @ sgn) / z.size


def hard_ece(z, c, scheme: BinningScheme) -> float:
    idx = scheme.assign(z)
    sums = np.bincount(idx, weights=np.asarray(c) - np.asarray(z), minlength=scheme.bin_count)
    return float(np.abs(sums).sum() / len(z))


@dataclass(frozen=True)
class DeceSchedule:
    tau_start: float = 1e-2
    tau_end: float = 1e-6
    stages: int = 40
    steps_per_stage: int = 50
    step_size: float = 0.01
    min_step: float = 1e-6
    starts: tuple = ("clean", "brier")


@dataclass(frozen=True)
class DeceResult:
    ece: float
    z: np.ndarray
    start: str


def _ascend(z0, lo, hi, c, M, schedule: DeceSchedule):
    scheme = BinningScheme.equal_width(M)
    z = np.clip(np.asarray(z0, dtype=float), lo, hi)
    best_ece, best_z = hard_ece(z, c, scheme), z.copy()
    N = z.size
    if np.all(lo == hi):
        return best_ece, best_z
    for tau in np.geomspace(schedule.tau_start, schedule.tau_end, schedule.stages):
        soft = SoftBinning(M, float(tau))
        lr = schedule.step_size
        current = dece_value(z, c, soft)
        for _ in range(schedule.steps_per_stage):
            g = np.clip(N * dece_gradient(z, c, soft), -1.0, 1.0)
            cand = np.clip(z + lr * g, lo, hi)
            val = dece_value(cand, c, soft)
            if val <= current:
                lr *= 0.5
                if lr < schedule.min_step:
                    break
                if val < current:
                    continue
            z, current = cand, val
            e = hard_ece(z, c, scheme)
            if e > best_ece:
                best_ece, best_z = e, z.copy()
    final = hard_ece(z, c, scheme)
    if final >= best_ece:
        return final, z
    return best_ece, best_z


def maximize_dece(instance: MipInstance, schedule: DeceSchedule = DeceSchedule()) -> DeceResult:
    """Projected gradient ascent of the dECE over the per-sample confidence boxes.

    Runs once per starting point and returns the largest hard-binned ECE
    reached, with the confidences attaining it.
    """
    if instance.binning.kind != "equal-width":
        raise InputError("soft binning is defined for equal-width bins only")
    lo, hi, c = instance.box_lower, instance.box_upper, instance.c
    starts = {
        "clean": instance.clean,
        "brier": np.where(c == 1.0, lo, hi),
    }
    best = None
    for name in schedule.starts:
        if name not in starts:
            raise InputError(f"unknown start {name!r}")
        ece, z = _ascend(starts[name], lo, hi, c, instance.M, schedule)
        if best is None or ece > best.ece:
            best = DeceResult(ece, z, name)
    return best
