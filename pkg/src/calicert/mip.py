"""The worst-case ECE as a sparse mixed-integer program.

Variables live on the flattened ``(sample, bin)`` grid, index ``n * M + m``.
The assignment vector ``a`` says which bin each sample falls into, ``z``
carries one confidence per (sample, bin) slot, and the program maximises
``N^-1 sum_m |sum_n a[n,m] (c[n] - z[n,m])|`` subject to

* unique assignment: every sample sits in exactly one bin,
* valid assignment: no sample sits in a bin its box cannot reach,
* confidence box: ``lower[n,m] <= z[n,m] <= upper[n,m]``,
* ``a`` binary.

The summation operators over samples and over inaccessible slots are never
formed; everything is reshaping ``(N*M,) -> (N, M)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FeasibilityError, InfeasibleError, InputError
from .metrics import BinningScheme


@dataclass(frozen=True, eq=False)
class MipInstance:
    c: np.ndarray  # (N,) correctness
    lower: np.ndarray  # (N*M,) merged bounds, 0 where inaccessible
    upper: np.ndarray
    k: np.ndarray  # (N*M,) 1 where bin is inaccessible
    binning: BinningScheme
    box_lower: np.ndarray  # (N,) per-sample certificate
    box_upper: np.ndarray
    ids: tuple = ()
    clean: Optional[np.ndarray] = None  # (N,) unperturbed confidences

    def __post_init__(self):
        if self.clean is None:
            object.__setattr__(self, "clean", 0.5 * (self.box_lower + self.box_upper))

    @property
    def N(self) -> int:
        return self.c.size

    @property
    def M(self) -> int:
        return self.binning.bin_count

    @property
    def accessible(self) -> np.ndarray:
        """(N, M) boolean mask of reachable bins."""
        return (self.k == 0).reshape(self.N, self.M)

    def e(self, z: np.ndarray) -> np.ndarray:
        """Per-slot confidence gap ``c[n] - z[n,m]`` as an (N, M) array."""
        return self.c[:, None] - np.asarray(z, dtype=float).reshape(self.N, self.M)

    def expand(self, z_per_sample) -> np.ndarray:
        """Replicate per-sample confidences over accessible slots, 0 elsewhere."""
        z = np.broadcast_to(np.asarray(z_per_sample, dtype=float)[:, None], (self.N, self.M))
        return np.where(self.accessible, z, 0.0).ravel()


@dataclass(frozen=True, eq=False)
class FeasiblePoint:
    a: np.ndarray  # (N*M,) binary
    z: np.ndarray  # (N*M,)

    def bins(self, M: int) -> np.ndarray:
        return np.argmax(self.a.reshape(-1, M), axis=1)

    def confidences(self, M: int) -> np.ndarray:
        """Confidence of each sample at its assigned slot."""
        A = self.a.reshape(-1, M)
        return (self.z.reshape(-1, M) * A).sum(axis=1)


@dataclass(frozen=True)
class Residuals:
    unique: float  # ||C^T a - 1||_inf
    valid: float  # ||K^T a||_inf
    binary: float  # d_inf(a, {0,1}^NM)
    box: float  # d_inf(z, [l', u'])
    unique_l1: float = 0.0
    valid_l1: float = 0.0
    binary_l1: float = 0.0
    box_l1: float = 0.0

    def max(self) -> float:
        return max(self.unique, self.valid, self.binary, self.box)

    def within(self, tol: float) -> bool:
        return self.max() <= tol


def build_instance_arrays(correct, box_lower, box_upper, scheme: BinningScheme, ids=None,
                          confidences=None) -> MipInstance:
    c = np.asarray(correct, dtype=float).ravel()
    lz = np.asarray(box_lower, dtype=float).ravel()
    uz = np.asarray(box_upper, dtype=float).ravel()
    N = c.size
    if N == 0:
        raise InputError("no samples given")
    if lz.shape != (N,) or uz.shape != (N,):
        raise InputError("bounds must match correctness length")
    if np.any(lz > uz) or np.any(lz < 0) or np.any(uz > 1):
        raise InputError("need 0 <= lower <= upper <= 1 for every sample")
    if not np.all((c == 0) | (c == 1)):
        raise InputError("correctness must be binary")
    ids = tuple(range(N)) if ids is None else tuple(ids)
    lB, uB = scheme.lower_edges, scheme.upper_edges
    lo = np.maximum(lz[:, None], lB[None, :])
    hi = np.minimum(uz[:, None], uB[None, :])
    inacc = lo >= hi
    # A point box still reaches the single bin holding its value.
    degenerate = lz == uz
    if np.any(degenerate):
        rows = np.flatnonzero(degenerate)
        home = scheme.assign(lz[rows])
        inacc[rows, home] = False
        lo[rows, home] = lz[rows]
        hi[rows, home] = lz[rows]
    lo = np.where(inacc, 0.0, lo)
    hi = np.where(inacc, 0.0, hi)
    stranded = np.flatnonzero(inacc.all(axis=1))
    if stranded.size:
        sid = ids[stranded[0]]
        raise InfeasibleError(f"sample {sid!r} has no accessible bin", sample_id=sid)
    clean = None
    if confidences is not None:
        clean = np.clip(np.asarray(confidences, dtype=float).ravel(), lz, uz)
        if clean.shape != (N,):
            raise InputError("confidences must match correctness length")
    return MipInstance(c, lo.ravel(), hi.ravel(), inacc.astype(np.int8).ravel(), scheme,
                       lz.copy(), uz.copy(), ids, clean)


def build_instance(records, scheme: BinningScheme) -> MipInstance:
    records = list(records)
    if not records:
        raise InputError("no records given")
    missing = [r.id for r in records if not r.has_bounds]
    if missing:
        raise InputError(f"records without confidence bounds: {missing[:5]}")
    return build_instance_arrays(
        [r.correct for r in records], [r.lower for r in records], [r.upper for r in records],
        scheme, ids=[r.id for r in records], confidences=[r.confidence for r in records],
    )


def relaxed_objective(instance: MipInstance, a, z) -> float:
    """``N^-1 ||E(z)^T a||_1`` for arbitrary real ``a`` and ``z``."""
    A = np.asarray(a, dtype=float).reshape(instance.N, instance.M)
    per_bin = (A * instance.e(z)).sum(axis=0)
    return float(np.abs(per_bin).sum() / instance.N)


def check_feasibility(instance: MipInstance, a, z) -> Residuals:
    a = np.asarray(a, dtype=float)
    z = np.asarray(z, dtype=float)
    NM = instance.N * instance.M
    if a.shape != (NM,) or z.shape != (NM,):
        raise InputError(f"expected vectors of length {NM}")
    A = a.reshape(instance.N, instance.M)
    unique = np.abs(A.sum(axis=1) - 1.0)
    valid = np.abs((A * instance.k.reshape(instance.N, instance.M)).sum(axis=1))
    binary = np.minimum(np.abs(a), np.abs(a - 1.0))
    box = np.maximum(instance.lower - z, 0.0) + np.maximum(z - instance.upper, 0.0)
    return Residuals(
        float(unique.max()), float(valid.max()), float(binary.max()), float(box.max()),
        float(unique.sum()), float(valid.sum()), float(binary.sum()), float(box.sum()),
    )


def objective(instance: MipInstance, point: FeasiblePoint) -> float:
    res = check_feasibility(instance, point.a, point.z)
    if res.max() != 0.0:
        raise FeasibilityError(f"point is not feasible: {res}")
    return relaxed_objective(instance, point.a, point.z)


def point_from_bins(instance: MipInstance, bins, z) -> FeasiblePoint:
    """Feasible point assigning sample n to ``bins[n]``; z is clamped into the box."""
    bins = np.asarray(bins, dtype=np.intp)
    A = np.zeros((instance.N, instance.M))
    A[np.arange(instance.N), bins] = 1.0
    z = np.clip(np.asarray(z, dtype=float), instance.lower, instance.upper)
    return FeasiblePoint(A.ravel(), z)


def project_feasible(instance: MipInstance, a_relaxed, z_relaxed) -> FeasiblePoint:
    """Nearest-assignment projection: argmax over accessible bins, lowest index on ties."""
    A = np.asarray(a_relaxed, dtype=float).reshape(instance.N, instance.M)
    scores = np.where(instance.accessible, A, -np.inf)
    return point_from_bins(instance, np.argmax(scores, axis=1), z_relaxed)


def vertex_point(instance: MipInstance, bins) -> FeasiblePoint:
    """Best feasible point for a fixed assignment.

    Each bin term ``|sum_n (c_n - z_n)|`` is linear in the box-constrained z,
    so its maximum sits at the all-lower or the all-upper vertex of the bin.
    """
    bins = np.asarray(bins, dtype=np.intp)
    N, M = instance.N, instance.M
    rows = np.arange(N)
    L = instance.lower.reshape(N, M)
    U = instance.upper.reshape(N, M)
    at_lower = np.bincount(bins, weights=instance.c - L[rows, bins], minlength=M)
    at_upper = np.bincount(bins, weights=instance.c - U[rows, bins], minlength=M)
    use_lower = np.abs(at_lower) >= np.abs(at_upper)
    return point_from_bins(instance, bins, np.where(use_lower[None, :], L, U).ravel())


def natural_point(instance: MipInstance, z_per_sample) -> FeasiblePoint:
    """The point where each sample keeps confidence ``z[n]`` in the bin holding it.

    Falls back to the nearest accessible slot interval when the half-open
    bin is unreachable (a box ending exactly on a bin edge).
    """
    zn = np.clip(np.asarray(z_per_sample, dtype=float), instance.box_lower, instance.box_upper)
    bins = instance.binning.assign(zn)
    L = instance.lower.reshape(instance.N, instance.M)
    U = instance.upper.reshape(instance.N, instance.M)
    acc = instance.accessible
    rows = np.arange(instance.N)
    ok = acc[rows, bins] & (L[rows, bins] <= zn) & (zn <= U[rows, bins])
    for n in np.flatnonzero(~ok):
        dist = np.maximum(L[n] - zn[n], 0.0) + np.maximum(zn[n] - U[n], 0.0)
        dist = np.where(acc[n], dist, np.inf)
        bins[n] = int(np.argmin(dist))
    return point_from_bins(instance, bins, instance.expand(zn))


def enumeration_size(instance: MipInstance) -> int:
    size = 1
    for cnt in instance.accessible.sum(axis=1):
        size *= int(cnt)
    return size
