"""Exact reference solvers for small instances."""

from __future__ import annotations

import numpy as np

from .brier import brier_worst_confidences, certified_brier
from .errors import TooLargeError
from .mip import MipInstance, enumeration_size, objective, vertex_point

ENUMERATION_GUARD = 10**7
GRID_GUARD = 10**6
_CHUNK = 1 << 16


def _assignments(choices, start, stop):
    """Rows ``start..stop`` of the mixed-radix enumeration of per-sample choices."""
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, len(choices)), dtype=np.intp)
    for n in range(len(choices) - 1, -1, -1):
        base = len(choices[n])
        out[:, n] = choices[n][idx % base]
        idx //= base
    return out


def brute_force_cce(instance: MipInstance, guard: int = ENUMERATION_GUARD):
    """Exact maximum of the program by enumerating valid assignments.

    For a fixed assignment every bin term is ``|sum_n (c_n - z_n,m)|`` with
    z free in a box, a linear form whose absolute value peaks at the all-lower
    or all-upper vertex of that bin's box.
    """
    size = enumeration_size(instance)
    if size > guard:
        raise TooLargeError(f"{size} valid assignments exceed the guard of {guard}")
    N, M = instance.N, instance.M
    acc = instance.accessible
    choices = [np.flatnonzero(acc[n]) for n in range(N)]
    L = instance.lower.reshape(N, M)
    U = instance.upper.reshape(N, M)
    gl = instance.c[:, None] - L  # gap at lower vertex (largest)
    gu = instance.c[:, None] - U
    best_val, best_bins = -1.0, None
    for start in range(0, size, _CHUNK):
        B = _assignments(choices, start, min(start + _CHUNK, size))
        K = B.shape[0]
        hi_sum = np.zeros((K, M))
        lo_sum = np.zeros((K, M))
        rows = np.arange(K)
        for n in range(N):
            np.add.at(hi_sum, (rows, B[:, n]), gl[n, B[:, n]])
            np.add.at(lo_sum, (rows, B[:, n]), gu[n, B[:, n]])
        vals = np.maximum(np.abs(hi_sum), np.abs(lo_sum)).sum(axis=1)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_bins = float(vals[i]), B[i].copy()
    # Rebuild the witness and evaluate it through the same formula as everyone else.
    point = vertex_point(instance, best_bins)
    return objective(instance, point), point


def grid_cce(instance: MipInstance, grid_points_per_dim: int, guard: int = GRID_GUARD) -> float:
    """Max hard-binned ECE over a regular grid of confidences in the sample boxes."""
    g = int(grid_points_per_dim)
    N = instance.N
    size = g**N
    if size > guard:
        raise TooLargeError(f"grid of {size} points exceeds the guard of {guard}")
    axes = np.linspace(instance.box_lower, instance.box_upper, g).T  # (N, g)
    choices = [np.arange(g)] * N
    scheme = instance.binning
    best = 0.0
    for start in range(0, size, _CHUNK):
        G = _assignments(choices, start, min(start + _CHUNK, size))
        Z = axes[np.arange(N)[None, :], G]  # (K, N)
        bins = scheme.assign(Z)
        K = Z.shape[0]
        sums = np.zeros((K, scheme.bin_count))
        rows = np.arange(K)
        for n in range(N):
            np.add.at(sums, (rows, bins[:, n]), instance.c[n] - Z[:, n])
        best = max(best, float(np.abs(sums).sum(axis=1).max() / N))
    return best


def verify_brier_bound(records, trials: int = 1000, seed: int = 0, bound=None, witness=None,
                       tol: float = 1e-12) -> bool:
    """Randomised check that no confidence vector in the boxes beats the bound.

    ``bound`` and ``witness`` default to the closed-form certified Brier score
    and its maximiser; passing others lets the harness vet a claimed value.
    """
    records = list(records)
    lo = np.array([r.lower for r in records], dtype=float)
    hi = np.array([r.upper for r in records], dtype=float)
    c = np.array([float(r.correct) for r in records], dtype=float)
    bound = certified_brier(records) if bound is None else float(bound)
    witness = brier_worst_confidences(records) if witness is None else np.asarray(witness, dtype=float)
    rng = np.random.default_rng(seed)
    Z = lo + (hi - lo) * rng.random((int(trials), lo.size))
    sampled = np.mean((c - Z) ** 2, axis=1)
    if sampled.size and sampled.max() > bound + tol:
        return False
    in_box = bool(np.all(lo <= witness) and np.all(witness <= hi))
    attained = abs(float(np.mean((c - witness) ** 2)) - bound) <= tol
    return in_box and attained
