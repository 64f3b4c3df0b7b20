"""Seeded synthetic data for tests, experiments and acceptance checks."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

from .certify import SmoothingEvidence, standard_bound
from .metrics import BinningScheme, PredictionRecord
from .mip import MipInstance, build_instance_arrays


def random_box_instance(rng: np.random.Generator, N: int, M: int, max_half_width: float = 0.35) -> MipInstance:
    """Random clean confidences with random asymmetric boxes around them."""
    z = rng.random(N)
    c = (rng.random(N) < z).astype(float)
    lo = np.clip(z - max_half_width * rng.random(N), 0.0, 1.0)
    hi = np.clip(z + max_half_width * rng.random(N), 0.0, 1.0)
    return build_instance_arrays(c, lo, hi, BinningScheme.equal_width(M), confidences=z)


def random_instances(count: int, seed: int = 0, n_range=(2, 8), m_range=(2, 4), max_half_width: float = 0.35):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        N = int(rng.integers(n_range[0], n_range[1] + 1))
        M = int(rng.integers(m_range[0], m_range[1] + 1))
        out.append(random_box_instance(rng, N, M, max_half_width))
    return out


def random_records(rng: np.random.Generator, N: int, max_half_width: float = 0.35) -> list[PredictionRecord]:
    z = rng.random(N)
    c = rng.random(N) < z
    lo = np.clip(z - max_half_width * rng.random(N), 0.0, 1.0)
    hi = np.clip(z + max_half_width * rng.random(N), 0.0, 1.0)
    return [PredictionRecord(i, z[i], bool(c[i]), lower=lo[i], upper=hi[i]) for i in range(N)]


def medium_instance(seed: int, N: int = 2000, M: int = 15, sigma: float = 0.25, R: float = 0.25) -> MipInstance:
    """Smoothing-style instance: top-label confidences with Standard-certificate boxes."""
    rng = np.random.default_rng(seed)
    z = np.clip(rng.beta(5.0, 1.5, N), 1e-6, 1 - 1e-6)
    c = (rng.random(N) < z).astype(float)
    lo = ndtr(ndtri(z) - R / sigma)
    hi = ndtr(ndtri(z) + R / sigma)
    return build_instance_arrays(c, lo, hi, BinningScheme.equal_width(M), confidences=z)


def smoothed_dataset(sigma: float, N: int = 200, seed: int = 0, base_skill: float = 2.0) -> list[PredictionRecord]:
    """Certified predictions of a synthetic smoothed classifier at noise level sigma.

    Heavier smoothing lowers the top-class probability and adds
    overconfidence, so clean calibration gets worse; certified radii scale
    with sigma and certificate growth slows through the ``R / sigma`` shift.
    """
    rng = np.random.default_rng(seed)
    p_top = np.clip(ndtr(rng.normal(base_skill / (1.0 + 2.0 * sigma), 0.7, N)), 0.5, 0.98)
    correct = rng.random(N) < p_top
    z = np.clip(p_top + 0.4 * sigma * (1.0 - p_top), 0.0, 0.99)
    radius = sigma * ndtri(p_top)
    return [
        PredictionRecord(f"s{sigma}-{i}", float(z[i]), bool(correct[i]), radius=float(radius[i]), sigma=sigma)
        for i in range(N)
    ]


def records_at_radius(records, R: float) -> list[PredictionRecord]:
    """Attach Standard-certificate bounds at radius R to records carrying sigma."""
    out = []
    for r in records:
        cert = standard_bound(r.confidence, r.confidence, R, r.sigma)
        out.append(r.with_bounds(cert.lower, cert.upper))
    return out


def synthetic_evidence(rng: np.random.Generator, count: int, sigma: float = 0.25, n_samples: int = 2000,
                       alpha: float = 0.001) -> list[SmoothingEvidence]:
    """Smoothing evidence whose per-noise confidences follow a Beta around a mode."""
    out = []
    for _ in range(count):
        a = rng.uniform(2.0, 12.0)
        samples = rng.beta(a, 1.5, n_samples)
        top = int(rng.integers(int(0.6 * n_samples), n_samples + 1))
        out.append(SmoothingEvidence(n_samples, sigma, alpha, top, None, float(samples.mean()),
                                     tuple(samples.tolist())))
    return out
