"""ADMM for the worst-case ECE program.

The binary constraint on ``a`` is split into a box copy ``q1`` (unit
hypercube) and a sphere copy ``q2``, the confidence box is moved onto ``g``
with ``z = g``.  The sphere is either the single l2 sphere through all
hypercube vertices or, by default, one sphere per sample block; box and
sphere intersect in the binary vectors either way, but the block version
pulls each sample towards a vertex much harder when N*M is large.

Each step updates ``a`` (by default with the quadratic penalty part solved
exactly, see ``penalty_solve``), takes a gradient step on ``z``, solves for
``g``, ``q1``, ``q2`` in closed form, ascends the five dual blocks and grows
the penalty weights.  After every step a copy of ``(a, z)`` is projected onto
the feasible set and the best projected ECE is kept.

Near an optimum where some bin sum sits at zero the subgradient sign of
``|E^T a|`` flips every step and the iterates cycle; ``sign_hysteresis``
freezes a bin's sign until its sum clearly crosses over.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .mip import (
    FeasiblePoint,
    MipInstance,
    Residuals,
    check_feasibility,
    natural_point,
    project_feasible,
    relaxed_objective,
    vertex_point,
)

A_INITS = ("uniform", "natural", "ones", "zeros")
Z_INITS = ("clean", "brier", "both")
SPHERES = ("global", "per_sample")


@dataclass(frozen=True)
class AdmmConfig:
    alpha_a: float = 0.05
    alpha_z: float = 0.01
    rho: tuple = (0.01, 0.01, 0.01, 0.01, 0.01)
    rho_growth: float = 1.01
    rho_cap: float = 1e4
    max_steps: int = 3000
    a_init: str = "uniform"
    z_init: str = "clean"
    a_grad_clip: float = 5.0
    a_value_clip: Optional[float] = None  # clip ||a - 1/2||_inf to factor * ||q2 - 1/2||_inf
    inner_steps: int = 1
    step_decay: float = 1.0  # per-step factor on both step sizes once every rho is capped
    sign_hysteresis: float = 0.2  # a bin's objective sign flips only once |E^T a| exceeds this
    hysteresis_start: int = 500  # exact signs before this step
    a_update: str = "newton"  # "newton" preconditions by the exact penalty Hessian; or "gradient"
    newton_start: int = 500  # gradient steps on a before this step
    newton_damping: float = 1.0
    sphere: str = "per_sample"  # "global" or "per_sample" spheres for the binary split
    polish: bool = True  # evaluate projected assignments at their best box vertex
    safeguard: bool = True  # cap step sizes at 1 / (curvature bound of the penalty terms)
    tol: float = 1e-3
    check_every: int = 10
    stop_on_convergence: bool = True
    trace: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.alpha_a <= 0 or self.alpha_z <= 0:
            raise InputError("step sizes must be positive")
        rho = tuple(float(r) for r in (self.rho if np.ndim(self.rho) else (self.rho,) * 5))
        if len(rho) != 5 or min(rho) <= 0:
            raise InputError("rho needs five positive values")
        object.__setattr__(self, "rho", rho)
        if self.rho_growth < 1:
            raise InputError("rho_growth must be >= 1")
        if self.rho_cap <= 0 or self.max_steps < 0 or self.inner_steps < 1 or self.check_every < 1:
            raise InputError("rho_cap, max_steps, inner_steps and check_every must be positive")
        if self.a_init not in A_INITS:
            raise InputError(f"a_init must be one of {A_INITS}")
        if self.z_init not in Z_INITS:
            raise InputError(f"z_init must be one of {Z_INITS}")
        if not 0 < self.step_decay <= 1:
            raise InputError("step_decay must lie in (0, 1]")
        if self.a_update not in ("gradient", "newton"):
            raise InputError("a_update must be 'gradient' or 'newton'")
        if self.sphere not in SPHERES:
            raise InputError(f"sphere must be one of {SPHERES}")
        if self.a_grad_clip <= 0:
            raise InputError("a_grad_clip must be positive")


@dataclass
class AdmmState:
    a: np.ndarray
    z: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    g: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray
    lam4: np.ndarray
    lam5: np.ndarray
    rho: np.ndarray
    step: int = 0
    lr_scale: float = 1.0
    signs: Optional[np.ndarray] = None

    def copy(self) -> "AdmmState":
        return AdmmState(*(np.array(getattr(self, f)) for f in _ARRAY_FIELDS), step=self.step,
                         lr_scale=self.lr_scale,
                         signs=None if self.signs is None else self.signs.copy())


_ARRAY_FIELDS = ("a", "z", "q1", "q2", "g", "lam1", "lam2", "lam3", "lam4", "lam5", "rho")


@dataclass
class SolveReport:
    best_acce: float
    best_point: FeasiblePoint
    step_of_best: int
    converged: bool
    steps_run: int
    z_init: str
    seed: int
    traces: dict = field(default_factory=dict)
    final_residuals: Optional[Residuals] = None

    def trace_rows(self) -> list[dict]:
        keys = list(self.traces)
        return [dict(zip(keys, vals)) for vals in zip(*(self.traces[k] for k in keys))]


def sphere_radius(instance: MipInstance) -> float:
    return math.sqrt(instance.N * instance.M) / 2.0


def brier_start(instance: MipInstance) -> np.ndarray:
    return np.where(instance.c == 1.0, instance.box_lower, instance.box_upper)


def start_confidences(instance: MipInstance, which: str) -> np.ndarray:
    if which == "clean":
        return instance.clean
    if which == "brier":
        return brier_start(instance)
    raise InputError(f"unknown z initialisation {which!r}")


def _project_sphere(v: np.ndarray, radius: float) -> np.ndarray:
    d = v - 0.5
    norm = np.linalg.norm(d)
    if norm == 0.0:
        d = d.copy()
        d[0] += 1e-12
        norm = np.linalg.norm(d)
    return 0.5 + radius * d / norm


def _project_block_spheres(v: np.ndarray, M: int) -> np.ndarray:
    """Row-wise projection onto the spheres ``||a_n - 1/2|| = sqrt(M)/2``."""
    d = (v - 0.5).reshape(-1, M).copy()
    norm = np.linalg.norm(d, axis=1)
    flat = norm == 0.0
    if np.any(flat):
        d[flat, 0] += 1e-12
        norm[flat] = 1e-12
    return (0.5 + (0.5 * math.sqrt(M)) * d / norm[:, None]).ravel()


def project_sphere(instance: MipInstance, v: np.ndarray, mode: str = "global") -> np.ndarray:
    if mode == "global":
        return _project_sphere(v, sphere_radius(instance))
    return _project_block_spheres(v, instance.M)


def init_state(instance: MipInstance, config: AdmmConfig, z_start=None) -> AdmmState:
    N, M = instance.N, instance.M
    NM = N * M
    if z_start is None:
        z_start = start_confidences(instance, "clean" if config.z_init == "both" else config.z_init)
    z = instance.expand(z_start)
    if config.a_init == "uniform":
        a = np.full(NM, 1.0 / M)
    elif config.a_init == "ones":
        a = np.ones(NM)
    elif config.a_init == "zeros":
        a = np.zeros(NM)
    else:
        a = natural_point(instance, z_start).a.copy()
    rho = np.array(config.rho, dtype=float)
    return AdmmState(
        a=a,
        z=z,
        q1=np.clip(a, 0.0, 1.0),
        q2=project_sphere(instance, a, config.sphere),
        g=np.clip(z, instance.lower, instance.upper),
        lam1=np.zeros(NM),
        lam2=np.zeros(NM),
        lam3=np.zeros(N),
        lam4=np.zeros(N),
        lam5=np.zeros(NM),
        rho=rho,
    )


def _check_dims(instance: MipInstance, state: AdmmState):
    NM, N = instance.N * instance.M, instance.N
    for name in ("a", "z", "q1", "q2", "g", "lam1", "lam2", "lam5"):
        if getattr(state, name).shape != (NM,):
            raise InputError(f"state.{name} must have length {NM}")
    for name in ("lam3", "lam4"):
        if getattr(state, name).shape != (N,):
            raise InputError(f"state.{name} must have length {N}")
    if state.rho.shape != (5,):
        raise InputError("state.rho must have five entries")


def lagrangian_terms(instance: MipInstance, state: AdmmState) -> dict:
    """Components of the augmented Lagrangian, indicator terms left out."""
    _check_dims(instance, state)
    N, M = instance.N, instance.M
    A = state.a.reshape(N, M)
    kmask = instance.k.reshape(N, M)
    r1, r2, r3, r4, r5 = state.rho
    per_bin = (A * instance.e(state.z)).sum(axis=0)
    d1 = state.a - state.q1
    d2 = state.a - state.q2
    d3 = A.sum(axis=1) - 1.0
    d4 = (A * kmask).sum(axis=1)
    d5 = state.z - state.g
    return {
        "objective": -float(np.abs(per_bin).sum()),
        "box": float(state.lam1 @ d1 + 0.5 * r1 * d1 @ d1),
        "sphere": float(state.lam2 @ d2 + 0.5 * r2 * d2 @ d2),
        "unique": float(state.lam3 @ d3 + 0.5 * r3 * d3 @ d3),
        "valid": float(state.lam4 @ d4 + 0.5 * r4 * d4 @ d4),
        "confidence": float(state.lam5 @ d5 + 0.5 * r5 * d5 @ d5),
    }


def lagrangian(instance: MipInstance, state: AdmmState, config: Optional[AdmmConfig] = None) -> float:
    return float(sum(lagrangian_terms(instance, state).values()))


def bin_sums(instance: MipInstance, a, z) -> np.ndarray:
    """Per-bin signed gap sums ``E(z)^T a``."""
    return (np.asarray(a).reshape(instance.N, instance.M) * instance.e(z)).sum(axis=0)


def gradients(instance: MipInstance, state: AdmmState, signs=None) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the Lagrangian w.r.t. ``a`` and ``z``; d|x|/dx at 0 is taken as 0.

    ``signs`` overrides the per-bin sign of ``E(z)^T a`` (the solver's
    hysteresis); by default the exact sign is used.
    """
    N, M = instance.N, instance.M
    A = state.a.reshape(N, M)
    E = instance.e(state.z)
    kmask = instance.k.reshape(N, M)
    r1, r2, r3, r4, r5 = state.rho
    sgn = np.sign((A * E).sum(axis=0)) if signs is None else signs  # (M,)
    d3 = state.lam3 + r3 * (A.sum(axis=1) - 1.0)  # (N,)
    d4 = state.lam4 + r4 * (A * kmask).sum(axis=1)
    grad_a = (
        -(sgn[None, :] * E)
        + d3[:, None]
        + kmask * d4[:, None]
    ).ravel()
    grad_a += state.lam1 + r1 * (state.a - state.q1) + state.lam2 + r2 * (state.a - state.q2)
    grad_z = (sgn[None, :] * A).ravel() + state.lam5 + r5 * (state.z - state.g)
    return grad_a, grad_z


def penalty_solve(instance: MipInstance, rho, g: np.ndarray) -> np.ndarray:
    """Solve ``H x = g`` for the Hessian of the quadratic penalties in ``a``.

    Per sample the block is ``(r1 + r2) I + r3 11^T + r4 k k^T``; two rank-one
    updates, inverted with a 2x2 Woodbury solve.
    """
    N, M = instance.N, instance.M
    r1, r2, r3, r4, _ = rho
    d = r1 + r2
    G = g.reshape(N, M)
    K = instance.k.reshape(N, M).astype(float)
    nk = K.sum(axis=1)
    u1 = G.sum(axis=1) / d
    u2 = (G * K).sum(axis=1) / d
    # (D^-1 + U^T U / d) with U = [1, k]
    p11 = 1.0 / r3 + M / d
    p12 = nk / d
    p22 = 1.0 / r4 + nk / d
    det = p11 * p22 - p12 * p12
    w1 = (p22 * u1 - p12 * u2) / det
    w2 = (p11 * u2 - p12 * u1) / det
    return ((G - w1[:, None] - K * w2[:, None]) / d).ravel()


def step(instance: MipInstance, state: AdmmState, config: AdmmConfig) -> AdmmState:
    """One ADMM iteration; updates ``state`` in place and returns it."""
    N, M = instance.N, instance.M
    r1, r2, r3, r4, r5 = state.rho

    step_a, step_z = config.alpha_a, config.alpha_z
    if config.safeguard:
        step_a = min(step_a, 1.0 / (r1 + r2 + M * (r3 + r4)))
        step_z = min(step_z, 1.0 / r5)
    step_a *= state.lr_scale
    step_z *= state.lr_scale

    def signs():
        if config.sign_hysteresis <= 0 or state.step < config.hysteresis_start:
            return None
        S = bin_sums(instance, state.a, state.z)
        new = np.sign(S)
        if state.signs is not None:
            keep = (np.abs(S) <= config.sign_hysteresis) & (state.signs != 0)
            new = np.where(keep, state.signs, new)
        state.signs = new
        return new

    for _ in range(config.inner_steps):
        grad_a, _ = gradients(instance, state, signs())
        gmax = np.max(np.abs(grad_a)) if grad_a.size else 0.0
        if gmax > config.a_grad_clip:
            grad_a *= config.a_grad_clip / gmax
        if config.a_update == "newton" and state.step >= config.newton_start:
            state.a -= config.newton_damping * state.lr_scale * penalty_solve(instance, state.rho, grad_a)
        else:
            state.a -= step_a * grad_a
        if config.a_value_clip is not None:
            half = config.a_value_clip * np.max(np.abs(state.q2 - 0.5))
            np.clip(state.a, 0.5 - half, 0.5 + half, out=state.a)
    for _ in range(config.inner_steps):
        _, grad_z = gradients(instance, state, signs())
        state.z -= step_z * grad_z

    state.g = np.clip(state.lam5 / r5 + state.z, instance.lower, instance.upper)
    state.q1 = np.clip(state.lam1 / r1 + state.a, 0.0, 1.0)
    state.q2 = project_sphere(instance, state.lam2 / r2 + state.a, config.sphere)

    A = state.a.reshape(N, M)
    state.lam1 += r1 * (state.a - state.q1)
    state.lam2 += r2 * (state.a - state.q2)
    state.lam3 += r3 * (A.sum(axis=1) - 1.0)
    state.lam4 += r4 * (A * instance.k.reshape(N, M)).sum(axis=1)
    state.lam5 += r5 * (state.z - state.g)
    if np.all(state.rho >= config.rho_cap):
        state.lr_scale *= config.step_decay
    state.rho = np.minimum(state.rho * config.rho_growth, config.rho_cap)
    state.step += 1
    return state


_TRACE_KEYS = ("step", "lagrangian", "relaxed_ece", "projected_ece",
               "unique", "valid", "binary", "box")


def solve(instance: MipInstance, config: AdmmConfig = AdmmConfig(), z_start=None,
          state: Optional[AdmmState] = None) -> SolveReport:
    """Run ADMM and return the best projected (exactly feasible) ECE seen.

    Step 0 evaluates both the projection of the initial iterate and the point
    that keeps every sample at its starting confidence in its own bin, so the
    result never falls below the ECE of the starting confidences.
    """
    z_name = config.z_init if z_start is None else "custom"
    if z_start is None:
        z_start = start_confidences(instance, "clean" if config.z_init == "both" else config.z_init)
        if config.z_init == "both":
            z_name = "clean"
    if state is None:
        state = init_state(instance, config, z_start)
    else:
        _check_dims(instance, state)
        state = state.copy()
    traces = {k: [] for k in _TRACE_KEYS} if config.trace else {}

    best_point = natural_point(instance, z_start)
    best = relaxed_objective(instance, best_point.a, best_point.z)
    best_step = 0

    def track() -> Residuals:
        nonlocal best, best_point, best_step
        p = project_feasible(instance, state.a, state.z)
        val = relaxed_objective(instance, p.a, p.z)
        if config.polish:
            v = vertex_point(instance, p.bins(instance.M))
            v_val = relaxed_objective(instance, v.a, v.z)
            if v_val > val:
                p, val = v, v_val
        if val > best:
            best, best_point, best_step = val, p, state.step
        if config.trace:
            res = check_feasibility(instance, state.a, state.z)
            traces["step"].append(state.step)
            traces["lagrangian"].append(lagrangian(instance, state))
            traces["relaxed_ece"].append(relaxed_objective(instance, state.a, state.z))
            traces["projected_ece"].append(val)
            for key in ("unique", "valid", "binary", "box"):
                traces[key].append(getattr(res, key))
            return res
        return None

    track()
    converged = False
    final = None
    for t in range(1, config.max_steps + 1):
        step(instance, state, config)
        res = track()
        if t % config.check_every == 0 or t == config.max_steps:
            final = res if res is not None else check_feasibility(instance, state.a, state.z)
            if final.within(config.tol):
                converged = True
                if config.stop_on_convergence:
                    break
    if final is None:
        final = check_feasibility(instance, state.a, state.z)
        converged = final.within(config.tol)
    return SolveReport(best, best_point, best_step, converged, state.step, z_name,
                       config.seed, traces, final)


def multi_start_solve(instance: MipInstance, config: AdmmConfig = AdmmConfig()) -> SolveReport:
    """Solve from the clean and from the Brier confidences; keep the larger ACCE."""
    clean = start_confidences(instance, "clean")
    brier = brier_start(instance)
    cfg_clean = replace(config, z_init="clean")
    first = solve(instance, cfg_clean)
    if np.array_equal(clean, brier):
        return first
    second = solve(instance, replace(config, z_init="brier"))
    return second if second.best_acce > first.best_acce else first


def default_grid(base: AdmmConfig = AdmmConfig()) -> list[AdmmConfig]:
    """The 16-run evaluation grid: z start x alpha_z x alpha_a x rho growth."""
    return [
        replace(base, z_init=zi, alpha_z=az, alpha_a=aa, rho_growth=gr)
        for zi, az, aa, gr in product(("clean", "brier"), (0.001, 0.01), (0.05, 0.1), (1.004, 1.01))
    ]


def ensemble_solve(instance: MipInstance, configs: Sequence[AdmmConfig], workers: int = 1) -> SolveReport:
    configs = list(configs)
    if not configs:
        raise InputError("ensemble needs at least one configuration")

    def run(cfg):
        return multi_start_solve(instance, cfg) if cfg.z_init == "both" else solve(instance, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, configs))
    else:
        reports = [run(cfg) for cfg in configs]
    best = reports[0]
    for rep in reports[1:]:
        if rep.best_acce > best.best_acce:
            best = rep
    return best


def acce_ensemble(instance: MipInstance, configs: Optional[Sequence[AdmmConfig]] = None,
                  workers: int = 1) -> float:
    """Largest ACCE over a list of configurations (default: the 16-run grid)."""
    configs = default_grid() if configs is None else configs
    return ensemble_solve(instance, configs, workers).best_acce
