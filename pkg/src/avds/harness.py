"""End-to-end experiments, theorem diagnostics and phase-transition sweeps.

Per-trial randomness is derived from the master seed with
numpy.random.SeedSequence: trial t uses `SeedSequence(master).spawn(trials)[t]`,
whose children seed (in order) the signal draw and one mask draw per
density kind.  Reports are therefore fully reproducible from the config
plus the master seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .density import (
    BlockPartition,
    Density,
    adapted_blocks,
    adapted_isolated,
    baseline_density,
    block_norm_terms,
)
from .errors import ConfigError, DimensionMismatch
from .masks import DISTINCT, IID, draw_mask, expand_blocks
from .recon import MeasurementOp, SolverParams, measure, solve_bp
from .support_model import (
    SupportDistribution,
    WeightVector,
    draw_signals,
    flip,
    normalize_weights,
    sample_supports,
)
from .transforms import Direction, OperatorSpec, apply

REPORT_SCHEMA_VERSION = 1

# PSNR values at or beyond the numerical noise floor are reported as the
# +inf sentinel; aggregation clips at this cap so means stay ordered.
PSNR_CAP_DB = 240.0
_NOISE_FLOOR_REL = 1e-12


def psnr(ref: np.ndarray, rec: np.ndarray, peak: float | None = None) -> float:
    """10 log10(peak^2 / MSE); exact (or noise-floor) matches give +inf."""
    ref = np.asarray(ref)
    rec = np.asarray(rec)
    if ref.shape != rec.shape:
        raise DimensionMismatch("reference and reconstruction shapes differ")
    if peak is None:
        peak = float(np.max(np.abs(ref)))
    if peak <= 0:
        raise DimensionMismatch("peak must be positive")
    mse = float(np.mean(np.abs(ref - rec) ** 2))
    if mse <= (peak * _NOISE_FLOOR_REL) ** 2:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _clip_psnr(values) -> np.ndarray:
    return np.minimum(np.asarray(values, dtype=float), PSNR_CAP_DB)


def scale_profile_weights(
    side: int,
    levels: int,
    base: float,
    decay: float,
    layout: str = "mra2d",
    s_target: float | None = None,
) -> WeightVector:
    """Synthetic 2D weight profile decaying from coarse to fine scales.

    Fineness f of a coefficient counts detail levels away from the
    approximation band (0 = approximation, `levels` = finest details);
    mra2d uses max(f_row, f_col), tensor2d uses f_row + f_col.  Weight is
    base * decay^f, optionally rescaled to sum to s_target.
    """
    lo = side >> levels
    f1 = np.zeros(side, dtype=int)
    seg = lo
    while seg < side:
        f1[seg : 2 * seg] = int(np.log2(seg // lo)) + 1  # 1 = coarsest details
        seg *= 2
    if layout == "mra2d":
        f2 = np.maximum(f1[:, None], f1[None, :])
    elif layout == "tensor2d":
        f2 = f1[:, None] + f1[None, :]
    else:
        raise ConfigError(f"unknown weight profile layout {layout!r}")
    w = np.clip(base * decay ** f2.astype(float), 0.0, 1.0)
    omega = w.T.ravel()  # column-major vec
    if s_target is not None:
        return normalize_weights(omega, s_target)
    return WeightVector.from_omega(omega)


def synth_corpus(
    weights: WeightVector, n: int, floor: float = 0.5, seed=None
) -> np.ndarray:
    """n coefficient vectors with rejective supports and magnitudes >= floor."""
    rng = np.random.default_rng(seed)
    s_int = int(round(weights.sparsity))
    dist = SupportDistribution(normalize_weights(weights.omega, s_int))
    masks = sample_supports(dist, n, seed=rng.integers(2**63))
    mags = rng.uniform(floor, 1.0, size=masks.shape)
    signs = rng.integers(0, 2, size=masks.shape) * 2 - 1
    return masks * mags * signs


@dataclass
class ExperimentConfig:
    spec: OperatorSpec
    weights: WeightVector
    density_kinds: list
    trials: int
    master_seed: int
    partition: BlockPartition | None = None
    fraction: float | None = None
    budget: int | None = None
    solver: SolverParams = field(default_factory=SolverParams)
    flip_coefficients: bool = False
    weight_descriptor: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.budget is None:
            if self.fraction is None or not 0 < self.fraction <= 1:
                raise ConfigError("need a budget or a fraction in (0, 1]")
        if self.partition is None:
            self.partition = BlockPartition.singletons(self.spec.dim)

    @property
    def resolved_budget(self) -> int:
        if self.budget is not None:
            return int(self.budget)
        return max(1, round(self.fraction * self.partition.m))

    def describe(self) -> dict:
        spec = self.spec
        return {
            "spec": {
                "measurement": spec.measurement.value,
                "sparsity": spec.sparsity.value,
                "size": spec.size,
                "levels": spec.levels,
            },
            "partition": self.partition.kind,
            "density_kinds": list(self.density_kinds),
            "trials": self.trials,
            "fraction": self.fraction,
            "budget": self.resolved_budget,
            "flip": self.flip_coefficients,
            "master_seed": self.master_seed,
            "solver": {
                "continuation_steps": self.solver.continuation_steps,
                "final_mu_factor": self.solver.final_mu_factor,
                "inner_tol": self.solver.inner_tol,
                "max_inner": self.solver.max_inner,
            },
            "weights": dict(self.weight_descriptor),
            "seed_scheme": "SeedSequence(master).spawn(trials); per trial: [signal, mask per kind]",
        }


@dataclass
class ExperimentReport:
    schema_version: int
    config: dict
    psnr_db: dict
    psnr_mean: dict
    psnr_sd: dict
    covered_fraction: dict
    density_info: dict
    unconverged_solves: int
    wall_clock_s: float

    def to_json(self, include_timing: bool = True) -> str:
        payload = {
            "schema_version": self.schema_version,
            "config": self.config,
            "psnr_db": self.psnr_db,
            "psnr_mean": self.psnr_mean,
            "psnr_sd": self.psnr_sd,
            "covered_fraction": self.covered_fraction,
            "density_info": self.density_info,
            "unconverged_solves": self.unconverged_solves,
        }
        if include_timing:
            payload["wall_clock_s"] = self.wall_clock_s
        return json.dumps(payload, sort_keys=True, indent=2)


def build_density(kind: str, cfg: ExperimentConfig, weights: WeightVector) -> Density:
    part = cfg.partition
    if kind == "adapted":
        if part.kind == "singletons":
            return adapted_isolated(cfg.spec, weights)
        return adapted_blocks(cfg.spec, part, weights, method="auto")
    return baseline_density(kind, cfg.spec, part)


def signal_distribution(weights: WeightVector) -> SupportDistribution:
    s_int = max(1, int(round(weights.sparsity)))
    return SupportDistribution(normalize_weights(weights.omega, s_int))


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Draw signal / density / mask / measure / solve / score per trial.

    The same per-trial signal is scored under every density kind so the
    comparison is paired.  Fully deterministic given the master seed.
    """
    t0 = time.perf_counter()
    weights = cfg.weights
    if cfg.flip_coefficients:
        weights = WeightVector.from_omega(flip(weights.omega))
    densities = {kind: build_density(kind, cfg, weights) for kind in cfg.density_kinds}
    dist = signal_distribution(weights)
    budget = cfg.resolved_budget
    singleton = cfg.partition.kind == "singletons"

    psnr_db: dict = {kind: [] for kind in cfg.density_kinds}
    covered: dict = {kind: [] for kind in cfg.density_kinds}
    unconverged = 0
    trial_seeds = np.random.SeedSequence(cfg.master_seed).spawn(cfg.trials)
    for trial in range(cfg.trials):
        children = trial_seeds[trial].spawn(1 + len(cfg.density_kinds))
        x = draw_signals(dist, 1, seed=children[0])[0]
        peak = float(np.max(np.abs(x)))
        for j, kind in enumerate(cfg.density_kinds):
            mask = draw_mask(densities[kind], budget, mode=DISTINCT, seed=children[1 + j])
            if not singleton:
                mask = expand_blocks(mask, cfg.partition)
                covered[kind].append(mask.covered_fraction)
            else:
                covered[kind].append(mask.size / cfg.spec.dim)
            op = MeasurementOp(cfg.spec, mask)
            result = solve_bp(measure(x, op), op, cfg.solver)
            if not result.converged:
                unconverged += 1
            psnr_db[kind].append(psnr(x, result.x, peak=peak))

    report = ExperimentReport(
        schema_version=REPORT_SCHEMA_VERSION,
        config=cfg.describe(),
        psnr_db=psnr_db,
        psnr_mean={k: float(np.mean(_clip_psnr(v))) for k, v in psnr_db.items()},
        psnr_sd={k: float(np.std(_clip_psnr(v))) for k, v in psnr_db.items()},
        covered_fraction={k: float(np.mean(v)) for k, v in covered.items()},
        density_info={
            k: {
                "normalizer": float(d.normalizer),
                "min": float(d.pi.min()),
                "max": float(d.pi.max()),
            }
            for k, d in densities.items()
        },
        unconverged_solves=unconverged,
        wall_clock_s=time.perf_counter() - t0,
    )
    return report


# ----------------------------------------------------------------- diagnostics

@dataclass
class Diagnostics:
    mu: float
    lambda_samples: np.ndarray
    gram_tail_prob: float
    m: int
    threshold_inf1: float
    threshold_gram: float
    m_bound_inf1: float
    m_bound_gram: float


def diagnostics(
    spec: OperatorSpec,
    partition: BlockPartition,
    density: Density,
    weights: WeightVector,
    m: int,
    trials: int = 200,
    seed=None,
    epsilon: float = 0.01,
) -> Diagnostics:
    """Empirical Lambda_I / mu and the Gram deviation tail at budget m.

    Masks are drawn in the i.i.d. theorem model with the 1/sqrt(m pi_k)
    scaling; supports follow the rejective model of `weights`.  The two
    sufficient-budget evaluations report max_k ||.||/pi_k times the
    log^3 / log^2 factors at the given epsilon (constants omitted).
    """
    if spec.dim > 4096:
        raise DimensionMismatch("diagnostics are limited to K <= 4096")
    gram_terms, inf_terms = block_norm_terms(spec, partition, weights, method="auto")
    pi = density.pi
    live = pi > 0
    mu = float(np.max(inf_terms[live] / (pi[live] * m)))
    threshold_inf1 = float(np.max(inf_terms[live] / pi[live]))
    threshold_gram = float(np.max(gram_terms[live] / pi[live]))
    logk = np.log(spec.dim / epsilon)

    dist = signal_distribution(weights)
    seeds = np.random.SeedSequence(seed).spawn(trials)
    lam = np.empty(trials)
    hits = 0
    for t in range(trials):
        child = seeds[t].spawn(2)
        support = np.flatnonzero(sample_supports(dist, 1, seed=child[0])[0])
        slab = np.zeros((support.size, spec.dim))
        slab[np.arange(support.size), support] = 1.0
        cols = apply(spec, Direction.FORWARD, slab).T  # (K, S) columns of A0
        # Lambda_I = max_k ||B_k[:, I]||^2 / (pi_k m)
        singleton = partition.kind == "singletons"
        if singleton:
            block_sq = np.sum(np.abs(cols) ** 2, axis=1)
        else:
            block_sq = np.empty(partition.m)
            for k, idx in enumerate(partition.blocks):
                sub = cols[idx, :]
                gram = sub.conj().T @ sub
                block_sq[k] = float(
                    np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))[-1].real
                )
        lam[t] = float(np.max(block_sq[live] / (pi[live] * m)))
        # theorem-scaled mask and its restricted Gram
        mask = draw_mask(density, m, mode=IID, seed=child[1])
        scale = np.sqrt(mask.multiplicities / (m * pi[mask.indices]))
        if singleton:
            a_i = scale[:, None] * cols[mask.indices, :]
        else:
            a_i = np.concatenate(
                [s * cols[partition.blocks[k], :] for s, k in zip(scale, mask.indices)],
                axis=0,
            )
        gram = a_i.conj().T @ a_i
        dev = np.abs(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T)) - 1.0).max()
        hits += bool(dev >= 0.5)
    return Diagnostics(
        mu=mu,
        lambda_samples=lam,
        gram_tail_prob=hits / trials,
        m=m,
        threshold_inf1=threshold_inf1,
        threshold_gram=threshold_gram,
        m_bound_inf1=threshold_inf1 * logk**3,
        m_bound_gram=threshold_gram * logk**2,
    )


# ------------------------------------------------------------ phase transition

@dataclass
class PhasePoint:
    m: int
    success_rate: float
    trials_run: int
    pruned: bool = False


def phase_transition(
    cfg: ExperimentConfig,
    m_grid,
    success_threshold: float = 1e-3,
    prune_target: float | None = None,
) -> dict:
    """Success rate (relative l2 error <= threshold) vs budget per kind.

    With prune_target set, a grid point stops early once that success
    rate has become unreachable; the point is flagged pruned.
    """
    weights = cfg.weights
    if cfg.flip_coefficients:
        weights = WeightVector.from_omega(flip(weights.omega))
    densities = {kind: build_density(kind, cfg, weights) for kind in cfg.density_kinds}
    dist = signal_distribution(weights)
    singleton = cfg.partition.kind == "singletons"
    table: dict = {kind: [] for kind in cfg.density_kinds}
    for kind_idx, kind in enumerate(cfg.density_kinds):
        supported = int(np.count_nonzero(densities[kind].pi > 0))
        for m in m_grid:
            if m > supported:
                table[kind].append(PhasePoint(int(m), 0.0, 0, pruned=True))
                continue
            seeds = np.random.SeedSequence(
                (cfg.master_seed, kind_idx, int(m))
            ).spawn(cfg.trials)
            successes = 0
            failures = 0
            run = 0
            budget_fail = (
                None
                if prune_target is None
                else int(np.floor(cfg.trials * (1.0 - prune_target)))
            )
            for t in range(cfg.trials):
                children = seeds[t].spawn(2)
                x = draw_signals(dist, 1, seed=children[0])[0]
                mask = draw_mask(densities[kind], int(m), mode=DISTINCT, seed=children[1])
                if not singleton:
                    mask = expand_blocks(mask, cfg.partition)
                op = MeasurementOp(cfg.spec, mask)
                result = solve_bp(measure(x, op), op, cfg.solver)
                err = np.linalg.norm(result.x - x) / np.linalg.norm(x)
                run += 1
                if err <= success_threshold:
                    successes += 1
                else:
                    failures += 1
                if budget_fail is not None and failures > budget_fail:
                    break
            table[kind].append(
                PhasePoint(int(m), successes / run, run, pruned=run < cfg.trials)
            )
    return table


def smallest_m_reaching(points, rate: float) -> int | None:
    """First budget in the table whose success rate reached `rate`."""
    for p in sorted(points, key=lambda p: p.m):
        if p.success_rate >= rate:
            return p.m
    return None
