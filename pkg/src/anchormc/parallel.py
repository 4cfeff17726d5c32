"""Independent parallel sampler runs (islands) and the evidence-weighted
combination estimator, stabilized in log space at the island level."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .smc import McmcConfig, SmcConfig, run_mcmc, run_smc
from .targets import TargetDensity

_MIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def mix64(*words: int) -> int:
    """splitmix64-style 64-bit mix of integer words; used to derive
    non-overlapping per-island seed streams without coordination."""
    z = 0
    for w in words:
        z = (z + (w & _MASK64) + _MIX_GAMMA) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
    return z


@dataclass(frozen=True)
class RunResult:
    p: int
    samples: np.ndarray  # (N, d)
    log_z: float  # 0 for MCMC runs
    epochs_per_particle: float
    schedule: object = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class CombinedEstimate:
    estimate: np.ndarray | float
    island_weights: np.ndarray
    effective_islands: float
    excluded: list[int]


def run_parallel(
    target: TargetDensity,
    cfg: SmcConfig | McmcConfig,
    n_islands: int,
    base_seed: int,
    workers: int = 1,
) -> list[RunResult]:
    """n_islands fully independent runs with seeds derived from base_seed.

    Results are ordered by island index and independent of worker scheduling.
    A failed island is returned with its error message instead of aborting
    the batch.
    """
    if n_islands < 1:
        raise ValueError("need at least one island")
    is_smc = isinstance(cfg, SmcConfig)

    def one(p: int) -> RunResult:
        island_cfg = replace(cfg, seed=mix64(base_seed, p))
        try:
            if is_smc:
                r = run_smc(target, island_cfg)
                return RunResult(p, r.particles, r.log_z, r.epochs_per_particle, r.schedule)
            r = run_mcmc(target, island_cfg)
            return RunResult(p, r.particles, 0.0, r.epochs_per_particle)
        except Exception as e:  # noqa: BLE001 - failure report, not control flow
            d = target.dim
            return RunResult(p, np.empty((0, d)), 0.0, 0.0, error=f"{type(e).__name__}: {e}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(n_islands)))
    return [one(p) for p in range(n_islands)]


def island_weights(results: list[RunResult]) -> tuple[np.ndarray, list[int]]:
    """Normalized evidence weights over usable islands, computed in log space.

    Failed islands and non-finite log Z are excluded (with a warning) and the
    remaining weights renormalized. MCMC islands all carry log Z = 0 and so
    get uniform weight.
    """
    excluded = [r.p for r in results if r.failed or not np.isfinite(r.log_z)]
    usable = [r for r in results if r.p not in excluded]
    if not usable:
        raise ValueError("no usable islands to combine")
    if excluded:
        warnings.warn(f"excluding islands {excluded} from combination", stacklevel=2)
    log_z = np.array([r.log_z for r in usable])
    w = np.exp(log_z - logsumexp(log_z))
    return w / w.sum(), excluded


def combine(results: list[RunResult], phi: Callable[[np.ndarray], np.ndarray | float]) -> CombinedEstimate:
    """Evidence-weighted average of island means of phi(theta)."""
    w, excluded = island_weights(results)
    usable = [r for r in results if r.p not in excluded]
    means = []
    for r in usable:
        vals = np.array([phi(theta) for theta in r.samples], dtype=float)
        means.append(vals.mean(axis=0))
    means = np.array(means)
    estimate = np.tensordot(w, means, axes=1)
    if estimate.ndim == 0:
        estimate = float(estimate)
    return CombinedEstimate(
        estimate=estimate,
        island_weights=w,
        effective_islands=float(1.0 / np.sum(w**2)),
        excluded=excluded,
    )


def standard_error(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error over independent realizations:
    sqrt(mean squared deviation) / sqrt(R)."""
    values = np.asarray(values, dtype=float)
    r = values.shape[0]
    if r < 2:
        raise ValueError("standard error needs at least 2 realizations")
    mean = float(values.mean())
    se = float(np.sqrt(np.mean((values - mean) ** 2)) / np.sqrt(r))
    return mean, se
