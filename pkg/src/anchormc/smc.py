"""Tempered SMC sampler with adaptive schedule and evidence estimate, plus
the matching bank of short parallel MCMC chains.

One SMC run alternates: pick the next tempering exponent by ESS root-finding,
reweight (accumulating log Z in log space), systematic resampling, then
adaptive-length MCMC mutation at the new exponent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp, softmax

from .kernels import HmcConfig, KernelStats, PcnConfig, hmc_step, pcn_step, tune_step_size
from .targets import TargetDensity


@dataclass
class ParticleEnsemble:
    particles: np.ndarray  # (N, d)
    loglik: np.ndarray  # cached loglik per particle, refreshed after mutation
    lam: float = 0.0
    log_z: float = 0.0

    @property
    def n(self) -> int:
        return self.particles.shape[0]


@dataclass
class TemperSchedule:
    lambdas: list[float] = field(default_factory=lambda: [0.0])
    ess_values: list[float] = field(default_factory=list)
    mutation_steps: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    adaptive: bool = True


@dataclass(frozen=True)
class SmcConfig:
    n_particles: int = 10
    ess_fraction: float = 0.5
    mutation_tol: float = 0.05
    max_mutation_steps: int = 20
    kernel: str = "hmc"
    hmc: HmcConfig | None = None  # None: pilot-tuned step size at the start
    pcn: PcnConfig = PcnConfig()
    seed: int = 0
    fixed_schedule: tuple[float, ...] | None = None  # overrides ESS adaptation

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        if not (0 < self.ess_fraction < 1):
            raise ValueError(f"ESS fraction must lie in (0, 1), got {self.ess_fraction}")
        if self.mutation_tol <= 0:
            raise ValueError(f"mutation tolerance must be positive, got {self.mutation_tol}")
        if self.kernel not in ("hmc", "pcn"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.fixed_schedule is not None:
            lams = self.fixed_schedule
            if not all(b > a for a, b in zip(lams, lams[1:])) or lams[-1] != 1.0:
                raise ValueError("fixed schedule must be strictly increasing and end at 1")


@dataclass(frozen=True)
class SmcResult:
    particles: np.ndarray
    log_z: float
    schedule: TemperSchedule
    epochs_per_particle: float
    acceptance_rate: float


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights, in [1, N]."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if total == 0:
        raise ValueError("degenerate ensemble: all weights are zero")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {total}")
    return float(1.0 / np.sum(weights**2))


def _ess_at(loglik: np.ndarray, h: float) -> float:
    return ess(softmax(h * loglik))


def next_lambda(
    loglik: np.ndarray, lam: float, ess_fraction: float, max_iter: int = 60
) -> float:
    """Bisection for the increment h with ESS(h) = ess_fraction * N.

    Returns 1.0 when even the full remaining increment keeps the ESS above
    the floor. Weights are formed in the log domain from h * loglik.
    """
    loglik = np.asarray(loglik, dtype=float)
    if lam >= 1.0:
        raise ValueError("tempering already complete")
    bad = np.flatnonzero(~np.isfinite(loglik))
    if bad.size:
        raise ValueError(f"non-finite log-likelihood for particle {bad[0]}")
    n = loglik.shape[0]
    target = ess_fraction * n
    h_max = 1.0 - lam
    if _ess_at(loglik, h_max) >= target:
        return 1.0
    lo, hi = 0.0, h_max
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = _ess_at(loglik, mid)
        if abs(e - target) <= 0.005 * n or hi - lo < 1e-12:
            break
        if e > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6 and abs(_ess_at(loglik, 0.5 * (lo + hi)) - target) <= 0.01 * n:
            break
    return lam + 0.5 * (lo + hi)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: one uniform offset, N evenly spaced positions.

    With uniform weights every particle has exactly one offspring.
    """
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    positions = (rng.uniform() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard against roundoff in the final bin
    return np.searchsorted(cum, positions, side="right").clip(0, n - 1)


def reweight_and_resample(
    ensemble: ParticleEnsemble,
    lam_next: float,
    rng: np.random.Generator,
    schedule: TemperSchedule | None = None,
) -> ParticleEnsemble:
    """Advance the tempering exponent: accumulate log Z by log-mean-exp of the
    incremental log-weights, then systematic-resample to uniform weights."""
    if lam_next <= ensemble.lam:
        raise ValueError(f"lam must increase: {ensemble.lam} -> {lam_next}")
    dl = lam_next - ensemble.lam
    logw = dl * ensemble.loglik
    log_increment = float(logsumexp(logw)) - np.log(ensemble.n)
    weights = softmax(logw)
    e = ess(weights)
    if schedule is not None:
        schedule.ess_values.append(e)
        if e < 1.5:
            schedule.warnings.append(
                f"degenerate weights before resampling at lam={lam_next:.6g} (ESS={e:.3g})"
            )
    idx = systematic_resample(weights, rng)
    return ParticleEnsemble(
        particles=ensemble.particles[idx].copy(),
        loglik=ensemble.loglik[idx].copy(),
        lam=lam_next,
        log_z=ensemble.log_z + log_increment,
    )


class _HmcMutation:
    """HMC sweep over particles; caches the full log-density per particle and
    marks cached log-likelihoods stale (refreshed once per mutation phase)."""

    def __init__(self, cfg: HmcConfig):
        self.cfg = cfg
        self.stats = KernelStats()

    def sweep(self, target, ensemble, logp, rngs):
        accepted_any = 0
        for i in range(ensemble.n):
            before = self.stats.acceptances
            ensemble.particles[i], _, logp[i] = hmc_step(
                target, ensemble.particles[i], self.cfg, rngs[i], logp[i], self.stats
            )
            accepted_any += self.stats.acceptances - before
        return accepted_any

    # evaluation cost of one HMC step, in likelihood-or-gradient evaluations
    @property
    def evals_per_step(self) -> int:
        return self.cfg.n_leapfrog + 2


class _PcnMutation:
    def __init__(self, cfg: PcnConfig):
        self.cfg = cfg
        self.stats = KernelStats()

    def sweep(self, target, ensemble, _logp, rngs):
        accepted_any = 0
        for i in range(ensemble.n):
            ensemble.particles[i], acc, ensemble.loglik[i] = pcn_step(
                target.loglik,
                target.lam,
                target.prior,
                ensemble.particles[i],
                self.cfg,
                rngs[i],
                ensemble.loglik[i],
                self.stats,
            )
            accepted_any += int(acc)
        return accepted_any

    @property
    def evals_per_step(self) -> int:
        return 1


def mutate(
    ensemble: ParticleEnsemble,
    target: TargetDensity,
    kernel,
    tol: float,
    max_steps: int,
    rngs: list[np.random.Generator],
    schedule: TemperSchedule | None = None,
) -> int:
    """Apply kernel sweeps until the mean displacement from the
    post-resampling state stabilizes: smallest M >= 2 with
    |dist_M - dist_{M-1}| / dist_{M-1} <= tol, capped at max_steps.

    A zero previous displacement counts as converged (an immobile ensemble
    cannot improve). Refreshes the cached log-likelihoods. Returns M used.
    """
    start = ensemble.particles.copy()
    logp = None
    if isinstance(kernel, _HmcMutation):
        prior_lp = np.array([target.prior.log_density(t) for t in ensemble.particles])
        logp = (target.lam * ensemble.loglik + prior_lp) / target.temperature
    dist_prev = None
    m_used = max_steps
    zero_accept_streak = 0
    for m in range(1, max_steps + 1):
        accepted = kernel.sweep(target, ensemble, logp, rngs)
        if accepted == 0:
            zero_accept_streak += 1
            if zero_accept_streak == 3 and schedule is not None:
                schedule.warnings.append(
                    f"no acceptances for 3 consecutive sweeps at lam={target.lam:.6g}"
                )
        else:
            zero_accept_streak = 0
        dist = float(np.mean(np.linalg.norm(ensemble.particles - start, axis=1)))
        if m >= 2:
            if dist_prev == 0.0:
                m_used = m
                break
            if abs(dist - dist_prev) / dist_prev <= tol:
                m_used = m
                break
        dist_prev = dist
    if isinstance(kernel, _HmcMutation):
        ensemble.loglik = np.array(
            [target.loglik(t) for t in ensemble.particles], dtype=float
        )
    if schedule is not None:
        schedule.mutation_steps.append(m_used)
    return m_used


def _spawn_rngs(seed_seq: np.random.SeedSequence, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in seed_seq.spawn(n)]


def run_smc(target: TargetDensity, cfg: SmcConfig) -> SmcResult:
    """Full tempering run from the target's prior to lam = 1.

    ``target.lam`` is ignored; the run owns the tempering exponent. The whole
    run is a pure function of (seed, config, target)."""
    root = np.random.SeedSequence(cfg.seed)
    island_rng = np.random.default_rng(root.spawn(1)[0])
    particle_rngs = _spawn_rngs(root, cfg.n_particles)

    particles = target.prior.sample(island_rng, cfg.n_particles)
    loglik = np.array([target.loglik(t) for t in particles], dtype=float)
    ensemble = ParticleEnsemble(particles=particles, loglik=loglik)
    schedule = TemperSchedule(adaptive=cfg.fixed_schedule is None)

    if cfg.kernel == "hmc":
        hmc_cfg = cfg.hmc
        if hmc_cfg is None:
            eps = tune_step_size(
                target.with_lam(1.0),
                ensemble.particles[0],
                HmcConfig(0.01),
                island_rng,
            )
            hmc_cfg = HmcConfig(eps)
        kernel = _HmcMutation(hmc_cfg)
    else:
        kernel = _PcnMutation(cfg.pcn)

    evals = cfg.n_particles  # initial likelihood evaluations
    fixed = list(cfg.fixed_schedule) if cfg.fixed_schedule is not None else None
    step = 0
    while ensemble.lam < 1.0:
        if fixed is not None:
            lam_next = fixed[step + 1] if step + 1 < len(fixed) else 1.0
        else:
            lam_next = next_lambda(ensemble.loglik, ensemble.lam, cfg.ess_fraction)
        ensemble = reweight_and_resample(ensemble, lam_next, island_rng, schedule)
        schedule.lambdas.append(lam_next)
        m_used = mutate(
            ensemble,
            target.with_lam(lam_next),
            kernel,
            cfg.mutation_tol,
            cfg.max_mutation_steps,
            particle_rngs,
            schedule,
        )
        evals += m_used * cfg.n_particles * kernel.evals_per_step
        if cfg.kernel == "hmc":
            evals += cfg.n_particles  # log-likelihood refresh after mutation
        step += 1
    return SmcResult(
        particles=ensemble.particles,
        log_z=ensemble.log_z,
        schedule=schedule,
        epochs_per_particle=evals / cfg.n_particles,
        acceptance_rate=kernel.stats.rate,
    )


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 10
    n_steps: int = 80
    kernel: str = "hmc"
    hmc: HmcConfig | None = None
    pcn: PcnConfig = PcnConfig()
    seed: int = 0
    discard_fraction: float = 0.0  # fraction of each chain discarded as burn-in

    def __post_init__(self):
        if self.n_chains < 1 or self.n_steps < 1:
            raise ValueError("need at least one chain and one step")
        if not (0 <= self.discard_fraction < 1):
            raise ValueError("discard fraction must lie in [0, 1)")
        if self.kernel not in ("hmc", "pcn"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass(frozen=True)
class McmcResult:
    particles: np.ndarray  # final state of each chain
    log_z: float  # identically 0: chains carry no evidence estimate
    epochs_per_particle: float
    acceptance_rate: float


def run_mcmc(target: TargetDensity, cfg: McmcConfig) -> McmcResult:
    """Bank of independent chains at lam = 1, initialized from the prior.
    The returned particles are the final chain states."""
    root = np.random.SeedSequence(cfg.seed)
    init_rng = np.random.default_rng(root.spawn(1)[0])
    chain_rngs = _spawn_rngs(root, cfg.n_chains)
    target = target.with_lam(1.0)

    particles = target.prior.sample(init_rng, cfg.n_chains)
    stats = KernelStats()
    hmc_cfg = cfg.hmc
    if cfg.kernel == "hmc" and hmc_cfg is None:
        eps = tune_step_size(target, particles[0], HmcConfig(0.01), init_rng)
        hmc_cfg = HmcConfig(eps)

    evals = 0
    for i in range(cfg.n_chains):
        theta = particles[i]
        if cfg.kernel == "hmc":
            logp = None
            for _ in range(cfg.n_steps):
                theta, _, logp = hmc_step(target, theta, hmc_cfg, chain_rngs[i], logp, stats)
            evals += cfg.n_steps * (hmc_cfg.n_leapfrog + 2) + 1
        else:
            ll = None
            for _ in range(cfg.n_steps):
                theta, _, ll = pcn_step(
                    target.loglik, 1.0, target.prior, theta, cfg.pcn, chain_rngs[i], ll, stats
                )
            evals += cfg.n_steps + 1
        particles[i] = theta
    return McmcResult(
        particles=particles,
        log_z=0.0,
        epochs_per_particle=evals / cfg.n_chains,
        acceptance_rate=stats.rate,
    )
