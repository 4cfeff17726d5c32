"""Target-invariant MCMC transition kernels: HMC with leapfrog, preconditioned
Crank-Nicolson, and an experimental stochastic-gradient HMC variant."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .targets import NonFiniteDensityError, Prior, TargetDensity

DIVERGENCE_THRESHOLD = 1000.0  # |energy error| above this marks a trajectory divergent


@dataclass(frozen=True)
class HmcConfig:
    step_size: float
    n_leapfrog: int = 1

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if self.n_leapfrog < 1:
            raise ValueError(f"leapfrog step count must be >= 1, got {self.n_leapfrog}")


@dataclass(frozen=True)
class PcnConfig:
    beta: float = 0.2

    def __post_init__(self):
        if not (0 < self.beta <= 1):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")


@dataclass
class KernelStats:
    proposals: int = 0
    acceptances: int = 0

    @property
    def rate(self) -> float:
        return self.acceptances / self.proposals if self.proposals else 0.0

    def record(self, accepted: bool):
        self.proposals += 1
        self.acceptances += int(accepted)


class DivergentTrajectory(RuntimeError):
    pass


def leapfrog(
    target: TargetDensity,
    theta: np.ndarray,
    p: np.ndarray,
    step_size: float,
    n_steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Symplectic leapfrog for H(theta, p) = -log_density(theta) + |p|^2/2.

    Raises DivergentTrajectory if a gradient is non-finite mid-trajectory.
    """
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    try:
        g = target.grad_log_density(theta)
        for _ in range(n_steps):
            p = p + 0.5 * step_size * g
            theta = theta + step_size * p
            g = target.grad_log_density(theta)
            p = p + 0.5 * step_size * g
    except NonFiniteDensityError as e:
        raise DivergentTrajectory(str(e)) from e
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(p))):
        raise DivergentTrajectory("non-finite state after leapfrog")
    return theta, p


def hmc_step(
    target: TargetDensity,
    theta: np.ndarray,
    cfg: HmcConfig,
    rng: np.random.Generator,
    logp: float | None = None,
    stats: KernelStats | None = None,
) -> tuple[np.ndarray, bool, float]:
    """One Metropolis-corrected HMC step with identity mass.

    ``logp`` may carry the cached current log-density to save one evaluation.
    Returns (theta_next, accepted, logp_next). Divergent trajectories are
    always rejected.
    """
    if logp is None:
        logp = target.log_density(theta)
    p0 = rng.standard_normal(theta.shape[0])
    h0 = -logp + 0.5 * np.dot(p0, p0)
    accepted = False
    theta_next, logp_next = theta, logp
    try:
        theta_prop, p1 = leapfrog(target, theta, p0, cfg.step_size, cfg.n_leapfrog)
        logp_prop = target.log_density(theta_prop)
        h1 = -logp_prop + 0.5 * np.dot(p1, p1)
        if abs(h1 - h0) <= DIVERGENCE_THRESHOLD:
            if np.log(rng.uniform()) < h0 - h1:
                theta_next, logp_next, accepted = theta_prop, logp_prop, True
    except (DivergentTrajectory, NonFiniteDensityError):
        pass
    if stats is not None:
        stats.record(accepted)
    return theta_next, accepted, logp_next


def pcn_step(
    loglik,
    lam: float,
    prior: Prior,
    theta: np.ndarray,
    cfg: PcnConfig,
    rng: np.random.Generator,
    ll: float | None = None,
    stats: KernelStats | None = None,
) -> tuple[np.ndarray, bool, float]:
    """One preconditioned Crank-Nicolson step for target ~ exp(lam*loglik)*prior.

    The proposal is reversible with respect to the Gaussian prior, so the
    acceptance ratio involves only the tempered likelihood difference.
    ``ll`` may carry the cached loglik(theta). Returns (theta_next, accepted,
    ll_next).
    """
    if ll is None:
        ll = float(loglik(theta))
    mean = prior.mean
    xi = rng.normal(0.0, prior.marginal_std, size=theta.shape[0])
    prop = mean + np.sqrt(1.0 - cfg.beta**2) * (theta - mean) + cfg.beta * xi
    accepted = False
    theta_next, ll_next = theta, ll
    ll_prop = float(loglik(prop))
    if np.isnan(ll_prop) or ll_prop == np.inf:
        pass  # treat as rejected
    elif lam == 0.0 or np.log(rng.uniform()) < lam * (ll_prop - ll):
        theta_next, ll_next, accepted = prop, ll_prop, True
    if stats is not None:
        stats.record(accepted)
    return theta_next, accepted, ll_next


def sghmc_step(
    grad_estimate,
    theta: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    friction: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One stochastic-gradient HMC update with friction and injected noise.

    ``grad_estimate(theta)`` returns a (possibly minibatch) estimate of the
    log-density gradient. No Metropolis correction; experimental.
    """
    if friction < 0:
        raise ValueError(f"friction must be nonnegative, got {friction}")
    if step_size == 0.0:
        return np.array(theta, dtype=float), np.array(momentum, dtype=float)
    g = np.asarray(grad_estimate(theta), dtype=float)
    noise_scale = np.sqrt(2.0 * friction * step_size)
    momentum = (
        (1.0 - friction * step_size) * momentum
        + step_size * g
        + noise_scale * rng.standard_normal(theta.shape[0])
    )
    theta = theta + step_size * momentum
    return theta, momentum


def tune_step_size(
    target: TargetDensity,
    theta0: np.ndarray,
    cfg: HmcConfig,
    rng: np.random.Generator,
    target_rate: tuple[float, float] = (0.6, 0.9),
    pilot_steps: int = 25,
    max_rounds: int = 12,
) -> float:
    """Short pilot: double/halve the step size until the empirical acceptance
    rate lands in ``target_rate``. Used once per run; the step size then
    stays fixed."""
    eps = cfg.step_size
    lo, hi = target_rate
    for _ in range(max_rounds):
        stats = KernelStats()
        theta = np.array(theta0, dtype=float)
        logp = None
        for _ in range(pilot_steps):
            theta, _, logp = hmc_step(
                target, theta, HmcConfig(eps, cfg.n_leapfrog), rng, logp, stats
            )
        if stats.rate > hi:
            eps *= 2.0
        elif stats.rate < lo:
            eps *= 0.5
        else:
            return eps
    return eps
