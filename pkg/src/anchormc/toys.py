"""Small analytic targets used by demos, diagnostics, and tests."""

from __future__ import annotations

import numpy as np

from .targets import GaussianPrior, TargetDensity, make_anchored, make_cold


def bimodal_loglik(centers=(-2.0, 2.0), sigma: float = 0.35, weights=(0.5, 0.5)):
    """1-d two-Gaussian-mixture log-likelihood with gradient."""
    centers = np.asarray(centers, dtype=float)
    weights = np.asarray(weights, dtype=float)
    log_w = np.log(weights / weights.sum())
    inv_var = 1.0 / sigma**2

    def components(theta: np.ndarray) -> np.ndarray:
        return log_w - 0.5 * inv_var * (theta[0] - centers) ** 2

    def ll(theta: np.ndarray) -> float:
        c = components(theta)
        m = c.max()
        return float(m + np.log(np.exp(c - m).sum()))

    def grad(theta: np.ndarray) -> np.ndarray:
        c = components(theta)
        r = np.exp(c - c.max())
        r /= r.sum()
        return np.array([np.sum(r * (centers - theta[0])) * inv_var])

    return ll, grad


def bimodal_toy(
    s: float | None = None,
    temperature: float = 1.0,
    prior_variance: float = 1.0,
    anchor: float = 2.0,
    sigma: float = 0.35,
) -> TargetDensity:
    """Bimodal posterior in 1-d; optionally anchored at one mode and/or
    sharpened by a temperature below 1."""
    ll, grad = bimodal_loglik(sigma=sigma)
    target = TargetDensity(
        loglik=ll, grad_loglik=grad, prior=GaussianPrior(prior_variance, 1)
    )
    if s is not None:
        target = make_anchored(target, np.array([anchor]), s)
    if temperature != 1.0:
        target = make_cold(target, temperature)
    return target


def conjugate_posterior(
    likelihood_mean: np.ndarray, likelihood_variance: float, prior_variance: float
) -> tuple[np.ndarray, float, float]:
    """Closed form for a Gaussian 'likelihood' N(theta; a, sl*Id) against the
    prior N(0, v*Id): posterior mean, posterior variance, and log evidence."""
    a = np.asarray(likelihood_mean, dtype=float)
    sl, v = likelihood_variance, prior_variance
    post_var = 1.0 / (1.0 / sl + 1.0 / v)
    post_mean = post_var * a / sl
    d = a.size
    # evidence of the product of the two Gaussians
    log_ev = float(
        -0.5 * d * np.log(2 * np.pi * (sl + v)) - 0.5 * np.dot(a, a) / (sl + v)
    )
    return post_mean, post_var, log_ev
