"""Largest-extreme-value primitives, the censored log-likelihood, and the
penalized objective.

The failure threshold is a random variable with location log(alpha) and
scale sigma on the log-index scale.  Failed units contribute the density
of the event time; censored units contribute the survival probability.
All ratio terms are computed in log space so scales near the annealing
floor do not overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exposure import ModelParams, UnitRecord, cumulative_exposure, transform_h, _effects_at, integration_weights

# exp(log-ratio) is capped here so a wildly misfit unit yields a huge but
# finite penalty instead of an overflow the optimizer cannot rank.
_LOG_RATIO_CAP = 690.0
# below this log-ratio, log(1 - exp(-r)) ~= log(r) to double precision
_SMALL_LOG_RATIO = -35.0


@dataclass(frozen=True)
class LevParams:
    log_alpha: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass
class PenaltyConfig:
    """Group-sparsity and anchoring penalty settings."""

    lam: float = 0.0
    weights: np.ndarray | None = None   # per-sensor, inf allowed
    eta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.eta < 0 or self.gamma < 0:
            raise ValueError("lam, eta, gamma must be non-negative")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if np.any(self.weights < 0):
                raise ValueError("weights must be non-negative")


def lev_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))


def lev_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x - np.exp(-x))


def lev_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("p must lie in (0, 1)")
    return -np.log(-np.log(p))


def censored_loglik_terms(u_end, rate_end, status, sigma: float, alpha: float) -> np.ndarray:
    """Per-unit log-likelihood terms, vectorized.

    Failed:   log u'(t) - log sigma - log u(t) + log[a/u]^{1/sigma} - [a/u]^{1/sigma}
              (the log of [u'/(sigma u)] * lev_pdf((log u - log a) / sigma))
    Censored: log(1 - exp{-[a/u]^{1/sigma}})
    """
    u_end = np.asarray(u_end, dtype=float)
    rate_end = np.asarray(rate_end, dtype=float)
    status = np.asarray(status)
    if np.any(u_end <= 0):
        raise ValueError("zero exposure at event")
    log_u = np.log(u_end)
    log_ratio = (np.log(alpha) - log_u) / sigma
    r = np.exp(np.minimum(log_ratio, _LOG_RATIO_CAP))

    failed = np.log(rate_end) - np.log(sigma) - log_u + log_ratio - r
    with np.errstate(divide="ignore", invalid="ignore"):
        cens = np.where(log_ratio < _SMALL_LOG_RATIO, log_ratio, np.log(-np.expm1(-r)))
    return np.where(status == 1, failed, cens)


def unit_loglik(unit: UnitRecord, trajectory, rate_at_event: float, params: ModelParams) -> float:
    """Censored log-likelihood contribution of one unit.

    ``trajectory`` is the (times, u) pair from ``cumulative_exposure`` (or
    just the u array); only the value at the event time is used.
    """
    u = np.asarray(trajectory[1] if isinstance(trajectory, tuple) else trajectory, dtype=float)
    u_end = float(u[-1]) if u.ndim else float(u)
    return float(censored_loglik_terms([u_end], [rate_at_event], [unit.status], params.sigma, params.alpha)[0])


def total_loglik(dataset, params: ModelParams, bases) -> float:
    """Sum of per-unit contributions over a dataset."""
    total = 0.0
    for unit in dataset:
        times, u = cumulative_exposure(unit, bases, params)
        rate_end = transform_h(_effects_at(unit, bases, params)[-1])
        total += unit_loglik(unit, (times, u), float(rate_end), params)
    return total


def group_penalty(beta, weights, lam: float) -> float:
    """lam * sum_j w_j ||beta_j||_2 with the inf * 0 = 0 convention.

    A group with infinite weight and nonzero coefficients is infeasible
    and returns +inf.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    total = 0.0
    for b, w in zip(beta, weights):
        norm = float(np.linalg.norm(b))
        if np.isinf(w):
            if norm > 0:
                return float("inf")
            continue
        total += w * norm
    return lam * total


def anchor_penalty(status, u_end, alpha: float, eta: float) -> float:
    """Asymmetric pull of the end-of-history index toward the threshold.

    Failed units pay (alpha - u)^2; censored units pay only for
    overshooting the threshold.
    """
    status = np.asarray(status)
    u_end = np.asarray(u_end, dtype=float)
    failed_term = (alpha - u_end) ** 2
    cens_term = np.maximum(u_end - alpha, 0.0) ** 2
    return float(eta * np.sum(np.where(status == 1, failed_term, cens_term)))


def objective_from_stats(u_end, rate_end, status, beta, sigma: float, alpha: float,
                         penalty: PenaltyConfig) -> float:
    """Penalized negative log-likelihood from precomputed per-unit stats."""
    weights = penalty.weights if penalty.weights is not None else np.ones(len(beta))
    gp = group_penalty(beta, weights, penalty.lam)
    if np.isinf(gp):
        return float("inf")
    ll = float(np.sum(censored_loglik_terms(u_end, rate_end, status, sigma, alpha)))
    return -ll + gp + anchor_penalty(status, u_end, alpha, penalty.eta)


def objective(dataset, params: ModelParams, bases, penalty: PenaltyConfig) -> float:
    """Full objective: -loglik + group penalty + anchor penalty.

    The no-selection baseline is this objective with lam = 0.
    """
    u_end = np.empty(len(dataset))
    rate_end = np.empty(len(dataset))
    status = np.empty(len(dataset), dtype=int)
    for i, unit in enumerate(dataset):
        _, u = cumulative_exposure(unit, bases, params)
        u_end[i] = u[-1]
        rate_end[i] = transform_h(_effects_at(unit, bases, params)[-1])
        status[i] = unit.status
    return objective_from_stats(u_end, rate_end, status, params.beta, params.sigma, params.alpha, penalty)


def adaptive_weights(beta_tilde, gamma: float) -> np.ndarray:
    """Per-group weights ||beta~_j||^-gamma, infinite for dead groups."""
    norms = np.array([float(np.linalg.norm(b)) for b in beta_tilde])
    with np.errstate(divide="ignore"):
        return np.where(norms > 0, norms ** -gamma, np.inf)
