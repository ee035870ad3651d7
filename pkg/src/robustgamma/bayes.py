"""Bayesian inference for the gamma and robust GLMs.

The posterior is sampled in ``(beta, eta)`` with ``eta = log(nu)``, under a
flat prior on ``beta`` and a gamma(shape ``alpha``, scale ``theta``) prior on
``nu``.  Sampling uses plain Hamiltonian Monte Carlo with a diagonal mass
matrix.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .data import Dataset
from .density import compute_tail_constants, gamma_grad_terms, gamma_loglik, robust_grad_terms, robust_loglik
from .special import make_rng

logger = logging.getLogger(__name__)


class Model(str, enum.Enum):
    GAMMA = "gamma"
    ROBUST = "robust"


@dataclass(frozen=True)
class Prior:
    """Gamma prior on ``nu`` (shape ``alpha``, scale ``theta``); flat on ``beta``."""

    alpha: float = 2.0
    theta: float = 50.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.theta > 0):
            raise ValueError("prior shape and scale must be positive")


@dataclass
class HmcConfig:
    step_size: float = 0.01
    leapfrog_steps: int = 20
    iterations: int = 100_000
    burn_in_fraction: float = 0.10
    seed: int = 0
    mass_diag: Optional[np.ndarray] = None
    adapt: bool = True
    adapt_iterations: int = 5_000
    target_accept: float = 0.8

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1 or self.iterations < 1:
            raise ValueError("leapfrog_steps and iterations must be at least 1")
        if not 0 < self.burn_in_fraction < 1:
            raise ValueError("burn_in_fraction must lie in (0, 1)")
        if self.mass_diag is not None:
            self.mass_diag = np.asarray(self.mass_diag, dtype=float)
            if np.any(self.mass_diag <= 0):
                raise ValueError("mass_diag must be positive")


@dataclass
class Chain:
    draws: np.ndarray
    accept_rate: float
    log_post_trace: np.ndarray
    seed: int
    divergences: int = 0
    step_size: float = math.nan
    mass_diag: Optional[np.ndarray] = None

    @property
    def beta(self) -> np.ndarray:
        return self.draws[:, :-1]

    @property
    def nu(self) -> np.ndarray:
        return np.exp(self.draws[:, -1])

    def to_csv(self, path, names: Optional[Sequence[str]] = None) -> None:
        p = self.draws.shape[1] - 1
        names = list(names) if names is not None else [f"beta{j + 1}" for j in range(p)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names + ["eta", "log_post"])
            for row, lp in zip(self.draws, self.log_post_trace):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(lp))])


# --------------------------------------------------------------------------
# log posterior


def _prior_terms(eta: float, prior: Prior) -> tuple[float, float]:
    # log pi(e^eta) + eta (Jacobian) and its derivative
    nu = math.exp(eta)
    lp = (
        (prior.alpha - 1.0) * eta
        - nu / prior.theta
        - math.lgamma(prior.alpha)
        - prior.alpha * math.log(prior.theta)
        + eta
    )
    return lp, prior.alpha - nu / prior.theta


def log_posterior_and_grad(theta_point, data: Optional[Dataset], prior: Prior, model: Model, c: float = 1.6):
    """Unnormalized log posterior in ``(beta, eta)`` and its gradient.

    ``data=None`` gives the prior-only target.  Numerically invalid points
    return ``-inf`` with a zero gradient.
    """
    theta_point = np.asarray(theta_point, dtype=float)
    beta, eta = theta_point[:-1], float(theta_point[-1])
    model = Model(model)
    grad = np.zeros_like(theta_point)
    if not np.all(np.isfinite(theta_point)) or abs(eta) > 700:
        return -math.inf, grad
    try:
        lp, d_eta = _prior_terms(eta, prior)
        grad[-1] = d_eta
        if data is not None and data.n > 0:
            nu = math.exp(eta)
            log_z = data.log_y - data.x @ beta
            if model is Model.GAMMA:
                lp += gamma_loglik(beta, nu, data.x, data.log_y)
                d_beta, d_e = gamma_grad_terms(log_z, data.x, nu)
                grad[:-1] += d_beta.sum(axis=0)
                grad[-1] += d_e.sum()
            else:
                tails = compute_tail_constants(nu, c)
                lp += robust_loglik(beta, nu, c, data.x, data.log_y, tails)
                g = robust_grad_terms(log_z, data.x, nu, c, tails)
                grad[:-1] += g.d_beta.sum(axis=0)
                grad[-1] += g.d_eta.sum()
    except (FloatingPointError, OverflowError, ValueError, ZeroDivisionError):
        return -math.inf, np.zeros_like(theta_point)
    if not math.isfinite(lp) or not np.all(np.isfinite(grad)):
        return -math.inf, np.zeros_like(theta_point)
    return lp, grad


def log_posterior(theta_point, data, prior: Prior, model: Model, c: float = 1.6) -> float:
    with np.errstate(all="ignore"):
        return log_posterior_and_grad(theta_point, data, prior, model, c)[0]


def grad_log_posterior(theta_point, data, prior: Prior, model: Model, c: float = 1.6, return_kink: bool = False):
    """Gradient in ``(beta, eta)``; with ``return_kink`` also whether any
    observation sits exactly on a switch point (robust model only)."""
    with np.errstate(all="ignore"):
        grad = log_posterior_and_grad(theta_point, data, prior, model, c)[1]
    if not return_kink:
        return grad
    kink = False
    if data is not None and Model(model) is Model.ROBUST:
        theta_point = np.asarray(theta_point, dtype=float)
        nu = math.exp(theta_point[-1])
        log_z = data.log_y - data.x @ theta_point[:-1]
        kink = bool(np.any(robust_grad_terms(log_z, data.x, nu, c).kink))
    return grad, kink


def find_map(data: Dataset, prior: Prior, model: Model, c: float = 1.6, start=None) -> np.ndarray:
    """Posterior mode by L-BFGS in ``(beta, eta)``."""
    if start is None:
        from .estimation import fit_gamma_mle

        fit = fit_gamma_mle(data)
        start = np.append(fit.beta, math.log(fit.nu))

    def neg(t):
        lp, g = log_posterior_and_grad(t, data, prior, model, c)
        if not math.isfinite(lp):
            return 1e300, np.zeros_like(t)
        return -lp, -g

    with np.errstate(all="ignore"):
        res = optimize.minimize(neg, np.asarray(start, dtype=float), jac=True, method="L-BFGS-B",
                                options={"maxiter": 1000, "gtol": 1e-9, "ftol": 1e-15})
    return res.x


# --------------------------------------------------------------------------
# Hamiltonian Monte Carlo


def leapfrog(x, p, grad, step, n_steps, inv_mass, logp_grad):
    """``n_steps`` leapfrog steps; returns the end state and its log density."""
    x = x.copy()
    p = p + 0.5 * step * grad
    lp = -math.inf
    for i in range(n_steps):
        x = x + step * inv_mass * p
        lp, grad = logp_grad(x)
        if not math.isfinite(lp):
            return x, p, grad, lp
        if i < n_steps - 1:
            p = p + step * grad
    p = p + 0.5 * step * grad
    return x, p, grad, lp


def run_hmc(
    logp_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    step_size: float,
    leapfrog_steps: int,
    iterations: int,
    rng: np.random.Generator,
    mass_diag=None,
):
    """Core HMC loop over a generic differentiable log density.

    Returns ``(draws, log_post, accepted, divergences)`` over all iterations.
    """
    x = np.asarray(x0, dtype=float).copy()
    d = x.size
    mass = np.ones(d) if mass_diag is None else np.asarray(mass_diag, dtype=float)
    inv_mass = 1.0 / mass
    sqrt_mass = np.sqrt(mass)
    lp, grad = logp_grad(x)
    if not math.isfinite(lp):
        raise ValueError("initial point has zero posterior density")
    draws = np.empty((iterations, d))
    trace = np.empty(iterations)
    accepted = 0
    divergences = 0
    for it in range(iterations):
        p0 = rng.standard_normal(d) * sqrt_mass
        h0 = lp - 0.5 * np.sum(p0 * p0 * inv_mass)
        x1, p1, g1, lp1 = leapfrog(x, p0, grad, step_size, leapfrog_steps, inv_mass, logp_grad)
        log_u = math.log(rng.random())
        if math.isfinite(lp1):
            h1 = lp1 - 0.5 * np.sum(p1 * p1 * inv_mass)
            if not math.isfinite(h1):
                divergences += 1
            elif log_u < h1 - h0:
                x, lp, grad = x1, lp1, g1
                accepted += 1
        else:
            divergences += 1
        draws[it] = x
        trace[it] = lp
    return draws, trace, accepted, divergences


def _tune_step(logp_grad, x, step, n_steps, mass, rng, iterations, target):
    """Dual-averaging step-size adaptation in the whitened metric."""
    inv_mass = 1.0 / mass
    sqrt_mass = np.sqrt(mass)
    mu = math.log(10 * step)
    log_bar, h_bar = 0.0, 0.0
    gamma, t0, kappa = 0.05, 10.0, 0.75
    lp, grad = logp_grad(x)
    for m in range(1, iterations + 1):
        p0 = rng.standard_normal(x.size) * sqrt_mass
        h0 = lp - 0.5 * np.sum(p0 * p0 * inv_mass)
        x1, p1, g1, lp1 = leapfrog(x, p0, grad, step, n_steps, inv_mass, logp_grad)
        if math.isfinite(lp1):
            h1 = lp1 - 0.5 * np.sum(p1 * p1 * inv_mass)
            acc = min(1.0, math.exp(min(0.0, h1 - h0))) if math.isfinite(h1) else 0.0
        else:
            acc = 0.0
        if rng.random() < acc:
            x, lp, grad = x1, lp1, g1
        h_bar = (1 - 1 / (m + t0)) * h_bar + (target - acc) / (m + t0)
        log_step = mu - math.sqrt(m) / gamma * h_bar
        w = m ** (-kappa)
        log_bar = w * log_step + (1 - w) * log_bar
        step = math.exp(log_step)
    return x, math.exp(log_bar)


def hmc_sample(
    data: Optional[Dataset],
    prior: Prior,
    model: Model,
    c: float = 1.6,
    config: Optional[HmcConfig] = None,
    init=None,
    p: Optional[int] = None,
) -> Chain:
    """Sample the posterior of ``(beta, eta)``.

    With ``config.adapt`` and no ``mass_diag``, a pilot run of
    ``adapt_iterations`` at the configured step size (unit mass) sets the
    diagonal mass to the inverse pilot variances, after which the step size
    is tuned by dual averaging.  The first ``burn_in_fraction`` of the main
    run is discarded.  ``data=None`` samples the prior; then ``p`` gives the
    number of coefficients.
    """
    config = config or HmcConfig()
    model = Model(model)
    if data is not None and data.n < data.p:
        raise ValueError("flat coefficient prior needs n >= p for a proper posterior")
    rng = make_rng(config.seed)

    def logp_grad(t):
        with np.errstate(all="ignore"):
            return log_posterior_and_grad(t, data, prior, model, c)

    if init is None:
        if data is None:
            init = np.append(np.zeros(p or 0), math.log(prior.alpha * prior.theta))
        else:
            init = find_map(data, prior, model, c)
    x = np.asarray(init, dtype=float)

    step = config.step_size
    mass = config.mass_diag
    if config.adapt and mass is None:
        pilot, _, _, _ = run_hmc(logp_grad, x, step, config.leapfrog_steps, config.adapt_iterations, rng)
        half = pilot[len(pilot) // 2:]
        var = np.var(half, axis=0)
        mass = 1.0 / np.where(var > 0, var, 1.0)
        x = pilot[-1]
        # posterior scales are ~1 in the whitened metric
        x, step = _tune_step(logp_grad, x, 1.0 / config.leapfrog_steps, config.leapfrog_steps, mass, rng,
                             max(200, config.adapt_iterations // 5), config.target_accept)
    draws, trace, accepted, div = run_hmc(logp_grad, x, step, config.leapfrog_steps, config.iterations, rng, mass)
    burn = int(math.floor(config.burn_in_fraction * config.iterations))
    return Chain(
        draws=draws[burn:],
        accept_rate=accepted / config.iterations,
        log_post_trace=trace[burn:],
        seed=config.seed,
        divergences=div,
        step_size=step,
        mass_diag=None if mass is None else np.asarray(mass),
    )


# --------------------------------------------------------------------------
# summaries


def hpd_interval(samples, prob: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing ``ceil(prob * m)`` of the sorted samples.

    Ties in width resolve to the smallest lower bound.
    """
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    m = s.size
    if m < 10:
        raise ValueError("need at least 10 samples for an HPD interval")
    if not 0 < prob < 1:
        raise ValueError("prob must lie in (0, 1)")
    k = int(math.ceil(prob * m))
    widths = s[k - 1:] - s[: m - k + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + k - 1])


def bayesian_pearson(data: Dataset, chain: Chain) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means of the Pearson residuals and of the means ``mu_i``."""
    if chain.draws.shape[0] == 0:
        raise ValueError("empty chain")
    beta = chain.beta
    nu = chain.nu
    lin = beta @ data.x.T  # draws x n
    mu = np.exp(lin)
    resid = np.sqrt(nu)[:, None] * np.expm1(data.log_y[None, :] - lin)
    return resid.mean(axis=0), mu.mean(axis=0)


def mcse(x) -> float:
    """Monte Carlo standard error of a mean by batch means."""
    x = np.asarray(x, dtype=float)
    m = x.size
    b = int(math.sqrt(m))
    k = m // b
    means = x[: k * b].reshape(k, b).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(k))


def summarize(chain: Chain, names: Optional[Sequence[str]] = None, prob: float = 0.95) -> list[dict]:
    """Posterior mean, SD and HPD interval for each ``beta_j`` and for ``nu``."""
    p = chain.draws.shape[1] - 1
    names = list(names) if names is not None else [f"beta{j + 1}" for j in range(p)]
    rows = []
    columns = [chain.beta[:, j] for j in range(p)] + [chain.nu]
    for name, col in zip(names + ["nu"], columns):
        lo, hi = hpd_interval(col, prob)
        rows.append({"parameter": name, "mean": float(col.mean()), "sd": float(col.std(ddof=1)),
                     "hpd_lower": lo, "hpd_upper": hi})
    return rows
