"""Log-Pareto-tailed gamma density and its GLM log-likelihood terms.

The density of ``Z = Y / mu`` coincides with the gamma density of mean 1 and
shape ``nu`` on ``[z_l, z_r]`` and is continued by log-Pareto tails,
``f(z) = f_mid(z_r) (z_r / z) (log z_r / log z) ** lambda_r`` on the right
(and the mirrored form on the left).  The tail exponents are chosen so that
each tail carries exactly the gamma mass it replaces.

Everything is computed in log space, with ``log z = log y - x @ beta`` taken
directly from the data so that ``exp`` is only ever applied in the central
branch.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special as sc

from .special import (
    LOG_SQRT_2PI,
    DomainError,
    log_gamma_cdf,
    log_gamma_sf,
)


class Region(enum.IntEnum):
    LEFT = -1
    MID = 0
    RIGHT = 1


@dataclass(frozen=True)
class RobustGammaParams:
    beta: np.ndarray
    nu: float
    c: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if not np.all(np.isfinite(beta)):
            raise DomainError("beta must be finite")
        if not (self.nu > 0 and self.c > 0):
            raise DomainError(f"nu and c must be positive, got nu={self.nu}, c={self.c}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "c", float(self.c))

    @property
    def eta(self) -> float:
        return math.log(self.nu)


@dataclass(frozen=True)
class TailConstants:
    """Switch points and tail exponents for a given ``(nu, c)``.

    ``lambda_l`` (and the other left-tail fields) is ``None`` when
    ``z_l == 0``, i.e. when the left tail is never used.
    """

    nu: float
    c: float
    z_l: float
    z_r: float
    lambda_l: Optional[float]
    lambda_r: float
    f_mid_at_zl: float
    f_mid_at_zr: float
    log_z_l: Optional[float]
    log_z_r: float
    log_f_mid_zl: Optional[float]
    log_f_mid_zr: float
    mass_left: float
    mass_right: float

    @property
    def has_left(self) -> bool:
        return self.z_l > 0


@dataclass(frozen=True)
class DensityEvaluation:
    value: float
    log_value: float
    region: Region


def _stirlerr(nu: float) -> float:
    if nu >= 10.0:
        inv = 1.0 / nu
        inv2 = inv * inv
        return inv * (1 / 12 - inv2 * (1 / 360 - inv2 * (1 / 1260 - inv2 * (1 / 1680 - inv2 / 1188))))
    return math.lgamma(nu) - (nu - 0.5) * math.log(nu) + nu - LOG_SQRT_2PI


def _log_fmid_const(nu: float) -> float:
    # nu*log(nu) - lgamma(nu) - nu, rearranged to avoid cancellation at large nu
    return 0.5 * math.log(nu) - LOG_SQRT_2PI - _stirlerr(nu)


def _log1p_minus_expm1(t):
    """``t - exp(t) + 1`` with a series near zero (vectorized)."""
    t = np.asarray(t, dtype=float)
    out = -(np.expm1(t) - t)
    small = np.abs(t) < 1e-2
    if np.any(small):
        ts = t[small] if t.ndim else t
        series = ts * ts * (1 / 2 + ts * (1 / 6 + ts * (1 / 24 + ts * (1 / 120 + ts * (1 / 720 + ts / 5040)))))
        if t.ndim:
            out[small] = -series
        else:
            out = -series
    return out


def log_gamma_mid(log_z, nu: float):
    """Log of the gamma density with mean 1 and shape ``nu``, given ``log z``."""
    log_z = np.asarray(log_z, dtype=float)
    return nu * _log1p_minus_expm1(log_z) - log_z + _log_fmid_const(nu)


def _log_gamma_mid_scalar(log_z: float, nu: float) -> float:
    if abs(log_z) < 1e-2:
        t = log_z
        core = -t * t * (1 / 2 + t * (1 / 6 + t * (1 / 24 + t * (1 / 120 + t * (1 / 720 + t / 5040)))))
    else:
        core = log_z - math.expm1(log_z)
    return nu * core - log_z + _log_fmid_const(nu)


def _log_sf(z: float, nu: float) -> float:
    q = float(sc.gammaincc(nu, nu * z))
    return math.log(q) if q > 1e-280 else log_gamma_sf(z, nu)


def _log_cdf(z: float, nu: float) -> float:
    p = float(sc.gammainc(nu, nu * z))
    return math.log(p) if p > 1e-280 else log_gamma_cdf(z, nu)


def compute_tail_constants(nu: float, c: float) -> TailConstants:
    """Switch points, tail exponents and tail masses for ``(nu, c)``."""
    if not (nu > 0 and c > 0) or math.isnan(nu) or math.isnan(c):
        raise DomainError(f"nu and c must be positive, got nu={nu}, c={c}")
    return _tail_constants(float(nu), float(c))


@functools.lru_cache(maxsize=4096)
def _tail_constants(nu: float, c: float) -> TailConstants:
    step = c / math.sqrt(nu)
    z_r = 1.0 + step
    # log of the stored switch point, so region tests agree with z itself
    log_z_r = math.log(z_r)
    log_f_zr = _log_gamma_mid_scalar(log_z_r, nu)
    log_sf = _log_sf(z_r, nu)
    lambda_r = 1.0 + math.exp(log_f_zr + math.log(log_z_r) + log_z_r - log_sf)

    if nu > 1.0 and step < 1.0:
        z_l = 1.0 - step
        log_z_l = math.log(z_l)
        log_f_zl = _log_gamma_mid_scalar(log_z_l, nu)
        log_cdf = _log_cdf(z_l, nu)
        lambda_l = 1.0 + math.exp(log_f_zl + math.log(-log_z_l) + log_z_l - log_cdf)
        f_zl = math.exp(log_f_zl)
        mass_left = math.exp(log_cdf)
    else:
        z_l, log_z_l, log_f_zl, lambda_l, f_zl, mass_left = 0.0, None, None, None, 0.0, 0.0

    return TailConstants(
        nu=nu,
        c=c,
        z_l=z_l,
        z_r=z_r,
        lambda_l=lambda_l,
        lambda_r=lambda_r,
        f_mid_at_zl=f_zl,
        f_mid_at_zr=math.exp(log_f_zr),
        log_z_l=log_z_l,
        log_z_r=log_z_r,
        log_f_mid_zl=log_f_zl,
        log_f_mid_zr=log_f_zr,
        mass_left=mass_left,
        mass_right=math.exp(log_sf),
    )


def regions(log_z, tails: TailConstants) -> np.ndarray:
    """Branch of the density used at each ``log z`` (closed central interval)."""
    log_z = np.asarray(log_z, dtype=float)
    out = np.zeros(log_z.shape, dtype=int)
    out[log_z > tails.log_z_r] = Region.RIGHT
    if tails.has_left:
        out[log_z < tails.log_z_l] = Region.LEFT
    return out


def _regions_z(z, tails: TailConstants) -> np.ndarray:
    # same as ``regions`` but decided on z itself, for callers that have it
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape, dtype=int)
    out[z > tails.z_r] = Region.RIGHT
    if tails.has_left:
        out[z < tails.z_l] = Region.LEFT
    return out


def log_density_from_log_z(log_z, tails: TailConstants, reg=None):
    """Vectorized ``log f_{nu,c}(z)`` as a function of ``log z``.

    ``reg`` optionally overrides the branch of each point (see ``regions``).
    """
    log_z = np.asarray(log_z, dtype=float)
    reg = regions(log_z, tails) if reg is None else np.asarray(reg)
    out = np.empty(log_z.shape)
    mid = reg == Region.MID
    out[mid] = log_gamma_mid(log_z[mid], tails.nu)
    right = reg == Region.RIGHT
    if np.any(right):
        lz = log_z[right]
        # tail branches never see log z near 0: z_r > 1 strictly and z_l < 1
        out[right] = (
            tails.log_f_mid_zr
            + tails.log_z_r
            - lz
            + tails.lambda_r * (math.log(tails.log_z_r) - np.log(lz))
        )
    left = reg == Region.LEFT
    if np.any(left):
        lz = log_z[left]
        out[left] = (
            tails.log_f_mid_zl
            + tails.log_z_l
            - lz
            + tails.lambda_l * (math.log(-tails.log_z_l) - np.log(-lz))
        )
    return out


def log_pdf(z, nu: float, c: float, tails: Optional[TailConstants] = None):
    """Vectorized log density of ``f_{nu,c}`` at ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("z must be positive")
    tails = tails or compute_tail_constants(nu, c)
    out = log_density_from_log_z(np.log(z), tails, _regions_z(z, tails))
    return float(out) if out.ndim == 0 else out


def pdf(z: float, nu: float, c: float, tails: Optional[TailConstants] = None) -> DensityEvaluation:
    if not z > 0:
        raise DomainError(f"z must be positive, got {z}")
    tails = tails or compute_tail_constants(nu, c)
    reg = _regions_z(z, tails)
    log_value = float(log_density_from_log_z(math.log(z), tails, reg))
    return DensityEvaluation(
        value=math.exp(log_value),
        log_value=log_value,
        region=Region(int(reg)),
    )


def _linear_predictor(x, beta):
    with np.errstate(over="ignore", invalid="ignore"):
        eta = np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise OverflowError("linear predictor is not finite")
    return eta


def _log_y(y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("responses must be positive")
    return np.log(y)


def log_pdf_response(y, x, params: RobustGammaParams, tails: Optional[TailConstants] = None):
    """``log[f_{nu,c}(y / mu) / mu]`` with ``mu = exp(x @ beta)``.

    ``y`` may be a scalar with ``x`` a vector, or a vector of length ``n``
    with ``x`` an ``n x p`` matrix.
    """
    lin = _linear_predictor(x, params.beta)
    log_z = _log_y(y) - lin
    tails = tails or compute_tail_constants(params.nu, params.c)
    out = log_density_from_log_z(log_z, tails) - lin
    return float(out) if np.ndim(out) == 0 else out


def robust_loglik(beta, nu: float, c: float, x, log_y, tails: Optional[TailConstants] = None) -> float:
    """Total robust log-likelihood; ``log_y`` is precomputed for speed."""
    lin = x @ beta
    tails = tails or compute_tail_constants(nu, c)
    return float(np.sum(log_density_from_log_z(log_y - lin, tails)) - np.sum(lin))


def lambda_derivatives(nu: float, c: float) -> tuple[float, Optional[float]]:
    """Central finite differences of ``lambda_r`` and ``lambda_l`` in ``eta = log nu``."""
    eta = math.log(nu)
    h = 1e-6 * max(1.0, abs(eta))
    up = compute_tail_constants(math.exp(eta + h), c)
    down = compute_tail_constants(math.exp(eta - h), c)
    d_r = (up.lambda_r - down.lambda_r) / (2 * h)
    if up.lambda_l is None or down.lambda_l is None:
        d_l = None
    else:
        d_l = (up.lambda_l - down.lambda_l) / (2 * h)
    return d_r, d_l


@dataclass(frozen=True)
class PointGradient:
    """Per-observation gradient of the log-likelihood in ``(beta, eta)``."""

    d_beta: np.ndarray
    d_eta: np.ndarray
    kink: np.ndarray


def robust_grad_terms(log_z, x, nu: float, c: float, tails: Optional[TailConstants] = None) -> PointGradient:
    """Three-branch gradient of ``log f(y/mu) - log mu`` for each observation.

    ``log_z`` has length ``n`` and ``x`` is ``n x p``.  At a switch point the
    central-branch (one-sided) gradient is returned and ``kink`` is set.
    """
    log_z = np.atleast_1d(np.asarray(log_z, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tails = tails or compute_tail_constants(nu, c)
    eta = math.log(nu)
    psi = float(sc.digamma(nu))
    reg = regions(log_z, tails)
    coef_beta = np.empty(log_z.shape)
    d_eta = np.empty(log_z.shape)

    mid = reg == Region.MID
    z = np.exp(log_z[mid])
    coef_beta[mid] = nu * (z - 1.0)
    d_eta[mid] = nu * (-z + log_z[mid] + eta + 1.0 - psi)

    right = reg == Region.RIGHT
    left = reg == Region.LEFT
    if np.any(right) or np.any(left):
        d_lam_r, d_lam_l = lambda_derivatives(nu, c)
        s = c * math.exp(-eta / 2)  # c / sqrt(nu)
        half = 0.5 * c * math.exp(eta / 2)  # c sqrt(nu) / 2
    if np.any(right):
        lz = log_z[right]
        zr, lzr, lam = tails.z_r, tails.log_z_r, tails.lambda_r
        coef_beta[right] = lam / lz
        d_eta[right] = (
            -half * (1.0 + 1.0 / zr)
            + nu * (lzr + eta - psi)
            + d_lam_r * (math.log(lzr) - np.log(lz))
            - lam / lzr * s / (2.0 * zr)
        )
    if np.any(left):
        lz = log_z[left]
        zl, lzl, lam = tails.z_l, tails.log_z_l, tails.lambda_l
        coef_beta[left] = lam / lz
        d_eta[left] = (
            half * (1.0 + 1.0 / zl)
            + nu * (lzl + eta - psi)
            + d_lam_l * (math.log(-lzl) - np.log(-lz))
            + lam / lzl * s / (2.0 * zl)
        )

    kink = log_z == tails.log_z_r
    if tails.has_left:
        kink |= log_z == tails.log_z_l
    return PointGradient(d_beta=coef_beta[:, None] * x, d_eta=d_eta, kink=kink)


def grad_log_pdf(y, x, params: RobustGammaParams) -> PointGradient:
    """Gradient of :func:`log_pdf_response` in ``(beta, eta = log nu)``.

    Scalar ``y`` with vector ``x`` returns a ``PointGradient`` whose fields
    are a length-``p`` vector, a float and a bool.
    """
    scalar = np.ndim(y) == 0
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    lin = _linear_predictor(x2, params.beta)
    log_z = np.atleast_1d(_log_y(y)) - lin
    g = robust_grad_terms(log_z, x2, params.nu, params.c)
    if scalar:
        return PointGradient(d_beta=g.d_beta[0], d_eta=float(g.d_eta[0]), kink=bool(g.kink[0]))
    return g


def gamma_glm_log_pdf(y, x, beta, nu: float):
    """Classical gamma GLM log-density of ``y`` with log link."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    lin = _linear_predictor(x, beta)
    log_z = _log_y(y) - lin
    out = log_gamma_mid(log_z, nu) - lin
    return float(out) if np.ndim(out) == 0 else out


def gamma_loglik(beta, nu: float, x, log_y) -> float:
    lin = x @ beta
    return float(np.sum(log_gamma_mid(log_y - lin, nu)) - np.sum(lin))


def gamma_grad_terms(log_z, x, nu: float):
    """Per-observation ``(d_beta, d_eta)`` of the gamma GLM log-density."""
    z = np.exp(log_z)
    d_beta = (nu * (z - 1.0))[:, None] * x
    d_eta = nu * (-z + log_z + math.log(nu) + 1.0 - float(sc.digamma(nu)))
    return d_beta, d_eta


def cantoni_g(z, nu: float, c: float):
    """Unnormalized density whose MLE reproduces the clipped-score estimator.

    The central part is the gamma density; beyond ``|sqrt(nu)(z - 1)| = c``
    it decays polynomially, ``z ** (-c sqrt(nu) - 1)`` on the right and
    ``z ** (c sqrt(nu) - 1)`` on the left, with the constants ``a1``, ``a2``
    fixed by continuity.  The left branch is absent when ``c >= sqrt(nu)``.
    """
    if not (nu > 0 and c > 0):
        raise DomainError(f"nu and c must be positive, got nu={nu}, c={c}")
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("z must be positive")
    root = math.sqrt(nu)
    step = c / root
    log_z = np.log(z)
    out = log_gamma_mid(log_z, nu)
    lzr = math.log1p(step)
    right = log_z > lzr
    # -a1 chosen so the right branch meets the gamma density at 1 + c/sqrt(nu)
    neg_a1 = float(log_gamma_mid(lzr, nu)) + (c * root + 1.0) * lzr
    out = np.where(right, (-c * root - 1.0) * log_z + neg_a1, out)
    if step < 1.0:
        lzl = math.log1p(-step)
        left = log_z < lzl
        neg_a2 = float(log_gamma_mid(lzl, nu)) - (c * root - 1.0) * lzl
        out = np.where(left, (c * root - 1.0) * log_z + neg_a2, out)
    out = np.exp(out)
    return float(out) if out.ndim == 0 else out
