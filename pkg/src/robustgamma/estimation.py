"""Frequentist fits: gamma GLM MLE, robust heavy-tailed MLE and clipped-score M-estimation.

All likelihood fits optimize over ``(beta, eta)`` with ``eta = log(nu)`` and
``nu`` confined to ``[NU_MIN, NU_MAX]``.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize

from .data import Dataset
from .density import (
    RobustGammaParams,
    compute_tail_constants,
    gamma_grad_terms,
    gamma_loglik,
    log_density_from_log_z,
    log_gamma_mid,
    robust_grad_terms,
    robust_loglik,
)

logger = logging.getLogger(__name__)

NU_MIN = 1e-4
NU_MAX = 1e6
ETA_BOUNDS = (math.log(NU_MIN), math.log(NU_MAX))

GRAD_TOL = 1e-8
MAX_ITER = 500


class Method(str, enum.Enum):
    GAMMA_MLE = "GammaMLE"
    ROBUST_MLE = "RobustMLE"
    CANTONI = "Cantoni"


@dataclass
class FitResult:
    beta: np.ndarray
    nu: float
    method: Method
    log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float
    c: Optional[float] = None
    at_boundary: bool = False
    kink_certified: bool = False
    message: str = ""

    @property
    def params(self) -> RobustGammaParams:
        return RobustGammaParams(self.beta, self.nu, self.c if self.c is not None else math.inf)

    @property
    def theta(self) -> np.ndarray:
        """Estimates stacked as ``(beta..., nu)``."""
        return np.append(self.beta, self.nu)

    @property
    def ok(self) -> bool:
        """Usable estimate: converged, or a kink optimum certified by pattern search."""
        return bool(np.all(np.isfinite(self.theta))) and (self.converged or self.kink_certified)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "beta": [float(b) for b in self.beta],
            "nu": float(self.nu),
            "c": self.c,
            "log_likelihood": float(self.log_likelihood),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "gradient_norm": float(self.gradient_norm),
            "at_boundary": bool(self.at_boundary),
            "kink_certified": bool(self.kink_certified),
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            nu=float(d["nu"]),
            method=Method(d["method"]),
            log_likelihood=float(d["log_likelihood"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            gradient_norm=float(d["gradient_norm"]),
            c=None if d.get("c") is None else float(d["c"]),
            at_boundary=bool(d.get("at_boundary", False)),
            kink_certified=bool(d.get("kink_certified", False)),
            message=d.get("message", ""),
        )

    def __eq__(self, other):
        if not isinstance(other, FitResult):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# --------------------------------------------------------------------------
# objectives in the (beta, eta) parameterization


def gamma_objective(theta, data: Dataset):
    beta, eta = theta[:-1], theta[-1]
    nu = math.exp(eta)
    ll = gamma_loglik(beta, nu, data.x, data.log_y)
    d_beta, d_eta = gamma_grad_terms(data.log_y - data.x @ beta, data.x, nu)
    return ll, np.append(d_beta.sum(axis=0), d_eta.sum())


def robust_objective(theta, data: Dataset, c: float):
    beta, eta = theta[:-1], theta[-1]
    nu = math.exp(eta)
    tails = compute_tail_constants(nu, c)
    ll = robust_loglik(beta, nu, c, data.x, data.log_y, tails)
    g = robust_grad_terms(data.log_y - data.x @ beta, data.x, nu, c, tails)
    return ll, np.append(g.d_beta.sum(axis=0), g.d_eta.sum())


def _projected_grad_norm(theta, grad) -> float:
    g = grad.copy()
    lo, hi = ETA_BOUNDS
    if theta[-1] <= lo + 1e-12 and g[-1] < 0:
        g[-1] = 0.0
    if theta[-1] >= hi - 1e-12 and g[-1] > 0:
        g[-1] = 0.0
    return float(np.max(np.abs(g)))


def _safe(objective):
    def wrapped(theta):
        try:
            ll, grad = objective(theta)
        except (FloatingPointError, OverflowError, ValueError):
            return math.inf, np.zeros_like(theta)
        if not math.isfinite(ll) or not np.all(np.isfinite(grad)):
            return math.inf, np.zeros_like(theta)
        return -ll, -grad

    return wrapped


def _newton_polish(objective, theta, tol, max_steps=25):
    """Newton steps with a finite-difference Hessian of the analytic gradient.

    Returns ``(theta, ll, grad, steps, stalled)``; ``stalled`` is set when
    the iteration stopped on negligible progress rather than on a failed
    direction, which is how a kink in the gradient shows up.
    """
    ll, grad = objective(theta)
    steps = 0
    flat = 0
    stuck = 0
    best_g = math.inf
    stalled = False
    for steps in range(1, max_steps + 1):
        if _projected_grad_norm(theta, grad) <= tol:
            break
        k = theta.size
        hess = np.empty((k, k))
        for j in range(k):
            h = 1e-5 * max(1.0, abs(theta[j]))
            e = np.zeros(k)
            e[j] = h
            hess[:, j] = (objective(theta + e)[1] - objective(theta - e)[1]) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        try:
            direction = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(direction)) or direction @ grad <= 0:
            break
        t = 1.0
        improved = False
        while t > 1e-8:
            cand = theta + t * direction
            cand[-1] = min(max(cand[-1], ETA_BOUNDS[0]), ETA_BOUNDS[1])
            try:
                cll, cgrad = objective(cand)
            except (FloatingPointError, OverflowError, ValueError):
                cll = -math.inf
            shrinks = math.isfinite(cll) and np.max(np.abs(cgrad)) < 0.5 * np.max(np.abs(grad))
            if math.isfinite(cll) and (cll > ll or (shrinks and cll >= ll - 1e-12 * abs(ll))):
                gain = cll - ll if not shrinks else math.inf
                theta, ll, grad = cand, cll, cgrad
                improved = True
                break
            t *= 0.5
        if not improved:
            stalled = True
            break
        flat = flat + 1 if gain <= 1e-10 * max(1.0, abs(ll)) else 0
        g_now = float(np.max(np.abs(grad)))
        stuck = 0 if g_now < 0.5 * best_g else stuck + 1
        best_g = min(best_g, g_now)
        if flat >= 2 or stuck >= 4:
            stalled = True
            break
    return theta, ll, grad, steps, stalled


def _pattern_search(fun: Callable[[np.ndarray], float], theta, start=1e-3, final=1e-6):
    """Compass search maximizing ``fun``; certified when no poll at ``final`` improves."""
    best = fun(theta)
    step = start
    evals = 0
    while True:
        improved = False
        for j in range(theta.size):
            for sign in (1.0, -1.0):
                cand = theta.copy()
                cand[j] += sign * step * max(1.0, abs(theta[j]))
                if j == theta.size - 1 and not ETA_BOUNDS[0] <= cand[j] <= ETA_BOUNDS[1]:
                    continue
                val = fun(cand)
                evals += 1
                if val > best:
                    theta, best, improved = cand, val, True
        if not improved:
            if step <= final:
                return theta, best, True, evals
            step = max(step / 4.0, final)
        if evals > 20_000:
            return theta, best, False, evals


def _maximize(objective, theta0, tol=GRAD_TOL, max_iter=MAX_ITER):
    """Damped Newton from ``theta0``; L-BFGS-B then Newton again if Newton fails.

    Returns ``(theta, ll, grad, iterations, stalled)``.
    """
    bounds = [(None, None)] * (theta0.size - 1) + [ETA_BOUNDS]
    theta0 = theta0.copy()
    theta0[-1] = min(max(theta0[-1], ETA_BOUNDS[0]), ETA_BOUNDS[1])
    try:
        theta, ll, grad, steps, stalled = _newton_polish(objective, theta0, tol, max_steps=50)
        if math.isfinite(ll) and (stalled or _projected_grad_norm(theta, grad) <= tol):
            return theta, ll, grad, steps, stalled
    except (FloatingPointError, OverflowError, ValueError):
        theta, steps = theta0, 0
    res = optimize.minimize(
        _safe(objective),
        theta,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15, "maxcor": 20},
    )
    theta, ll, grad, more, stalled = _newton_polish(objective, res.x, tol)
    return theta, ll, grad, steps + int(res.nit) + more, stalled


# --------------------------------------------------------------------------
# starting values


def _initial_theta(data: Dataset) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(data.x, data.log_y, rcond=None)
    mu = np.exp(data.x @ beta)
    # method of moments on the multiplicative errors y/mu
    ratio = data.y / mu
    beta[0:1] += math.log(np.mean(ratio)) if np.allclose(data.x[:, 0], 1.0) else 0.0
    ratio = ratio / np.mean(ratio)
    var = float(np.var(ratio))
    nu = 1.0 / var if var > 0 else NU_MAX
    nu = min(max(nu, NU_MIN * 10), NU_MAX / 10)
    return np.append(beta, math.log(nu))


def _boundary(theta) -> bool:
    return theta[-1] <= ETA_BOUNDS[0] + 1e-9 or theta[-1] >= ETA_BOUNDS[1] - 1e-9


# --------------------------------------------------------------------------
# estimators


def fit_gamma_mle(data: Dataset, tol: float = GRAD_TOL, max_iter: int = MAX_ITER) -> FitResult:
    """Maximum likelihood for the gamma GLM with log link."""

    def objective(theta):
        return gamma_objective(theta, data)

    theta, ll, grad, iters, _ = _maximize(objective, _initial_theta(data), tol, max_iter)
    gnorm = _projected_grad_norm(theta, grad)
    at_bound = _boundary(theta)
    converged = gnorm <= tol
    message = "nu reached its upper guard" if theta[-1] >= ETA_BOUNDS[1] - 1e-9 else ""
    if at_bound and not message:
        message = "nu reached its lower guard"
    return FitResult(
        beta=theta[:-1].copy(),
        nu=math.exp(theta[-1]),
        method=Method.GAMMA_MLE,
        log_likelihood=ll,
        converged=converged,
        iterations=iters,
        gradient_norm=gnorm,
        at_boundary=at_bound,
        message=message,
    )


def _twins(data: Dataset, i: int) -> np.ndarray:
    """Indices of the rows identical to row ``i`` (including ``i``)."""
    same = (data.log_y == data.log_y[i]) & np.all(data.x == data.x[i], axis=1)
    return np.flatnonzero(same)


def _pinned_objective(theta, data: Dataset, c: float, pins):
    """Robust log-likelihood with the observations in ``pins`` held on the central branch.

    Rows identical to a pinned row share its constraint and are pinned too.
    """
    beta, eta = theta[:-1], theta[-1]
    nu = math.exp(eta)
    tails = compute_tail_constants(nu, c)
    lin = data.x @ beta
    log_z = data.log_y - lin
    idx = np.concatenate([_twins(data, i) for i, _ in pins])
    terms = log_density_from_log_z(log_z, tails)
    terms[idx] = log_gamma_mid(log_z[idx], nu)
    g = robust_grad_terms(log_z, data.x, nu, c, tails)
    d_beta, d_eta = gamma_grad_terms(log_z[idx], data.x[idx], nu)
    g.d_beta[idx] = d_beta
    g.d_eta[idx] = d_eta
    return float(terms.sum() - lin.sum()), np.append(g.d_beta.sum(axis=0), g.d_eta.sum())


def _switch_offset(eta: float, c: float, side: int):
    """``log z`` of a switch point and its first two derivatives in ``eta``."""
    a = side * c * math.exp(-eta / 2)
    return math.log1p(a), -a / (2 * (1 + a)), a / (4 * (1 + a) ** 2)


def _kink_candidates(theta, data: Dataset, c: float, count: int = 3):
    """Observations closest (in ``log z``) to a switch point, with the side."""
    tails = compute_tail_constants(math.exp(theta[-1]), c)
    log_z = data.log_y - data.x @ theta[:-1]
    gaps = [(abs(lz - tails.log_z_r), i, 1) for i, lz in enumerate(log_z)]
    if tails.has_left:
        gaps += [(abs(lz - tails.log_z_l), i, -1) for i, lz in enumerate(log_z)]
    gaps.sort()
    out: list[tuple[int, int]] = []
    for _, i, side in gaps:
        if len(out) == count:
            break
        # identical rows form one constraint
        if not any(side == s and i in _twins(data, j) for j, s in out):
            out.append((i, side))
    return out


def _kink_is_maximum(theta, data: Dataset, c: float, pins, mult, jac_h, slack: float = 1e-8) -> bool:
    """First-order test that a pinned stationary point is a local maximum.

    With ``grad F_mid = -sum_j mult_j grad h_j`` and the tail-minus-central
    jump of observation ``j`` equal to ``kappa_j grad h_j``, every one-sided
    directional derivative is non-positive iff ``side_j * mult_j <= 0`` and
    ``side_j * (kappa_j - mult_j) <= 0`` for all ``j``.
    """
    nu = math.exp(theta[-1])
    idx = [i for i, _ in pins]
    sides = np.array([side for _, side in pins], dtype=float)
    log_z = data.log_y[idx] - data.x[idx] @ theta[:-1]
    # nudge just across the switch point so the tail formulas are used
    nudged = log_z + sides * 1e-12 * np.maximum(1.0, np.abs(log_z))
    tail = robust_grad_terms(nudged, data.x[idx], nu, c)
    d_beta, d_eta = gamma_grad_terms(log_z, data.x[idx], nu)
    copies = np.array([_twins(data, i).size for i in idx], dtype=float)
    jump = copies[:, None] * np.column_stack([tail.d_beta - d_beta, tail.d_eta - d_eta])
    kappa = np.einsum("ij,ij->i", jump, jac_h) / np.einsum("ij,ij->i", jac_h, jac_h)
    scale = slack * (1.0 + np.abs(mult) + np.abs(kappa))
    return bool(np.all(sides * mult <= scale) and np.all(sides * (kappa - mult) <= scale))


def _kink_newton(data: Dataset, c: float, theta, pins, tol: float, max_steps: int = 40):
    """Newton on the optimality conditions with each ``(i, side)`` in ``pins`` on a switch point.

    Along the surface ``log z_i = log z_switch(eta)`` both branches agree, so
    the central-branch extension is smooth there.  Returns the solution or
    ``None`` if the iteration fails.
    """
    k, m = theta.size, len(pins)
    if m > k:
        return None
    x_p = data.x[[i for i, _ in pins]]
    log_y_p = data.log_y[[i for i, _ in pins]]
    best = math.inf
    stuck = 0
    for _ in range(max_steps):
        if any(side < 0 for _, side in pins) and c * math.exp(-theta[-1] / 2) >= 1.0:
            return None
        _, grad = _pinned_objective(theta, data, c, pins)
        offsets = [_switch_offset(theta[-1], c, side) for _, side in pins]
        h = log_y_p - x_p @ theta[:-1] - np.array([o[0] for o in offsets])
        jac_h = np.column_stack([-x_p, [-o[1] for o in offsets]])
        mult, *_ = np.linalg.lstsq(jac_h.T, -grad, rcond=None)
        resid = np.max(np.abs(grad + jac_h.T @ mult))
        if np.max(np.abs(h)) < 1e-12 and resid <= tol:
            return theta if _kink_is_maximum(theta, data, c, pins, mult, jac_h) else None
        resid = max(resid, np.max(np.abs(h)))
        stuck = 0 if resid < 0.5 * best else stuck + 1
        best = min(best, resid)
        if stuck >= 3:
            return None
        hess = np.empty((k, k))
        for j in range(k):
            step = 1e-5 * max(1.0, abs(theta[j]))
            e = np.zeros(k)
            e[j] = step
            up = _pinned_objective(theta + e, data, c, pins)[1]
            down = _pinned_objective(theta - e, data, c, pins)[1]
            hess[:, j] = (up - down) / (2 * step)
        hess = 0.5 * (hess + hess.T)
        hess[-1, -1] -= sum(mu * o[2] for mu, o in zip(mult, offsets))
        kkt = np.zeros((k + m, k + m))
        kkt[:k, :k] = hess
        kkt[:k, k:] = jac_h.T
        kkt[k:, :k] = jac_h
        try:
            sol = np.linalg.solve(kkt, np.append(-grad, -h))
        except np.linalg.LinAlgError:
            return None
        theta = theta + sol[:k]
        if not np.all(np.isfinite(theta)) or not ETA_BOUNDS[0] < theta[-1] < ETA_BOUNDS[1]:
            return None
    return None


def _solve_kink(objective, data: Dataset, c: float, theta, ll, grad, tol):
    """Try small sets of switch-point constraints near ``theta``.

    Returns ``(theta, ll, grad, found)``; the input point is returned
    unchanged when no pinned local maximum at least as good is found.
    """
    if not math.isfinite(ll):
        return theta, ll, grad, False
    near = _kink_candidates(theta, data, c)
    for size in range(1, min(len(near), theta.size) + 1):
        for pins in itertools.combinations(near, size):
            cand = _kink_newton(data, c, theta, list(pins), tol)
            if cand is None:
                continue
            try:
                cll, cgrad = objective(cand)
            except (FloatingPointError, OverflowError, ValueError):
                continue
            if cll >= ll - 1e-9 * max(1.0, abs(ll)):
                return cand, cll, cgrad, True
    return theta, ll, grad, False


def fit_robust_mle(
    data: Dataset,
    c: float = 1.6,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
    start: Optional[FitResult] = None,
) -> FitResult:
    """Maximum likelihood under the log-Pareto-tailed model.

    Starts from the gamma GLM MLE (or ``start``).  The objective is
    continuous but has gradient jumps where an observation crosses a switch
    point; if the gradient cannot be driven below ``tol`` a compass search
    with final step ``1e-6`` certifies the optimum instead.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    start = start or fit_gamma_mle(data, tol, max_iter)

    def objective(theta):
        return robust_objective(theta, data, c)

    def value(t):
        try:
            v = objective(t)[0]
        except (FloatingPointError, OverflowError, ValueError):
            return -math.inf
        return v if math.isfinite(v) else -math.inf

    theta0 = np.append(start.beta, math.log(min(max(start.nu, NU_MIN), NU_MAX)))
    try:
        theta, ll, grad, iters, _ = _newton_polish(objective, theta0, tol, max_steps=50)
    except (FloatingPointError, OverflowError, ValueError):
        theta, ll, grad, iters = theta0, -math.inf, np.full_like(theta0, math.inf), 0
    gnorm = _projected_grad_norm(theta, grad) if math.isfinite(ll) else math.inf
    certified = pinned = False
    message = ""
    if gnorm > tol:
        # most stalls are an optimum with one observation sitting on a switch point
        theta, ll, grad, pinned = _solve_kink(objective, data, c, theta, ll, grad, tol)
        if not pinned:
            theta, ll, grad, more, _ = _maximize(objective, theta, tol, max_iter)
            iters += more
            if _projected_grad_norm(theta, grad) > tol:
                theta, ll, grad, pinned = _solve_kink(objective, data, c, theta, ll, grad, tol)
        gnorm = _projected_grad_norm(theta, grad)
    if gnorm > tol:
        theta, ll, certified, evals = _pattern_search(value, theta)
        _, grad = objective(theta)
        if not pinned:
            # the polished point usually identifies the observations on switch points
            theta, ll, grad, pinned = _solve_kink(objective, data, c, theta, ll, grad, tol)
            if pinned:
                theta, ll, certified, evals = _pattern_search(value, theta)
                _, grad = objective(theta)
        gnorm = _projected_grad_norm(theta, grad)
        if gnorm > tol:
            # a polish may leave the kink; re-try Newton from the polished point
            theta, ll, grad, steps, _ = _newton_polish(objective, theta, tol, max_steps=5)
            gnorm = _projected_grad_norm(theta, grad)
            iters += steps
        message = "optimum at a gradient kink, certified by pattern search" if certified else "pattern search did not certify"
    return FitResult(
        beta=theta[:-1].copy(),
        nu=math.exp(theta[-1]),
        method=Method.ROBUST_MLE,
        log_likelihood=ll,
        converged=gnorm <= tol,
        iterations=iters,
        gradient_norm=gnorm,
        c=float(c),
        at_boundary=_boundary(theta),
        kink_certified=certified and gnorm > tol,
        message=message,
    )


def huber_kappa(c: float) -> float:
    """``E[min(Z^2, c^2)]`` for standard normal ``Z``."""
    phi = math.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)
    tail = 0.5 * math.erfc(c / math.sqrt(2))
    return (1.0 - 2.0 * tail) - 2.0 * c * phi + 2.0 * c * c * tail


def cantoni_score(beta, nu: float, data: Dataset, c: float):
    """Summed clipped score ``sum_i Psi(y_i, x_i, beta, nu)`` and its Jacobian in beta."""
    z = np.exp(data.log_y - data.x @ beta)
    root = math.sqrt(nu)
    r = root * (z - 1.0)
    psi = np.clip(r, -c, c)
    score = root * (psi @ data.x)
    active = np.abs(r) < c
    jac = -nu * (data.x[active].T * z[active]) @ data.x[active]
    return score, jac


def _robust_nu(beta, data: Dataset, c: float) -> float:
    # solve mean(min(nu e^2, c^2)) = kappa(c); left side is increasing in nu
    e2 = (np.exp(data.log_y - data.x @ beta) - 1.0) ** 2
    kappa = huber_kappa(c)

    def gap(log_nu):
        return float(np.mean(np.minimum(math.exp(log_nu) * e2, c * c))) - kappa

    lo, hi = ETA_BOUNDS
    if gap(hi) <= 0:
        return NU_MAX
    if gap(lo) >= 0:
        return NU_MIN
    return math.exp(optimize.brentq(gap, lo, hi, xtol=1e-12))


def fit_cantoni(
    data: Dataset,
    c: float = 1.345,
    nu: Union[float, str] = "estimate",
    tol: float = GRAD_TOL,
    max_iter: int = 200,
    start: Optional[FitResult] = None,
) -> FitResult:
    """Clipped Pearson-residual M-estimator of the gamma GLM coefficients.

    Solves ``sum_i sqrt(nu) psi_c(r_i) x_i = 0`` with unit weights and no
    Fisher-consistency correction.  ``nu`` is either held fixed or, with
    ``nu="estimate"``, re-estimated after every coefficient update by
    matching ``mean(min(r_i^2, c^2))`` to its normal-model expectation.
    ``gradient_norm`` reports the sup-norm of the estimating equation.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    estimate_nu = isinstance(nu, str)
    if estimate_nu and nu != "estimate":
        raise ValueError(f"nu must be a positive number or 'estimate', got {nu!r}")
    if not estimate_nu and not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")

    start = start or fit_gamma_mle(data)
    beta = start.beta.copy()
    cur_nu = _robust_nu(beta, data, c) if estimate_nu else float(nu)
    xtx_inv = np.linalg.pinv(data.x.T @ data.x)
    converged = False
    it = 0
    norm = math.inf
    for it in range(1, max_iter + 1):
        score, jac = cantoni_score(beta, cur_nu, data, c)
        norm = float(np.max(np.abs(score)))
        if norm <= tol * max(1.0, math.sqrt(cur_nu)):
            if not estimate_nu:
                converged = True
                break
            new_nu = _robust_nu(beta, data, c)
            if abs(math.log(new_nu / cur_nu)) <= 1e-10:
                converged = True
                break
            cur_nu = new_nu
            continue
        step = None
        if np.linalg.cond(jac) < 1e12:
            step = -np.linalg.solve(jac, score)
        fixed_point = xtx_inv @ (np.clip(math.sqrt(cur_nu) * (np.exp(data.log_y - data.x @ beta) - 1.0), -c, c) @ data.x) / math.sqrt(cur_nu)
        accepted = False
        for cand_step in ((step,) if step is not None else ()) + (fixed_point,):
            t = 1.0
            while t > 1e-6:
                cand = beta + t * cand_step
                cscore, _ = cantoni_score(cand, cur_nu, data, c)
                if np.max(np.abs(cscore)) < norm:
                    beta = cand
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
        if not accepted:
            break
        if estimate_nu:
            cur_nu = _robust_nu(beta, data, c)

    score, _ = cantoni_score(beta, cur_nu, data, c)
    norm = float(np.max(np.abs(score)))
    return FitResult(
        beta=beta,
        nu=cur_nu,
        method=Method.CANTONI,
        log_likelihood=gamma_loglik(beta, cur_nu, data.x, data.log_y),
        converged=converged,
        iterations=it,
        gradient_norm=norm,
        c=float(c),
        at_boundary=cur_nu in (NU_MIN, NU_MAX),
        message="" if converged else "estimating equation did not converge",
    )


def pearson_residuals(data: Dataset, beta, nu: float) -> np.ndarray:
    """``sqrt(nu) (y_i - mu_i) / mu_i`` with ``mu_i = exp(x_i @ beta)``."""
    return math.sqrt(nu) * np.expm1(data.log_y - data.x @ np.asarray(beta, dtype=float))
