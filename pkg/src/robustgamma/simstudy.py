"""Monte Carlo study of the estimators under outlier contamination.

Base datasets follow a gamma GLM with an intercept and one standardized
covariate, ``beta* = (0, 1)`` and ``nu* = 40``.  Contaminated scenarios shift
a random subset of Pearson residuals (and optionally move the affected rows
to a high-leverage covariate value).  Estimators are compared with the gamma
MLE through premium (cost when there are no outliers) and protection (gain
when there are).

Replicate ``r`` at sample size ``n`` draws its base data from the stream
``(seed, n, r, 0)`` and its contamination for scenario ``Sk`` from
``(seed, n, r, k)``, so every scenario reuses the same base datasets.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .data import Dataset
from .estimation import FitResult, fit_cantoni, fit_gamma_mle, fit_robust_mle
from .special import make_rng, sample_gamma

logger = logging.getLogger(__name__)

BETA_TRUE = np.array([0.0, 1.0])
NU_TRUE = 40.0
DEFAULT_C_GRID = tuple(round(1.2 + 0.1 * k, 1) for k in range(9))
CANTONI_C = 1.345
MAX_FAILURE_RATE = 0.02


class ScenarioId(str, enum.Enum):
    S0 = "S0"
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"

    @property
    def index(self) -> int:
        return int(self.value[1:])


# (contamination fraction, residual shift, leverage)
SCENARIOS = {
    ScenarioId.S0: (0.0, 0.0, False),
    ScenarioId.S1: (0.05, 7.0, False),
    ScenarioId.S2: (0.10, 7.0, False),
    ScenarioId.S3: (0.05, 3.0, True),
    ScenarioId.S4: (0.10, 3.0, True),
}


class ScenarioError(ValueError):
    """An inconsistent or unsupported scenario specification."""


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the study.

    ``shift_before_leverage`` selects how rows are moved in the leverage
    scenarios: by default the residual shift uses the mean at the original
    covariate value and the covariate is replaced afterwards; ``False``
    recomputes the mean at the new covariate value before shifting.
    """

    id: ScenarioId
    n: int
    contamination_fraction: float
    shift: float
    leverage: bool
    replicates: int = 1000
    seed: int = 0
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    shift_before_leverage: bool = True

    def __post_init__(self):
        try:
            sid = ScenarioId(self.id)
        except ValueError:
            raise ScenarioError(f"unknown scenario {self.id!r}") from None
        object.__setattr__(self, "id", sid)
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        fraction, shift, leverage = SCENARIOS[sid]
        if (self.contamination_fraction, self.shift, bool(self.leverage)) != (fraction, shift, leverage):
            raise ScenarioError(
                f"{sid.value} requires fraction={fraction}, shift={shift}, leverage={leverage}; "
                f"got {self.contamination_fraction}, {self.shift}, {self.leverage}"
            )
        if self.n not in (20, 40):
            raise ScenarioError(f"n must be 20 or 40, got {self.n}")
        if self.replicates < 1:
            raise ScenarioError("replicates must be positive")
        if self.seed < 0:
            raise ScenarioError("seed must be a nonnegative integer")
        if any(not c > 0 for c in self.c_grid):
            raise ScenarioError("tuning constants must be positive")

    @classmethod
    def standard(cls, scenario, n: int, **kwargs) -> "ScenarioSpec":
        """Spec for a named scenario with its fraction, shift and leverage filled in."""
        try:
            sid = ScenarioId(scenario)
        except ValueError:
            raise ScenarioError(f"unknown scenario {scenario!r}") from None
        fraction, shift, leverage = SCENARIOS[sid]
        return cls(sid, n, fraction, shift, leverage, **kwargs)

    @property
    def contaminated_count(self) -> int:
        # rounding guards against 0.05 * 20 landing a hair above 1
        return math.ceil(round(self.contamination_fraction * self.n, 9))


def standardized_design(n: int) -> np.ndarray:
    """``[1, standardized(1..n)]`` with population standard deviation."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    k = np.arange(1, n + 1, dtype=float)
    return np.column_stack([np.ones(n), (k - k.mean()) / k.std()])


def generate_base(n: int, rng: np.random.Generator) -> Dataset:
    """Outlier-free dataset from the gamma GLM with ``beta*`` and ``nu*``."""
    x = standardized_design(n)
    mu = np.exp(x @ BETA_TRUE)
    return Dataset(x, sample_gamma(rng, NU_TRUE, mu))


def contaminate(data: Dataset, spec: ScenarioSpec, rng: np.random.Generator) -> Dataset:
    """Shift the Pearson residuals of a random subset of rows by ``spec.shift``.

    Residuals use the true parameters, so the modified response is
    ``y + shift * mu / sqrt(nu*)``.  With leverage, the modified rows get the
    covariate value ``1.5 * max_j x_j2``.
    """
    m = spec.contaminated_count
    if m == 0 or (spec.shift == 0 and not spec.leverage):
        return data
    idx = rng.choice(data.n, size=m, replace=False)
    x = data.x.copy()
    y = data.y.copy()
    if spec.leverage:
        new_x2 = 1.5 * np.max(data.x[:, 1])
        if spec.shift_before_leverage:
            mu = np.exp(x[idx] @ BETA_TRUE)
            x[idx, 1] = new_x2
        else:
            x[idx, 1] = new_x2
            mu = np.exp(x[idx] @ BETA_TRUE)
    else:
        mu = np.exp(x[idx] @ BETA_TRUE)
    r = math.sqrt(NU_TRUE) * (y[idx] - mu) / mu
    y[idx] = (r + spec.shift) * mu / math.sqrt(NU_TRUE) + mu
    return Dataset(x, y, data.column_names)


# --------------------------------------------------------------------------
# one replicate


def _estimator_keys(c_grid: Sequence[float]) -> list[tuple[str, Optional[float]]]:
    return [("GammaMLE", None), ("Cantoni", CANTONI_C)] + [("RobustMLE", c) for c in c_grid]


def _fit_all(data: Dataset, c_grid: Sequence[float]) -> dict:
    """Squared errors ``(beta, nu)`` per estimator; ``None`` marks a failed fit."""
    out = {}
    try:
        gamma = fit_gamma_mle(data)
    except Exception as exc:  # noqa: BLE001 - any failure is recorded, not raised
        logger.warning("gamma fit failed: %s", exc)
        gamma = None
    fits: dict = {("GammaMLE", None): gamma}
    try:
        fits[("Cantoni", CANTONI_C)] = fit_cantoni(data, c=CANTONI_C, start=gamma)
    except Exception as exc:  # noqa: BLE001
        logger.warning("Cantoni fit failed: %s", exc)
        fits[("Cantoni", CANTONI_C)] = None
    for c in c_grid:
        try:
            fits[("RobustMLE", c)] = fit_robust_mle(data, c=c, start=gamma)
        except Exception as exc:  # noqa: BLE001
            logger.warning("robust fit (c=%s) failed: %s", c, exc)
            fits[("RobustMLE", c)] = None
    for key, fit in fits.items():
        out[key] = _squared_errors(fit)
    return out


def _squared_errors(fit: Optional[FitResult]):
    if fit is None or not fit.ok:
        return None
    return float(np.sum((fit.beta - BETA_TRUE) ** 2)), (fit.nu - NU_TRUE) ** 2


def run_replicate(n: int, r: int, seed: int, scenarios: Sequence[ScenarioSpec], c_grid: Sequence[float]) -> dict:
    """Errors for S0 and every contaminated scenario on replicate ``r``."""
    base = generate_base(n, make_rng(seed, n, r, 0))
    result = {ScenarioId.S0: _fit_all(base, c_grid)}
    for spec in scenarios:
        if spec.id is ScenarioId.S0:
            continue
        data = contaminate(base, spec, make_rng(seed, n, r, spec.id.index))
        result[spec.id] = _fit_all(data, c_grid)
    return result


def _replicate_task(args):
    return run_replicate(*args)


# --------------------------------------------------------------------------
# aggregation and reports


@dataclass(frozen=True)
class CellResult:
    """Premium and protection of one estimator in one cell for one target."""

    scenario: str
    n: int
    estimator: str
    c: Optional[float]
    target: str
    premium: float
    protection: Optional[float]
    M_gamma: float
    M_R: float
    replicates: int
    failures: int
    valid: bool = True


CSV_COLUMNS = ["scenario", "n", "estimator", "c", "target", "premium", "protection", "M_gamma", "M_R", "replicates", "failures"]


@dataclass
class PremiumProtectionReport:
    rows: list[CellResult]
    config: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.rows])
        if frame.empty:
            frame = pd.DataFrame(columns=CSV_COLUMNS + ["valid"])
        return frame

    def to_csv(self, path=None) -> Optional[str]:
        """Long-format CSV with one row per (scenario, n, estimator, c, target)."""
        frame = self.to_frame()[CSV_COLUMNS]
        return frame.to_csv(path, index=False, float_format="%.17g")

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            row = asdict(r)
            for key in ("premium", "protection", "M_gamma", "M_R"):
                if row[key] is not None and not math.isfinite(row[key]):
                    row[key] = None
            if r.scenario == ScenarioId.S0.value:
                # protection is undefined without contamination
                del row["protection"]
            rows.append(row)
        return {"config": self.config, "cells": rows}

    def to_json(self, path=None) -> Optional[str]:
        text = json.dumps(self.to_dict(), indent=2)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)
        return None

    def cell(self, scenario: str, n: int, estimator: str, c: Optional[float], target: str) -> CellResult:
        for r in self.rows:
            if (r.scenario, r.n, r.estimator, r.target) == (scenario, n, estimator, target) and (
                r.c == c or (r.c is not None and c is not None and math.isclose(r.c, c))
            ):
                return r
        raise KeyError((scenario, n, estimator, c, target))


def _error_measures(errors: list, key, target: int):
    """``M`` for the gamma MLE and for estimator ``key`` over jointly successful replicates."""
    pairs = [(rep[("GammaMLE", None)], rep[key]) for rep in errors]
    ok = [(g[target], e[target]) for g, e in pairs if g is not None and e is not None]
    failures = len(pairs) - len(ok)
    if not ok:
        return math.nan, math.nan, 0, failures
    arr = np.array(ok)
    return math.sqrt(arr[:, 0].mean()), math.sqrt(arr[:, 1].mean()), len(ok), failures


def _relative(a: float, b: float) -> float:
    return (a - b) / b if b > 0 else math.nan


def aggregate(per_replicate: list[dict], n: int, scenarios: Sequence[ScenarioId], c_grid) -> list[CellResult]:
    """Turn per-replicate squared errors into premium/protection rows."""
    rows = []
    baseline = [rep[ScenarioId.S0] for rep in per_replicate]
    for sid in scenarios:
        current = [rep[sid] for rep in per_replicate]
        for estimator, c in _estimator_keys(c_grid)[1:]:
            for t_index, target in enumerate(("beta", "nu")):
                g0, r0, used0, fail0 = _error_measures(baseline, (estimator, c), t_index)
                premium = _relative(r0, g0)
                g, r, used, fail = _error_measures(current, (estimator, c), t_index)
                total = len(current)
                valid = fail <= MAX_FAILURE_RATE * total and fail0 <= MAX_FAILURE_RATE * total
                protection = None if sid is ScenarioId.S0 else (g - r) / g if g > 0 else math.nan
                if not valid:
                    premium = math.nan
                    protection = None if protection is None else math.nan
                rows.append(
                    CellResult(
                        scenario=sid.value,
                        n=n,
                        estimator=estimator,
                        c=c,
                        target=target,
                        premium=premium,
                        protection=protection,
                        M_gamma=g,
                        M_R=r,
                        replicates=used,
                        failures=fail,
                        valid=valid,
                    )
                )
    return rows


def run_study(
    specs: Iterable[ScenarioSpec],
    workers: int = 1,
) -> PremiumProtectionReport:
    """Run several cells, sharing base datasets (and the S0 fits) per ``n``.

    All specs must agree on ``seed``, ``replicates``, ``c_grid`` and the
    leverage reading.  The report always includes the S0 rows.
    """
    specs = list(specs)
    if not specs:
        raise ScenarioError("no scenarios given")
    first = specs[0]
    for s in specs[1:]:
        if (s.seed, s.replicates, s.c_grid, s.shift_before_leverage) != (
            first.seed,
            first.replicates,
            first.c_grid,
            first.shift_before_leverage,
        ):
            raise ScenarioError("scenarios in one study must share seed, replicates, c_grid and leverage reading")
    by_n: dict[int, list[ScenarioSpec]] = {}
    for s in specs:
        by_n.setdefault(s.n, [])
        if s.id not in [t.id for t in by_n[s.n]]:
            by_n[s.n].append(s)

    rows: list[CellResult] = []
    for n, cells in sorted(by_n.items()):
        tasks = [(n, r, first.seed, cells, first.c_grid) for r in range(first.replicates)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                per_rep = list(pool.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
        else:
            per_rep = [_replicate_task(t) for t in tasks]
        ids = [ScenarioId.S0] + sorted({s.id for s in cells if s.id is not ScenarioId.S0}, key=lambda s: s.index)
        rows.extend(aggregate(per_rep, n, ids, first.c_grid))

    config = {
        "seed": first.seed,
        "replicates": first.replicates,
        "c_grid": list(first.c_grid),
        "cantoni_c": CANTONI_C,
        "beta_true": BETA_TRUE.tolist(),
        "nu_true": NU_TRUE,
        "shift_before_leverage": first.shift_before_leverage,
        "cells": sorted({(s.id.value, s.n) for s in specs}),
    }
    return PremiumProtectionReport(rows=rows, config=config)


def run_scenario(spec: ScenarioSpec, workers: int = 1) -> PremiumProtectionReport:
    """Premium and protection for one scenario (plus the S0 rows it relies on)."""
    if spec.replicates < 100:
        raise ScenarioError(f"need at least 100 replicates, got {spec.replicates}")
    return run_study([spec], workers=workers)


# --------------------------------------------------------------------------
# moving outlier


def moving_outlier_sweep(
    c: float = 1.6,
    y_n_grid: Sequence[float] = tuple(np.linspace(6.0, 15.0, 19)),
    seed: int = 0,
    n: int = 20,
    cantoni_c: float = CANTONI_C,
) -> pd.DataFrame:
    """Estimates as the last response moves from the bulk to an outlying value.

    Returns a long table with columns ``y_n, estimator, beta1, beta2, nu,
    converged, flagged``.  Rows with ``estimator == "Reference"`` hold the
    gamma MLE on the data without the moving observation.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    grid = [float(v) for v in y_n_grid]
    if not grid:
        raise ValueError("y_n_grid is empty")
    base = generate_base(n, make_rng(seed))
    reference = fit_gamma_mle(base.subset(slice(0, n - 1)))
    rows = []
    for y_n in grid:
        y = base.y.copy()
        y[-1] = y_n
        data = base.with_response(y)
        fits = {}
        try:
            fits["GammaMLE"] = fit_gamma_mle(data)
        except Exception:  # noqa: BLE001
            fits["GammaMLE"] = None
        start = fits["GammaMLE"]
        for name, fitter in (
            ("Cantoni", lambda: fit_cantoni(data, c=cantoni_c, start=start)),
            ("RobustMLE", lambda: fit_robust_mle(data, c=c, start=start)),
        ):
            try:
                fits[name] = fitter()
            except Exception:  # noqa: BLE001
                fits[name] = None
        fits["Reference"] = reference
        for name, fit in fits.items():
            if fit is None:
                rows.append(dict(y_n=y_n, estimator=name, beta1=math.nan, beta2=math.nan, nu=math.nan, converged=False, flagged=True))
            else:
                rows.append(
                    dict(
                        y_n=y_n,
                        estimator=name,
                        beta1=float(fit.beta[0]),
                        beta2=float(fit.beta[1]),
                        nu=fit.nu,
                        converged=bool(fit.converged),
                        flagged=not fit.ok,
                    )
                )
    return pd.DataFrame(rows)
