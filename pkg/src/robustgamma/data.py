"""Regression datasets and CSV ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Malformed or unusable input data."""


class UnderdeterminedError(DataError):
    """Fewer observations than regression coefficients."""


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``x`` (n x p) and strictly positive response ``y``."""

    x: np.ndarray
    y: np.ndarray
    column_names: Optional[tuple[str, ...]] = None
    log_y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DataError(f"x has shape {x.shape} but y has length {y.shape[0]}")
        n, p = x.shape
        if not n >= p >= 1:
            raise (UnderdeterminedError if n < p else DataError)(f"need n >= p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(x)):
            raise DataError("design matrix contains non-finite values")
        if not np.all(y > 0) or not np.all(np.isfinite(y)):
            raise DataError("response must be finite and strictly positive")
        if np.linalg.matrix_rank(x) < p:
            raise DataError("design matrix is rank deficient")
        if self.column_names is not None and len(self.column_names) != p:
            raise DataError("column_names does not match the number of columns")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "log_y", np.log(y))
        if self.column_names is not None:
            object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.x[index], self.y[index], self.column_names)

    def with_response(self, y) -> "Dataset":
        return Dataset(self.x, y, self.column_names)


def load_csv(
    path,
    response: str,
    covariates: Optional[Sequence[str]] = None,
    intercept: bool = True,
) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Non-numeric covariates are one-hot encoded with the first level dropped.
    An intercept column named ``(Intercept)`` is prepended unless disabled.
    """
    try:
        frame = pd.read_csv(path, sep=",", decimal=".", quotechar='"')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if response not in frame.columns:
        raise DataError(f"column not found: {response}")
    if covariates is None:
        covariates = [col for col in frame.columns if col != response]
    missing = [col for col in covariates if col not in frame.columns]
    if missing:
        raise DataError(f"column not found: {', '.join(missing)}")

    y = pd.to_numeric(frame[response], errors="coerce")
    if y.isna().any():
        raise DataError(f"response column {response} has non-numeric or missing values")

    parts = []
    for col in covariates:
        values = frame[col]
        if pd.api.types.is_numeric_dtype(values) and not pd.api.types.is_bool_dtype(values):
            parts.append(values.astype(float).rename(col))
        else:
            dummies = pd.get_dummies(values.astype("category"), prefix=col, drop_first=True, dtype=float)
            parts.append(dummies)
    design = pd.concat(parts, axis=1) if parts else pd.DataFrame(index=frame.index)
    if design.isna().any().any():
        raise DataError("covariates contain missing values")
    names = list(design.columns)
    x = design.to_numpy(dtype=float)
    if intercept:
        x = np.column_stack([np.ones(len(frame)), x])
        names = ["(Intercept)"] + names
    return Dataset(x, y.to_numpy(dtype=float), tuple(names))
