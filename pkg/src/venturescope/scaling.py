"""Yeo-Johnson power transform with maximum-likelihood lambda and standardization."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def yeo_johnson(x, lmbda: float) -> np.ndarray:
    """Elementwise Yeo-Johnson transform (no standardization)."""
    x = np.asarray(x, dtype=np.float64)
    if lmbda == 1:
        return x.copy()
    out = np.empty_like(x)
    pos = x >= 0
    xp = x[pos]
    if lmbda == 0:
        out[pos] = np.log1p(xp)
    else:
        out[pos] = np.expm1(lmbda * np.log1p(xp)) / lmbda
    xn = x[~pos]
    if lmbda == 2:
        out[~pos] = -np.log1p(-xn)
    else:
        out[~pos] = -np.expm1((2.0 - lmbda) * np.log1p(-xn)) / (2.0 - lmbda)
    return out


def yeo_johnson_inverse(y, lmbda: float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if lmbda == 1:
        return y.copy()
    out = np.empty_like(y)
    pos = y >= 0
    yp = y[pos]
    if lmbda == 0:
        out[pos] = np.expm1(yp)
    else:
        out[pos] = np.expm1(np.log1p(lmbda * yp) / lmbda)
    yn = y[~pos]
    if lmbda == 2:
        out[~pos] = -np.expm1(-yn)
    else:
        out[~pos] = -np.expm1(np.log1p(-(2.0 - lmbda) * yn) / (2.0 - lmbda))
    return out


def log_likelihood(x, lmbda: float) -> float:
    """Profile log-likelihood of lambda under a normal model of the transformed data."""
    x = np.asarray(x, dtype=np.float64)
    y = yeo_johnson(x, lmbda)
    var = y.var()
    if not np.isfinite(var) or var <= 0:
        return -np.inf
    return -0.5 * len(x) * math.log(var) + (lmbda - 1.0) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))


def fit_yeo_johnson(column, lo: float = -5.0, hi: float = 5.0, tol: float = 1e-5) -> float:
    """Lambda maximizing the log-likelihood, by golden-section search on [lo, hi].

    A constant column gets lambda = 1 and a warning.
    """
    x = np.asarray(column, dtype=np.float64)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("column must be non-empty and finite")
    if np.all(x == x[0]):
        warnings.warn("constant column; using identity transform (lambda = 1)", stacklevel=2)
        return 1.0
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = log_likelihood(x, c), log_likelihood(x, d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = log_likelihood(x, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = log_likelihood(x, d)
    return (a + b) / 2.0


def skewness(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    m = x - x.mean()
    s2 = np.mean(m ** 2)
    return float(np.mean(m ** 3) / s2 ** 1.5) if s2 > 0 else 0.0


@dataclass
class ScalerModel:
    """Per-column lambda plus post-transform mean and standard deviation.

    Columns with ``scaled[j] = False`` pass through untouched.
    """

    lambdas: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    scaled: np.ndarray
    columns: list[str] = field(default_factory=list)

    @classmethod
    def fit(cls, X, scaled: Sequence[bool] | None = None, columns: Sequence[str] = ()) -> "ScalerModel":
        X = np.asarray(X, dtype=np.float64)
        d = X.shape[1]
        mask = np.ones(d, dtype=bool) if scaled is None else np.asarray(scaled, dtype=bool)
        lambdas = np.ones(d)
        means = np.zeros(d)
        stds = np.ones(d)
        for j in np.flatnonzero(mask):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                lambdas[j] = fit_yeo_johnson(X[:, j])
            y = yeo_johnson(X[:, j], lambdas[j])
            means[j] = y.mean()
            sd = y.std()
            stds[j] = sd if sd > 0 else 1.0
        return cls(lambdas, means, stds, mask, list(columns))

    def transform(self, X) -> np.ndarray:
        X = np.array(X, dtype=np.float64, copy=True)
        for j in np.flatnonzero(self.scaled):
            X[:, j] = (yeo_johnson(X[:, j], self.lambdas[j]) - self.means[j]) / self.stds[j]
        return X

    def inverse_transform(self, Y) -> np.ndarray:
        Y = np.array(Y, dtype=np.float64, copy=True)
        for j in np.flatnonzero(self.scaled):
            Y[:, j] = yeo_johnson_inverse(Y[:, j] * self.stds[j] + self.means[j], self.lambdas[j])
        return Y

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "lambdas": self.lambdas.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "scaled": self.scaled.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerModel":
        return cls(np.array(d["lambdas"]), np.array(d["means"]), np.array(d["stds"]),
                   np.array(d["scaled"], dtype=bool), list(d.get("columns", [])))
