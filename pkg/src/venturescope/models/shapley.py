"""Permutation-sampling Shapley attributions against a background set."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class Attribution:
    values: np.ndarray  # per-feature mean marginal contribution
    stderr: np.ndarray  # Monte-Carlo standard error per feature
    base_value: float  # mean model output over the background
    prediction: float  # model output at the explained row


def _predict_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    if callable(model) and not hasattr(model, "predict_proba"):
        return model
    return model.predict_proba


def shapley_attribution(model, X_background, x_row, n_permutations: int = 2000, seed: int = 0) -> Attribution:
    """Sampled Shapley values of ``model`` at ``x_row``.

    Each draw pairs a random feature ordering with a random background row;
    features are switched from the background value to ``x_row`` in that
    order and each switch's change in output is credited to the feature.
    ``model`` is a callable on 2-D arrays or has ``predict_proba``.
    """
    f = _predict_fn(model)
    B = np.atleast_2d(np.asarray(X_background, dtype=np.float64))
    x = np.asarray(x_row, dtype=np.float64).ravel()
    if len(B) == 0:
        raise ValueError("background set is empty")
    d = len(x)
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((n_permutations, d)), axis=1)
    draws = B[rng.integers(0, len(B), size=n_permutations)]

    # chain[p, k] = background row with the first k features of perm p switched to x
    ranks = np.argsort(perms, axis=1)
    switched = ranks[:, None, :] < np.arange(d + 1)[None, :, None]
    chain = np.where(switched, x[None, None, :], draws[:, None, :])
    out = np.asarray(f(chain.reshape(-1, d)), dtype=np.float64).reshape(n_permutations, d + 1)
    steps = np.diff(out, axis=1)
    contrib = np.zeros((n_permutations, d))
    np.put_along_axis(contrib, perms, steps, axis=1)
    sd = contrib.std(axis=0, ddof=1) if n_permutations > 1 else np.zeros(d)
    return Attribution(
        contrib.mean(axis=0), sd / np.sqrt(n_permutations),
        float(np.mean(f(B))), float(np.asarray(f(x[None, :])).ravel()[0]),
    )


def attribution_matrix(model, X_background, rows, n_permutations: int = 200, seed: int = 0) -> np.ndarray:
    """Stacked attribution vectors for several rows (one seed per row)."""
    seeds = np.random.SeedSequence(seed).generate_state(len(rows))
    return np.array([
        shapley_attribution(model, X_background, r, n_permutations, int(s)).values
        for r, s in zip(rows, seeds)
    ]).reshape(len(rows), -1)
