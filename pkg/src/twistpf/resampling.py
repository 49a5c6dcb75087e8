"""Multinomial resampling from log weights."""

from __future__ import annotations

import numpy as np

__all__ = ["multinomial_resample"]


def multinomial_resample(log_weights, count: int, gen: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. ancestor indices with P(i) proportional to exp(log_weights[i]).

    Weights are normalized after subtracting the max, so any common additive
    constant in the log weights cancels. Raises ``ValueError`` if no weight is
    finite or any weight is NaN.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log_weights must be a non-empty 1-d array")
    if np.isnan(lw).any():
        raise ValueError("log weights contain NaN")
    m = lw.max()
    if not np.isfinite(m):
        raise ValueError("resampling needs at least one finite log weight")
    cdf = np.exp(lw - m)
    np.cumsum(cdf, out=cdf)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    u = gen.random(count)
    return cdf.searchsorted(u, side="right").astype(np.int64, copy=False)
