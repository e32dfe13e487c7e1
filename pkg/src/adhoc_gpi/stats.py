"""Interquartile mean and stratified percentile-bootstrap intervals.

The IQM treats the n sorted values as occupying unit-width slots on
[0, n) and averages over the window [n/4, 3n/4); values straddling a window
edge contribute in proportion to their overlap.  For n divisible by 4 this is
the plain mean of the middle half.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import InputError


def iqm_weights(n: int) -> np.ndarray:
    """Per-rank weights (summing to 1) for the fractional IQM of n sorted values."""
    if n < 4:
        raise InputError(f"IQM needs at least 4 values, got {n}")
    lo, hi = n / 4.0, 3.0 * n / 4.0
    left = np.arange(n, dtype=float)
    overlap = np.clip(np.minimum(left + 1.0, hi) - np.maximum(left, lo), 0.0, None)
    return overlap / (hi - lo)


def iqm(values: Sequence[float]) -> float:
    x = np.sort(np.asarray(values, dtype=float).ravel())
    # offset from the minimum so constant data comes back exactly
    return float(x[0] + iqm_weights(len(x)) @ (x - x[0]))


def stratified_indices(n_replicates: int, n_episodes: int, resamples: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Flat indices into a (replicates, episodes) matrix, one row per resample.

    Row b holds ``n_episodes`` draws with replacement from each replicate's own
    block, so no stratum ever borrows another replicate's episodes.
    """
    offsets = (np.arange(n_replicates) * n_episodes)[None, :, None]
    draws = rng.integers(n_episodes, size=(resamples, n_replicates, n_episodes))
    return (draws + offsets).reshape(resamples, -1)


def bootstrap_distribution(matrix, resamples: int = 1000, rng: Optional[np.random.Generator] = None,
                           chunk: int = 100) -> np.ndarray:
    """IQM of each stratified resample of a (replicates, episodes) return matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise InputError("expected a (replicates, episodes) matrix")
    if m.shape[0] < 2:
        raise InputError("the stratified bootstrap needs at least 2 replicates")
    rng = rng if rng is not None else np.random.default_rng()
    flat = m.ravel()
    w = iqm_weights(flat.size)
    out = np.empty(resamples)
    for start in range(0, resamples, chunk):
        n = min(chunk, resamples - start)
        idx = stratified_indices(m.shape[0], m.shape[1], n, rng)
        rows = np.sort(flat[idx], axis=1)
        out[start:start + n] = rows[:, 0] + (rows - rows[:, :1]) @ w
    return out


def bootstrap_ci(matrix, resamples: int = 1000, level: float = 0.95,
                 rng: Optional[np.random.Generator] = None) -> tuple[float, float]:
    """Percentile interval of the stratified-bootstrap IQM distribution."""
    if not 0.0 < level < 1.0:
        raise InputError("level must lie in (0, 1)")
    return percentile_interval(bootstrap_distribution(matrix, resamples, rng), level)


def percentile_interval(dist: np.ndarray, level: float) -> tuple[float, float]:
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(dist, [tail, 100.0 - tail])
    return float(lo), float(hi)


def intervals_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]
