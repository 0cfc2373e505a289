"""Chain summaries: effective sample size and credible intervals."""

from __future__ import annotations

import numpy as np

__all__ = ["credible_interval", "effective_sample_size"]


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """ESS of a scalar chain using Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = _autocorr(x)
    # sums of adjacent pairs are positive and decreasing for reversible chains
    m = (n - 1) // 2
    pairs = rho[: 2 * m].reshape(m, 2).sum(axis=1)
    pos = np.flatnonzero(pairs <= 0)
    k = pos[0] if pos.size else m
    pairs = np.minimum.accumulate(pairs[:k]) if k else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    return float(n / max(tau, 1e-12))


def credible_interval(draws, level: float = 0.95, axis: int = 0):
    """Equal-tailed interval ``(lower, upper)`` along ``axis``."""
    q = 0.5 * (1.0 - level)
    lo, hi = np.quantile(np.asarray(draws, dtype=float), [q, 1.0 - q], axis=axis)
    return lo, hi
