"""Trajectory post-processing: averages, autocorrelation, confidence widths.

The integrated autocorrelation time uses biased autocovariance estimates with
a self-consistent window (smallest W with W >= WINDOW_FACTOR * tau(W)).  Lag
sums are accumulated with math.fsum, which is exactly permutation-invariant,
so the estimator is bit-identical on a series and its reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EstimateSummary",
    "WINDOW_FACTOR",
    "trajectory_average",
    "integrated_autocorrelation_time",
    "summarize",
]

WINDOW_FACTOR = 5.0
_MIN_SAMPLES = 10


@dataclass(frozen=True)
class EstimateSummary:
    mean: complex
    variance: float
    iat: float
    ci95_halfwidth: float
    n_samples: int
    burn_in_used: int

    def to_dict(self) -> dict:
        return {
            "mean_re": float(self.mean.real),
            "mean_im": float(self.mean.imag),
            "variance": self.variance,
            "iat": self.iat,
            "ci95_halfwidth": self.ci95_halfwidth,
            "n_samples": self.n_samples,
            "burn_in_used": self.burn_in_used,
        }


def trajectory_average(series, burn_in: int = 0) -> complex:
    """Plain mean of series[burn_in:]."""
    x = np.asarray(series)
    if burn_in >= x.size:
        raise ValueError("burn-in leaves no samples")
    return complex(x[burn_in:].mean())


def _fsum_dot(a: np.ndarray, b: np.ndarray) -> float:
    return math.fsum(a * b)


def _iat_real(x: np.ndarray) -> float:
    n = x.size
    mean = math.fsum(x) / n
    x = x - mean
    c0 = _fsum_dot(x, x) / n
    if c0 == 0.0:
        return 1.0
    max_lag = n // 2
    tau = 1.0
    for k in range(1, max_lag + 1):
        rho = (_fsum_dot(x[: n - k], x[k:]) / n) / c0
        tau += 2.0 * rho
        if k >= WINDOW_FACTOR * tau:
            break
    return min(max(tau, 1.0), n / 2.0)


def integrated_autocorrelation_time(series) -> float:
    """Self-consistent-window estimate of the integrated autocorrelation time.

    For a complex series the time is estimated on the real and imaginary parts
    separately and the maximum reported.  Zero-variance series return 1.
    """
    x = np.asarray(series)
    if x.size < _MIN_SAMPLES:
        raise ValueError(f"need at least {_MIN_SAMPLES} samples")
    if np.iscomplexobj(x):
        re = _iat_real(np.ascontiguousarray(x.real, dtype=np.float64))
        im = _iat_real(np.ascontiguousarray(x.imag, dtype=np.float64))
        return max(re, im)
    return _iat_real(np.ascontiguousarray(x, dtype=np.float64))


def summarize(series, burn_in: int = 0) -> EstimateSummary:
    """Mean, sample variance, autocorrelation time and 95% half-width."""
    x = np.asarray(series, dtype=np.complex128)
    post = x[burn_in:]
    if post.size < _MIN_SAMPLES:
        raise ValueError(f"need at least {_MIN_SAMPLES} post-burn-in samples")
    mean = complex(post.mean())
    n = post.size
    variance = float((np.abs(post - mean) ** 2).sum() / (n - 1))
    iat = integrated_autocorrelation_time(post)
    halfwidth = 1.96 * math.sqrt(variance * iat / n)
    return EstimateSummary(
        mean=mean,
        variance=variance,
        iat=iat,
        ci95_halfwidth=halfwidth,
        n_samples=n,
        burn_in_used=burn_in,
    )
