"""Random streams, the F distribution, and summary statistics.

Every random draw in the package goes through an :class:`RngStream`.  A stream
is identified by a master seed plus a tuple of integers (the stream id), and is
backed by numpy's counter-based Philox generator, so a replicate's stream can be
rebuilt anywhere without replaying any other stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "as_generator",
    "normal",
    "uniform",
    "betainc_reg",
    "f_cdf",
    "f_sf",
    "f_quantile",
    "Summary",
    "summarize",
]


def _key(stream_id):
    if isinstance(stream_id, (int, np.integer)):
        stream_id = (stream_id,)
    key = tuple(int(k) for k in stream_id)
    if any(k < 0 for k in key):
        raise ValueError("stream id components must be non-negative")
    return key


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(master_seed, stream_id)``.

    ``stream_id`` may be an int or a tuple of ints; distinct ids give
    independent sequences, identical ids give identical sequences.
    """

    master_seed: int
    stream_id: tuple = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        self.stream_id = _key(self.stream_id)
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *suffix):
        """Stream whose id extends this one's id by ``suffix``."""
        return RngStream(self.master_seed, self.stream_id + _key(suffix))

    def normal(self, mu=0.0, sigma=1.0, size=None):
        return normal(self, mu, sigma, size)

    def uniform(self, lo=0.0, hi=1.0, size=None):
        return uniform(self, lo, hi, size)


def as_generator(rng):
    """Accept an RngStream, a numpy Generator, or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")


def normal(stream, mu=0.0, sigma=1.0, size=None):
    """Gaussian deviates (numpy's ziggurat sampler on the stream's Philox bits)."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    z = as_generator(stream).standard_normal(size)
    return mu + sigma * z


def uniform(stream, lo=0.0, hi=1.0, size=None):
    """Uniform deviates on ``[lo, hi)``."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi})")
    u = as_generator(stream).random(size)
    return lo + (hi - lo) * u


# --- regularized incomplete beta and the F distribution ---------------------

_FPMIN = 1e-300
_EPS = 1e-16
_MAXIT = 10_000


def _betacf(a, b, x):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _check_df(df1, df2):
    if df1 < 1 or df2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")


def f_cdf(x, df1, df2):
    """CDF of the F(df1, df2) distribution."""
    _check_df(df1, df2)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return betainc_reg(df1 / 2.0, df2 / 2.0, df1 * x / (df1 * x + df2))


def f_sf(x, df1, df2):
    """Upper tail ``P[F > x]``, computed without cancellation."""
    _check_df(df1, df2)
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return betainc_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x))


def f_quantile(p, df1, df2, tol=1e-12):
    """Inverse of :func:`f_cdf` by bracketed bisection."""
    _check_df(df1, df2)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, df1, df2) < p:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise RuntimeError("could not bracket the quantile")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, df1, df2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- summaries --------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    variance: float
    median: float
    values: np.ndarray = field(repr=False, compare=False)

    def mse_vs(self, target):
        """Mean squared error of the values against a scalar or vector target."""
        target = np.broadcast_to(np.asarray(target, dtype=float), self.values.shape)
        return float(np.mean((self.values - target) ** 2))


def summarize(values):
    """Mean, unbiased variance (0 for a single value) and median."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot summarize an empty sample")
    mean = float(v.mean())
    var = float(np.sum((v - mean) ** 2) / (v.size - 1)) if v.size > 1 else 0.0
    return Summary(count=int(v.size), mean=mean, variance=var, median=float(np.median(v)), values=v)
