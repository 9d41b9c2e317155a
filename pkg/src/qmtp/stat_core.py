"""Deterministic numerical kernels shared by every procedure.

Beta and binomial distribution functions lean on ``scipy.special``; the
Kolmogorov limit law is summed directly so its truncation rule is explicit.
Samplers take an explicit :class:`~qmtp.rng.RngStream`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .rng import RngStream

__all__ = [
    "DomainError",
    "BetaParams",
    "beta_cdf",
    "beta_quantile",
    "order_stat_quantiles",
    "binom_cdf",
    "kolmogorov_cdf",
    "kolmogorov_sf",
    "kolmogorov_critical",
    "sample_uniform_order_stats",
    "sample_dirichlet",
]


class DomainError(ValueError):
    """Argument outside the mathematical domain of a kernel."""


@dataclass(frozen=True)
class BetaParams:
    """Shapes of a Beta(k, m) law. Fractional shapes are allowed."""

    k: float
    m: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.k) and math.isfinite(self.m)) or self.k <= 0 or self.m <= 0:
            raise DomainError(f"beta shapes must be positive and finite, got ({self.k}, {self.m})")

    @classmethod
    def order_stat(cls, k: float, n: int) -> "BetaParams":
        """Law of F(X_{n:k}) for a continuous F: Beta(k, n+1-k)."""
        return cls(float(k), float(n + 1 - k))


def beta_cdf(p: BetaParams, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    return float(special.betainc(p.k, p.m, x))


def _beta_logpdf(k: float, m: float, x: float) -> float:
    return (k - 1.0) * math.log(x) + (m - 1.0) * math.log1p(-x) - special.betaln(k, m)


def beta_quantile(p: BetaParams, q: float) -> float:
    """Inverse of :func:`beta_cdf` in ``x``.

    Starts from scipy's inverse and polishes with safeguarded Newton steps,
    falling back to bisection whenever a step leaves the current bracket.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    k, m = p.k, p.m
    lo, hi = 0.0, 1.0
    x = float(special.betaincinv(k, m, q))
    if not 0.0 < x < 1.0:
        x = 0.5
    for _ in range(60):
        f = special.betainc(k, m, x) - q
        if abs(f) <= 1e-15:
            break
        if f > 0:
            hi = x
        else:
            lo = x
        step = None
        if 0.0 < x < 1.0:
            lp = _beta_logpdf(k, m, x)
            if lp > -700:
                step = f / math.exp(lp)
        x_new = x - step if step is not None else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-16 * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    return x


def order_stat_quantiles(n: int, q: float) -> np.ndarray:
    """Vector of B^q_{k,n}, the q-quantiles of Beta(k, n+1-k) for k = 1..n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    k = np.arange(1, n + 1, dtype=float)
    return special.betaincinv(k, n + 1 - k, q)


def binom_cdf(k: int, n: int, p: float) -> float:
    """Pr(Binomial(n, p) <= k)."""
    if n < 0 or not 0.0 <= p <= 1.0:
        raise DomainError("need n >= 0 and p in [0, 1]")
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    return float(special.bdtr(k, n, p))


_KOLM_TOL = 1e-12


def kolmogorov_sf(x: float) -> float:
    """Pr(sup |B(t)| > x) for a standard Brownian bridge."""
    if x <= 0:
        return 1.0
    if x < 1.0:
        return 1.0 - kolmogorov_cdf(x)
    total = 0.0
    j = 1
    while True:
        term = math.exp(-2.0 * j * j * x * x)
        total += term if j % 2 else -term
        if term < _KOLM_TOL:
            break
        j += 1
    return min(1.0, max(0.0, 2.0 * total))


def kolmogorov_cdf(x: float) -> float:
    if x <= 0:
        return 0.0
    if x >= 1.0:
        return 1.0 - kolmogorov_sf(x)
    # theta-function form converges fast for small x
    c = math.pi ** 2 / (8.0 * x * x)
    total = 0.0
    j = 1
    while True:
        term = math.exp(-(2 * j - 1) ** 2 * c)
        total += term
        if term < _KOLM_TOL * max(total, 1e-300) or term == 0.0:
            break
        j += 1
    return min(1.0, math.sqrt(2.0 * math.pi) / x * total)


def kolmogorov_critical(alpha: float) -> float:
    """c with Pr(sup |B(t)| > c) = alpha."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return float(optimize.brentq(lambda c: kolmogorov_sf(c) - alpha, 1e-6, 20.0,
                                 xtol=1e-13, rtol=1e-13))


def _reps_per_block(n: int) -> int:
    return max(1, min(10_000, 2_000_000 // (n + 1)))


def sample_uniform_order_stats(n: int, rng: RngStream, size: int | None = None,
                               block: int = 0) -> np.ndarray:
    """Sorted Uniform(0,1) samples built from exponential spacings.

    Returns shape ``(n,)`` when ``size`` is None, else ``(size, n)``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    g = rng.generator(block)
    reps = 1 if size is None else int(size)
    e = g.standard_exponential((reps, n + 1))
    s = np.cumsum(e, axis=1)
    u = s[:, :n] / s[:, n:]
    return u[0] if size is None else u


def sample_dirichlet(shapes, rng: RngStream, size: int | None = None,
                     block: int = 0) -> np.ndarray:
    """Dirichlet draws as normalised independent gamma variates."""
    a = np.asarray(shapes, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise DomainError("shapes must be a non-empty vector")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise DomainError("Dirichlet shapes must be positive")
    g = rng.generator(block)
    reps = 1 if size is None else int(size)
    x = g.standard_gamma(a, size=(reps, a.size))
    x /= x.sum(axis=1, keepdims=True)
    return x[0] if size is None else x
