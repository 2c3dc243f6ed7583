"""Stage-I economics of the data collector.

The collector publishes the mean of data normalized to ``[0, 1]`` through a
Laplace mechanism.  With ``n`` contributors the sensitivity is ``1/n`` and the
squared-error penalty is ``2 / (n eps)^2``.  Her benefit from ``n``
contributors is ``1 - k / (1 + l n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .population import ValuationDist, participation_count
from .pt_core import (
    DomainError,
    PTParams,
    participation_level_derivative,
    participation_level_slopes,
    participation_levels,
    prospect_nonparticipation_level,
    prospect_participation_level,
    slope_coefficient,
)


@dataclass(frozen=True)
class MarketConfig:
    n_total: int = 10_000
    c: float = 1.0
    k: float = 0.8
    l: float = 0.001
    dist: ValuationDist = field(default_factory=ValuationDist)
    pt: PTParams = field(default_factory=PTParams)

    def __post_init__(self):
        if int(self.n_total) != self.n_total or self.n_total < 1:
            raise DomainError(f"n_total must be a positive integer, got {self.n_total}")
        if not (0 < self.k <= 1):
            raise DomainError(f"k must lie in (0, 1], got {self.k}")
        for name in ("c", "l"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be > 0, got {value}")

    @property
    def w_max(self) -> float:
        return self.dist.w_max

    @property
    def big_c(self) -> float:
        """``k N / (4 l)``, the large-population constant."""
        return self.k * self.n_total / (4.0 * self.l)

    def with_pt(self, **changes) -> "MarketConfig":
        from dataclasses import replace

        return replace(self, pt=self.pt.replace(**changes))

    def replace(self, **changes) -> "MarketConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class UtilityBreakdown:
    benefit: float
    penalty: float
    utility: float
    participants: float


def benefit(n, k: float, l: float):
    return 1.0 - k / (1.0 + l * n)


def accuracy_penalty(eps, n):
    """Expected squared Laplace noise on the mean of ``n`` values in ``[0, 1]``.

    Infinite when nobody contributes.
    """
    if np.ndim(eps) or np.ndim(n):
        eps = np.asarray(eps, dtype=float)
        n = np.asarray(n, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(n > 0, 2.0 / (n * n * eps * eps), np.inf)
    if not eps > 0 or n < 0:
        raise DomainError(f"need eps > 0 and n >= 0, got eps={eps}, n={n}")
    if n == 0:
        return math.inf
    return 2.0 / (n * n * eps * eps)


def collector_utility(eps: float, cfg: MarketConfig) -> UtilityBreakdown:
    """Exact utility ``R(n(eps)) - L(eps)`` from the expected participant count."""
    n = participation_count(eps, cfg.dist, cfg.pt, cfg.n_total, cfg.c)
    r = benefit(n, cfg.k, cfg.l)
    if n <= 0:
        return UtilityBreakdown(r, math.inf, -math.inf, 0.0)
    penalty = accuracy_penalty(eps, n)
    return UtilityBreakdown(r, penalty, r - penalty, n)


def utility_curve(eps, cfg: MarketConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized exact utility and expected participants over an ``eps`` array."""
    eps = np.asarray(eps, dtype=float)
    g, _ = cost_terms(eps, cfg)
    n = cfg.n_total * cfg.dist.sf(-g)
    with np.errstate(divide="ignore", over="ignore"):
        util = np.where(n > 0, benefit(n, cfg.k, cfg.l) - 2.0 / (n * n * eps * eps), -np.inf)
    return util, n


def _require_uniform(cfg: MarketConfig, zero_ref: bool = True) -> None:
    if not cfg.dist.is_uniform:
        raise DomainError("closed-form expressions need uniform reward valuations")
    if zero_ref and cfg.pt.eps_ref != 0.0:
        raise DomainError("closed-form expressions need eps_ref == 0")


def cost_terms(eps, cfg: MarketConfig):
    """Net participation cost ``G(eps)`` and its derivative ``G'(eps)``.

    ``G = g(level_join) - g(level_stay)``; the stay level does not depend on
    ``eps`` so it drops out of the derivative.  Vectorized for a zero
    reference point.
    """
    pt = cfg.pt
    if pt.eps_ref == 0.0:
        big_m = cfg.c * slope_coefficient(pt)
        e = np.asarray(eps, dtype=float) if np.ndim(eps) else eps
        return -big_m * e ** pt.beta, -big_m * pt.beta * e ** (pt.beta - 1.0)
    stay = prospect_nonparticipation_level(pt)
    if np.ndim(eps):
        e = np.asarray(eps, dtype=float)
        return cfg.c * (participation_levels(e, pt) - stay), cfg.c * participation_level_slopes(e, pt)
    g = cfg.c * (prospect_participation_level(eps, pt) - stay)
    dg = cfg.c * participation_level_derivative(eps, pt)
    return g, dg


def utility_closed_form(eps, cfg: MarketConfig):
    """Utility with uniform valuations written out in terms of the cost ``g``."""
    _require_uniform(cfg)
    g, _ = cost_terms(eps, cfg)
    x = (cfg.w_max + g) / cfg.w_max
    n_big = cfg.n_total
    return 1.0 - cfg.k / (1.0 + cfg.l * n_big * x) - 2.0 / (n_big ** 2 * eps ** 2 * x ** 2)


def utility_derivative(eps, cfg: MarketConfig):
    """Analytic ``dU/d(eps)`` of :func:`utility_closed_form` inside the feasible set."""
    _require_uniform(cfg)
    g, dg = cost_terms(eps, cfg)
    w, n_big, k, l = cfg.w_max, cfg.n_total, cfg.k, cfg.l
    x = (w + g) / w
    dx = dg / w
    first = k * l * n_big * dx / (1.0 + l * n_big * x) ** 2
    second = 4.0 / n_big ** 2 * (w + g + dg * eps) / w / (x ** 3 * eps ** 3)
    return first + second


def _poly_from_terms(eps, g, dg, cfg: MarketConfig):
    w = cfg.w_max
    return (w + g) / w * (1.0 + cfg.big_c * eps ** 3 * dg / w) + eps * dg / w


def poly_f(eps, cfg: MarketConfig):
    """Numerator of the large-population derivative; its feasible root is the approximate optimum."""
    _require_uniform(cfg)
    g, dg = cost_terms(eps, cfg)
    return _poly_from_terms(eps, g, dg, cfg)


def poly_f_pos(eps, cfg: MarketConfig):
    """Same numerator with the net cost relative to a positive reference point."""
    _require_uniform(cfg, zero_ref=False)
    g, dg = cost_terms(eps, cfg)
    return _poly_from_terms(eps, g, dg, cfg)


def quartic_coefficients(cfg: MarketConfig) -> tuple[float, float, float, float, float]:
    """Coefficients (highest first) of ``poly_f`` when ``beta == 1``."""
    _require_uniform(cfg)
    if cfg.pt.beta != 1.0:
        raise DomainError("poly_f is a quartic only for beta == 1")
    a = cfg.c * slope_coefficient(cfg.pt) / cfg.w_max
    big_c = cfg.big_c
    return (big_c * a * a, -big_c * a, 0.0, -2.0 * a, 1.0)


def net_threshold(eps: float, cfg: MarketConfig) -> float:
    """Reward valuation an individual needs in order to join."""
    g, _ = cost_terms(eps, cfg)
    return -float(g)


def feasible_upper(cfg: MarketConfig) -> float:
    """Largest privacy level that still attracts anybody (support of W is ``[0, w_max]``)."""
    pt, w = cfg.pt, cfg.w_max
    if pt.eps_ref == 0.0:
        big_m = cfg.c * slope_coefficient(pt)
        return (w / big_m) ** (1.0 / pt.beta)
    lo, hi = 0.0, max(pt.eps_ref, 1e-12)
    while net_threshold(hi, cfg) < w:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise DomainError("participation cost never reaches w_max")
    # lo == 0 is never evaluated: bisection only probes midpoints
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if net_threshold(mid, cfg) < w:
            lo = mid
        else:
            hi = mid
    return hi


def laplace_noise(n: int, eps: float, size, seed) -> np.ndarray:
    """Draws of the Laplace noise added to a mean over ``n`` normalized values."""
    if not (eps > 0 and n > 0):
        raise DomainError(f"need eps > 0 and n > 0, got eps={eps}, n={n}")
    rng = np.random.default_rng(seed)
    return rng.laplace(0.0, 1.0 / (n * eps), size)


def laplace_noise_demo(data, eps: float, seed) -> tuple[float, float]:
    """Release the mean of ``data`` with ``eps``-differential privacy.

    Returns ``(noisy_mean, true_mean)``.
    """
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise DomainError("data must be non-empty")
    if x.min() < 0 or x.max() > 1:
        raise DomainError("data values must lie in [0, 1]")
    true_mean = float(x.mean())
    if math.isinf(eps):
        return true_mean, true_mean
    noise = laplace_noise(x.size, eps, None, seed)
    return true_mean + float(noise), true_mean
