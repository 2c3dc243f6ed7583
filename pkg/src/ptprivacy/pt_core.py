"""Prospect-theoretic valuation of differential-privacy levels.

A privacy level ``eps`` is an outcome where *smaller is better*: anything
below the reference point is a gain, anything above it a loss.  The
mechanism's uncertain outcome on ``[0, eps]`` is discretized into ``m``
equally likely outcomes ``i * eps / m``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

SPLIT = "split"
UNIFORM = "uniform"
WEIGHTINGS = (SPLIT, UNIFORM)


class DomainError(ValueError):
    """Raised when an argument falls outside an operation's domain."""


@dataclass(frozen=True)
class PTParams:
    """Behavioral profile of one individual.

    ``weighting`` only matters for a positive reference point. ``"split"``
    weights the gain sum by ``t/m`` and the loss sum by ``1 - t/m``;
    ``"uniform"`` puts ``1/m`` on every discrete outcome, which is what the
    zero-reference level uses.
    """

    lam: float = 1.0
    beta: float = 1.0
    eps_ref: float = 0.0
    m: int = 10
    weighting: str = SPLIT

    def __post_init__(self):
        if not (self.lam >= 1.0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be >= 1, got {self.lam}")
        if not (0.0 < self.beta <= 1.0):
            raise DomainError(f"beta must lie in (0, 1], got {self.beta}")
        if not (self.eps_ref >= 0.0 and math.isfinite(self.eps_ref)):
            raise DomainError(f"eps_ref must be >= 0, got {self.eps_ref}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")
        if self.weighting not in WEIGHTINGS:
            raise DomainError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")

    @property
    def is_eut(self) -> bool:
        return self.lam == 1.0 and self.beta == 1.0

    def replace(self, **changes) -> "PTParams":
        from dataclasses import replace

        return replace(self, **changes)


def valuation(eps: float, pt: PTParams) -> float:
    """S-shaped value of privacy level ``eps`` relative to ``pt.eps_ref``."""
    if eps < 0:
        raise DomainError(f"eps must be >= 0, got {eps}")
    if eps <= pt.eps_ref:
        return (pt.eps_ref - eps) ** pt.beta
    return -pt.lam * (eps - pt.eps_ref) ** pt.beta


def boundary_index(eps: float, pt: PTParams) -> int:
    """Number of discrete outcomes that count as gains (``i * eps / m <= eps_ref``)."""
    if pt.eps_ref == 0.0:
        return 0
    t = math.floor(pt.m * pt.eps_ref / eps)
    return min(max(t, 0), pt.m)


def _split_sums(eps: float, pt: PTParams):
    """Gain and loss sums over the discrete outcomes, plus the boundary index."""
    t = boundary_index(eps, pt)
    idx = np.arange(1, pt.m + 1, dtype=float)
    x = idx * eps / pt.m
    gains = np.clip(pt.eps_ref - x[:t], 0.0, None) ** pt.beta
    losses = np.clip(x[t:] - pt.eps_ref, 0.0, None) ** pt.beta
    return float(gains.sum()), float(losses.sum()), t


def prospect_participation_level(eps: float, pt: PTParams) -> float:
    """Prospect privacy level of a participant under an ``eps``-DP mechanism."""
    if not eps > 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    if pt.eps_ref == 0.0:
        idx = np.arange(1, pt.m + 1, dtype=float)
        return float(-pt.lam * np.sum((idx * eps / pt.m) ** pt.beta) / pt.m)
    gain, loss, t = _split_sums(eps, pt)
    if pt.weighting == UNIFORM:
        return (gain - pt.lam * loss) / pt.m
    return (t / pt.m) * gain - (1.0 - t / pt.m) * pt.lam * loss


def participation_level_derivative(eps: float, pt: PTParams) -> float:
    """d/d(eps) of :func:`prospect_participation_level` at fixed boundary index.

    Infinite when ``beta < 1`` and an outcome sits exactly on the reference.
    """
    if not eps > 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    m, b = pt.m, pt.beta
    if pt.eps_ref == 0.0:
        return -slope_coefficient(pt) * b * eps ** (b - 1.0)
    t = boundary_index(eps, pt)
    idx = np.arange(1, m + 1, dtype=float)
    x = idx * eps / m
    with np.errstate(divide="ignore"):
        if b == 1.0:
            dg = -idx[:t] / m
            dl = idx[t:] / m
        else:
            dg = -b * np.abs(pt.eps_ref - x[:t]) ** (b - 1.0) * idx[:t] / m
            dl = b * np.abs(x[t:] - pt.eps_ref) ** (b - 1.0) * idx[t:] / m
    dgain, dloss = float(dg.sum()), float(dl.sum())
    if pt.weighting == UNIFORM:
        return (dgain - pt.lam * dloss) / m
    return (t / m) * dgain - (1.0 - t / m) * pt.lam * dloss


def prospect_nonparticipation_level(pt: PTParams) -> float:
    """Value of the sure outcome ``eps = 0`` of staying out."""
    return pt.eps_ref ** pt.beta if pt.eps_ref > 0 else 0.0


def privacy_cost(level: float, c: float) -> float:
    return c * level


def slope_coefficient(pt: PTParams) -> float:
    """``lambda * (1/m)^(beta+1) * sum_i i^beta``: the level is ``-this * eps^beta``."""
    idx = np.arange(1, pt.m + 1, dtype=float)
    return float(pt.lam / pt.m * (1.0 / pt.m) ** pt.beta * np.sum(idx ** pt.beta))


def cost_slope_M(pt: PTParams, c: float) -> float:
    """Coefficient ``M`` with ``privacy_cost(level(eps)) == -M * eps**beta``.

    Only defined for a zero reference point.
    """
    if pt.eps_ref != 0.0:
        raise DomainError("cost slope M requires eps_ref == 0")
    return c * slope_coefficient(pt)


def _outcome_grid(eps: np.ndarray, pt: PTParams):
    idx = np.arange(1, pt.m + 1, dtype=float)
    x = eps[:, None] * idx[None, :] / pt.m
    t = np.clip(np.floor(pt.m * pt.eps_ref / eps), 0, pt.m)
    return idx, x, t, idx[None, :] <= t[:, None]


def participation_levels(eps, pt: PTParams) -> np.ndarray:
    """Vectorized :func:`prospect_participation_level` over an array of ``eps``."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("eps must be > 0")
    if pt.eps_ref == 0.0:
        return -slope_coefficient(pt) * eps ** pt.beta
    _, x, t, is_gain = _outcome_grid(eps, pt)
    gain = np.where(is_gain, np.clip(pt.eps_ref - x, 0, None) ** pt.beta, 0.0).sum(axis=1)
    loss = np.where(is_gain, 0.0, np.clip(x - pt.eps_ref, 0, None) ** pt.beta).sum(axis=1)
    if pt.weighting == UNIFORM:
        return (gain - pt.lam * loss) / pt.m
    return (t / pt.m) * gain - (1.0 - t / pt.m) * pt.lam * loss


def participation_level_slopes(eps, pt: PTParams) -> np.ndarray:
    """Vectorized :func:`participation_level_derivative`."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("eps must be > 0")
    b = pt.beta
    if pt.eps_ref == 0.0:
        return -slope_coefficient(pt) * b * eps ** (b - 1.0)
    idx, x, t, is_gain = _outcome_grid(eps, pt)
    with np.errstate(divide="ignore"):
        if b == 1.0:
            dv = np.broadcast_to(idx[None, :] / pt.m, x.shape)
        else:
            dv = b * np.abs(x - pt.eps_ref) ** (b - 1.0) * idx[None, :] / pt.m
    dgain = -np.where(is_gain, dv, 0.0).sum(axis=1)
    dloss = np.where(is_gain, 0.0, dv).sum(axis=1)
    if pt.weighting == UNIFORM:
        return (dgain - pt.lam * dloss) / pt.m
    return (t / pt.m) * dgain - (1.0 - t / pt.m) * pt.lam * dloss
