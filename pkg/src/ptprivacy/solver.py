"""Optimal privacy level, three ways.

``solve_closed_form`` takes the feasible real root of the quartic that the
large-population derivative reduces to when ``beta == 1``.
``solve_poly_root`` brackets and bisects the same numerator for any ``beta``
and reference point.  ``solve_exhaustive`` maximizes the exact utility with no
approximation at all.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .collector import (
    MarketConfig,
    collector_utility,
    feasible_upper,
    poly_f,
    poly_f_pos,
    quartic_coefficients,
    utility_curve,
)
from .population import Roster
from .pt_core import DomainError

CLOSED_FORM = "ClosedForm"
POLY_ROOT = "PolyRoot"
EXHAUSTIVE = "ExhaustiveExact"
ROSTER = "ExhaustiveRoster"

SCAN_POINTS = 10_000
BISECT_RTOL = 1e-12
GOLDEN_RTOL = 1e-9
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveResult:
    eps_star: float
    utility: float
    participants: float
    method: str
    residual: float
    extra: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        out = {
            "eps_star": self.eps_star,
            "utility": self.utility,
            "participants": self.participants,
            "method": self.method,
            "residual": self.residual,
        }
        out.update(self.extra)
        return out


def _result(eps: float, cfg: MarketConfig, method: str, residual: float, **extra) -> SolveResult:
    br = collector_utility(eps, cfg)
    return SolveResult(float(eps), float(br.utility), float(br.participants), method, float(residual), extra)


def _newton_polish(coeffs, x: float, steps: int = 3) -> float:
    dcoeffs = np.polyder(coeffs)
    for _ in range(steps):
        d = np.polyval(dcoeffs, x)
        if d == 0:
            break
        step = np.polyval(coeffs, x) / d
        x_new = x - step
        if not math.isfinite(x_new):
            break
        x = x_new
    return float(x)


def real_quartic_roots(coeffs) -> np.ndarray:
    """Real roots of a polynomial via companion-matrix eigenvalues, Newton-polished."""
    coeffs = np.asarray(coeffs, dtype=float)
    roots = np.roots(coeffs)
    scale = np.maximum(np.abs(roots), 1e-300)
    real = roots[np.abs(roots.imag) <= 1e-7 * scale].real
    return np.sort([_newton_polish(coeffs, r) for r in real])


def solve_closed_form(cfg: MarketConfig) -> SolveResult:
    """Approximate optimum for ``beta == 1``: the unique quartic root in ``(0, w_max/M)``."""
    if cfg.pt.beta != 1.0 or cfg.pt.eps_ref != 0.0 or not cfg.dist.is_uniform:
        raise DomainError("closed form needs beta == 1, eps_ref == 0 and uniform valuations")
    coeffs = quartic_coefficients(cfg)
    upper = feasible_upper(cfg)
    roots = real_quartic_roots(coeffs)
    inside = [r for r in roots if 0.0 < r < upper]
    if len(inside) != 1:
        raise SolverError(f"expected one quartic root in (0, {upper}), found {inside}")
    eps = inside[0]
    outside = [float(r) for r in roots if r > upper]
    return _result(
        eps, cfg, CLOSED_FORM, abs(float(poly_f(eps, cfg))),
        feasible_upper=upper, eps_high=outside[0] if outside else None,
    )


def bisect_root(func, lo: float, hi: float, xtol: float, max_iter: int = 400) -> float:
    """Bisection on a bracket where ``func(lo) > 0 >= func(hi)``."""
    f_lo = func(lo)
    f_hi = func(hi)
    if not (f_lo > 0 >= f_hi) and not (f_lo < 0 <= f_hi):
        raise SolverError(f"no sign change on [{lo}, {hi}]: f={f_lo}, {f_hi}")
    positive_lo = f_lo > 0
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if (func(mid) > 0) == positive_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def first_sign_change(func, lo: float, hi: float, points: int = SCAN_POINTS):
    """First bracket ``(a, b)`` on a log grid where ``func`` changes sign, or None."""
    grid = np.geomspace(lo, hi, points)
    values = np.asarray(func(grid), dtype=float)
    signs = np.sign(values)
    flips = np.nonzero(signs[:-1] * signs[1:] <= 0)[0]
    flips = [i for i in flips if signs[i] != 0 or signs[i + 1] != 0]
    if not flips:
        return None
    i = flips[0]
    if signs[i] == 0:
        return grid[i], grid[i]
    return grid[i], grid[i + 1]


def count_sign_changes(func, lo: float, hi: float, points: int = SCAN_POINTS) -> int:
    grid = np.geomspace(lo, hi, points)
    signs = np.sign(np.asarray(func(grid), dtype=float))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[:-1] != signs[1:]))


def solve_poly_root(cfg: MarketConfig) -> SolveResult:
    """Root of the large-population derivative numerator nearest zero, by bisection."""
    if not cfg.dist.is_uniform:
        raise DomainError("polynomial root needs uniform valuations")
    upper = feasible_upper(cfg)
    poly = poly_f if cfg.pt.eps_ref == 0.0 else poly_f_pos
    func = lambda e: poly(e, cfg)  # noqa: E731
    lo = 1e-12 * upper
    bracket = first_sign_change(func, lo, upper)
    if bracket is None:
        raise SolverError(
            f"no sign change of the derivative numerator on ({lo:.3g}, {upper:.3g}): "
            f"f(lo)={float(func(lo)):.6g}, f(upper)={float(func(upper)):.6g}"
        )
    a, b = bracket
    eps = a if a == b else bisect_root(lambda e: float(func(e)), a, b, BISECT_RTOL * upper)
    return _result(eps, cfg, POLY_ROOT, abs(float(func(eps))), feasible_upper=upper)


def golden_section_max(func, lo: float, hi: float, rtol: float = GOLDEN_RTOL, max_iter: int = 500):
    """Maximize a unimodal ``func`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    x1 = b - INVPHI * (b - a)
    x2 = a + INVPHI * (b - a)
    f1, f2 = func(x1), func(x2)
    for _ in range(max_iter):
        if b - a <= rtol * 0.5 * (a + b):
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INVPHI * (b - a)
            f1 = func(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INVPHI * (b - a)
            f2 = func(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def solve_exhaustive(cfg: MarketConfig, grid_points: int = SCAN_POINTS) -> SolveResult:
    """Maximize the exact utility: log grid, then golden-section around the best cell."""
    if grid_points < 100:
        raise DomainError(f"grid_points must be >= 100, got {grid_points}")
    upper = feasible_upper(cfg)
    grid = np.geomspace(1e-6 * upper, upper, grid_points)
    util, _ = utility_curve(grid, cfg)
    if not np.any(np.isfinite(util)):
        raise SolverError("utility is -inf on the whole grid")
    # argmax returns the first maximum, i.e. the smallest eps on ties
    i = int(np.argmax(util))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]
    x, fx = golden_section_max(lambda e: collector_utility(e, cfg).utility, lo, hi)
    eps = x if fx > util[i] else float(grid[i])
    cell = grid[1] / grid[0] - 1.0
    return _result(eps, cfg, EXHAUSTIVE, GOLDEN_RTOL * eps if fx > util[i] else cell * eps,
                   feasible_upper=upper, grid_best=float(grid[i]))


def roster_upper(roster: Roster, c: float) -> float:
    """Smallest eps beyond which nobody in the roster participates."""
    if roster.zero_reference:
        cut = roster.cutoffs(c)
        return float(cut[np.isfinite(cut)].max())
    from .population import count_roster

    hi = max(float(roster.eps_ref.max()), 1e-12)
    while count_roster(roster, hi, c) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise SolverError("roster participation never drops to zero")
    lo = hi / 2.0 if hi > 1e-12 else 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if count_roster(roster, mid, c) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def solve_roster(roster: Roster, cfg: MarketConfig, grid_points: int = SCAN_POINTS) -> SolveResult:
    """Maximize the collector's utility against a concrete heterogeneous roster.

    The participant count is a step function of eps that only drops where
    some individual's cutoff is crossed, and between drops the utility
    increases in eps.  With a zero reference point every maximizer therefore
    sits on a cutoff, so all cutoffs are enumerated.  Otherwise the count is
    evaluated on a log grid.
    """
    from .population import count_roster

    if len(roster) == 0:
        raise DomainError("empty roster")
    k, l = cfg.k, cfg.l
    if roster.zero_reference:
        cut = roster.cutoffs(cfg.c)
        order = np.argsort(cut, kind="stable")[::-1]
        cut_sorted = cut[order]
        valid = np.isfinite(cut_sorted) & (cut_sorted > 0)
        cut_sorted = cut_sorted[valid]
        if cut_sorted.size == 0:
            raise SolverError("nobody in the roster participates at any eps > 0")
        # participants at eps = cut_sorted[j] are all cutoffs >= it (ties included)
        n = np.searchsorted(-cut_sorted, -cut_sorted, side="right").astype(float)
        util = 1.0 - k / (1.0 + l * n) - 2.0 / (n * n * cut_sorted * cut_sorted)
        j = _smallest_eps_argmax(util, cut_sorted)
        best = float(util[j])
        eps = float(cut_sorted[j])
        participants = float(n[j])
        chosen = order[valid][: int(n[j])]
        resolution = 0.0
    else:
        upper = roster_upper(roster, cfg.c)
        grid = np.geomspace(1e-6 * upper, upper, grid_points)
        counts = np.array([count_roster(roster, e, cfg.c) for e in grid], dtype=float)
        with np.errstate(divide="ignore"):
            util = np.where(counts > 0, 1.0 - k / (1.0 + l * counts) - 2.0 / (counts ** 2 * grid ** 2), -np.inf)
        j = int(np.argmax(util))
        eps = float(grid[j])
        participants = float(counts[j])
        best = float(util[j])
        chosen = np.flatnonzero(_participating(roster, eps, cfg.c))
        resolution = (grid[1] / grid[0] - 1.0) * eps
    threshold = float(roster.lam[chosen].max()) if len(chosen) else float("nan")
    return SolveResult(eps, float(best), participants, ROSTER, resolution,
                       {"lambda_threshold": threshold,
                        "beta_threshold": float(roster.beta[chosen].min()) if len(chosen) else float("nan")})


def _smallest_eps_argmax(util: np.ndarray, eps: np.ndarray) -> int:
    best = util.max()
    ties = np.flatnonzero(util == best)
    return int(ties[np.argmin(eps[ties])])


def _participating(roster: Roster, eps: float, c: float) -> np.ndarray:
    stay = c * np.where(roster.eps_ref > 0, roster.eps_ref ** roster.beta, 0.0)
    return roster.w + c * roster.participation_levels(eps) >= stay
