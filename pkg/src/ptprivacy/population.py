"""The crowd: reward valuations, the participation rule, and rosters."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from scipy import stats

from .pt_core import (
    DomainError,
    SPLIT,
    PTParams,
    UNIFORM,
    privacy_cost,
    prospect_nonparticipation_level,
    prospect_participation_level,
)

UNIFORM_DIST = "uniform"
TRUNCNORM_DIST = "truncnorm"


@dataclass(frozen=True)
class ValuationDist:
    """Distribution of reward valuation ``W`` on ``[0, w_max]``.

    ``mu`` and ``sigma`` are the location/scale of the parent normal and are
    ignored for the uniform kind.
    """

    kind: str = UNIFORM_DIST
    w_max: float = 1.0
    mu: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in (UNIFORM_DIST, TRUNCNORM_DIST):
            raise DomainError(f"unknown valuation distribution {self.kind!r}")
        if not (self.w_max > 0 and math.isfinite(self.w_max)):
            raise DomainError(f"w_max must be > 0, got {self.w_max}")
        if self.kind == TRUNCNORM_DIST:
            if self.mu is None:
                object.__setattr__(self, "mu", self.w_max / 2)
            if self.sigma is None:
                object.__setattr__(self, "sigma", self.w_max / 4)
            if not self.sigma > 0:
                raise DomainError(f"sigma must be > 0, got {self.sigma}")

    @property
    def is_uniform(self) -> bool:
        return self.kind == UNIFORM_DIST

    def _frozen(self):
        a = (0.0 - self.mu) / self.sigma
        b = (self.w_max - self.mu) / self.sigma
        return stats.truncnorm(a, b, loc=self.mu, scale=self.sigma)

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        if self.is_uniform:
            return np.where((w >= 0) & (w <= self.w_max), 1.0 / self.w_max, 0.0)
        return self._frozen().pdf(w)

    def sf(self, w):
        """``Pr(W > w)``."""
        w = np.asarray(w, dtype=float)
        if self.is_uniform:
            return np.clip((self.w_max - w) / self.w_max, 0.0, 1.0)
        return self._frozen().sf(w)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.is_uniform:
            return rng.uniform(0.0, self.w_max, size)
        u = rng.uniform(0.0, 1.0, size)
        return np.clip(self._frozen().ppf(u), 0.0, self.w_max)


@dataclass(frozen=True)
class Individual:
    w: float
    pt: PTParams


@dataclass(frozen=True)
class GammaSpec:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError(f"Gamma shape and scale must be > 0, got {self.shape}, {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def var(self) -> float:
        return self.shape * self.scale ** 2


# Fitted behavioral parameters reported for an experimental subject pool.
LAMBDA_FIT = GammaSpec(3.2433, 0.6018)
BETA_FIT = GammaSpec(12.8662, 0.0583)


def gamma_from_mean_var(mean: float, variance: float) -> GammaSpec:
    if not (mean > 0 and variance > 0):
        raise DomainError(f"mean and variance must be > 0, got {mean}, {variance}")
    return GammaSpec(mean * mean / variance, variance / mean)


@dataclass(frozen=True)
class GammaHetero:
    """Independent Gamma-distributed ``lambda`` and/or ``beta``.

    Either field may be a plain float to hold that parameter fixed.
    """

    lam: Union[GammaSpec, float] = LAMBDA_FIT
    beta: Union[GammaSpec, float] = BETA_FIT
    eps_ref: float = 0.0
    m: int = 10
    weighting: str = SPLIT


@dataclass
class Roster:
    """A materialized population, stored column-wise."""

    w: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    eps_ref: np.ndarray
    m: int = 10
    weighting: str = SPLIT
    seed: int | None = None
    _slope: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        n = len(self.w)
        self.lam = np.broadcast_to(np.asarray(self.lam, dtype=float), (n,)).copy()
        self.beta = np.broadcast_to(np.asarray(self.beta, dtype=float), (n,)).copy()
        self.eps_ref = np.broadcast_to(np.asarray(self.eps_ref, dtype=float), (n,)).copy()
        if n and (self.lam.min() < 1 or self.beta.min() <= 0 or self.beta.max() > 1
                  or self.eps_ref.min() < 0 or self.w.min() < 0):
            raise DomainError("roster contains out-of-range parameters")

    def __len__(self) -> int:
        return len(self.w)

    @property
    def individuals(self) -> list[Individual]:
        return [
            Individual(float(w), PTParams(float(l), float(b), float(r), self.m, self.weighting))
            for w, l, b, r in zip(self.w, self.lam, self.beta, self.eps_ref)
        ]

    @classmethod
    def from_individuals(cls, people, seed=None) -> "Roster":
        people = list(people)
        m = people[0].pt.m if people else 10
        weighting = people[0].pt.weighting if people else SPLIT
        if any(p.pt.m != m or p.pt.weighting != weighting for p in people):
            raise DomainError("all individuals in a roster must share m and weighting")
        return cls(
            w=[p.w for p in people],
            lam=[p.pt.lam for p in people],
            beta=[p.pt.beta for p in people],
            eps_ref=[p.pt.eps_ref for p in people],
            m=m,
            weighting=weighting,
            seed=seed,
        )

    @property
    def zero_reference(self) -> bool:
        return not np.any(self.eps_ref > 0)

    def slopes(self) -> np.ndarray:
        """Per-individual ``lambda * (1/m)^(beta+1) * sum_i i^beta``."""
        if self._slope is None:
            idx = np.arange(1, self.m + 1, dtype=float)
            powsum = np.sum(idx[None, :] ** self.beta[:, None], axis=1)
            self._slope = self.lam * (1.0 / self.m) ** (self.beta + 1.0) * powsum
        return self._slope

    def cutoffs(self, c: float) -> np.ndarray:
        """Largest eps at which each individual still participates (zero reference only)."""
        if not self.zero_reference:
            raise DomainError("participation cutoffs need a zero reference point")
        with np.errstate(divide="ignore"):
            return (self.w / (c * self.slopes())) ** (1.0 / self.beta)

    def participation_levels(self, eps: float) -> np.ndarray:
        if self.zero_reference:
            return -self.slopes() * eps ** self.beta
        m = self.m
        idx = np.arange(1, m + 1, dtype=float)
        x = idx[None, :] * eps / m
        ref = self.eps_ref[:, None]
        t = np.clip(np.floor(m * self.eps_ref / eps), 0, m)
        is_gain = idx[None, :] <= t[:, None]
        b = self.beta[:, None]
        gain = np.where(is_gain, np.clip(ref - x, 0, None) ** b, 0.0).sum(axis=1)
        loss = np.where(is_gain, 0.0, np.clip(x - ref, 0, None) ** b).sum(axis=1)
        if self.weighting == UNIFORM:
            return (gain - self.lam * loss) / m
        return (t / m) * gain - (1.0 - t / m) * self.lam * loss

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["w", "lambda", "beta", "eps_ref"])
            for row in zip(self.w, self.lam, self.beta, self.eps_ref):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, m: int = 10, weighting: str = SPLIT) -> "Roster":
        cols = {"w": [], "lambda": [], "beta": [], "eps_ref": []}
        with open(Path(path), newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(cols) - set(reader.fieldnames or [])
            if missing:
                raise DomainError(f"roster CSV missing columns: {sorted(missing)}")
            for row in reader:
                for key in cols:
                    cols[key].append(float(row[key]))
        return cls(cols["w"], cols["lambda"], cols["beta"], cols["eps_ref"], m=m, weighting=weighting)


def participate(ind: Individual, eps: float, c: float) -> bool:
    """Stage-II decision; a tie goes to participation."""
    stay = privacy_cost(prospect_nonparticipation_level(ind.pt), c)
    join = ind.w + privacy_cost(prospect_participation_level(eps, ind.pt), c)
    return join >= stay


def participation_threshold(eps: float, pt: PTParams, c: float) -> float:
    """Reward valuation needed to make participation worthwhile."""
    return c * (prospect_nonparticipation_level(pt) - prospect_participation_level(eps, pt))


def participation_count(eps: float, dist: ValuationDist, pt: PTParams, n_total: int, c: float) -> float:
    """Expected number of participants among ``n_total`` homogeneous individuals."""
    if not eps > 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    threshold = participation_threshold(eps, pt, c)
    return float(n_total * dist.sf(threshold))


def count_roster(roster: Roster, eps: float, c: float) -> int:
    if len(roster) == 0:
        return 0
    stay = c * np.where(roster.eps_ref > 0, roster.eps_ref ** roster.beta, 0.0)
    join = roster.w + c * roster.participation_levels(eps)
    return int(np.count_nonzero(join >= stay))


def _gamma_draws(rng, spec: GammaSpec, size: int, lo: float, hi: float, max_rounds: int = 1000):
    """Gamma draws restricted to ``[lo, hi]`` by resampling rejected values."""
    out = rng.gamma(spec.shape, spec.scale, size)
    for _ in range(max_rounds):
        bad = (out < lo) | (out > hi) | (out <= 0)
        nbad = int(bad.sum())
        if nbad == 0:
            return out
        out[bad] = rng.gamma(spec.shape, spec.scale, nbad)
    raise DomainError(f"Gamma{(spec.shape, spec.scale)} puts too little mass on [{lo}, {hi}]")


def sample_roster(dist: ValuationDist, pt_model, n_total: int, seed: int) -> Roster:
    """Draw ``n_total`` individuals; ``pt_model`` is a PTParams or a GammaHetero."""
    if n_total < 1:
        raise DomainError(f"n_total must be >= 1, got {n_total}")
    rng = np.random.default_rng(seed)
    w = dist.sample(rng, n_total)
    if isinstance(pt_model, PTParams):
        return Roster(w, pt_model.lam, pt_model.beta, pt_model.eps_ref,
                      m=pt_model.m, weighting=pt_model.weighting, seed=seed)
    if isinstance(pt_model.lam, GammaSpec):
        lam = _gamma_draws(rng, pt_model.lam, n_total, 1.0, np.inf)
    else:
        lam = pt_model.lam
    if isinstance(pt_model.beta, GammaSpec):
        beta = _gamma_draws(rng, pt_model.beta, n_total, 0.0, 1.0)
    else:
        beta = pt_model.beta
    return Roster(w, lam, beta, pt_model.eps_ref, m=pt_model.m,
                  weighting=pt_model.weighting, seed=seed)


class GofResult(NamedTuple):
    statistic: float
    p_value: float
    low_expected: bool


def chi_squared_gof(samples, spec: GammaSpec, bins: int = 20) -> GofResult:
    """Pearson chi-squared test of ``samples`` against ``Gamma(spec)``.

    Bins are equiprobable under the hypothesized distribution; two degrees of
    freedom are charged for the fitted shape and scale.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("no samples")
    if bins < 2:
        raise DomainError(f"need at least 2 bins, got {bins}")
    edges = stats.gamma.ppf(np.linspace(0.0, 1.0, bins + 1), spec.shape, scale=spec.scale)
    observed = np.bincount(np.searchsorted(edges[1:-1], x, side="right"), minlength=bins)
    expected = x.size / bins
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = max(bins - 3, 1)
    return GofResult(statistic, float(stats.chi2.sf(statistic, dof)), expected < 5)
