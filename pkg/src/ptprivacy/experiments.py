"""Scripted sweeps with built-in qualitative checks.

Every sweep returns plain :class:`SweepRecord` rows plus a list of
:class:`Check` outcomes.  Nothing here compares against hard-coded numbers;
each check is an inequality on solver outputs.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np

from .collector import MarketConfig, collector_utility, poly_f_pos
from .population import GammaHetero, ValuationDist, gamma_from_mean_var, sample_roster
from .pt_core import DomainError
from .solver import (
    SolverError,
    solve_closed_form,
    solve_exhaustive,
    solve_poly_root,
    solve_roster,
)

GAP_N_VALUES = (4000, 10_000, 20_000, 40_000)
PT_LAMBDAS = tuple(float(x) for x in np.arange(1.0, 4.51, 0.5))
PT_BETAS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.88, 0.9, 1.0)
COMPARE_LAMBDAS = (1.5, 2.0, 3.0, 4.5)
COMPARE_BETAS = (0.5, 0.75, 0.88, 1.0)
REF_LAMBDAS = tuple(float(x) for x in np.linspace(1.0, 4.5, 20))
REF_BETAS = tuple(float(x) for x in np.linspace(0.2, 1.0, 20))
MISMATCH_LAMBDAS = (1.0, 1.5, 1.95, 3.0, 4.5)
MISMATCH_BETAS = (1.0, 0.88, 0.75, 0.5)

LAMBDA_MEAN = 1.95
BETA_MEAN = 0.75
LAMBDA_VARIANCES = tuple(float(x) for x in np.linspace(0.05, 3.0, 8))
BETA_VARIANCES = tuple(float(x) for x in np.linspace(0.005, 0.1, 8))
# Valuations concentrated near w_max/2 and a benefit that saturates slowly.
# With uniform valuations the cutoff spread is dominated by W and the
# variance of the PT parameters barely moves the optimum.
HETERO_BASE = MarketConfig(c=2.0, l=400.0, dist=ValuationDist("truncnorm", 1.0, 0.5, 0.005))

BAND = 1e-9


@dataclass
class SweepRecord:
    inputs: dict
    eps_star: float
    utility: float
    participants: float
    eps_star_approx: float | None = None
    seed: int | None = None
    outputs: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = dict(self.inputs)
        out.update(
            eps_star=self.eps_star,
            eps_star_approx=self.eps_star_approx,
            utility=self.utility,
            participants=self.participants,
        )
        out.update(self.outputs)
        out["seed"] = self.seed
        return out


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "detail": self.detail}


@dataclass
class ExperimentResult:
    name: str
    records: list
    checks: list
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def config_inputs(cfg: MarketConfig) -> dict:
    """Flat description of a config, so every row can be re-run on its own."""
    d, pt = cfg.dist, cfg.pt
    return {
        "n_total": int(cfg.n_total),
        "c": float(cfg.c),
        "k": float(cfg.k),
        "l": float(cfg.l),
        "dist": d.kind,
        "w_max": float(d.w_max),
        "mu": None if d.mu is None else float(d.mu),
        "sigma": None if d.sigma is None else float(d.sigma),
        "lambda": float(pt.lam),
        "beta": float(pt.beta),
        "eps_ref": float(pt.eps_ref),
        "m": int(pt.m),
        "weighting": pt.weighting,
    }


def _pool_map(func, tasks, jobs: int):
    """Ordered map, optionally across processes.  Results keep task order."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def approx_solve(cfg: MarketConfig):
    """Approximate optimum: the quartic when it applies, the bisected numerator otherwise."""
    if cfg.pt.beta == 1.0 and cfg.pt.eps_ref == 0.0:
        return solve_closed_form(cfg)
    return solve_poly_root(cfg)


def strictly_decreasing(xs) -> bool:
    return bool(np.all(np.diff(np.asarray(xs, dtype=float)) < 0))


def strictly_increasing(xs) -> bool:
    return bool(np.all(np.diff(np.asarray(xs, dtype=float)) > 0))


def perturbed_configs(cfg: MarketConfig):
    """The 3x3 neighbourhood of ``cfg``: ``l`` scaled by 0.1, 1, 10 and ``c`` by 0.5, 1, 2."""
    return [cfg.replace(l=cfg.l * fl, c=cfg.c * fc) for fl in (0.1, 1.0, 10.0) for fc in (0.5, 1.0, 2.0)]


# ---------------------------------------------------------------- gap vs N

def approximation_gap_sweep(cfg: MarketConfig, n_values=GAP_N_VALUES) -> list:
    if cfg.pt.beta != 1.0:
        raise DomainError("approximation gap sweep needs beta == 1")
    records = []
    for n in n_values:
        c_n = cfg.replace(n_total=int(n))
        approx = solve_closed_form(c_n).eps_star
        exact = solve_exhaustive(c_n)
        records.append(SweepRecord(
            config_inputs(c_n), exact.eps_star, exact.utility, exact.participants,
            eps_star_approx=approx,
            outputs={"gap": abs(approx - exact.eps_star) / exact.eps_star},
        ))
    return records


def gap_checks(records) -> list:
    gaps = [r.outputs["gap"] for r in records]
    approx = [r.eps_star_approx for r in records]
    exact = [r.eps_star for r in records]
    shown = ", ".join(f"{g:.4g}" for g in gaps)
    return [
        Check("gap_positive", all(g > 0 for g in gaps), f"gaps {shown}"),
        Check("gap_decreasing_in_n", strictly_decreasing(gaps), f"gaps {shown}"),
        Check("approx_decreasing_in_n", strictly_decreasing(approx), f"{approx}"),
        Check("exact_decreasing_in_n", strictly_decreasing(exact), f"{exact}"),
    ]


# ---------------------------------------------------------- lambda/beta grid

def _pt_cell(args):
    cfg, lam, beta = args
    c2 = cfg.with_pt(lam=lam, beta=beta)
    exact = solve_exhaustive(c2)
    approx = approx_solve(c2).eps_star
    return SweepRecord(config_inputs(c2), exact.eps_star, exact.utility, exact.participants,
                       eps_star_approx=approx)


def pt_parameter_sweep(cfg: MarketConfig, lambdas=PT_LAMBDAS, betas=PT_BETAS, jobs: int = 1) -> list:
    if cfg.pt.eps_ref != 0.0:
        raise DomainError("parameter sweep needs eps_ref == 0")
    tasks = [(cfg, float(lam), float(b)) for lam in lambdas for b in betas]
    return _pool_map(_pt_cell, tasks, jobs)


def _grid(records, key="eps_star"):
    lams = sorted({r.inputs["lambda"] for r in records})
    betas = sorted({r.inputs["beta"] for r in records})
    table = np.full((len(lams), len(betas)), np.nan)
    for r in records:
        value = getattr(r, key) if hasattr(r, key) else r.outputs[key]
        table[lams.index(r.inputs["lambda"]), betas.index(r.inputs["beta"])] = value
    return lams, betas, table


def pt_checks(records) -> list:
    lams, betas, eps = _grid(records)
    bad_lam = [b for j, b in enumerate(betas) if not strictly_decreasing(eps[:, j])]
    bad_beta = [lam for i, lam in enumerate(lams) if not strictly_increasing(eps[i, :])]
    i_max, j_max = np.unravel_index(np.nanargmax(eps), eps.shape)
    top = (lams[i_max], betas[j_max])
    return [
        Check("exact_decreasing_in_lambda", not bad_lam, f"violating beta slices: {bad_lam}"),
        Check("exact_increasing_in_beta", not bad_beta, f"violating lambda slices: {bad_beta}"),
        Check("eut_cell_is_maximum", top == (1.0, 1.0), f"argmax at lambda={top[0]}, beta={top[1]}"),
    ]


def comparative_checks(cfg: MarketConfig) -> list:
    """PT lowers the approximate optimum below EUT, and more loss aversion lowers it further.

    Checked on every config of the 3x3 perturbation of ``cfg``.
    """
    fail_eut, fail_lam = [], []
    for c2 in perturbed_configs(cfg):
        eut = approx_solve(c2.with_pt(lam=1.0, beta=1.0)).eps_star
        for lam in COMPARE_LAMBDAS:
            for b in COMPARE_BETAS:
                if not approx_solve(c2.with_pt(lam=lam, beta=b)).eps_star < eut:
                    fail_eut.append((c2.l, c2.c, lam, b))
        for b in COMPARE_BETAS:
            series = [approx_solve(c2.with_pt(lam=lam, beta=b)).eps_star for lam in PT_LAMBDAS]
            if not strictly_decreasing(series):
                fail_lam.append((c2.l, c2.c, b))
    return [
        Check("eut_above_pt_all_perturbations", not fail_eut, f"failures (l, c, lambda, beta): {fail_eut}"),
        Check("approx_decreasing_in_lambda_all_perturbations", not fail_lam,
              f"failures (l, c, beta): {fail_lam}"),
    ]


# ---------------------------------------------------------- reference point

def _ref_cell(args):
    cfg, eps_ref, lam, beta, exact = args
    zero = cfg.with_pt(lam=lam, beta=beta, eps_ref=0.0)
    pos = cfg.with_pt(lam=lam, beta=beta, eps_ref=eps_ref)
    e0 = approx_solve(zero).eps_star
    e_pos = solve_poly_root(pos)
    prediction = float(poly_f_pos(e0, pos))
    out = {
        "eps_star_zero_approx": e0,
        "diff_approx": e_pos.eps_star - e0,
        "f_pos_at_zero_root": prediction,
    }
    eps_star, util, n = e_pos.eps_star, e_pos.utility, e_pos.participants
    if exact:
        x0 = solve_exhaustive(zero).eps_star
        x_pos = solve_exhaustive(pos)
        out.update(eps_star_zero=x0, diff_exact=x_pos.eps_star - x0)
        eps_star, util, n = x_pos.eps_star, x_pos.utility, x_pos.participants
    return SweepRecord(config_inputs(pos), eps_star, util, n, eps_star_approx=e_pos.eps_star, outputs=out)


def reference_point_sweep(cfg: MarketConfig, eps_ref: float = 0.01, lambdas=REF_LAMBDAS,
                          betas=REF_BETAS, exact: bool = True, jobs: int = 1) -> list:
    """Shift of the optimum when individuals hold a positive reference point.

    ``eps_star`` is exact when ``exact`` is set; the approximate shift and the
    sign of ``f_pos`` at the zero-reference root are always recorded.
    """
    if not eps_ref > 0:
        raise DomainError(f"eps_ref must be > 0, got {eps_ref}")
    tasks = [(cfg, float(eps_ref), float(lam), float(b), exact) for lam in lambdas for b in betas]
    return _pool_map(_ref_cell, tasks, jobs)


def trichotomy_agreement(records):
    """Fraction of cells where ``sign(f_pos)`` at the zero-reference root predicts the shift."""
    agree = total = 0
    misses = []
    for r in records:
        f = r.outputs["f_pos_at_zero_root"]
        if abs(f) < BAND:
            continue
        total += 1
        if np.sign(f) == np.sign(r.outputs["diff_approx"]):
            agree += 1
        else:
            misses.append((r.inputs["lambda"], r.inputs["beta"]))
    return agree, total, misses


def refpoint_checks(records, min_agreement: float = 0.99) -> list:
    agree, total, misses = trichotomy_agreement(records)
    rate = agree / total if total else 0.0
    pos = [r for r in records
           if r.inputs["lambda"] >= 2.0 and r.inputs["beta"] <= 0.5 and r.outputs["diff_approx"] > 0]
    neg = [r for r in records
           if (r.inputs["lambda"] <= 1.5 or r.inputs["beta"] > 0.5) and r.outputs["diff_approx"] < 0]
    checks = [
        Check("trichotomy_predicts_shift", rate >= min_agreement,
              f"{agree}/{total} cells agree outside the |f_pos| < {BAND:g} band; misses {misses}"),
        Check("positive_region_nonempty", bool(pos), f"{len(pos)} cells with lambda >= 2, beta <= 0.5 shift up"),
        Check("negative_region_nonempty", bool(neg), f"{len(neg)} cells with lambda <= 1.5 or beta > 0.5 shift down"),
    ]
    return checks


def exact_sign_agreement(records) -> tuple[int, int]:
    """How often the exact shift has the same sign as the approximate one (informational)."""
    rows = [r for r in records if "diff_exact" in r.outputs]
    same = sum(np.sign(r.outputs["diff_exact"]) == np.sign(r.outputs["diff_approx"]) for r in rows)
    return int(same), len(rows)


# ---------------------------------------------------------- EUT mismatch

def mismatch_loss(cfg: MarketConfig) -> float:
    """Relative utility lost by designing for EUT individuals when they are really ``cfg.pt``.

    Clamped to ``[0, 1]``; a design that attracts nobody loses everything.
    """
    if cfg.pt.eps_ref != 0.0:
        raise DomainError("mismatch loss needs eps_ref == 0")
    best = solve_exhaustive(cfg)
    if not best.utility > 0:
        raise SolverError(f"optimal utility {best.utility} is not positive; relative loss undefined")
    if cfg.pt.is_eut:
        return 0.0
    eut_eps = solve_exhaustive(cfg.with_pt(lam=1.0, beta=1.0)).eps_star
    realized = collector_utility(eut_eps, cfg).utility
    if not math.isfinite(realized):
        return 1.0
    return min(max((best.utility - realized) / best.utility, 0.0), 1.0)


def _mismatch_cell(args):
    cfg, lam, beta = args
    c2 = cfg.with_pt(lam=lam, beta=beta)
    best = solve_exhaustive(c2)
    return SweepRecord(config_inputs(c2), best.eps_star, best.utility, best.participants,
                       outputs={"loss": mismatch_loss(c2)})


def mismatch_sweep(cfg: MarketConfig, lambdas=MISMATCH_LAMBDAS, betas=MISMATCH_BETAS, jobs: int = 1) -> list:
    tasks = [(cfg, float(lam), float(b)) for lam in lambdas for b in betas]
    return _pool_map(_mismatch_cell, tasks, jobs)


def mismatch_checks(records) -> list:
    loss = {(r.inputs["lambda"], r.inputs["beta"]): r.outputs["loss"] for r in records}
    checks = []
    if (1.0, 1.0) in loss:
        checks.append(Check("no_loss_at_eut", loss[(1.0, 1.0)] == 0.0, f"loss {loss[(1.0, 1.0)]!r}"))
    along_lam = [loss[(lam, 0.88)] for lam in sorted({k[0] for k in loss}) if (lam, 0.88) in loss]
    along_beta = [loss[(1.95, b)] for b in sorted({k[1] for k in loss}, reverse=True) if (1.95, b) in loss]
    checks.append(Check("loss_increasing_in_lambda", len(along_lam) > 1 and strictly_increasing(along_lam),
                        f"beta=0.88: {[f'{x:.4g}' for x in along_lam]}"))
    checks.append(Check("loss_increasing_as_beta_drops", len(along_beta) > 1 and strictly_increasing(along_beta),
                        f"lambda=1.95: {[f'{x:.4g}' for x in along_beta]}"))
    if (4.5, 0.88) in loss and (1.5, 0.88) in loss:
        hi, lo = loss[(4.5, 0.88)], loss[(1.5, 0.88)]
        checks.append(Check("loss_high_lambda_exceeds_low", hi > lo, f"{hi:.4g} vs {lo:.4g}"))
    return checks


# ---------------------------------------------------------- heterogeneity

def derive_seed(*entropy) -> int:
    """A 64-bit seed fixed by ``entropy`` alone."""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1, np.uint64)[0])


def _hetero_model(cfg: MarketConfig, which: str, variance: float) -> GammaHetero:
    pt = cfg.pt
    if which == "lambda":
        return GammaHetero(lam=gamma_from_mean_var(LAMBDA_MEAN, variance), beta=BETA_MEAN, m=pt.m,
                           weighting=pt.weighting)
    if which == "beta":
        return GammaHetero(lam=LAMBDA_MEAN, beta=gamma_from_mean_var(BETA_MEAN, variance), m=pt.m,
                           weighting=pt.weighting)
    raise DomainError(f"which must be 'lambda' or 'beta', got {which!r}")


def _hetero_rep(args):
    cfg, which, variance, seed = args
    roster = sample_roster(cfg.dist, _hetero_model(cfg, which, variance), cfg.n_total, seed)
    res = solve_roster(roster, cfg)
    return (res.eps_star, res.utility, res.participants,
            res.extra["lambda_threshold"], res.extra["beta_threshold"])


def hetero_variance_sweep(base: MarketConfig, which: str, variances=None, reps: int = 50,
                          seed: int = 0, jobs: int = 1) -> list:
    """Mean optimum over ``reps`` sampled rosters at each variance of one PT parameter."""
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    if variances is None:
        variances = LAMBDA_VARIANCES if which == "lambda" else BETA_VARIANCES
    _hetero_model(base, which, 1.0)
    cell_seeds = [derive_seed(seed, i) for i in range(len(variances))]
    tasks = [(base, which, float(v), derive_seed(cs, r))
             for v, cs in zip(variances, cell_seeds) for r in range(reps)]
    results = np.array(_pool_map(_hetero_rep, tasks, jobs), dtype=float).reshape(len(variances), reps, 5)
    records = []
    for v, cs, cell in zip(variances, cell_seeds, results):
        eps = cell[:, 0]
        se = float(eps.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
        inputs = config_inputs(base)
        inputs.update({"which": which, "variance": float(v), "reps": int(reps),
                       "lambda": LAMBDA_MEAN, "beta": BETA_MEAN})
        records.append(SweepRecord(
            inputs, float(eps.mean()), float(cell[:, 1].mean()), float(cell[:, 2].mean()), seed=cs,
            outputs={"eps_star_se": se,
                     "lambda_threshold": float(cell[:, 3].mean()),
                     "beta_threshold": float(cell[:, 4].mean())},
        ))
    return records


def u_shape(means, ses):
    """Index of an interior minimum whose neighbours both sit more than one SE above it, else None."""
    means = np.asarray(means, dtype=float)
    ses = np.asarray(ses, dtype=float)
    i = int(np.argmin(means))
    if i == 0 or i == len(means) - 1:
        return None
    if means[i - 1] - means[i] > ses[i - 1] and means[i + 1] - means[i] > ses[i + 1]:
        return i
    return None


def hetero_checks(records) -> list:
    means = [r.eps_star for r in records]
    ses = [r.outputs["eps_star_se"] for r in records]
    i = u_shape(means, ses)
    shown = ", ".join(f"{m:.5g}+-{s:.2g}" for m, s in zip(means, ses))
    checks = [Check("u_shape_in_variance", i is not None, f"argmin {int(np.argmin(means))}; {shown}")]
    if records and records[0].inputs["which"] == "lambda":
        thr = [r.outputs["lambda_threshold"] for r in records]
        j = int(np.argmin(means))
        ok = thr[j] > thr[0] and thr[j] > thr[-1]
        checks.append(Check("threshold_peaks_at_min_eps", ok,
                            f"threshold {thr[0]:.4g} (low var), {thr[j]:.4g} (argmin), {thr[-1]:.4g} (high var)"))
    return checks


# ---------------------------------------------------------- output

def format_value(value) -> str:
    """Shortest round-trip text for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_records(records, path) -> Path:
    path = Path(path)
    rows = [r.row() for r in records]
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(col)) for col in columns])
    return path


EXPERIMENTS = ("gap", "pt", "refpoint", "mismatch", "hetero")


def run_experiment(name: str, cfg: MarketConfig, params: dict | None = None, seed: int = 0,
                   jobs: int = 1) -> ExperimentResult:
    """Run one named sweep and its checks."""
    params = dict(params or {})
    if name == "gap":
        records = approximation_gap_sweep(cfg, params.get("n_values", GAP_N_VALUES))
        return ExperimentResult(name, records, gap_checks(records))
    if name == "pt":
        records = pt_parameter_sweep(cfg, params.get("lambdas", PT_LAMBDAS), params.get("betas", PT_BETAS), jobs)
        return ExperimentResult(name, records, pt_checks(records) + comparative_checks(cfg))
    if name == "refpoint":
        records = reference_point_sweep(cfg, params.get("eps_ref", 0.01), params.get("lambdas", REF_LAMBDAS),
                                        params.get("betas", REF_BETAS), params.get("exact", True), jobs)
        checks = refpoint_checks(records)
        same, total = exact_sign_agreement(records)
        notes = [f"exact shift has the approximate sign in {same}/{total} cells"] if total else []
        return ExperimentResult(name, records, checks, notes)
    if name == "mismatch":
        records = mismatch_sweep(cfg, params.get("lambdas", MISMATCH_LAMBDAS), params.get("betas", MISMATCH_BETAS),
                                 jobs)
        return ExperimentResult(name, records, mismatch_checks(records))
    if name == "hetero":
        which = params.get("which", "lambda")
        records = hetero_variance_sweep(cfg, which, params.get("variances"), params.get("reps", 50), seed, jobs)
        return ExperimentResult(name, records, hetero_checks(records))
    raise DomainError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
