"""``pt-privacy`` command line: solve, sweep, noise-demo.

Configuration is a JSON file plus flag overrides; flags win.  Exit codes:
0 success, 2 bad config or data, 3 solver failure, 4 a sweep check failed.
"""
from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field
import hashlib
import json
import math
from pathlib import Path
import sys

import numpy as np

from .collector import MarketConfig, laplace_noise, laplace_noise_demo
from .experiments import EXPERIMENTS, HETERO_BASE, run_experiment, write_records
from .population import ValuationDist
from .pt_core import DomainError, PTParams
from .solver import SolverError, solve_closed_form, solve_exhaustive, solve_poly_root

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

U64_MAX = 2 ** 64 - 1

MARKET_KEYS = ("n_total", "c", "k", "l", "w_max", "dist", "mu", "sigma")
PT_KEYS = ("lambda", "beta", "eps_ref", "m", "weighting")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(message if message.startswith(field_name) else f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class RunConfig:
    market: MarketConfig = field(default_factory=MarketConfig)
    pt: PTParams = field(default_factory=lambda: PTParams(lam=1.95))
    experiment: str | None = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_path: str = "results"

    def market_with_pt(self) -> MarketConfig:
        return self.market.replace(pt=self.pt)

    def to_dict(self) -> dict:
        m, d, pt = self.market, self.market.dist, self.pt
        return {
            "market": {"n_total": m.n_total, "c": m.c, "k": m.k, "l": m.l, "w_max": d.w_max,
                       "dist": d.kind, "mu": d.mu, "sigma": d.sigma},
            "pt": {"lambda": pt.lam, "beta": pt.beta, "eps_ref": pt.eps_ref, "m": pt.m,
                   "weighting": pt.weighting},
            "experiment": {"name": self.experiment, "params": dict(self.params)},
            "seed": self.seed,
            "output_path": self.output_path,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _reject_unknown(section: str, given: dict, allowed) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}" if section else key, "unknown field")


def _number(name: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(name, f"must be finite, got {value!r}")
    return float(value)


def run_config_from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    """Build and validate a RunConfig; missing fields come from ``base``."""
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    base = base or RunConfig()
    _reject_unknown("", data, ("market", "pt", "experiment", "seed", "output_path"))
    cur = base.to_dict()

    market = dict(cur["market"])
    given = data.get("market", {}) or {}
    _reject_unknown("market", given, MARKET_KEYS)
    market.update(given)
    if "dist" in given and given["dist"] != cur["market"]["dist"]:
        # moving between families: mu/sigma fall back to the new family's defaults
        market["mu"] = given.get("mu")
        market["sigma"] = given.get("sigma")
    pt = dict(cur["pt"])
    given = data.get("pt", {}) or {}
    _reject_unknown("pt", given, PT_KEYS)
    pt.update(given)
    experiment = dict(cur["experiment"])
    given = data.get("experiment", {}) or {}
    _reject_unknown("experiment", given, ("name", "params"))
    experiment.update(given)

    for key in ("c", "k", "l", "w_max"):
        market[key] = _number(key, market[key])
    market["n_total"] = _number("n_total", market["n_total"], integer=True)
    for key in ("mu", "sigma"):
        if market[key] is not None:
            market[key] = _number(key, market[key])
    for key in ("lambda", "beta", "eps_ref"):
        pt[key] = _number(key, pt[key])
    pt["m"] = _number("m", pt["m"], integer=True)

    try:
        pt_obj = PTParams(lam=pt["lambda"], beta=pt["beta"], eps_ref=pt["eps_ref"], m=pt["m"],
                          weighting=pt["weighting"])
    except DomainError as exc:
        raise ConfigError(str(exc).split()[0], str(exc)) from None
    if market["dist"] not in ("uniform", "truncnorm"):
        raise ConfigError("dist", f"must be 'uniform' or 'truncnorm', got {market['dist']!r}")
    try:
        dist = ValuationDist(market["dist"], market["w_max"], market["mu"], market["sigma"])
        market_obj = MarketConfig(n_total=market["n_total"], c=market["c"], k=market["k"], l=market["l"],
                                  dist=dist, pt=pt_obj)
    except DomainError as exc:
        raise ConfigError(str(exc).split()[0], str(exc)) from None

    name = experiment.get("name")
    if name is not None and name not in EXPERIMENTS:
        raise ConfigError("experiment.name", f"must be one of {EXPERIMENTS}, got {name!r}")
    params = experiment.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("experiment.params", "must be an object")
    seed = data.get("seed", base.seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= U64_MAX:
        raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {seed!r}")
    out = data.get("output_path", base.output_path)
    if not isinstance(out, str) or not out:
        raise ConfigError("output_path", "must be a non-empty string")
    return RunConfig(market_obj, pt_obj, name, params, seed, out)


def default_run_config(experiment: str | None = None) -> RunConfig:
    """Defaults; the heterogeneity sweep starts from its own market constants."""
    if experiment == "hetero":
        return RunConfig(market=HETERO_BASE, experiment=experiment)
    return RunConfig(experiment=experiment)


def _overrides(args) -> dict:
    market = {k: getattr(args, k) for k in MARKET_KEYS if getattr(args, k, None) is not None}
    pt = {}
    for key, attr in (("lambda", "lam"), ("beta", "beta"), ("eps_ref", "eps_ref"), ("m", "m"),
                      ("weighting", "weighting")):
        if getattr(args, attr, None) is not None:
            pt[key] = getattr(args, attr)
    out = {}
    if market:
        out["market"] = market
    if pt:
        out["pt"] = pt
    if args.seed is not None:
        out["seed"] = args.seed
    if args.out is not None:
        out["output_path"] = args.out
    return out


def load_run_config(args, experiment: str | None = None) -> RunConfig:
    cfg = default_run_config(experiment)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        if experiment is not None and isinstance(data, dict):
            data = dict(data)
            data["experiment"] = dict(data.get("experiment") or {}, name=experiment)
        cfg = run_config_from_dict(data, cfg)
    params = dict(cfg.params)
    for key in ("which", "reps", "eps_ref_sweep"):
        value = getattr(args, key, None)
        if value is not None:
            params["eps_ref" if key == "eps_ref_sweep" else key] = value
    data = _overrides(args)
    data["experiment"] = {"name": experiment if experiment is not None else cfg.experiment, "params": params}
    return run_config_from_dict(data, cfg)


# ---------------------------------------------------------------- commands

def cmd_solve(cfg: RunConfig) -> int:
    market = cfg.market_with_pt()
    out = {}
    solvers = (("closed_form", solve_closed_form), ("poly_root", solve_poly_root), ("exhaustive", solve_exhaustive))
    for name, solve in solvers:
        try:
            out[name] = solve(market).as_dict()
        except DomainError as exc:
            out[name] = {"status": "not applicable", "reason": str(exc)}
    eps = {k: v["eps_star"] for k, v in out.items() if "eps_star" in v}
    gaps = {}
    names = list(eps)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gaps[f"{a}_vs_{b}"] = abs(eps[a] - eps[b]) / eps[b]
    out["relative_gaps"] = gaps
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, jobs: int = 1) -> int:
    params = dict(cfg.params)
    stem = cfg.experiment
    if stem == "hetero":
        stem = f"hetero_{params.get('which', 'lambda')}"
    result = run_experiment(cfg.experiment, cfg.market_with_pt(), params, cfg.seed, jobs)
    out_dir = Path(cfg.output_path)
    csv_path = write_records(result.records, out_dir / f"{stem}.csv")
    summary_path = out_dir / f"{stem}_summary.json"
    summary = {
        "config_digest": cfg.digest(),
        "assertions": [c.as_dict() for c in result.checks],
        "artifacts": [str(csv_path), str(summary_path)],
    }
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for check in result.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    for note in result.notes:
        print(f"note: {note}")
    print(f"wrote {csv_path} and {summary_path}")
    return EXIT_OK if result.ok else EXIT_CHECK


def read_data_csv(path) -> np.ndarray:
    """All numeric cells of a CSV; a non-numeric first row is taken as a header."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            cells = [c.strip() for c in row if c.strip()]
            try:
                values.extend(float(c) for c in cells)
            except ValueError:
                if lineno == 0:
                    continue
                raise ConfigError("data", f"non-numeric value on line {lineno + 1}") from None
    return np.asarray(values, dtype=float)


def cmd_noise_demo(cfg: RunConfig, data_path: str, eps: float, trials: int | None) -> int:
    try:
        data = read_data_csv(data_path)
    except OSError as exc:
        raise ConfigError("data", str(exc)) from None
    if data.size == 0:
        raise ConfigError("data", "no values")
    if not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1:
        raise ConfigError("data", "values must lie in [0, 1]")
    if not eps > 0:
        raise ConfigError("eps", f"must be > 0, got {eps}")
    noisy, true = laplace_noise_demo(data, eps, cfg.seed)
    out = {"n": int(data.size), "eps": eps, "true_mean": true, "noisy_mean": noisy}
    if trials:
        if trials < 2:
            raise ConfigError("trials", "need at least 2")
        draws = laplace_noise(data.size, eps, trials, cfg.seed)
        predicted = 2.0 / (data.size ** 2 * eps ** 2)
        empirical = float(draws.var(ddof=1))
        out.update(trials=trials, empirical_variance=empirical, predicted_variance=predicted,
                   variance_ratio=empirical / predicted, empirical_mean=float(draws.mean()))
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags below override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
    p.add_argument("--out", help="output directory for sweep artifacts")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    g = p.add_argument_group("market")
    g.add_argument("--n-total", dest="n_total", type=int)
    g.add_argument("--c", type=float)
    g.add_argument("--k", type=float)
    g.add_argument("--l", type=float)
    g.add_argument("--w-max", dest="w_max", type=float)
    g.add_argument("--dist", choices=("uniform", "truncnorm"))
    g.add_argument("--mu", type=float)
    g.add_argument("--sigma", type=float)
    g = p.add_argument_group("behaviour")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--eps-ref", dest="eps_ref", type=float)
    g.add_argument("--m", type=int)
    g.add_argument("--weighting", choices=("split", "uniform"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pt-privacy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal eps by all three methods")
    _add_common(p)

    p = sub.add_parser("sweep", help="run one experiment sweep and its checks")
    p.add_argument("experiment", choices=EXPERIMENTS)
    _add_common(p)
    p.add_argument("--which", choices=("lambda", "beta"), help="hetero: which parameter varies")
    p.add_argument("--reps", type=int, help="hetero: rosters per variance")
    p.add_argument("--sweep-eps-ref", dest="eps_ref_sweep", type=float, help="refpoint: reference point")

    p = sub.add_parser("noise-demo", help="release a private mean of a data CSV")
    _add_common(p)
    p.add_argument("--data", required=True, help="CSV of values in [0, 1]")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--trials", type=int, help="also compare the empirical noise variance with its formula")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = getattr(args, "experiment", None)
    try:
        cfg = load_run_config(args, experiment)
        if args.dump_config:
            print(cfg.dumps())
            return EXIT_OK
        if args.jobs < 1:
            raise ConfigError("jobs", f"must be >= 1, got {args.jobs}")
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.jobs)
        return cmd_noise_demo(cfg, args.data, args.eps, args.trials)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
