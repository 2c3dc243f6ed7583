import numpy as np
import pytest

from ptprivacy.collector import MarketConfig
from ptprivacy.experiments import (
    HETERO_BASE,
    SweepRecord,
    approximation_gap_sweep,
    derive_seed,
    format_value,
    gap_checks,
    hetero_variance_sweep,
    mismatch_checks,
    mismatch_loss,
    mismatch_sweep,
    perturbed_configs,
    pt_checks,
    pt_parameter_sweep,
    reference_point_sweep,
    refpoint_checks,
    run_experiment,
    u_shape,
    write_records,
)
from ptprivacy.pt_core import DomainError, PTParams
from ptprivacy.solver import solve_exhaustive

BASE = MarketConfig(pt=PTParams(lam=1.95))


def test_gap_sweep():
    records = approximation_gap_sweep(BASE)
    assert [r.inputs["n_total"] for r in records] == [4000, 10_000, 20_000, 40_000]
    assert all(c.passed for c in gap_checks(records))
    with pytest.raises(DomainError):
        approximation_gap_sweep(BASE.with_pt(beta=0.9))


def test_pt_sweep_small_grid():
    records = pt_parameter_sweep(BASE, lambdas=(1.0, 2.0, 4.5), betas=(0.5, 0.88, 1.0))
    assert len(records) == 9
    assert all(c.passed for c in pt_checks(records))
    for r in records:
        assert r.eps_star_approx > 0


def test_pt_checks_detect_violation():
    records = pt_parameter_sweep(BASE, lambdas=(1.0, 2.0), betas=(0.5, 1.0))
    records[0].eps_star = 10.0
    assert not all(c.passed for c in pt_checks(records))


def test_perturbation_set():
    cfgs = perturbed_configs(BASE)
    assert len(cfgs) == 9
    assert {(c.l, c.c) for c in cfgs} == {(l, c) for l in (1e-4, 1e-3, 1e-2) for c in (0.5, 1.0, 2.0)}


@pytest.mark.parametrize("weighting", ["split", "uniform"])
def test_refpoint_small_grid(weighting):
    cfg = BASE.with_pt(weighting=weighting)
    records = reference_point_sweep(cfg, 0.01, lambdas=(1.0, 2.5, 4.5), betas=(0.2, 0.4, 1.0), exact=False)
    checks = {c.name: c for c in refpoint_checks(records)}
    assert checks["trichotomy_predicts_shift"].passed
    assert checks["positive_region_nonempty"].passed
    with pytest.raises(DomainError):
        reference_point_sweep(cfg, 0.0)


def test_mismatch_loss_basics():
    assert mismatch_loss(BASE.with_pt(lam=1.0, beta=1.0)) == 0.0
    loss = mismatch_loss(BASE.with_pt(lam=4.5, beta=0.88))
    assert 0 < loss <= 1
    with pytest.raises(DomainError):
        mismatch_loss(BASE.with_pt(eps_ref=0.01))


def test_mismatch_checks_on_sweep():
    records = mismatch_sweep(BASE)
    assert all(c.passed for c in mismatch_checks(records))


def test_u_shape_detection():
    assert u_shape([3, 2, 1, 2, 3], [0.1] * 5) == 2
    assert u_shape([1, 2, 3], [0.1] * 3) is None
    assert u_shape([3, 1, 1.05, 2], [0.1] * 4) is None


def test_seed_derivation():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(0, 0) < 2 ** 64


def test_hetero_jobs_do_not_change_results():
    kwargs = dict(variances=(0.05, 0.5), reps=4, seed=9)
    serial = hetero_variance_sweep(HETERO_BASE, "lambda", jobs=1, **kwargs)
    parallel = hetero_variance_sweep(HETERO_BASE, "lambda", jobs=2, **kwargs)
    assert [r.row() for r in serial] == [r.row() for r in parallel]


def test_hetero_degenerate_variance_matches_homogeneous():
    homogeneous = solve_exhaustive(HETERO_BASE.with_pt(lam=1.95, beta=0.75)).eps_star
    cell = (1e6) ** (1 / 9999) - 1
    for which in ("lambda", "beta"):
        rec = hetero_variance_sweep(HETERO_BASE, which, variances=(1e-10,), reps=50, seed=1)[0]
        assert abs(rec.eps_star - homogeneous) <= cell * homogeneous + 3 * rec.outputs["eps_star_se"]


def test_hetero_lambda_variance_lowers_optimum():
    low, mid = hetero_variance_sweep(HETERO_BASE, "lambda", variances=(1e-10, 0.1952), reps=50, seed=2)
    assert mid.eps_star < low.eps_star


def test_hetero_rejects_unknown_parameter():
    with pytest.raises(DomainError):
        hetero_variance_sweep(HETERO_BASE, "gamma", variances=(0.1,), reps=2)


def test_csv_round_trip_formatting(tmp_path):
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1 / 3)) == repr(1 / 3)
    assert format_value(None) == "" and format_value(np.int64(5)) == "5"
    rec = SweepRecord({"lambda": 2.0, "name": "x"}, 1 / 3, 0.5, 10.0, seed=2 ** 64 - 1, outputs={"gap": 1e-17})
    path = write_records([rec], tmp_path / "out.csv")
    text = path.read_bytes().decode()
    assert "\r" not in text
    header, row = text.strip().split("\n")
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["eps_star"]) == 1 / 3
    assert int(values["seed"]) == 2 ** 64 - 1
    assert values["eps_star_approx"] == ""


def test_run_experiment_unknown():
    with pytest.raises(DomainError):
        run_experiment("nope", BASE)
