import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ptprivacy.population import (
    BETA_FIT,
    LAMBDA_FIT,
    GammaHetero,
    GammaSpec,
    Individual,
    Roster,
    ValuationDist,
    chi_squared_gof,
    count_roster,
    gamma_from_mean_var,
    participate,
    participation_count,
    participation_threshold,
    sample_roster,
)
from ptprivacy.pt_core import (
    DomainError,
    PTParams,
    cost_slope_M,
    prospect_nonparticipation_level,
    prospect_participation_level,
)


def eps_for_cost(cost, pt, c=1.0):
    """The eps at which the participation cost equals ``cost`` (zero reference)."""
    return (-cost / cost_slope_M(pt, c)) ** (1 / pt.beta)


def test_participate_examples():
    pt = PTParams(lam=2.0)
    eps = eps_for_cost(-0.5, pt)
    assert participate(Individual(1.0, pt), eps, 1.0)
    assert not participate(Individual(0.3, pt), eps, 1.0)
    # exact tie: m=1, lambda=1 gives cost -eps exactly
    tie = PTParams(m=1)
    assert participate(Individual(0.5, tie), 0.5, 1.0)


def test_participation_count_examples():
    pt = PTParams(m=1)
    dist = ValuationDist()
    assert participation_count(0.5, dist, pt, 1000, 1.0) == pytest.approx(500.0)
    assert participation_count(1.0, dist, pt, 1000, 1.0) == 0.0
    assert participation_count(3.0, dist, pt, 1000, 1.0) == 0.0
    assert participation_count(1e-300, dist, pt, 1000, 1.0) == pytest.approx(1000.0)
    with pytest.raises(DomainError):
        participation_count(0.0, dist, pt, 10, 1.0)


@given(lam=st.floats(1, 5), beta=st.floats(0.1, 1), ref=st.sampled_from([0.0, 0.01, 0.1]),
       kind=st.sampled_from(["uniform", "truncnorm"]), weighting=st.sampled_from(["split", "uniform"]))
@settings(max_examples=40, deadline=None)
def test_participation_count_non_increasing(lam, beta, ref, kind, weighting):
    pt = PTParams(lam=lam, beta=beta, eps_ref=ref, weighting=weighting)
    dist = ValuationDist(kind)
    eps = np.geomspace(1e-5, 5, 400)
    counts = [participation_count(e, dist, pt, 1000, 1.0) for e in eps]
    assert np.all(np.diff(counts) <= 1e-9)


def test_uniform_count_matches_closed_form():
    pt = PTParams(lam=1.7, beta=0.8, eps_ref=0.02, m=7)
    w_max, n, c = 1.5, 10_000, 1.3
    dist = ValuationDist(w_max=w_max)
    for eps in np.geomspace(1e-4, 3, 200):
        g = c * prospect_participation_level(eps, pt) - c * prospect_nonparticipation_level(pt)
        expected = min(max(n * (w_max + g) / w_max, 0.0), n)
        assert participation_count(eps, dist, pt, n, c) == pytest.approx(expected, rel=1e-12, abs=1e-9)


def test_wide_truncnorm_approaches_uniform():
    wide = ValuationDist("truncnorm", 1.0, 0.5, 1e3)
    pt = PTParams(lam=2.0)
    for eps in (0.05, 0.2, 0.5, 0.8):
        u = participation_count(eps, ValuationDist(), pt, 10_000, 1.0)
        t = participation_count(eps, wide, pt, 10_000, 1.0)
        assert t == pytest.approx(u, rel=5e-3)


@pytest.mark.parametrize("dist", [ValuationDist(), ValuationDist("truncnorm"), ValuationDist("truncnorm", 2.0, 0.3, 0.1)])
def test_density_integrates_to_one(dist):
    total, _ = integrate.quad(dist.pdf, 0, dist.w_max, points=[dist.mu] if dist.mu else None)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert dist.pdf(-0.1) == 0.0 and dist.pdf(dist.w_max + 0.1) == 0.0


def test_truncnorm_defaults():
    d = ValuationDist("truncnorm", w_max=2.0)
    assert (d.mu, d.sigma) == (1.0, 0.5)


def test_count_roster_examples():
    empty = Roster(np.array([]), 1.0, 1.0, 0.0)
    assert count_roster(empty, 0.1, 1.0) == 0
    full = Roster(np.ones(50), 2.0, 0.7, 0.0)
    assert count_roster(full, 0.01, 1.0) == 50


def test_count_roster_binomial_band():
    pt = PTParams(lam=1.95, beta=0.8)
    n = 100_000
    roster = sample_roster(ValuationDist(), pt, n, seed=11)
    for eps in (0.05, 0.3, 0.7):
        expected = participation_count(eps, ValuationDist(), pt, n, 1.0)
        p = expected / n
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(count_roster(roster, eps, 1.0) - expected) <= 3 * sigma + 1


def test_count_roster_agrees_with_participate():
    roster = sample_roster(ValuationDist(), GammaHetero(eps_ref=0.01), 300, seed=2)
    for eps in (0.003, 0.02, 0.3):
        direct = sum(participate(ind, eps, 1.5) for ind in roster.individuals)
        assert count_roster(roster, eps, 1.5) == direct


def test_sample_roster_deterministic_and_seeded():
    a = sample_roster(ValuationDist(), GammaHetero(), 1000, seed=7)
    b = sample_roster(ValuationDist(), GammaHetero(), 1000, seed=7)
    c = sample_roster(ValuationDist(), GammaHetero(), 1000, seed=8)
    assert np.array_equal(a.w, b.w) and np.array_equal(a.lam, b.lam) and np.array_equal(a.beta, b.beta)
    assert not np.array_equal(a.lam, c.lam)


def test_sample_roster_single_fixed():
    r = sample_roster(ValuationDist(w_max=3.0), PTParams(), 1, seed=0)
    assert len(r) == 1 and 0 <= r.w[0] <= 3.0
    with pytest.raises(DomainError):
        sample_roster(ValuationDist(), PTParams(), 0, seed=0)


def test_sample_roster_respects_ranges():
    r = sample_roster(ValuationDist(), GammaHetero(lam=gamma_from_mean_var(1.95, 3.0),
                                                  beta=gamma_from_mean_var(0.75, 0.1)), 20_000, seed=3)
    assert r.lam.min() >= 1.0
    assert r.beta.min() > 0 and r.beta.max() <= 1.0


def test_degenerate_gamma_is_constant():
    r = sample_roster(ValuationDist(), GammaHetero(lam=gamma_from_mean_var(1.95, 1e-14), beta=0.75), 1000, seed=1)
    assert np.all(np.abs(r.lam - 1.95) < 1e-6)


def test_lambda_fit_sample_mean():
    spec = LAMBDA_FIT
    assert spec.mean == pytest.approx(1.95, rel=1e-3)
    draws = np.random.default_rng(0).gamma(spec.shape, spec.scale, 100_000)
    assert draws.mean() == pytest.approx(1.95, rel=0.01)


def test_gamma_from_mean_var_examples():
    g = gamma_from_mean_var(1.95, 0.1952)
    assert g.shape == pytest.approx(19.48, abs=0.01)
    assert g.scale == pytest.approx(0.1001, abs=1e-4)
    assert gamma_from_mean_var(1, 1) == GammaSpec(1.0, 1.0)
    var = 0.75 * 0.0583 ** 2 * 12.8662 / 0.75
    back = gamma_from_mean_var(BETA_FIT.mean, var)
    assert back.shape == pytest.approx(12.8662, rel=1e-12)
    assert back.scale == pytest.approx(0.0583, rel=1e-12)
    with pytest.raises(DomainError):
        gamma_from_mean_var(0, 1)
    with pytest.raises(DomainError):
        gamma_from_mean_var(1, -1)


@given(mean=st.floats(1e-3, 1e3), var=st.floats(1e-4, 1e4))
def test_gamma_round_trip(mean, var):
    g = gamma_from_mean_var(mean, var)
    assert g.mean == pytest.approx(mean, rel=1e-12)
    assert g.var == pytest.approx(var, rel=1e-12)


def test_chi_squared_self_consistency():
    pvals = []
    for seed in range(100):
        x = np.random.default_rng(seed).gamma(LAMBDA_FIT.shape, LAMBDA_FIT.scale, 100_000)
        res = chi_squared_gof(x, LAMBDA_FIT, bins=20)
        assert not res.low_expected
        pvals.append(res.p_value)
    assert 0.3 <= np.median(pvals) <= 0.7


def test_chi_squared_rejects_constant():
    res = chi_squared_gof(np.full(1000, 1.95), LAMBDA_FIT)
    assert res.p_value < 1e-12


def test_chi_squared_low_expected_flag():
    res = chi_squared_gof(np.random.default_rng(0).gamma(2, 1, 30), GammaSpec(2, 1), bins=10)
    assert res.low_expected
    with pytest.raises(DomainError):
        chi_squared_gof([], GammaSpec(2, 1))


def test_roster_csv_round_trip(tmp_path):
    r = sample_roster(ValuationDist(), GammaHetero(eps_ref=0.01), 200, seed=4)
    path = tmp_path / "roster.csv"
    r.to_csv(path)
    text = path.read_bytes()
    assert text.startswith(b"w,lambda,beta,eps_ref\n") and b"\r" not in text
    back = Roster.from_csv(path)
    for col in ("w", "lam", "beta", "eps_ref"):
        assert np.array_equal(getattr(r, col), getattr(back, col))


def test_roster_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("w,lambda\n0.5,2\n")
    with pytest.raises(DomainError):
        Roster.from_csv(path)


def test_roster_rejects_bad_parameters():
    with pytest.raises(DomainError):
        Roster(np.array([0.5]), 0.5, 1.0, 0.0)


def test_threshold_matches_count():
    pt = PTParams(lam=2.0, beta=0.6, eps_ref=0.01)
    thr = participation_threshold(0.015, pt, 1.0)
    assert 0 < thr < 1
    assert participation_count(0.015, ValuationDist(), pt, 100, 1.0) == pytest.approx(100 * (1 - thr))
