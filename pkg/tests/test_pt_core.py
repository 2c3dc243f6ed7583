import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ptprivacy.pt_core import (
    DomainError,
    PTParams,
    UNIFORM,
    cost_slope_M,
    participation_level_derivative,
    participation_level_slopes,
    participation_levels,
    privacy_cost,
    prospect_nonparticipation_level,
    prospect_participation_level,
    valuation,
)

lams = st.floats(1.0, 6.0)
betas = st.floats(0.05, 1.0)
ms = st.integers(1, 40)


def test_valuation_examples():
    assert valuation(0.5, PTParams()) == -0.5
    assert valuation(0.01, PTParams(lam=2, beta=0.5, eps_ref=0.01)) == 0.0
    assert valuation(0.04, PTParams(lam=2, beta=0.5)) == pytest.approx(-0.4, rel=1e-15)


def test_valuation_rejects_negative_eps():
    with pytest.raises(DomainError):
        valuation(-1e-9, PTParams())


@pytest.mark.parametrize("kwargs", [
    dict(lam=0.99), dict(beta=0.0), dict(beta=1.01), dict(eps_ref=-0.1), dict(m=0), dict(m=2.5),
    dict(weighting="other"), dict(lam=float("inf")),
])
def test_params_rejected(kwargs):
    with pytest.raises(DomainError):
        PTParams(**kwargs)


def test_participation_level_examples():
    assert prospect_participation_level(1.0, PTParams(m=2)) == pytest.approx(-0.75, rel=1e-15)
    assert prospect_participation_level(1.0, PTParams(lam=2, m=4)) == pytest.approx(-1.25, rel=1e-15)
    assert prospect_participation_level(1e-300, PTParams(lam=3, beta=0.9)) == pytest.approx(0.0, abs=1e-250)
    with pytest.raises(DomainError):
        prospect_participation_level(0.0, PTParams())


def test_nonparticipation_examples():
    assert prospect_nonparticipation_level(PTParams(beta=0.3)) == 0.0
    assert prospect_nonparticipation_level(PTParams(eps_ref=0.01)) == 0.01
    assert prospect_nonparticipation_level(PTParams(eps_ref=0.04, beta=0.5)) == pytest.approx(0.2)


def test_privacy_cost_examples():
    assert privacy_cost(-0.75, 2) == -1.5
    assert privacy_cost(0, 5) == 0
    assert privacy_cost(0.2, 1) == 0.2


def test_cost_slope_examples():
    assert cost_slope_M(PTParams(m=1), 1.0) == pytest.approx(1.0)
    assert cost_slope_M(PTParams(lam=2, m=3), 1.0) == pytest.approx(4 / 3)
    expected = 0.5 * 0.5 ** 0.5 * (1 + 2 ** 0.5)
    assert cost_slope_M(PTParams(beta=0.5, m=2), 1.0) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(DomainError):
        cost_slope_M(PTParams(eps_ref=0.01), 1.0)


@given(lam=lams, m=ms, c=st.floats(0.1, 10))
def test_linear_slope_matches_arithmetic_series(lam, m, c):
    assert cost_slope_M(PTParams(lam=lam, m=m), c) == pytest.approx(c * lam * (m + 1) / (2 * m), rel=1e-13)


@given(eps=st.floats(0, 10))
def test_eut_valuation_is_identity(eps):
    assert valuation(eps, PTParams()) == -eps


@given(lam=lams, beta=betas, ref=st.floats(0, 1), a=st.floats(0, 2), b=st.floats(0, 2))
def test_valuation_non_increasing(lam, beta, ref, a, b):
    pt = PTParams(lam=lam, beta=beta, eps_ref=ref)
    lo, hi = min(a, b), max(a, b)
    assert valuation(lo, pt) >= valuation(hi, pt)


@given(lam=lams, beta=betas, ref=st.floats(1e-3, 1))
def test_valuation_continuous_at_reference(lam, beta, ref):
    pt = PTParams(lam=lam, beta=beta, eps_ref=ref)
    h = 1e-12
    assert abs(valuation(ref - h, pt) - valuation(ref + h, pt)) < 10 * lam * h ** beta


@given(lam=lams, beta=betas, m=ms, eps=st.floats(1e-4, 10))
def test_zero_reference_level_is_power_law(lam, beta, m, eps):
    pt = PTParams(lam=lam, beta=beta, m=m)
    direct = math.fsum(valuation(i * eps / m, pt) for i in range(1, m + 1)) / m
    assert prospect_participation_level(eps, pt) == pytest.approx(direct, rel=1e-12)
    assert prospect_participation_level(eps, pt) == pytest.approx(-cost_slope_M(pt, 1.0) * eps ** beta, rel=1e-12)


@given(lam=lams, beta=betas, m=ms, eps=st.floats(1e-3, 0.99))
def test_level_monotone_in_lambda_and_beta(lam, beta, m, eps):
    pt = PTParams(lam=lam, beta=beta, m=m)
    assert prospect_participation_level(eps, pt.replace(lam=lam + 0.5)) < prospect_participation_level(eps, pt)
    if beta < 0.95:
        assert prospect_participation_level(eps, pt.replace(beta=beta + 0.05)) > prospect_participation_level(eps, pt)


@given(lam=lams, beta=betas, m=ms, a=st.floats(1e-4, 5), b=st.floats(1e-4, 5))
def test_zero_reference_level_strictly_decreasing(lam, beta, m, a, b):
    pt = PTParams(lam=lam, beta=beta, m=m)
    lo, hi = min(a, b), max(a, b)
    if hi > lo * (1 + 1e-9):
        assert prospect_participation_level(lo, pt) > prospect_participation_level(hi, pt)


def test_positive_reference_split_weighting_by_hand():
    pt = PTParams(lam=2.0, beta=1.0, eps_ref=0.5, m=4)
    # outcomes 0.25, 0.5 are gains (t = 2); 0.75, 1.0 are losses
    gain = 0.25 + 0.0
    loss = 0.25 + 0.5
    assert prospect_participation_level(1.0, pt) == pytest.approx(0.5 * gain - 0.5 * 2.0 * loss)
    uni = pt.replace(weighting=UNIFORM)
    assert prospect_participation_level(1.0, uni) == pytest.approx((gain - 2.0 * loss) / 4)


def test_positive_reference_all_gains_for_small_eps():
    pt = PTParams(lam=2.0, beta=0.5, eps_ref=0.01, m=10)
    eps = 0.001
    gains = sum((0.01 - i * eps / 10) ** 0.5 for i in range(1, 11))
    assert prospect_participation_level(eps, pt) == pytest.approx(gains)
    assert prospect_participation_level(eps, pt.replace(weighting=UNIFORM)) == pytest.approx(gains / 10)


@pytest.mark.parametrize("weighting", ["split", "uniform"])
@pytest.mark.parametrize("beta", [1.0, 0.6])
def test_vectorized_levels_match_scalar(weighting, beta):
    pt = PTParams(lam=2.5, beta=beta, eps_ref=0.01, m=10, weighting=weighting)
    eps = np.geomspace(1e-4, 1.0, 257)
    vec = participation_levels(eps, pt)
    slopes = participation_level_slopes(eps, pt)
    for e, v, s in zip(eps, vec, slopes):
        assert v == pytest.approx(prospect_participation_level(e, pt), rel=1e-12, abs=1e-15)
        assert s == pytest.approx(participation_level_derivative(e, pt), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("weighting", ["split", "uniform"])
def test_level_derivative_matches_finite_difference(weighting):
    pt = PTParams(lam=2.0, beta=0.7, eps_ref=0.01, m=10, weighting=weighting)
    # stay away from points where the boundary index jumps
    for eps in (0.0123, 0.031, 0.07, 0.4):
        h = 1e-7 * eps
        fd = (prospect_participation_level(eps + h, pt) - prospect_participation_level(eps - h, pt)) / (2 * h)
        assert participation_level_derivative(eps, pt) == pytest.approx(fd, rel=1e-5)
