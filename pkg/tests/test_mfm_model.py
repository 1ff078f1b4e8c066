import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from mfm_nhpp.mfm_model import (
    FinitePmf,
    Geometric,
    MfmConfig,
    NumericalError,
    TruncatedPoisson,
    build_log_vn,
    k_prior_log_pmf,
    log_marginal_count,
    poisson_log_pmf,
)

import oracles


class TestKPrior:
    def test_k1(self):
        assert math.exp(k_prior_log_pmf(1)) == pytest.approx(1 / (math.e - 1), rel=1e-14)
        assert math.exp(k_prior_log_pmf(1)) == pytest.approx(0.581977, abs=1e-6)

    def test_k2_is_half_of_k1(self):
        assert math.exp(k_prior_log_pmf(2)) == pytest.approx(0.5 / (math.e - 1), rel=1e-14)
        assert math.exp(k_prior_log_pmf(2)) == pytest.approx(0.290989, abs=1e-6)

    def test_normalized(self):
        total = sum(math.exp(k_prior_log_pmf(k)) for k in range(1, 51))
        assert abs(total - 1) < 1e-12

    @pytest.mark.parametrize("k", [0, -1, 1.5])
    def test_domain(self, k):
        with pytest.raises(ValueError):
            k_prior_log_pmf(k)

    def test_unnormalized_prior_rejected(self):
        with pytest.raises(ValueError):
            FinitePmf((0.5, 0.4))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MfmConfig(gamma=0)
        with pytest.raises(ValueError):
            MfmConfig(b=-1)

    def test_config_round_trip(self):
        cfg = MfmConfig(gamma=0.5, a=2, b=3, k_prior=Geometric(0.2))
        assert MfmConfig.from_dict(cfg.to_dict()) == cfg


class TestLogVn:
    def test_n1_t1_is_one(self):
        tab = build_log_vn(1, 1)
        assert tab[1] == pytest.approx(0.0, abs=1e-13)

    def test_n2_t1_closed_form(self):
        tab = build_log_vn(2, 2)
        assert math.exp(tab[1]) == pytest.approx((math.e - 2) / (math.e - 1), rel=1e-12)
        brute = oracles.vn_series(2, 1, 1.0, terms=200)
        assert math.exp(tab[1]) == pytest.approx(float(brute), rel=1e-12)

    def test_n2_t2_against_series(self):
        # sum_{k>=2} (k-1)/(k+1) p(k); evaluates to 0.163953...
        tab = build_log_vn(2, 2)
        brute = float(oracles.vn_series(2, 2, 1.0, terms=200))
        assert brute == pytest.approx(0.163953, abs=1e-6)
        assert math.exp(tab[2]) == pytest.approx(brute, rel=1e-12)

    def test_default_t_max(self):
        assert build_log_vn(400).t_max == 64
        assert build_log_vn(10).t_max == 10

    def test_decreasing_for_default_prior(self):
        for n in (5, 50, 400, 10000):
            tab = build_log_vn(n)
            assert np.all(np.diff(tab.values[1:]) < 0)
            assert np.all(np.isfinite(tab.values))

    def test_extension_matches_fresh_build(self):
        small = build_log_vn(400, 10)
        big = small.extended(40)
        np.testing.assert_array_equal(big.values[:11], small.values)
        assert big.t_max == 40

    def test_non_convergence_reports_bound(self):
        cfg = MfmConfig(k_prior=Geometric(1e-4), vn_kmax=20, gamma=1.0)
        with pytest.raises(NumericalError, match="not converged"):
            build_log_vn(2, 2, cfg)

    def test_finite_prior_zero_beyond_support(self):
        cfg = MfmConfig(k_prior=FinitePmf((0.5, 0.5)))
        tab = build_log_vn(4, 4, cfg)
        assert np.isneginf(tab[3]) and np.isneginf(tab[4])
        # V_4(2) = sum_{k<=2} k(k-1)/(k)^(4) p(k) = 2 / (2*3*4*5) * 0.5
        assert math.exp(tab[2]) == pytest.approx(2 / 120 * 0.5, rel=1e-12)

    def test_log_ratio(self):
        tab = build_log_vn(3, 2)
        assert tab.log_ratio(1) == pytest.approx(tab[2] - tab[1])
        with pytest.raises(IndexError):
            tab.log_ratio(2)


class TestMarginalCount:
    def test_zero_count(self):
        assert log_marginal_count(0, 1.0, 1.0) == pytest.approx(math.log(0.5), abs=1e-14)

    def test_two_counts(self):
        assert log_marginal_count(2, 1.0, 1.0) == pytest.approx(math.log(1 / 8), abs=1e-14)
        quad = float(oracles.gamma_poisson_quad(2, 1, 1))
        assert math.exp(log_marginal_count(2, 1.0, 1.0)) == pytest.approx(quad, rel=1e-12)

    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (1, 1), (2, 0.5), (0.5, 2)])
    def test_is_a_pmf(self, a, b):
        N = np.arange(0, 4000)
        total = np.exp(log_marginal_count(N, a, b)).sum()
        assert abs(total - 1) < 1e-10

    def test_large_counts_finite(self):
        assert np.isfinite(log_marginal_count(5000, 1.0, 1.0))


class TestPoisson:
    def test_zero(self):
        assert poisson_log_pmf(0, 1.0) == pytest.approx(-1.0, abs=1e-15)

    def test_three_three(self):
        expected = 3 * math.log(3) - 3 - math.log(6)
        assert poisson_log_pmf(3, 3.0) == pytest.approx(expected, abs=1e-14)
        assert poisson_log_pmf(3, 3.0) == pytest.approx(-1.4959226, abs=1e-7)

    def test_normalized(self):
        total = np.exp(poisson_log_pmf(np.arange(201), 10.0)).sum()
        assert abs(total - 1) < 1e-12

    @pytest.mark.parametrize("lam", [0.0, -2.0])
    def test_domain(self, lam):
        with pytest.raises(ValueError):
            poisson_log_pmf(1, lam)


# ----------------------------------------------------------------------------
# Urn coherence and the block-size law
# ----------------------------------------------------------------------------


def _log_v_tables(n, gamma):
    cfg = MfmConfig(gamma=gamma)
    # V_0(0) = sum_k p(k) = 1
    tabs = {0: np.array([0.0])}
    for i in range(1, n + 1):
        tabs[i] = build_log_vn(i, i, cfg).values
    return tabs


def _sequential_log_prob(z, order, gamma, tabs):
    """log P(partition) by seating items in ``order`` with the MFM urn.

    Seating item number i (i items after seating) with t blocks among the
    earlier i-1 items: existing block c has probability (|c|+gamma) V_i(t)/V_{i-1}(t),
    a new block gamma V_i(t+1)/V_{i-1}(t).  Also returns the worst deviation of
    the per-step probabilities from summing to one.
    """
    sizes = {}
    logp = 0.0
    worst = 0.0
    for step, item in enumerate(order, start=1):
        t = len(sizes)
        prev = tabs[step - 1][t]
        cur = tabs[step]
        probs_exist = [(s + gamma) * math.exp(cur[t] - prev) for s in sizes.values()]
        p_new = gamma * math.exp(cur[t + 1] - prev)
        worst = max(worst, abs(sum(probs_exist) + p_new - 1.0))
        label = z[item]
        if label in sizes:
            logp += math.log((sizes[label] + gamma)) + cur[t] - prev
            sizes[label] += 1
        else:
            logp += math.log(gamma) + cur[t + 1] - prev
            sizes[label] = 1
    return logp, worst


@st.composite
def partition_and_orders(draw):
    n = draw(st.integers(2, 8))
    z = draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    o1 = draw(st.permutations(range(n)))
    o2 = draw(st.permutations(range(n)))
    gamma = draw(st.sampled_from([0.5, 1.0, 2.0]))
    return z, o1, o2, gamma


_TABS = {g: _log_v_tables(8, g) for g in (0.5, 1.0, 2.0)}


@given(partition_and_orders())
@settings(max_examples=150, deadline=None)
def test_urn_is_exchangeable(case):
    z, o1, o2, gamma = case
    lp1, w1 = _sequential_log_prob(z, o1, gamma, _TABS[gamma])
    lp2, w2 = _sequential_log_prob(z, o2, gamma, _TABS[gamma])
    assert w1 < 1e-10 and w2 < 1e-10
    assert abs(lp1 - lp2) < 1e-10


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_block_size_law_n6(gamma):
    """Urn probabilities of all 203 partitions of 6 items are proportional to
    V_6(t) prod_j Gamma(b_j + gamma) / Gamma(gamma)."""
    n = 6
    tabs = _TABS[gamma]
    v6 = [float(oracles.vn_series(n, t, gamma)) for t in range(0, n + 1)]
    total = 0.0
    ratios = []
    for z in oracles.set_partitions(n):
        lp, _ = _sequential_log_prob(z, range(n), gamma, tabs)
        p = math.exp(lp)
        total += p
        sizes = np.bincount(z)
        law = v6[len(sizes)] * math.exp(np.sum(gammaln(sizes + gamma) - gammaln(gamma)))
        ratios.append(p / law)
    assert total == pytest.approx(1.0, abs=1e-10)
    ratios = np.array(ratios)
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)
