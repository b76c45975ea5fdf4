"""Core model tests: similarities, responses, Bayes updates, quantiles,
entropy/KL, and the expected-gain identity, all checked against the
brute-force oracles in ``oracles.py``."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from noisysearch import (
    Dataset,
    Posterior,
    ProtocolError,
    Query,
    ResponseDistribution,
    SimilarityFamily,
    UserModel,
    condition_on_miss,
    entropy,
    expected_info_gain,
    expected_round_gain,
    kl_bernoulli,
    kl_divergence,
    marginal_response_probs,
    posterior_update,
    quantile_index,
    response_matrix,
    response_probs,
    sample_response,
    similarity,
)

POLY = UserModel(SimilarityFamily.POLYNOMIAL, 1.0)
EXP = UserModel(SimilarityFamily.EXPONENTIAL, 1.0)


def random_instance(rng, n=None, k=None, max_n=9, families=("polynomial", "exponential")):
    n = n or int(rng.integers(3, max_n))
    k = k or int(rng.integers(2, min(n, 4)))
    pts = np.sort(rng.uniform(0.0, 10.0, size=n)) + np.arange(n) * 1e-3
    family = str(rng.choice(list(families)))
    theta = float(rng.choice([0.5, 1.0, 2.0]))
    query = tuple(int(i) for i in np.sort(rng.choice(n, size=k, replace=False)))
    mass = rng.uniform(0.0, 1.0, size=n)
    mass[list(query)] = 0.0
    mass /= mass.sum()
    return Dataset(pts), Posterior(mass), Query(query), UserModel(family, theta), family, theta


class TestSimilarity:
    def test_polynomial_hand_value(self):
        assert similarity(0.0, 2.0, POLY) == pytest.approx(0.5, abs=1e-12)

    def test_exponential_hand_value(self):
        model = UserModel("exponential", 2.0)
        assert similarity(0.0, 1.0, model) == pytest.approx(math.exp(-2.0), abs=1e-12)

    def test_coincident_points_error(self):
        for model in (POLY, EXP):
            with pytest.raises(ProtocolError):
                similarity(1.5, 1.5, model)

    def test_vector_points(self):
        got = similarity([0.0, 0.0], [3.0, 4.0], POLY)
        assert got == pytest.approx(1.0 / 5.0, abs=1e-12)

    def test_theta_validation(self):
        with pytest.raises(ValueError):
            UserModel("polynomial", 0.0)
        with pytest.raises(ValueError):
            UserModel("polynomial", -1.0)


class TestResponseProbs:
    def test_hand_value_polynomial(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        dist = response_probs(data, POLY, Query((1, 2)), 0)
        assert dist.probs == pytest.approx([2.0 / 3.0, 1.0 / 3.0], abs=1e-12)

    def test_symmetric_distances(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        for model in (POLY, EXP):
            dist = response_probs(data, model, Query((0, 2)), 1)
            assert dist.probs == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_exponential_closed_form(self):
        # with k=2 the exponential response is a logistic of the distance gap
        data = Dataset(np.array([0.0, 1.5, 4.0, 9.0]))
        theta = 1.7
        model = UserModel("exponential", theta)
        q = Query((0, 2))
        t = 3
        d1, d2 = abs(9.0 - 0.0), abs(9.0 - 4.0)
        expect = 1.0 / (1.0 + math.exp(theta * (d1 - d2)))
        assert response_probs(data, model, q, t).probs[0] == pytest.approx(expect, rel=1e-12)

    def test_target_in_query_errors(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ProtocolError):
            response_probs(data, POLY, Query((0, 1)), 1)

    def test_matches_oracle_everywhere(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            data, _, query, model, family, theta = random_instance(rng)
            for t in range(data.n):
                if t in query.indices:
                    continue
                got = response_probs(data, model, query, t).probs
                want = oracles.response_distribution(
                    list(data.points), query.indices, t, family, theta
                )
                assert got == pytest.approx(want, abs=1e-12)

    def test_monotone_in_sharpness(self):
        # nearer point's probability strictly grows with theta for both families
        data = Dataset(np.array([0.0, 2.0, 5.0]))
        q = Query((1, 2))
        for family in ("polynomial", "exponential"):
            last = 0.0
            for theta in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]:
                p = response_probs(data, UserModel(family, theta), q, 0).probs[0]
                assert p > last
                last = p

    def test_log_space_stability_extreme_theta_distance(self):
        # theta * d up to 1e4 must not underflow into nan or 0/0
        data = Dataset(np.array([0.0, 1.0, 5000.0, 10000.0]))
        model = UserModel("exponential", 1.0)
        dist = response_probs(data, model, Query((2, 3)), 0)
        assert np.isfinite(dist.probs).all()
        assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)
        matrix = response_matrix(data, model, Query((0, 3)))
        assert np.isfinite(matrix).all()
        assert matrix.sum(axis=1) == pytest.approx(np.ones(4), abs=1e-9)


class TestSampling:
    def test_degenerate_distribution(self):
        dist = ResponseDistribution(np.array([1.0, 0.0]))
        for seed in range(5):
            assert sample_response(dist, np.random.default_rng(seed)) == 0

    def test_deterministic_given_state(self):
        dist = ResponseDistribution(np.array([0.5, 0.5]))
        r1 = sample_response(dist, np.random.default_rng(123))
        r2 = sample_response(dist, np.random.default_rng(123))
        assert r1 == r2

    def test_empirical_frequencies(self):
        probs = np.array([0.1, 0.4, 0.5])
        dist = ResponseDistribution(probs)
        rng = np.random.default_rng(42)
        draws = 100_000
        counts = np.bincount(
            [sample_response(dist, rng) for _ in range(draws)], minlength=3
        )
        for r in range(3):
            sigma = math.sqrt(probs[r] * (1 - probs[r]) / draws)
            assert abs(counts[r] / draws - probs[r]) <= 3 * sigma + 1e-12


class TestPosteriorUpdate:
    def test_point_mass_is_fixed_point(self):
        data = Dataset(np.array([0.0, 1.0, 2.0, 3.0]))
        posterior = Posterior.point_mass(4, 3)
        updated = posterior_update(posterior, data, POLY, Query((0, 1)), 0)
        assert updated.mass == pytest.approx([0, 0, 0, 1], abs=1e-12)

    def test_matches_oracle_small_uniform(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        posterior = Posterior.uniform(3)
        got = posterior_update(posterior, data, POLY, Query((0, 1)), 1).mass
        want = oracles.bayes_update([0.0, 1.0, 2.0], [1 / 3] * 3, (0, 1), 1, "polynomial", 1.0)
        assert got == pytest.approx(want, abs=1e-12)

    def test_output_normalized(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            data, posterior, query, model, _, _ = random_instance(rng)
            r = int(rng.integers(query.k))
            # feed a posterior that still has mass on the query to exercise
            # the conditioning step
            mass = rng.uniform(0.01, 1.0, size=data.n)
            mass /= mass.sum()
            updated = posterior_update(Posterior(mass), data, model, query, r)
            assert abs(float(updated.mass.sum()) - 1.0) <= 1e-9
            assert float(updated.mass[list(query.indices)].sum()) == 0.0

    def test_all_mass_on_query_errors(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        posterior = Posterior(np.array([0.5, 0.5, 0.0]))
        with pytest.raises(ProtocolError):
            posterior_update(posterior, data, POLY, Query((0, 1)), 0)

    def test_bad_response_index(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            posterior_update(Posterior.uniform(3), data, POLY, Query((0, 1)), 2)


class TestQuantiles:
    def test_hand_example(self):
        p = Posterior(np.array([0.1, 0.2, 0.3, 0.4]))
        assert quantile_index(p, 0.25) == 1

    def test_p_one_gives_last_index(self):
        p = Posterior(np.array([0.1, 0.2, 0.3, 0.4]))
        assert quantile_index(p, 1.0) == 3

    def test_exact_boundary_goes_left(self):
        p = Posterior(np.array([0.25, 0.25, 0.5]))
        assert quantile_index(p, 0.25) == 0
        assert quantile_index(p, 0.5) == 1

    def test_zero_mass_heads_are_skipped(self):
        p = Posterior(np.array([0.0, 0.5, 0.5]))
        assert quantile_index(p, 0.25) == 1

    def test_invalid_levels(self):
        p = Posterior(np.array([0.5, 0.5]))
        for bad in (0.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                quantile_index(p, bad)


class TestEntropyKL:
    def test_point_mass_entropy(self):
        assert entropy(Posterior.point_mass(5, 2)) == 0.0

    def test_uniform_entropy(self):
        assert entropy(Posterior.uniform(8)) == pytest.approx(3.0, abs=1e-12)

    def test_hand_entropy(self):
        assert entropy(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.5, abs=1e-12)

    def test_kl_self_is_zero(self):
        a = np.array([0.2, 0.3, 0.5])
        assert kl_divergence(a, a) == 0.0

    def test_kl_hand_values(self):
        assert kl_bernoulli(0.5, 7.0 / 12.0) == pytest.approx(0.020320992248673, abs=1e-12)
        assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_kl_support_violation(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))

    @given(
        st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=10),
        st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=10),
    )
    @settings(max_examples=100, deadline=None)
    def test_kl_nonnegative(self, wa, wb):
        size = min(len(wa), len(wb))
        a = np.array(wa[:size]) / sum(wa[:size])
        b = np.array(wb[:size]) / sum(wb[:size])
        assert kl_divergence(a, b) >= -1e-12


class TestMarginalAndGain:
    def test_point_mass_marginal_equals_response(self):
        data = Dataset(np.array([0.0, 1.0, 2.0, 4.0]))
        q = Query((0, 1))
        marg = marginal_response_probs(data, POLY, q, Posterior.point_mass(4, 3))
        direct = response_probs(data, POLY, q, 3)
        assert marg.probs == pytest.approx(direct.probs, abs=1e-12)

    def test_symmetric_two_point_marginal(self):
        data = Dataset(np.array([0.0, 1.0, 2.0, 3.0]))
        posterior = Posterior(np.array([0.5, 0.0, 0.0, 0.5]))
        marg = marginal_response_probs(data, POLY, Query((1, 2)), posterior)
        assert marg.probs == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_marginal_matches_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            data, posterior, query, model, family, theta = random_instance(rng)
            got = marginal_response_probs(data, model, query, posterior).probs
            want = oracles.marginal_responses(
                list(data.points), list(posterior.mass), query.indices, family, theta
            )
            assert got == pytest.approx(want, abs=1e-10)

    def test_marginal_rejects_query_mass(self):
        data = Dataset(np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ProtocolError):
            marginal_response_probs(data, POLY, Query((0, 1)), Posterior.uniform(3))

    def test_point_mass_gain_is_zero(self):
        data = Dataset(np.array([0.0, 1.0, 2.0, 4.0]))
        gain = expected_info_gain(Posterior.point_mass(4, 3), data, POLY, Query((0, 1)))
        assert gain == pytest.approx(0.0, abs=1e-12)

    def test_gain_identity_vs_direct_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            data, posterior, query, model, family, theta = random_instance(rng)
            gain = expected_info_gain(posterior, data, model, query)
            direct = oracles.expected_gain_direct(
                list(data.points), list(posterior.mass), query.indices, family, theta
            )
            assert gain == pytest.approx(direct, abs=1e-9)
            assert gain >= -1e-12

    def test_subset_gain_lower_bound(self):
        # restricting attention to any index subset can only lower the gain
        rng = np.random.default_rng(9)
        for _ in range(30):
            data, posterior, query, model, _, _ = random_instance(rng)
            gain = expected_info_gain(posterior, data, model, query)
            probs = response_matrix(data, model, query)
            support = np.flatnonzero(posterior.mass > 0)
            subset = rng.choice(support, size=max(1, support.size // 2), replace=False)
            a = posterior.mass[subset]
            p = probs[subset]
            mix = (a @ p) / a.sum()
            lower = float(
                sum(w * oracles.kl_bits(row, mix) for w, row in zip(a, p))
            )
            assert gain >= lower - 1e-9

    def test_round_gain_includes_query_mass(self):
        # with zero mass on the query both gain notions agree
        data = Dataset(np.array([0.0, 1.0, 2.0, 3.0, 4.0]))
        mass = np.array([0.4, 0.0, 0.0, 0.3, 0.3])
        q = Query((1, 2))
        posterior = Posterior(mass)
        assert expected_round_gain(posterior, data, POLY, q) == pytest.approx(
            expected_info_gain(posterior, data, POLY, q), abs=1e-12
        )
        # with mass on a query point the polynomial limit makes its response certain
        heavy = Posterior(np.array([0.2, 0.5, 0.0, 0.15, 0.15]))
        gain = expected_round_gain(heavy, data, POLY, q)
        assert math.isfinite(gain) and gain > 0.0

    def test_condition_on_miss(self):
        posterior = Posterior(np.array([0.25, 0.25, 0.25, 0.25]))
        cond = condition_on_miss(posterior, Query((1, 2)))
        assert cond.mass == pytest.approx([0.5, 0.0, 0.0, 0.5], abs=1e-12)


class TestDatasetValidation:
    def test_unsorted_1d_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.array([0.0, 2.0, 1.0]))

    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]))

    def test_min_gap_is_true_minimum(self):
        data = Dataset(np.array([0.0, 1.5, 2.0, 10.0]))
        assert data.min_gap == pytest.approx(0.5, abs=1e-15)
        rng = np.random.default_rng(0)
        pts = rng.uniform(size=(40, 3))
        data = Dataset(pts, norm_order=2.0)
        want = min(
            oracles.distance(pts[i], pts[j])
            for i in range(40)
            for j in range(40)
            if i != j
        )
        assert data.min_gap == pytest.approx(want, rel=1e-12)

    def test_infinity_norm(self):
        data = Dataset(np.array([[0.0, 0.0], [1.0, 3.0]]), norm_order=math.inf)
        assert data.distance(0, 1) == pytest.approx(3.0, abs=1e-15)


class TestPosteriorValidation:
    def test_negative_mass_rejected(self):
        with pytest.raises(ValueError):
            Posterior(np.array([0.5, 0.6, -0.1]))

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            Posterior(np.array([0.5, 0.6]))

    def test_cumulative_consistency(self):
        p = Posterior(np.array([0.1, 0.4, 0.5]))
        assert p.cumulative == pytest.approx([0.1, 0.5, 1.0], abs=1e-12)

    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_update_chain_stays_normalized(self, raw):
        total = sum(raw)
        if total <= 0:
            return
        mass = np.array(raw) / total
        posterior = Posterior(mass)
        data = Dataset.uniform_grid(len(raw))
        rng = np.random.default_rng(0)
        for _ in range(5):
            support = np.flatnonzero(posterior.mass > 0)
            others = np.setdiff1d(np.arange(data.n), support)
            if support.size < 1 or support.size + others.size < 2:
                break
            # query one positive-mass point and any other point
            pick = int(support[rng.integers(support.size)])
            other = int(others[0]) if others.size else int(support[0])
            if other == pick:
                if support.size < 2:
                    break
                other = int(support[support != pick][0])
            q = Query((min(pick, other), max(pick, other)))
            try:
                posterior = posterior_update(posterior, data, EXP, q, 0)
            except ProtocolError:
                break
            assert abs(float(posterior.mass.sum()) - 1.0) <= 1e-9
            assert np.all(posterior.mass >= 0.0)
