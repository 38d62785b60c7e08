import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from randwidth.errors import RegimeError, ResolvabilityError
from randwidth.lawcheck import (
    arbitrary_lower_bound,
    bound_vs_estimate,
    concentration_probe,
    fit_rate,
    inclusion_probe,
    lipschitz_probe,
    median_of_means,
    pair_difference,
    perturbation_for,
    rate,
    run_cells,
    stable_threshold,
    sweep_rate,
    tail_probe,
)
from randwidth.randsrc import IsotropicModel, PerturbationLaw, make_rng

G8 = IsotropicModel("gaussian", 8)
ONES = PerturbationLaw.ones(1)


def _script_bound(y, n, c1, c2, strict=False):
    # plain-loop transcription of the admissibility rule and the supremum
    ys = sorted((abs(v) for v in y), reverse=True)
    best = 0.0
    for k in range(1, min(n, len(ys)) + 1):
        if ys[k - 1] == 0:
            break
        H = math.sqrt(sum(1 / ys[i] ** 2 for i in range(k)) / k)
        ok = 1 / (ys[k - 1] * H) <= n ** c1
        if strict:
            ok = ok and ys[0] / ys[k - 1] <= n ** c1
        if ok:
            best = max(best, math.sqrt(math.log(k + 1)) / H)
    return c2 * best


class TestHelpers:
    def test_fit_rate_identity(self):
        s, b = fit_rate([1, 2, 4, 8], [1, 2, 4, 8])
        assert abs(s - 1) < 1e-12 and abs(b) < 1e-12

    def test_fit_rate_power(self):
        x = np.array([2.0, 3.0, 10.0, 50.0])
        s, b = fit_rate(x, 5 * x ** 2)
        assert s == pytest.approx(2.0, abs=1e-12)
        assert b == pytest.approx(math.log(5), abs=1e-12)

    def test_fit_rate_noisy(self):
        x = 2.0 ** np.arange(6, 13)
        y = 3 * x ** 0.57 * (1 + 0.01 * np.random.default_rng(0).standard_normal(x.size))
        assert abs(fit_rate(x, y)[0] - 0.57) < 0.05

    def test_fit_rate_matches_polyfit(self):
        x = np.array([1.5, 4.0, 7.0, 30.0])
        y = np.array([0.3, 2.0, 1.1, 9.0])
        assert np.allclose(fit_rate(x, y), np.polyfit(np.log(x), np.log(y), 1), rtol=1e-12)

    @pytest.mark.parametrize("xs,ys", [([1, 2], [1, 2]), ([1, 0, 2], [1, 1, 1]), ([1, 2, 3], [1, -1, 1])])
    def test_fit_rate_rejects(self, xs, ys):
        with pytest.raises(ValueError):
            fit_rate(xs, ys)

    def test_rates(self):
        N = 1000
        L = math.log(N)
        assert rate(PerturbationLaw("gaussian"), N) == L
        assert rate(PerturbationLaw("sphere"), N) == pytest.approx(L / math.sqrt(N), rel=1e-15)
        assert rate(PerturbationLaw("bp_ball", p=1), N) == pytest.approx(L ** 1.5 / N, rel=1e-15)
        assert rate(PerturbationLaw("bp_ball", p=2), N) == pytest.approx(L / math.sqrt(N), rel=1e-15)
        assert rate(PerturbationLaw("p_stable", p=1.75), N) == pytest.approx(N ** (1 / 1.75), rel=1e-15)

    def test_median_of_means(self):
        v = np.arange(16, dtype=float)
        # blocks of two: means 0.5, 2.5, ..., 14.5
        assert median_of_means(v) == 7.5
        v[-1] = 1e12
        assert median_of_means(v) == 7.5

    def test_run_cells_order(self):
        assert run_cells(lambda c: c * c, list(range(20)), workers=4) == [c * c for c in range(20)]

    def test_fixed_broadcast(self):
        y = perturbation_for(ONES, 5, make_rng(0))
        assert np.array_equal(y.values, np.ones(5))

    def test_stable_threshold(self):
        M = 1 / (2 - 1.75)
        assert stable_threshold(1.75) == pytest.approx(4 * M * math.log(M) * math.log(1 + 2 * M * math.log(M)))


class TestSweep:
    def test_fixed_ones_monotone(self):
        rep = sweep_rate(ONES, G8, 8, [8, 16, 32, 64, 128], 4, 64, 1, make_rng(1))
        assert np.all(np.diff(rep.raw) >= 0)
        assert np.array_equal(rep.normalized, rep.raw)

    def test_normalized_is_raw_over_rate(self):
        law = PerturbationLaw("sphere")
        rep = sweep_rate(law, G8, 8, [16, 32, 64], 2, 16, 3, make_rng(2))
        assert np.array_equal(rep.normalized, rep.raw / np.array([rate(law, N) for N in (16, 32, 64)]))
        assert math.isfinite(rep.fitted_exponent)

    def test_stable_uses_median_of_means(self):
        law = PerturbationLaw("p_stable", p=1.75)
        rep = sweep_rate(law, G8, 8, [16, 32, 64], 2, 16, 16, make_rng(3))
        assert np.array_equal(rep.raw, rep.median_of_means)
        assert rep.mom_disagrees.shape == (3,)

    def test_worker_independence(self):
        law = PerturbationLaw("gaussian")
        a = sweep_rate(law, G8, 8, [16, 32], 2, 16, 4, make_rng(4), workers=1)
        b = sweep_rate(law, G8, 8, [16, 32], 2, 16, 4, make_rng(4), workers=3)
        assert np.array_equal(a.draws, b.draws)

    def test_regime(self):
        with pytest.raises(RegimeError):
            sweep_rate(ONES, G8, 8, [4, 16], 2, 8, 1, make_rng(0))
        with pytest.raises(ValueError):
            sweep_rate(ONES, G8, 8, [16, 16], 2, 8, 1, make_rng(0))

    def test_stable_p_out_of_range(self):
        with pytest.raises(ValueError):
            PerturbationLaw("p_stable", p=2.0)


class TestConcentration:
    T = [0.01, 0.05, 0.1, 0.2, 0.5, 1e6]

    def test_tail_shape(self):
        c = concentration_probe(PerturbationLaw("gaussian"), G8, 8, 32, 100, self.T, 2, 16, make_rng(1))
        assert np.all(np.diff(c.empirical_tail) <= 0)
        assert np.all((c.empirical_tail >= 0) & (c.empirical_tail <= 1))
        assert c.empirical_tail[-1] == 0.0
        assert c.center == np.median(c.f_values)

    def test_stable_fit_mask(self):
        law = PerturbationLaw("p_stable", p=1.75)
        c = concentration_probe(law, G8, 8, 32, 100, [0.5, 1, 2, 5, 10, 20], 2, 16, make_rng(2))
        assert np.array_equal(c.fit_mask, c.scaled_t ** 1.75 >= stable_threshold(1.75))
        assert c.threshold == stable_threshold(1.75)

    @pytest.mark.parametrize("p", [1.5, 1.95])
    def test_stable_probe_range(self, p):
        with pytest.raises(RegimeError):
            concentration_probe(PerturbationLaw("p_stable", p=p), G8, 8, 32, 100, [1.0], 2, 16, make_rng(0))

    def test_sphere_spread_vs_lipschitz(self):
        N = 64
        c = concentration_probe(PerturbationLaw("sphere"), G8, 8, N, 100, [0.1], 4, 64, make_rng(3))
        C = lipschitz_probe(G8, 8, N, 10, 4, 64, make_rng(4)).C_hat
        assert c.f_values.std() <= 5 * C * math.sqrt(math.log(N)) / math.sqrt(N)

    def test_too_few_draws(self):
        with pytest.raises(ValueError):
            concentration_probe(ONES, G8, 8, 32, 99, [0.1], 2, 8, make_rng(0))


class TestLipschitz:
    def test_identical_pair(self):
        y = np.random.default_rng(0).standard_normal(32)
        d, dist = pair_difference(G8, 32, y, y, 3, 32, make_rng(1))
        assert d == 0.0 and dist == 0.0

    def test_homogeneous_pair(self):
        y = np.random.default_rng(0).standard_normal(32)
        d, _ = pair_difference(G8, 32, 2.0 * y, y, 3, 32, make_rng(1))
        f = pair_difference(G8, 32, y, np.zeros(32), 3, 32, make_rng(1))[0]
        assert d == f

    def test_probe(self):
        rep = lipschitz_probe(G8, 8, 64, 10, 2, 32, make_rng(2))
        assert rep.C_hat == rep.ratios.max() > 0
        assert rep.diffs.shape == (10,)

    def test_worker_independence(self):
        a = lipschitz_probe(G8, 8, 32, 10, 2, 16, make_rng(3), workers=1)
        b = lipschitz_probe(G8, 8, 32, 10, 2, 16, make_rng(3), workers=4)
        assert np.array_equal(a.diffs, b.diffs)

    def test_pairs_floor(self):
        with pytest.raises(ValueError):
            lipschitz_probe(G8, 8, 64, 9, 2, 16, make_rng(0))


class TestTailProbe:
    @pytest.mark.parametrize("N,alpha", [(64, 0.5), (1024, 0.25)])
    def test_gaussian_oracle(self, N, alpha):
        tp = tail_probe(G8, 8, N, alpha, 200000, make_rng(N))
        oracle = 2 * stats.norm.sf(alpha * math.sqrt(math.log(N)))
        se = math.sqrt(oracle * (1 - oracle) / tp.samples)
        assert abs(tp.empirical - oracle) <= 3 * se
        assert tp.reference == pytest.approx(1 / (N ** (alpha ** 2 / 2) * math.sqrt(math.log(N))))

    def test_small_alpha(self):
        assert tail_probe(G8, 8, 64, 1e-6, 10000, make_rng(1)).empirical > 0.999

    def test_unresolvable(self):
        with pytest.raises(ResolvabilityError):
            tail_probe(G8, 8, 64, 3.0, 1000, make_rng(1))


class TestInclusion:
    M6 = IsotropicModel("gaussian", 6)

    def test_scale_doubles(self):
        a = inclusion_probe(self.M6, 6, 64, 3, 32, 1000, make_rng(1))
        b = inclusion_probe(self.M6, 6, 64, 3, 32, 1000, make_rng(1), scale=2.0)
        assert np.array_equal(b.per_trial, 2.0 * a.per_trial)

    def test_positive(self):
        rep = inclusion_probe(self.M6, 6, 64, 5, 64, 2000, make_rng(2))
        assert np.all(rep.per_trial > 0)
        assert rep.c_hat == rep.per_trial.min()

    def test_regime(self):
        with pytest.raises(RegimeError, match="N > n"):
            inclusion_probe(self.M6, 6, 36, 2, 8, 1000, make_rng(0))


class TestLowerBound:
    def test_ones(self):
        rep = arbitrary_lower_bound(np.ones(10), 4, 0.5, 1.0)
        assert np.array_equal(rep.harmonic_term, np.ones(4))
        assert rep.I_y == [1, 2, 3, 4]
        assert rep.bound_value == pytest.approx(math.sqrt(math.log(5)), abs=1e-12)
        assert rep.bound_value == pytest.approx(_script_bound(np.ones(10), 4, 0.5, 1.0), abs=1e-12)
        assert rep.k_star == 4

    def test_single_spike(self):
        y = np.zeros(7)
        y[3] = 1.0
        rep = arbitrary_lower_bound(y, 4, 0.5, 2.0)
        assert rep.I_y == [1]
        assert rep.bound_value == pytest.approx(2.0 * math.sqrt(math.log(2)), abs=1e-12)

    def test_all_zero(self):
        with pytest.raises(ValueError):
            arbitrary_lower_bound(np.zeros(5), 3)

    def test_first_index_always_admissible(self):
        # at k = 1 the criterion is exactly 1 <= n^c1, even after a steep drop
        y = np.array([1.0, 1e-6, 1e-6])
        rep = arbitrary_lower_bound(y, 3, 0.5, 1.0)
        assert 1 in rep.I_y
        assert rep.bound_value == pytest.approx(_script_bound(y, 3, 0.5, 1.0), rel=1e-12)

    def test_strict_mode(self):
        y = np.array([10.0, 1.0, 1.0, 1.0])
        loose = arbitrary_lower_bound(y, 4, 0.5)
        strict = arbitrary_lower_bound(y, 4, 0.5, strict=True)
        assert set(strict.I_y) <= set(loose.I_y)
        assert strict.I_y == [1]
        assert strict.bound_value == pytest.approx(_script_bound(y, 4, 0.5, 1.0, strict=True), rel=1e-12)

    def test_k_limited_to_n(self):
        rep = arbitrary_lower_bound(np.ones(50), 3)
        assert rep.I_y == [1, 2, 3] and rep.harmonic_term.shape == (3,)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100)),
                    min_size=1, max_size=30),
           st.integers(1, 12), st.floats(0.05, 2.0), st.booleans(), st.randoms(use_true_random=False))
    def test_matches_script_and_is_permutation_invariant(self, y, n, c1, strict, rnd):
        y = np.asarray(y)
        if not np.any(y):
            return
        rep = arbitrary_lower_bound(y, n, c1, 1.5, strict)
        assert rep.bound_value == pytest.approx(_script_bound(y, n, c1, 1.5, strict), rel=1e-12)
        perm = list(y)
        rnd.shuffle(perm)
        other = arbitrary_lower_bound(np.asarray(perm), n, c1, 1.5, strict)
        assert np.array_equal(rep.harmonic_term, other.harmonic_term)
        assert rep.I_y == other.I_y and rep.bound_value == other.bound_value

    def test_scale_invariance(self):
        y = 2.0 ** -np.arange(1, 20)
        a = bound_vs_estimate(G8, y, 8, 19, 0.5, 4, 64, make_rng(5))
        b = bound_vs_estimate(G8, 4.0 * y, 8, 19, 0.5, 4, 64, make_rng(5))
        assert b.f_hat == 4.0 * a.f_hat and b.sup_term == 4.0 * a.sup_term
        assert b.fitted_c2 == a.fitted_c2

    def test_geometric_decay_small_k(self):
        y = 2.0 ** -np.arange(1, 65)
        rep = arbitrary_lower_bound(y, 8, 0.5)
        assert rep.k_star <= 2

    def test_ones_fitted_c2(self):
        est = bound_vs_estimate(G8, np.ones(64), 8, 64, 0.5, 8, 256, make_rng(6))
        assert 0.3 <= est.fitted_c2 <= 5
