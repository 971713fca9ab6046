import numpy as np
import pytest

from antipgd.noise import NoiseSpec, NoiseStream, derive_seed, lag1_autocorrelation


def _spec(**kw):
    base = dict(sigma=0.5, dim=4, distribution="bernoulli", correlation="uncorrelated", seed=1)
    base.update(kw)
    return NoiseSpec(**base)


class TestNoiseSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(sigma=-0.1, dim=2)
        with pytest.raises(ValueError):
            NoiseSpec(sigma=0.1, dim=-1)
        with pytest.raises(ValueError):
            NoiseSpec(sigma=0.1, dim=2, distribution="cauchy")
        with pytest.raises(ValueError):
            NoiseSpec(sigma=0.1, dim=2, correlation="positively")

    def test_emitted_variance(self):
        assert _spec(sigma=2.0).emitted_variance == 4.0
        assert _spec(sigma=2.0, correlation="anticorrelated").emitted_variance == 8.0

    def test_stream_needs_dim(self):
        with pytest.raises(ValueError):
            NoiseStream(NoiseSpec(sigma=0.1, dim=0))


class TestRawDraws:
    def test_sigma_zero_is_all_zeros(self):
        for dist in ("bernoulli", "gaussian"):
            s = NoiseStream(_spec(sigma=0.0, distribution=dist))
            assert np.array_equal(s.next_xi(), np.zeros(4))
            assert np.array_equal(s.next_perturbation(), np.zeros(4))

    def test_bernoulli_support(self):
        s = NoiseStream(_spec(sigma=0.5))
        draws = s.next_xi_block(200)
        assert set(np.unique(draws)) == {-0.5, 0.5}

    def test_bernoulli_moments(self):
        # 1e5 draws: per-coordinate mean within 0.02 of 0, variance within 2%
        s = NoiseStream(_spec(sigma=1.0, dim=4, seed=3))
        draws = s.next_xi_block(100_000)
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
        assert np.all(np.abs(draws.var(axis=0) - 1.0) < 0.02)

    def test_gaussian_moments(self):
        s = NoiseStream(_spec(sigma=0.3, distribution="gaussian", seed=4))
        draws = s.next_xi_block(100_000)
        assert np.all(np.abs(draws.mean(axis=0)) < 0.01)
        assert np.all(np.abs(draws.var(axis=0) - 0.09) < 0.003)

    def test_block_equals_repeated_single(self):
        a = NoiseStream(_spec(distribution="gaussian", seed=9)).next_xi_block(7)
        b = np.stack([NoiseStream(_spec(distribution="gaussian", seed=9)).next_xi() for _ in [0]])
        assert np.array_equal(a[0], b[0])
        s = NoiseStream(_spec(distribution="gaussian", seed=9))
        singles = np.stack([s.next_xi() for _ in range(7)])
        assert np.array_equal(a, singles)


class TestPerturbations:
    def test_uncorrelated_matches_raw(self):
        a = NoiseStream(_spec(seed=5)).next_perturbation_block(50)
        b = NoiseStream(_spec(seed=5)).next_xi_block(50)
        assert np.array_equal(a, b)

    def test_anticorrelated_telescopes_bitwise(self):
        # running sum of the first n+1 emitted increments equals xi_n exactly
        spec = _spec(correlation="anticorrelated", distribution="gaussian", seed=6)
        eps = NoiseStream(spec).next_perturbation_block(100)
        raws = NoiseStream(spec).next_xi_block(100)
        sums = np.cumsum(eps, axis=0)
        # telescoping cancellation is exact in floating point only summed in
        # order; compare the reconstruction step by step
        acc = np.zeros(spec.dim)
        for n in range(100):
            acc = acc + eps[n]
            if n == 0:
                assert np.array_equal(acc, raws[0])
        assert np.allclose(sums[-1], raws[-1], rtol=0, atol=1e-12)
        # differences themselves are exact: eps_n == xi_n - xi_{n-1} bitwise
        assert np.array_equal(eps[1:], raws[1:] - raws[:-1])
        assert np.array_equal(eps[0], raws[0])

    def test_bernoulli_partial_sums_telescope_bitwise(self):
        # +/-sigma and their differences are exactly representable, so the
        # in-order running sum of increments reproduces xi_n bit for bit
        spec = _spec(correlation="anticorrelated", sigma=0.3, dim=6, seed=29)
        eps = NoiseStream(spec).next_perturbation_block(2000)
        raws = NoiseStream(spec).next_xi_block(2000)
        acc = np.zeros(6)
        for n in range(2000):
            acc = acc + eps[n]
            assert np.array_equal(acc, raws[n])

    def test_anticorrelated_bernoulli_support(self):
        spec = _spec(correlation="anticorrelated", sigma=0.5, seed=7)
        eps = NoiseStream(spec).next_perturbation_block(500)
        assert set(np.unique(eps[1:])) == {-1.0, 0.0, 1.0}

    def test_bernoulli_square_is_sigma_sq_exactly(self):
        eps = NoiseStream(_spec(sigma=0.5, seed=8)).next_perturbation_block(1000)
        assert np.all(eps * eps == 0.25)

    def test_mixed_consumption_keeps_one_counter(self):
        # priming with one raw draw then streaming perturbations yields
        # xi_1 - xi_0, xi_2 - xi_1, ...
        spec = _spec(correlation="anticorrelated", distribution="gaussian", seed=11)
        s = NoiseStream(spec)
        xi0 = s.next_xi()
        eps = s.next_perturbation_block(3)
        raws = NoiseStream(spec).next_xi_block(4)
        assert np.array_equal(xi0, raws[0])
        assert np.array_equal(eps, raws[1:] - raws[:-1])

    def test_zero_mean(self):
        for corr in ("uncorrelated", "anticorrelated"):
            for dist in ("bernoulli", "gaussian"):
                spec = _spec(correlation=corr, distribution=dist, sigma=1.0, dim=8, seed=13)
                eps = NoiseStream(spec).next_perturbation_block(40_000)[1:]
                sem = eps.std(ddof=1) / np.sqrt(eps.shape[0])
                assert np.all(np.abs(eps.mean(axis=0)) < 3.5 * sem + 1e-12)


class TestLag1Autocorrelation:
    def test_anticorrelated_is_minus_half(self):
        spec = _spec(sigma=1.0, dim=10, correlation="anticorrelated", seed=17)
        assert abs(lag1_autocorrelation(spec, 100_000) - (-0.5)) < 0.02

    def test_uncorrelated_is_zero(self):
        spec = _spec(sigma=1.0, dim=10, seed=17)
        assert abs(lag1_autocorrelation(spec, 100_000)) < 0.02

    def test_distribution_independent(self):
        spec = _spec(sigma=0.3, dim=10, distribution="gaussian",
                     correlation="anticorrelated", seed=19)
        assert abs(lag1_autocorrelation(spec, 100_000) - (-0.5)) < 0.02

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            lag1_autocorrelation(_spec(sigma=1.0), 999)
        with pytest.raises(ValueError):
            lag1_autocorrelation(_spec(sigma=0.0), 2000)


class TestReproducibility:
    def test_same_seed_same_stream(self):
        a = NoiseStream(_spec(distribution="gaussian", seed=23)).next_perturbation_block(64)
        b = NoiseStream(_spec(distribution="gaussian", seed=23)).next_perturbation_block(64)
        assert np.array_equal(a, b)

    def test_distinct_seeds_differ_early(self):
        a = NoiseStream(_spec(distribution="gaussian", seed=1)).next_xi_block(10)
        b = NoiseStream(_spec(distribution="gaussian", seed=2)).next_xi_block(10)
        assert not np.array_equal(a, b)

    def test_derive_seed(self):
        assert derive_seed(1, "a", 0) == derive_seed(1, "a", 0)
        assert derive_seed(1, "a", 0) != derive_seed(1, "a", 1)
        assert derive_seed(1, "a", 0) != derive_seed(2, "a", 0)
        assert 0 <= derive_seed(2**63, "x") < 2**64
