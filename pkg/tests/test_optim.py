import numpy as np
import pytest

from antipgd.landscapes import WideningValley, ZeroLoss, gen_quad_regression
from antipgd.noise import NoiseSpec, NoiseStream
from antipgd.optim import InitSpec, RunConfig, Trajectory, run, run_zform


def _noise(sigma, correlation, distribution="gaussian"):
    return NoiseSpec(sigma=sigma, distribution=distribution, correlation=correlation)


def _cfg(variant, steps=100, eta=0.01, sigma=0.05, record_every=10, **kw):
    corr = {"pgd": "uncorrelated", "sgd": "uncorrelated", "label_noise_gd": "uncorrelated",
            "anti_pgd": "anticorrelated", "anti_sgd": "anticorrelated"}.get(variant)
    noise = None if corr is None else _noise(sigma, corr, kw.pop("distribution", "gaussian"))
    return RunConfig(name=kw.pop("name", variant), variant=variant, eta=eta, steps=steps,
                     noise=noise, record_every=record_every, **kw)


class TestConfigValidation:
    def test_bad_variant(self):
        with pytest.raises(ValueError):
            RunConfig(name="x", variant="adam", eta=0.1, steps=10)

    def test_schedule_bounds(self):
        with pytest.raises(ValueError):
            RunConfig(name="x", variant="gd", eta=0.1, steps=10, start_step=5, stop_step=3)
        with pytest.raises(ValueError):
            RunConfig(name="x", variant="gd", eta=0.1, steps=10, stop_step=11)

    def test_correlation_must_match_variant(self):
        with pytest.raises(ValueError):
            RunConfig(name="x", variant="pgd", eta=0.1, steps=10,
                      noise=_noise(0.1, "anticorrelated"))
        with pytest.raises(ValueError):
            RunConfig(name="x", variant="anti_pgd", eta=0.1, steps=10,
                      noise=_noise(0.1, "uncorrelated"))

    def test_noisy_variant_needs_noise(self):
        with pytest.raises(ValueError):
            RunConfig(name="x", variant="pgd", eta=0.1, steps=10)

    def test_batch_requires_per_example(self):
        cfg = _cfg("sgd", batch=4)
        with pytest.raises(ValueError):
            cfg.validate_for(WideningValley(3))

    def test_sgd_needs_batch(self):
        cfg = _cfg("sgd")
        qr = gen_quad_regression(d=6, m_train=4, n_nonzero=2, m_test=2, seed=0)
        with pytest.raises(ValueError):
            cfg.validate_for(qr)

    def test_label_noise_needs_model_outputs(self):
        cfg = _cfg("label_noise_gd")
        with pytest.raises(ValueError):
            cfg.validate_for(WideningValley(3))


class TestRecording:
    def test_row_grid_includes_endpoints(self):
        cfg = _cfg("gd", steps=1000, record_every=10)
        traj = run(cfg, WideningValley(4), base_seed=1)
        assert len(traj.steps) == 101
        assert traj.steps[0] == 0 and traj.steps[-1] == 1000

    def test_final_step_recorded_when_off_grid(self):
        cfg = _cfg("gd", steps=105, record_every=10)
        traj = run(cfg, WideningValley(4), base_seed=1)
        assert traj.steps[-1] == 105
        assert np.all(np.diff(traj.steps) > 0)

    def test_metric_availability(self):
        qr = gen_quad_regression(d=6, m_train=4, n_nonzero=2, m_test=2, seed=0)
        traj = run(_cfg("gd", steps=20, init=InitSpec(scale=0.1)), qr, base_seed=1)
        assert np.all(np.isfinite(traj.test_loss))
        assert np.all(np.isnan(traj.u_sqnorm))
        traj = run(_cfg("gd", steps=20), WideningValley(4), base_seed=1)
        assert np.all(np.isnan(traj.test_loss))
        assert np.all(np.isfinite(traj.u_sqnorm))


class TestStationaryAndStability:
    def test_gd_fixed_at_valley_floor(self):
        cfg = _cfg("gd", steps=500, record_every=50,
                   init=InitSpec(kind="valley_floor", u_sqnorm=9.0))
        traj = run(cfg, WideningValley(10), base_seed=3)
        assert np.all(traj.train_loss == 0.0)
        np.testing.assert_allclose(traj.u_sqnorm, 9.0, rtol=1e-12)
        assert traj.final_w[-1] == 0.0

    def test_gd_monotone_descent_when_stable(self):
        wv = WideningValley(6)
        rng = np.random.default_rng(5)
        w0 = rng.standard_normal(7)
        eta = 1.0 / max(w0[-1] ** 2, w0[:6] @ w0[:6])
        cfg = _cfg("gd", steps=200, eta=eta, record_every=1,
                   init=InitSpec(kind="point", values=tuple(w0)))
        traj = run(cfg, wv, base_seed=0)
        assert np.all(np.diff(traj.train_loss) <= 1e-15)


class TestZeroNoiseEquivalence:
    def test_bitwise_on_valley_and_quad(self):
        qr = gen_quad_regression(d=10, m_train=5, n_nonzero=2, m_test=2, seed=1)
        for landscape, init in ((WideningValley(8), InitSpec(scale=0.5)),
                                (qr, InitSpec(scale=0.3))):
            runs = [
                run(_cfg(v, steps=150, sigma=0.0, init=init, name="same"), landscape, base_seed=9)
                for v in ("gd", "pgd", "anti_pgd")
            ]
            for other in runs[1:]:
                assert np.array_equal(runs[0].final_w, other.final_w)
                assert np.array_equal(runs[0].train_loss, other.train_loss)


class TestAntiPgdTelescoping:
    def test_displacement_is_xi_diff(self):
        # on a flat loss the anti iterates satisfy w_N - w_0 = xi_N - xi_0
        cfg = _cfg("anti_pgd", steps=200, sigma=0.2, record_every=200,
                   init=InitSpec(kind="zeros"))
        lsc = ZeroLoss(30)
        traj = run(cfg, lsc, base_seed=17)
        xi = NoiseStream(cfg.resolved_noise(lsc, traj.seed)).next_xi_block(201)
        np.testing.assert_allclose(traj.final_w, xi[200] - xi[0], rtol=0, atol=1e-13)

    def test_pgd_random_walk_variance(self):
        # E|w_N - w_0|^2 = N d sigma^2 for the uncorrelated walk
        n_samples, d, n_steps, sigma = 400, 10, 50, 0.3
        lsc = ZeroLoss(n_samples * d)
        cfg = _cfg("pgd", steps=n_steps, sigma=sigma, record_every=n_steps,
                   init=InitSpec(kind="zeros"))
        traj = run(cfg, lsc, base_seed=23)
        vals = np.einsum("sd,sd->s", *(traj.final_w.reshape(n_samples, d),) * 2)
        expect = n_steps * d * sigma**2
        sem = vals.std(ddof=1) / np.sqrt(n_samples)
        assert abs(vals.mean() - expect) < 3 * sem


class TestSchedule:
    def test_after_stop_is_pure_gd(self):
        # trajectory after stop_step equals a GD run restarted from the
        # stop_step snapshot, bitwise
        wv = WideningValley(12)
        cfg = _cfg("pgd", steps=400, sigma=0.05, record_every=50, stop_step=200,
                   snapshot_steps=(200,), init=InitSpec(kind="valley_floor", u_sqnorm=4.0))
        traj = run(cfg, wv, base_seed=31)
        snap = traj.snapshots[200]
        cfg_gd = RunConfig(name="resume", variant="gd", eta=cfg.eta, steps=200,
                           record_every=50, init=InitSpec(kind="point", values=tuple(snap)))
        resumed = run(cfg_gd, wv, base_seed=31)
        assert np.array_equal(resumed.final_w, traj.final_w)
        tail = traj.train_loss[traj.steps >= 200]
        np.testing.assert_array_equal(resumed.train_loss, tail)

    def test_noise_window_start(self):
        # no noise before start_step: the early trajectory matches GD
        wv = WideningValley(12)
        init = InitSpec(kind="gaussian", scale=0.5)
        cfg = _cfg("pgd", steps=100, sigma=0.05, record_every=10, start_step=50, init=init)
        traj = run(cfg, wv, base_seed=37)
        gd = run(_cfg("gd", steps=50, record_every=10, init=init, name="pgd"), wv, base_seed=37)
        np.testing.assert_array_equal(traj.train_loss[traj.steps <= 50], gd.train_loss)


class TestMiniBatch:
    def setup_method(self):
        self.qr = gen_quad_regression(d=12, m_train=8, n_nonzero=3, m_test=4, seed=2)

    def test_epoch_average_is_full_gradient(self):
        # without-replacement batches partition the data; their average
        # gradient at a fixed point equals the full gradient
        rng = np.random.default_rng(41)
        w = 0.3 * rng.standard_normal(12)
        perm = rng.permutation(8)
        grads = [self.qr.per_example_grad(w, perm[i : i + 2]) for i in range(0, 8, 2)]
        np.testing.assert_allclose(np.mean(grads, axis=0), self.qr.grad(w), rtol=1e-12)

    def test_sgd_runs_and_is_deterministic(self):
        cfg = _cfg("sgd", steps=60, batch=2, sigma=0.0, init=InitSpec(scale=0.2))
        a = run(cfg, self.qr, base_seed=43)
        b = run(cfg, self.qr, base_seed=43)
        assert np.array_equal(a.final_w, b.final_w)
        assert not a.diverged

    def test_anti_sgd_adds_perturbation(self):
        cfg = _cfg("anti_sgd", steps=60, batch=2, sigma=0.05, init=InitSpec(scale=0.2))
        traj = run(cfg, self.qr, base_seed=47)
        assert not traj.diverged
        plain = run(_cfg("sgd", steps=60, batch=2, sigma=0.0, init=InitSpec(scale=0.2),
                         name="anti_sgd"), self.qr, base_seed=47)
        assert not np.array_equal(traj.final_w, plain.final_w)


class TestLabelNoise:
    def setup_method(self):
        self.qr = gen_quad_regression(d=10, m_train=6, n_nonzero=2, m_test=3, seed=3)

    def test_sigma_zero_is_gd(self):
        a = run(_cfg("label_noise_gd", steps=80, sigma=0.0, init=InitSpec(scale=0.2)),
                self.qr, base_seed=51)
        b = run(_cfg("gd", steps=80, init=InitSpec(scale=0.2), name="label_noise_gd"),
                self.qr, base_seed=51)
        assert np.array_equal(a.final_w, b.final_w)

    def test_step_mean_over_bernoulli_noise_is_gd_step(self):
        # the noised gradient is affine in xi, so averaging the +/-sigma
        # steps recovers the gd step exactly
        rng = np.random.default_rng(53)
        w = 0.3 * rng.standard_normal(10)
        eta, sigma = 0.05, 0.4
        stepped = [w - eta * self.qr.grad_label_noised(w, s) for s in (+sigma, -sigma)]
        np.testing.assert_allclose(np.mean(stepped, axis=0), w - eta * self.qr.grad(w),
                                   rtol=0, atol=1e-15)

    def test_run_uses_scalar_stream(self):
        traj = run(_cfg("label_noise_gd", steps=80, sigma=0.05, init=InitSpec(scale=0.2)),
                   self.qr, base_seed=57)
        assert not traj.diverged


class TestDivergence:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_unstable_run_flags_and_truncates(self):
        qr = gen_quad_regression(d=10, m_train=5, n_nonzero=2, m_test=2, seed=4)
        cfg = _cfg("gd", steps=2000, eta=50.0, record_every=5, init=InitSpec(scale=1.0))
        traj = run(cfg, qr, base_seed=61)
        assert traj.diverged
        assert traj.diverged_at is not None and traj.diverged_at <= 2000
        assert np.all(np.isfinite(traj.train_loss))
        assert traj.steps[-1] <= traj.diverged_at

    def test_valley_kernel_divergence(self):
        # pgd in the valley with a big step size blows up; the kernel halts
        cfg = _cfg("pgd", steps=100_000, eta=0.5, sigma=0.5, record_every=1000,
                   distribution="bernoulli",
                   init=InitSpec(kind="valley_floor", u_sqnorm=10.0))
        traj = run(cfg, WideningValley(50), base_seed=67)
        assert traj.diverged
        assert np.all(traj.train_loss <= 1e12)


class TestDeterminism:
    def test_same_config_same_seed_bitwise(self):
        wv = WideningValley(20)
        cfg = _cfg("anti_pgd", steps=500, sigma=0.05, record_every=100,
                   init=InitSpec(kind="valley_floor", u_sqnorm=5.0))
        a = run(cfg, wv, base_seed=71)
        b = run(cfg, wv, base_seed=71)
        assert np.array_equal(a.final_w, b.final_w)
        assert np.array_equal(a.u_sqnorm, b.u_sqnorm)

    def test_variants_share_init_per_seed(self):
        wv = WideningValley(20)
        a = run(_cfg("pgd", steps=1, sigma=0.05, record_every=1), wv, base_seed=73)
        b = run(_cfg("anti_pgd", steps=1, sigma=0.05, record_every=1), wv, base_seed=73)
        assert a.train_loss[0] == b.train_loss[0]

    def test_kernel_and_generic_paths_agree(self):
        # record_reg_grad forces the generic path; metrics must match the
        # kernel path to rounding error
        wv = WideningValley(30)
        kw = dict(steps=2000, sigma=0.02, record_every=200,
                  init=InitSpec(kind="valley_floor", u_sqnorm=6.0))
        fast = run(_cfg("anti_pgd", **kw), wv, base_seed=79)
        slow = run(_cfg("anti_pgd", record_reg_grad=True, **kw), wv, base_seed=79)
        np.testing.assert_allclose(fast.train_loss, slow.train_loss, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(fast.u_sqnorm, slow.u_sqnorm, rtol=1e-9)
        assert np.all(np.isfinite(slow.reg_grad_sqnorm))
        assert np.all(np.isnan(fast.reg_grad_sqnorm))


class TestNoiseComparison:
    def test_valley_uncorrelated_up_anticorrelated_down(self):
        # eta = 0.01, sigma = 0.005: |u|^2 grows under pgd, shrinks under
        # anti_pgd over the run
        wv = WideningValley(100)
        init = InitSpec(kind="valley_floor", u_sqnorm=10.0)
        out = {}
        for variant in ("pgd", "anti_pgd"):
            cfg = _cfg(variant, steps=20_000, eta=0.01, sigma=0.005, record_every=1000, init=init)
            finals = [run(cfg, wv, base_seed=83, run_index=i).u_sqnorm[-1] for i in range(3)]
            out[variant] = np.mean(finals)
        assert out["pgd"] > 10.0
        assert out["anti_pgd"] < 10.0


class TestZForm:
    def test_zero_noise_is_plain_gd(self):
        qr = gen_quad_regression(d=8, m_train=5, n_nonzero=2, m_test=2, seed=5)
        cfg = _cfg("anti_pgd", steps=100, sigma=0.0, init=InitSpec(scale=0.2))
        zt = run_zform(cfg, qr, base_seed=87)
        gd = run(_cfg("gd", steps=100, init=InitSpec(scale=0.2), name="anti_pgd"),
                 qr, base_seed=87)
        np.testing.assert_allclose(zt.final_z, gd.final_w, rtol=0, atol=1e-14)

    def test_single_step_hand_value(self):
        # choosing w_0 = xi_0 gives z_0 = 0, so z_1 = -eta grad L(xi_0)
        wv = WideningValley(3)
        cfg0 = _cfg("anti_pgd", steps=1, sigma=0.3, distribution="bernoulli")
        from antipgd.noise import derive_seed

        seed = derive_seed(91, cfg0.name, 0)
        xi0 = NoiseStream(cfg0.resolved_noise(wv, seed)).next_xi()
        cfg = _cfg("anti_pgd", steps=1, sigma=0.3, distribution="bernoulli",
                   init=InitSpec(kind="point", values=tuple(xi0)))
        zt = run_zform(cfg, wv, base_seed=91)
        np.testing.assert_allclose(zt.final_z, -cfg.eta * wv.grad(xi0), rtol=0, atol=1e-15)

    def test_matches_w_form_iterates(self):
        wv = WideningValley(10)
        n_steps = 200
        cfg = _cfg("anti_pgd", steps=n_steps, sigma=0.05, distribution="bernoulli",
                   record_every=n_steps, init=InitSpec(scale=0.5))
        w_traj = run(cfg, wv, base_seed=93)
        z_traj = run_zform(cfg, wv, base_seed=93, keep_path=True)
        xi = NoiseStream(cfg.resolved_noise(wv, w_traj.seed)).next_xi_block(n_steps + 1)
        np.testing.assert_allclose(z_traj.zs[-1], w_traj.final_w - xi[-1], rtol=0, atol=1e-12)
