import math

import numpy as np
import pytest

from multisupport.generative import (
    FlowModel,
    NonFiniteSampleError,
    bc_sample,
    bc_train_step,
    ddim_sample,
    ddpm_sample,
    ddpm_train_step,
    euler_integrate,
    fit,
    flow_sample,
    flow_train_step,
    make_noise_schedule,
)
from multisupport.optim import Adam
from multisupport.unet import UNetConfig

# Frozen by direct formula evaluation of the squared-cosine schedule
# (independent oracle script, steps=100, s=0.008).
ALPHA_BAR_1 = 9.993687184017e-01
ALPHA_BAR_50 = 4.938435904406e-01
ALPHA_BAR_100 = 2.428572279350e-07


def toy_config(horizon=4, action_dim=1) -> UNetConfig:
    return UNetConfig(
        horizon=horizon,
        action_dim=action_dim,
        state_dim=1,
        channels=(8, 16),
        kernel=5,
        groups=4,
        time_embed_dim=8,
    )


class TestNoiseSchedule:
    def test_starts_at_one(self):
        sch = make_noise_schedule(100)
        assert sch.alpha_bar[0] == pytest.approx(1.0, abs=0)

    def test_strictly_decreasing(self):
        sch = make_noise_schedule(100)
        assert np.all(np.diff(sch.alpha_bar) < 0)
        assert np.all(sch.alpha_bar > 0)

    def test_frozen_values(self):
        sch = make_noise_schedule(100)
        assert sch.alpha_bar[1] == pytest.approx(ALPHA_BAR_1, rel=1e-10)
        assert sch.alpha_bar[50] == pytest.approx(ALPHA_BAR_50, rel=1e-10)
        assert sch.alpha_bar[100] == pytest.approx(ALPHA_BAR_100, rel=1e-10)

    def test_length_covers_steps(self):
        sch = make_noise_schedule(40)
        assert sch.steps == 40
        assert len(sch.alpha_bar) == 41


class TestFlowTrainingArithmetic:
    def test_interpolant_endpoints(self):
        # t=0 gives the source exactly, t=1 the destination.
        rng = np.random.default_rng(0)
        a_src = rng.normal(size=(4, 1))
        a_dst = rng.normal(size=(4, 1))
        for t, expect in ((0.0, a_src), (1.0, a_dst)):
            z = (1 - t) * a_src + t * a_dst
            assert np.allclose(z, expect)

    def test_scalar_loss_example(self):
        # a_src=0, a_dst=1, t=0.5 -> z=0.5, target 1; output 0.8 -> err 0.04
        z = 0.5 * 0 + 0.5 * 1
        assert z == 0.5
        assert (0.8 - 1.0) ** 2 == pytest.approx(0.04)

    def test_zero_head_first_batch_loss_matches_expectation(self):
        # With a zero-initialized head the net outputs 0, so the flow loss is
        # E||a_dst - a_src||^2 = mean||a_dst||^2 + N*D.
        cfg = toy_config()
        model = FlowModel.create(cfg, "flow", seed=0)
        rng = np.random.default_rng(1)
        b = 512
        states = np.zeros((b, 1))
        actions = np.where(rng.random((b, 1, 1)) < 0.5, -1.0, 1.0) * np.ones((b, cfg.horizon, cfg.action_dim))
        opt = Adam(model.params, lr=0.0)
        loss = flow_train_step(model, states, actions, opt, rng)
        expected = float((actions**2).sum(axis=(1, 2)).mean()) + cfg.horizon * cfg.action_dim
        assert loss == pytest.approx(expected, rel=0.10)

    def test_ddpm_zero_head_first_batch_loss(self):
        cfg = toy_config()
        model = FlowModel.create(cfg, "ddpm", seed=0)
        rng = np.random.default_rng(2)
        b = 512
        states = np.zeros((b, 1))
        actions = np.zeros((b, cfg.horizon, cfg.action_dim))
        opt = Adam(model.params, lr=0.0)
        loss = ddpm_train_step(model, states, actions, opt, rng)
        assert loss == pytest.approx(cfg.horizon * cfg.action_dim, rel=0.10)

    def test_ddpm_noising_formula(self):
        # a_dst = 0 -> x_k = sqrt(1-ab_k) * eps; at ab=1 x_k = a_dst.
        sch = make_noise_schedule(100)
        eps = np.random.default_rng(0).normal(size=(4, 1))
        a = np.zeros((4, 1))
        for k in (1, 50, 100):
            ab = sch.alpha_bar[k]
            x = math.sqrt(ab) * a + math.sqrt(1 - ab) * eps
            assert np.allclose(x, math.sqrt(1 - ab) * eps)
        assert np.allclose(math.sqrt(1.0) * a + 0.0 * eps, a)


class TestEulerIntegration:
    def test_oracle_field_one_step_exact(self):
        # The marginal flow of a point destination is straight: one Euler
        # step from any z0 lands exactly on the destination.
        rng = np.random.default_rng(3)
        a_dst = rng.normal(size=(4, 1))
        field = lambda z, t: (a_dst - z) / (1.0 - t)
        for _ in range(5):
            z0 = rng.normal(size=(4, 1))
            out = euler_integrate(field, z0, steps=1)
            assert np.allclose(out, a_dst, atol=1e-12)

    def test_rejects_zero_steps(self):
        with pytest.raises(ValueError):
            euler_integrate(lambda z, t: z, np.zeros(2), 0)


class TestPerfectOracleSamplers:
    """Closed-form epsilon oracle for a point-mass dataset: the reverse
    recursions must land exactly on the point."""

    def _setup(self):
        cfg = toy_config()
        model = FlowModel.create(cfg, "ddpm", seed=0)
        a_star = 0.7 * np.ones((cfg.horizon, cfg.action_dim))
        ab = model.schedule.alpha_bar

        def eps_fn(x, k):
            return (x - math.sqrt(ab[k]) * a_star) / math.sqrt(1.0 - ab[k])

        return model, a_star, eps_fn

    def test_ddpm_recovers_point(self):
        model, a_star, eps_fn = self._setup()
        out = ddpm_sample(model, np.zeros(1), np.random.default_rng(0), eps_fn=eps_fn)
        assert np.max(np.abs(out - a_star)) < 1e-6

    def test_ddim_recovers_point(self):
        model, a_star, eps_fn = self._setup()
        out = ddim_sample(
            model, np.zeros(1), steps=20, rng=np.random.default_rng(0), eps_fn=eps_fn
        )
        assert np.max(np.abs(out - a_star)) < 1e-6

    def test_ddim_deterministic_given_x_init(self):
        model, a_star, eps_fn = self._setup()
        x0 = np.random.default_rng(5).normal(size=(4, 1))
        a = ddim_sample(model, np.zeros(1), steps=20, x_init=x0, eps_fn=eps_fn)
        b = ddim_sample(model, np.zeros(1), steps=20, x_init=x0, eps_fn=eps_fn)
        assert np.array_equal(a, b)

    def test_ddpm_seeded_determinism(self):
        model, a_star, eps_fn = self._setup()
        a = ddpm_sample(model, np.zeros(1), np.random.default_rng(7), eps_fn=eps_fn)
        b = ddpm_sample(model, np.zeros(1), np.random.default_rng(7), eps_fn=eps_fn)
        assert np.array_equal(a, b)


def make_bimodal_data(cfg, n, seed):
    rng = np.random.default_rng(seed)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    actions = signs[:, None, None] * np.ones((n, cfg.horizon, cfg.action_dim))
    states = np.zeros((n, 1))
    return states, actions


@pytest.fixture(scope="module")
def bimodal_models():
    """Flow, DDPM, and BC trained on the 1-D bimodal toy task."""
    cfg = toy_config()
    states, actions = make_bimodal_data(cfg, 256, seed=0)
    models = {}
    for method, epochs in (("flow", 2000), ("ddpm", 1000), ("bc", 300)):
        model = FlowModel.create(cfg, method, seed=1)
        fit(model, states, actions, epochs=epochs, batch_size=256, lr=1e-3, seed=2)
        models[method] = model
    return models


@pytest.mark.slow
class TestBimodalToyTask:
    def _mode_stats(self, samples):
        means = np.array([s.mean() for s in samples])
        near_pos = np.abs(means - 1.0) < 0.25
        near_neg = np.abs(means + 1.0) < 0.25
        return means, near_pos.mean(), near_neg.mean()

    def test_flow_hits_both_modes(self, bimodal_models):
        rng = np.random.default_rng(10)
        samples = [
            flow_sample(bimodal_models["flow"], np.zeros(1), steps=20, rng=rng)
            for _ in range(1000)
        ]
        means, pos, neg = self._mode_stats(samples)
        assert pos + neg >= 0.95
        assert pos >= 0.20 and neg >= 0.20

    def test_ddpm_hits_both_modes(self, bimodal_models):
        rng = np.random.default_rng(11)
        samples = [
            ddpm_sample(bimodal_models["ddpm"], np.zeros(1), rng)
            for _ in range(1000)
        ]
        means, pos, neg = self._mode_stats(samples)
        assert pos + neg >= 0.95
        assert pos >= 0.20 and neg >= 0.20

    def test_ddim_reuses_ddpm_model(self, bimodal_models):
        rng = np.random.default_rng(12)
        samples = [
            ddim_sample(bimodal_models["ddpm"], np.zeros(1), steps=20, rng=rng)
            for _ in range(300)
        ]
        means, pos, neg = self._mode_stats(samples)
        assert pos + neg >= 0.90

    def test_bc_averages_modes(self, bimodal_models):
        out = bc_sample(bimodal_models["bc"], np.zeros(1))
        assert abs(out.mean()) < 0.3

    def test_mode_averaging_separation(self, bimodal_models):
        # Generative samples commit to a mode; the regression baseline sits
        # between them.
        rng = np.random.default_rng(13)
        flow_means = np.array(
            [
                flow_sample(bimodal_models["flow"], np.zeros(1), steps=20, rng=rng).mean()
                for _ in range(200)
            ]
        )
        assert (np.abs(flow_means) > 0.7).mean() >= 0.95
        assert abs(bc_sample(bimodal_models["bc"], np.zeros(1)).mean()) < 0.3

    def test_flow_straightness_low_vs_high_steps(self, bimodal_models):
        model = bimodal_models["flow"]
        rng = np.random.default_rng(14)
        devs = []
        for _ in range(50):
            z0 = rng.standard_normal((4, 1))
            a = flow_sample(model, np.zeros(1), steps=20, z0=z0)
            b = flow_sample(model, np.zeros(1), steps=200, z0=z0)
            devs.append(np.abs(a - b).mean())
        assert float(np.mean(devs)) < 0.05


@pytest.mark.slow
class TestPointMassFlow:
    def test_one_step_euler_after_training(self):
        cfg = UNetConfig(
            horizon=4, action_dim=1, state_dim=1, channels=(16, 32),
            kernel=5, groups=4, time_embed_dim=8,
        )
        a_star = 0.6
        states = np.zeros((256, 1))
        actions = a_star * np.ones((256, cfg.horizon, cfg.action_dim))
        model = FlowModel.create(cfg, "flow", seed=3)
        fit(model, states, actions, epochs=3000, batch_size=256, lr=1e-3, seed=4)
        fit(model, states, actions, epochs=1000, batch_size=256, lr=1e-4, seed=5)
        rng = np.random.default_rng(15)
        errs = [
            np.abs(flow_sample(model, np.zeros(1), steps=1, rng=rng) - a_star).max()
            for _ in range(50)
        ]
        assert float(np.median(errs)) < 0.05


class TestTrainingLoop:
    def test_seed_determinism_bitwise(self):
        cfg = toy_config()
        states, actions = make_bimodal_data(cfg, 64, seed=5)
        curves = []
        for _ in range(2):
            model = FlowModel.create(cfg, "flow", seed=6)
            res = fit(model, states, actions, epochs=5, batch_size=32, seed=7)
            curves.append(res.losses)
        assert curves[0] == curves[1]

    def test_bc_single_datum_memorizes(self):
        cfg = toy_config()
        states = np.zeros((1, 1))
        actions = 0.5 * np.ones((1, cfg.horizon, cfg.action_dim))
        model = FlowModel.create(cfg, "bc", seed=8)
        res = fit(model, states, actions, epochs=300, batch_size=1, lr=3e-4, seed=9)
        assert res.final_loss < 1e-3
        assert np.abs(bc_sample(model, np.zeros(1)) - 0.5).max() < 0.05

    def test_bc_deterministic_output(self):
        cfg = toy_config()
        model = FlowModel.create(cfg, "bc", seed=10)
        a = bc_sample(model, np.zeros(1))
        b = bc_sample(model, np.zeros(1))
        assert np.array_equal(a, b)

    def test_out_of_range_actions_rejected(self):
        cfg = toy_config()
        model = FlowModel.create(cfg, "flow", seed=0)
        states = np.zeros((4, 1))
        actions = 2.0 * np.ones((4, cfg.horizon, cfg.action_dim))
        from multisupport.generative import TrainingDivergedError

        with pytest.raises(TrainingDivergedError, match="1.2"):
            fit(model, states, actions, epochs=1, batch_size=4)


class TestCheckpointRoundTrip:
    def test_model_save_load(self, tmp_path):
        cfg = toy_config()
        model = FlowModel.create(cfg, "ddpm", seed=11)
        path = tmp_path / "m.ckpt"
        model.save(path)
        loaded = FlowModel.load(path)
        assert loaded.method == "ddpm"
        assert np.allclose(loaded.schedule.alpha_bar, model.schedule.alpha_bar)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, cfg.horizon, cfg.action_dim))
        s = np.zeros((1, 1))
        assert np.array_equal(model.forward(x, 0.5, s), loaded.forward(x, 0.5, s))
