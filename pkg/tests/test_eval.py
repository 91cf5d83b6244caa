import numpy as np
import pytest

from multisupport.benchmarks import (
    PushCurve,
    ReachRow,
    emit_report,
    quartiles,
    run_push_benchmark,
    run_reach_benchmark,
    time_inference,
)
from multisupport.dataset import NormStats
from multisupport.encoding import EncodingLayout
from multisupport.generative import FlowModel
from multisupport.unet import UNetConfig

OFFSET = np.array([0.24, 0.0])


def oracle_reach_sampler(state):
    """Perfect scripted policy decoded from the state vector."""
    pos = state[:2]
    left = state[6:8]
    plats = [left, left + OFFSET]
    tgt = plats[int(np.argmin([np.linalg.norm(p - pos) for p in plats]))]
    out = np.zeros((32, 4))
    cur = pos.copy()
    for k in range(32):
        delta = tgt - cur
        dist = np.linalg.norm(delta)
        if dist > 1e-9:
            cur = cur + delta / dist * min(0.03, dist)
        out[k, :2] = cur - pos
        out[k, 3] = 1.0 if np.linalg.norm(tgt - cur) < 0.02 else 0.0
    return out


def never_switch_sampler(state):
    return np.zeros((32, 4))


def identity_norm(layout):
    ds, da = layout.state_dim, layout.action_dim
    return NormStats(
        state_lo=np.full(ds, -1.0), state_hi=np.full(ds, 1.0),
        state_const=np.zeros(ds, bool), state_const_val=np.zeros(ds),
        action_lo=np.full(da, -1.0), action_hi=np.full(da, 1.0),
        action_const=np.zeros(da, bool), action_const_val=np.zeros(da),
    )


class TestQuartiles:
    def test_against_sort_based_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            xs = rng.normal(size=rng.integers(2, 60))
            med, q1, q3 = quartiles(xs)

            def oracle(p):
                # Linear interpolation between order statistics.
                s = np.sort(xs)
                h = (len(s) - 1) * p
                lo = int(np.floor(h))
                hi = min(lo + 1, len(s) - 1)
                return s[lo] + (h - lo) * (s[hi] - s[lo])

            assert med == pytest.approx(oracle(0.5), rel=1e-12)
            assert q1 == pytest.approx(oracle(0.25), rel=1e-12)
            assert q3 == pytest.approx(oracle(0.75), rel=1e-12)

    def test_empty_gives_nan(self):
        med, q1, q3 = quartiles([])
        assert np.isnan(med) and np.isnan(q1) and np.isnan(q3)

    def test_ordering_invariant(self):
        med, q1, q3 = quartiles([5.0, 1.0, 3.0, 2.0, 4.0])
        assert q1 <= med <= q3


class TestReachBenchmark:
    def test_oracle_policy_full_success(self):
        frag = run_reach_benchmark(
            None, n=10, dist="in", seed=0,
            sampler_factory=lambda rng: oracle_reach_sampler,
        )
        assert frag["in_success"] == 1.0
        assert frag["in_median_cm"] < 8.0

    def test_never_switching_policy_gives_nan_quartiles(self):
        frag = run_reach_benchmark(
            None, n=5, dist="in", seed=0,
            sampler_factory=lambda rng: never_switch_sampler,
        )
        assert frag["in_success"] == 0.0
        assert np.isnan(frag["in_median_cm"])

    def test_same_seed_identical_rows(self):
        kw = dict(n=5, dist="in", sampler_factory=lambda rng: oracle_reach_sampler)
        a = run_reach_benchmark(None, seed=3, **kw)
        b = run_reach_benchmark(None, seed=3, **kw)
        assert a == b


class TestPushBenchmark:
    def test_stationary_policy_flat_curve(self):
        layout = EncodingLayout(n_effectors=2, n_markers=1)

        def hold(state):
            return np.zeros((32, layout.action_dim))

        curve = run_push_benchmark(
            None, n=2, horizon_s=10.0, seed=0,
            sampler_factory=lambda rng: hold,
        )
        for trial in curve.curves:
            assert np.allclose(trial, trial[0], atol=1e-9)

    def test_best_so_far_monotone(self):
        layout = EncodingLayout(n_effectors=2, n_markers=1)
        rng_w = np.random.default_rng(5)

        def wander(state):
            out = np.zeros((32, layout.action_dim))
            walk = np.cumsum(rng_w.normal(0, 0.01, size=(32, 2)), axis=0)
            out[:, :2] = walk
            return out

        curve = run_push_benchmark(
            None, n=2, horizon_s=20.0, seed=1,
            sampler_factory=lambda rng: wander,
        )
        for trial in curve.curves:
            assert np.all(np.diff(trial) <= 1e-12)


@pytest.fixture(scope="module")
def timing_models():
    layout = EncodingLayout(n_effectors=1, n_markers=1)
    cfg = UNetConfig(horizon=32, action_dim=layout.action_dim, state_dim=layout.state_dim)
    norm = identity_norm(layout)
    flow = FlowModel.create(cfg, "flow", seed=0, norm=norm)
    ddpm = FlowModel.create(cfg, "ddpm", seed=0, norm=norm)
    bc = FlowModel.create(cfg, "bc", seed=0, norm=norm)
    return flow, ddpm, bc


@pytest.mark.slow
class TestInferenceTiming:
    def test_flow20_at_least_3x_faster_than_ddpm100(self, timing_models):
        flow, ddpm, _ = timing_models
        flow_ms, _ = time_inference(flow, n=60, steps=20)
        ddpm_ms, _ = time_inference(ddpm, n=60)
        assert ddpm_ms / flow_ms >= 3.0

    def test_bc_faster_than_flow(self, timing_models):
        flow, _, bc = timing_models
        flow_ms, _ = time_inference(flow, n=60, steps=20)
        bc_ms, _ = time_inference(bc, n=60)
        assert bc_ms < flow_ms

    def test_std_reported(self, timing_models):
        _, _, bc = timing_models
        mean, std = time_inference(bc, n=30)
        assert mean > 0 and std >= 0


class TestReport:
    def test_emit_and_reemit_idempotent(self, tmp_path):
        row = ReachRow(method="flow", inference_ms_mean=35.0, inference_ms_std=4.0,
                       in_success=0.99, in_median_cm=1.4, in_q1_cm=1.0, in_q3_cm=2.1,
                       ood_success=0.78, ood_median_cm=3.4, ood_q1_cm=1.9, ood_q3_cm=5.7)
        curve = PushCurve(method="flow", times=np.array([0.0, 1.0]),
                          curves=np.array([[0.9, 0.5], [0.8, 0.4]]))
        paths = emit_report([row], [curve], tmp_path)
        first = {k: p.read_text() for k, p in paths.items()}
        header = first["reach"].splitlines()[0].split(",")
        assert header == list(ReachRow.COLUMNS)
        assert len(first["reach"].splitlines()) == 2
        assert "trial_1" in first["push_flow"].splitlines()[0]
        paths2 = emit_report([row], [curve], tmp_path)
        assert {k: p.read_text() for k, p in paths2.items()} == first
