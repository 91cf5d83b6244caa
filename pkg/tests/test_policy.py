import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisupport.contact import ContactAutomaton, hysteresis_update
from multisupport.encoding import (
    EffectorSnapshot,
    EncodingLayout,
    MarkerSnapshot,
    MissingMarkerError,
    augment_marker_times,
    clamp_tau,
    decode_actions,
    encode_actions,
    encode_state,
)
from multisupport.geom import Pose2
from multisupport.stream import (
    CommandSegment,
    StitchCoverageError,
    resample_linear,
    stitch,
    zero_phase_filter,
)

LAYOUT_21 = EncodingLayout(n_effectors=2, n_markers=1)
LAYOUT_11 = EncodingLayout(n_effectors=1, n_markers=1)


def eff(x=0.0, y=0.0, h=0.0, c=0, tau=20.0):
    return EffectorSnapshot(Pose2([x, y], h), c, tau)


def mk(x=0.0, y=0.0, h=0.0, age=0.0):
    return MarkerSnapshot(Pose2([x, y], h), age)


class TestEncodeState:
    def test_dimension_two_effectors_one_marker(self):
        s = encode_state([eff(), eff()], [mk()], LAYOUT_21)
        assert s.shape == (17,)
        assert LAYOUT_21.state_dim == 2 * 6 + 5

    def test_tau_clamped_to_20(self):
        s = encode_state([eff(tau=25.0)], [mk(age=31.0)], LAYOUT_11)
        assert s[5] == 20.0
        assert s[10] == 20.0

    def test_heading_encoding(self):
        s = encode_state([eff(h=math.pi / 2)], [mk()], LAYOUT_11)
        assert s[2] == pytest.approx(0.0, abs=1e-12)
        assert s[3] == pytest.approx(1.0)

    def test_heading_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h = rng.uniform(-math.pi, math.pi)
            s = encode_state([eff(h=h)], [mk(h=h)], LAYOUT_11)
            assert abs(s[2] ** 2 + s[3] ** 2 - 1.0) < 1e-6
            assert abs(s[8] ** 2 + s[9] ** 2 - 1.0) < 1e-6

    def test_missing_marker(self):
        with pytest.raises(MissingMarkerError):
            encode_state([eff()], [None], LAYOUT_11)

    def test_clamp_idempotent(self):
        for tau in (0.0, 5.0, 20.0, 400.0):
            assert clamp_tau(clamp_tau(tau)) == clamp_tau(tau)


class TestActionCodec:
    def test_constant_commands_give_zero_trajectory(self):
        cur = [Pose2([0.3, -0.1], 0.4)]
        steps = [[(cur[0].copy(), 0.7)] for _ in range(5)]
        rel = encode_actions(steps, cur, LAYOUT_11)
        assert np.allclose(rel[:, :3], 0.0, atol=1e-12)
        assert np.allclose(rel[:, 3], 0.7)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        layout = LAYOUT_21
        cur = [
            Pose2(rng.normal(size=2), rng.uniform(-math.pi, math.pi))
            for _ in range(2)
        ]
        steps = [
            [
                (Pose2(rng.normal(size=2), rng.uniform(-math.pi, math.pi)), rng.random())
                for _ in range(2)
            ]
            for _ in range(8)
        ]
        rel = encode_actions(steps, cur, layout)
        back = decode_actions(rel, cur, layout)
        for orig_row, back_row in zip(steps, back):
            for (op, og), (bp, bg) in zip(orig_row, back_row):
                assert bp.almost_equal(op, tol=1e-9)
                assert bg == pytest.approx(og, abs=1e-12)

    def test_relative_heading_subtraction_on_circle(self):
        cur = [Pose2([0, 0], math.pi / 2)]
        steps = [[(Pose2([0, 0], math.pi), 0.0)]]
        rel = encode_actions(steps, cur, LAYOUT_11)
        assert rel[0, 2] == pytest.approx(math.pi / 2)

    def test_first_step_zero_when_starting_at_current(self):
        cur = [Pose2([1.0, 2.0], 0.3)]
        steps = [[(cur[0].copy(), 0.0)], [(Pose2([1.1, 2.0], 0.3), 0.0)]]
        rel = encode_actions(steps, cur, LAYOUT_11)
        assert np.allclose(rel[0, :3], 0.0, atol=1e-12)


class TestMarkerAugmentation:
    def test_p_zero_is_identity(self):
        rng = np.random.default_rng(0)
        states = rng.normal(size=(10, LAYOUT_21.state_dim))
        out = augment_marker_times(states, LAYOUT_21, rng, p=0.0)
        assert np.array_equal(out, states)

    def test_p_one_randomizes_all_within_range(self):
        rng = np.random.default_rng(1)
        states = np.full((50, LAYOUT_21.state_dim), -1.0)
        out = augment_marker_times(states, LAYOUT_21, rng, p=1.0)
        idx = LAYOUT_21.marker_tau_indices()[0]
        assert np.all(out[:, idx] >= 0.0) and np.all(out[:, idx] <= 20.0)
        assert not np.allclose(out[:, idx], -1.0)

    def test_other_fields_untouched(self):
        rng = np.random.default_rng(2)
        states = rng.normal(size=(50, LAYOUT_21.state_dim))
        out = augment_marker_times(states, LAYOUT_21, rng, p=0.5)
        mask = np.ones(LAYOUT_21.state_dim, dtype=bool)
        mask[LAYOUT_21.marker_tau_indices()] = False
        assert np.array_equal(out[:, mask], states[:, mask])


class TestHysteresis:
    def test_enable_fires_at_thresholds(self):
        aut = ContactAutomaton(contact=0, tau=20.0)
        aut2, event = hysteresis_update(aut, 0.85, 0.01)
        assert event == "enable"
        assert aut2.contact == 1
        assert aut2.tau == 0.0

    def test_tau_guard_blocks(self):
        aut = ContactAutomaton(contact=0, tau=5.0)
        aut2, event = hysteresis_update(aut, 0.85, 0.01)
        assert event is None
        assert aut2.contact == 0
        assert aut2.tau == pytest.approx(5.01)

    def test_hysteresis_band_holds(self):
        aut = ContactAutomaton(contact=1, tau=20.0)
        aut2, event = hysteresis_update(aut, 0.5, 0.01)
        assert event is None
        assert aut2.contact == 1

    def test_disable_row(self):
        aut = ContactAutomaton(contact=1, tau=20.0)
        aut2, event = hysteresis_update(aut, 0.15, 0.01)
        assert event == "disable"
        assert aut2.contact == 0

    def test_exact_threshold_values_inclusive(self):
        aut = ContactAutomaton(contact=0, tau=20.0)
        _, event = hysteresis_update(aut, 0.8, 0.01)
        assert event == "enable"
        aut = ContactAutomaton(contact=1, tau=20.0)
        _, event = hysteresis_update(aut, 0.2, 0.01)
        assert event == "disable"

    def test_tau_saturates(self):
        aut = ContactAutomaton(contact=0, tau=19.999)
        aut2, _ = hysteresis_update(aut, 0.0, 1.0)
        assert aut2.tau == 20.0

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(min_value=-0.5, max_value=1.5), min_size=1, max_size=400),
        st.integers(min_value=0, max_value=1),
    )
    def test_no_two_switches_within_dwell(self, gammas, c0):
        # Fuzzed gamma sequences can never fire two switches within 20 s.
        aut = ContactAutomaton(contact=c0, tau=20.0)
        dt = 0.5
        events = []
        t = 0.0
        for g in gammas:
            t += dt
            aut, event = hysteresis_update(aut, g, dt)
            if event:
                events.append(t)
        for a, b in zip(events, events[1:]):
            assert b - a >= 20.0


class TestResample:
    def segment(self, rows, rate=5.0):
        return np.asarray(rows, dtype=np.float64).reshape(len(rows), 1, 4)

    def test_linear_midpoint(self):
        data = self.segment([[0, 0, 0, 0], [1, 1, 0, 1]])
        seg = resample_linear(data, 0.0, 5.0, 100.0)
        mid = seg.sample(0.1)
        assert mid[0, 0] == pytest.approx(0.5)
        assert mid[0, 3] == pytest.approx(0.5)

    def test_endpoints_preserved(self):
        data = self.segment([[0.2, 0, 0, 0], [0.8, 0.1, 0.5, 1]])
        seg = resample_linear(data, 0.0, 5.0, 100.0)
        assert np.allclose(seg.data[0], data[0])
        assert np.allclose(seg.data[-1], data[-1])

    def test_constant_input_constant_output(self):
        data = self.segment([[0.3, -0.2, 0.7, 1]] * 4)
        seg = resample_linear(data, 0.0, 5.0, 100.0)
        assert np.allclose(seg.data, data[0])

    def test_heading_shortest_arc_through_pi(self):
        data = self.segment([[0, 0, 3.0, 0], [0, 0, -3.0, 0]])
        seg = resample_linear(data, 0.0, 5.0, 100.0)
        mid = seg.sample(0.1)
        # Midpoint of the short arc is at +-pi, not 0.
        assert abs(abs(mid[0, 2]) - math.pi) < 1e-9
        headings = seg.data[:, 0, 2]
        assert np.all(np.abs(headings) >= 3.0 - 1e-9)


class TestZeroPhaseFilter:
    def test_constant_unchanged(self):
        x = np.full((50, 2), 1.7)
        assert np.allclose(zero_phase_filter(x, 0.3), x)

    def test_alpha_one_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 3))
        assert np.array_equal(zero_phase_filter(x, 1.0), x)

    def test_symmetric_pulse_stays_symmetric(self):
        # Symmetry is exact up to edge-initialization decay (1-alpha)^d, so
        # use a pulse far from both edges.
        x = np.zeros((201, 1))
        x[100] = 1.0
        y = zero_phase_filter(x, 0.4)
        assert np.allclose(y, y[::-1], atol=1e-12)
        assert np.argmax(y[:, 0]) == 100


class TestStitch:
    def make_segment(self, value, t0, n, rate=100.0):
        data = np.full((n, 1, 4), float(value))
        return CommandSegment(t0, rate, data)

    def test_identical_streams_unchanged(self):
        prev = self.make_segment(0.5, 0.0, 200)
        new = self.make_segment(0.5, 0.5, 150)
        out = stitch(prev, new, t_now=0.5, blend=0.5)
        assert np.allclose(out.data, 0.5)

    def test_ramp_endpoints(self):
        prev = self.make_segment(0.0, 0.0, 200)
        new = self.make_segment(1.0, 0.5, 150)
        out = stitch(prev, new, t_now=0.5, blend=0.5)
        assert out.sample(0.5)[0, 0] == pytest.approx(0.0, abs=1e-9)
        assert out.sample(1.0)[0, 0] == pytest.approx(1.0)
        assert out.sample(0.75)[0, 0] == pytest.approx(0.5)

    def test_coverage_error(self):
        prev = self.make_segment(0.0, 0.0, 40)  # ends at 0.39 s
        new = self.make_segment(1.0, 0.3, 150)
        with pytest.raises(StitchCoverageError):
            stitch(prev, new, t_now=0.3, blend=0.5)

    def test_heading_blend_shortest_arc(self):
        prev = self.make_segment(0.0, 0.0, 200)
        prev.data[:, :, 2] = 3.0
        new = self.make_segment(0.0, 0.5, 150)
        new.data[:, :, 2] = -3.0
        out = stitch(prev, new, t_now=0.5, blend=0.5)
        h_mid = out.sample(0.75)[0, 2]
        assert abs(abs(h_mid) - math.pi) < 0.02
