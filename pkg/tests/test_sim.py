import math

import numpy as np
import pytest

from multisupport.geom import Pose2, make_t_shape
from multisupport.runner import (
    collect_dataset,
    make_automatons,
    apply_contact_commands,
    run_scripted_episode,
)
from multisupport.tasks import (
    PushTaskConfig,
    ReachTaskConfig,
    push_error,
    reach_outcome,
    spawn_push_episode,
    spawn_reach_episode,
)
from multisupport.world import (
    DISABLED,
    ENABLED,
    ENABLING,
    Effector,
    MarkerObservation,
    SupportRegion,
    World,
    WorldConfig,
    feasibility_filter,
    quasi_static_push,
    request_contact_switch,
    step,
)


def make_world(box_pos=(0.0, 0.5), box_heading=0.0, eff_pos=(0.0, 0.2), **cfg_kw):
    cfg = WorldConfig(**cfg_kw)
    shape = cfg.make_shape()
    return World(
        config=cfg,
        box_shape=shape,
        box_pose=Pose2(np.asarray(box_pos), box_heading),
        effectors=[Effector(Pose2(np.asarray(eff_pos)), radius=cfg.effector_radius)],
        supports=[SupportRegion(np.array([0.2, 0.1]), 0.1)],
        target=Pose2(np.array([0.0, 0.5])),
        marker=MarkerObservation(Pose2(np.asarray(box_pos), box_heading), attached="box"),
        base=np.zeros(2),
        seed=7,
    )


class TestQuasiStaticPush:
    def test_zero_arm_pure_translation(self):
        shape = make_t_shape()
        pose = Pose2([0.0, 0.0], 0.0)
        centroid = shape.transformed(pose).centroid
        d = np.array([0.01, 0.0])
        out = quasi_static_push(pose, shape, d, centroid, kappa=0.9, rho=0.06)
        assert np.allclose(out.position, pose.position + d, atol=1e-12)
        assert out.heading == pytest.approx(0.0, abs=1e-12)

    def test_kappa_zero_pure_translation(self):
        shape = make_t_shape()
        pose = Pose2([0.0, 0.0], 0.0)
        contact = np.array([0.15, 0.1])
        d = np.array([0.0, -0.01])
        out = quasi_static_push(pose, shape, d, contact, kappa=0.0, rho=0.06)
        assert np.allclose(out.position, pose.position + d, atol=1e-12)
        assert out.heading == pytest.approx(0.0, abs=1e-12)

    def test_rotation_sign_matches_moment_arm(self):
        shape = make_t_shape()
        pose = Pose2([0.0, 0.0], 0.0)
        d = np.array([0.0, -0.01])  # pushing down
        left = np.array([-0.12, 0.1])
        right = np.array([0.12, 0.1])
        out_l = quasi_static_push(pose, shape, d, left, kappa=0.9, rho=0.06)
        out_r = quasi_static_push(pose, shape, d, right, kappa=0.9, rho=0.06)
        # arm x d: pushing down left of centroid spins +, right spins -.
        assert out_l.heading > 0
        assert out_r.heading < 0

    def test_displacement_bound(self):
        # Contact-point displacement is bounded by |d| * (1 + kappa).
        rng = np.random.default_rng(0)
        shape = make_t_shape()
        for _ in range(200):
            pose = Pose2(rng.normal(0, 0.2, 2), rng.uniform(-math.pi, math.pi))
            contact = pose.position + rng.normal(0, 0.15, 2)
            d = rng.normal(0, 0.01, 2)
            kappa = rng.uniform(0.0, 1.0)
            out = quasi_static_push(pose, shape, d, contact, kappa=kappa, rho=0.06)
            trans = np.linalg.norm(out.position - pose.position)
            bound = np.linalg.norm(d) * (1 + kappa) + 1e-12
            assert trans <= bound
            # also the contact point itself
            rel = contact - shape.transformed(pose).centroid
            c, s = math.cos(out.heading - pose.heading), math.sin(out.heading - pose.heading)
            moved = shape.transformed(out).centroid + np.array(
                [c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]]
            )
            assert np.linalg.norm(moved - contact) <= bound + 1e-9


class TestStepMechanics:
    def test_no_contact_box_unchanged(self):
        world = make_world(eff_pos=(0.0, 0.1))
        before = (world.box_pose.position.copy(), world.box_pose.heading)
        for _ in range(100):
            step(world, [world.effectors[0].pose.copy()])
        assert np.array_equal(world.box_pose.position, before[0])
        assert world.box_pose.heading == before[1]

    def test_no_drift_fuzz(self):
        # Commands that never touch the box leave its pose bit-identical.
        world = make_world(box_pos=(0.0, 0.6))
        rng = np.random.default_rng(3)
        before = (world.box_pose.position.copy(), world.box_pose.heading)
        for _ in range(10_000):
            cmd = Pose2(rng.uniform([-0.25, 0.0], [0.25, 0.25]), 0.0)
            step(world, [cmd])
        assert np.array_equal(world.box_pose.position, before[0])
        assert world.box_pose.heading == before[1]

    def test_center_push_translates_without_rotation(self):
        # Push the stem bottom face on the centroid line: pure translation.
        world = make_world(box_pos=(0.0, 0.5), box_heading=0.0, eff_pos=(0.0, 0.24))
        h0 = world.box_pose.heading
        y0 = world.box_pose.position[1]
        for i in range(300):
            cmd = Pose2(np.array([0.0, 0.24 + 0.0005 * i]))
            step(world, [cmd])
        assert world.box_pose.position[1] > y0 + 0.01
        assert abs(world.box_pose.heading - h0) < 1e-6
        assert abs(world.box_pose.position[0]) < 1e-9

    def test_off_center_push_rotation_sign(self):
        # Push up under the bar's left wing (x outside the stem): the moment
        # arm points left, cross(arm, +y) < 0, so the box turns clockwise.
        world = make_world(box_pos=(0.0, 0.5), box_heading=0.0, eff_pos=(-0.12, 0.42))
        h0 = world.box_pose.heading
        for i in range(300):
            cmd = Pose2(np.array([-0.12, 0.42 + 0.0005 * i]))
            step(world, [cmd])
        assert world.box_pose.heading < h0 - 1e-4

    def test_step_deterministic(self):
        def run():
            world = make_world(box_pos=(0.0, 0.35), marker_dropout=0.3)
            rng = np.random.default_rng(5)
            for _ in range(500):
                cmd = Pose2(rng.uniform([-0.1, 0.1], [0.1, 0.4]), 0.0)
                step(world, [cmd])
            return (
                world.box_pose.position.copy(),
                world.box_pose.heading,
                world.effectors[0].pose.position.copy(),
                world.marker.age,
            )

        a, b = run(), run()
        assert np.array_equal(a[0], b[0])
        assert a[1] == b[1]
        assert np.array_equal(a[2], b[2])
        assert a[3] == b[3]


class TestContactSwitching:
    def test_enable_inside_region(self):
        world = make_world(eff_pos=(0.2, 0.1))
        assert request_contact_switch(world, 0, True) == "accepted"
        eff = world.effectors[0]
        assert eff.mode == ENABLING
        pos_before = eff.pose.position.copy()
        for _ in range(int(3.5 / world.config.dt)):
            step(world, [Pose2(np.array([0.0, 0.0]))])  # command away; frozen
        assert eff.mode == ENABLED
        assert np.array_equal(eff.pose.position, pos_before)

    def test_enable_outside_region_rejected(self):
        world = make_world(eff_pos=(0.0, 0.3))
        assert request_contact_switch(world, 0, True) == "rejected-region"
        assert world.effectors[0].mode == DISABLED
        assert world.last_events.rejected_switches == [(0.0, 0)]

    def test_disable_path(self):
        world = make_world(eff_pos=(0.2, 0.1))
        request_contact_switch(world, 0, True)
        for _ in range(310):
            step(world, [Pose2(np.array([0.2, 0.1]))])
        assert world.effectors[0].mode == ENABLED
        assert request_contact_switch(world, 0, False) == "accepted"
        for _ in range(310):
            step(world, [Pose2(np.array([0.2, 0.1]))])
        assert world.effectors[0].mode == DISABLED

    def test_busy_rejected(self):
        world = make_world(eff_pos=(0.2, 0.1))
        request_contact_switch(world, 0, True)
        assert request_contact_switch(world, 0, False) == "rejected-busy"

    def test_enabled_position_constant_under_commands(self):
        world = make_world(eff_pos=(0.2, 0.1))
        request_contact_switch(world, 0, True)
        for _ in range(310):
            step(world, [Pose2(np.array([0.2, 0.1]))])
        pinned = world.effectors[0].pose.position.copy()
        rng = np.random.default_rng(0)
        for _ in range(500):
            step(world, [Pose2(rng.uniform(-0.3, 0.3, 2))])
        assert np.array_equal(world.effectors[0].pose.position, pinned)

    def test_rejected_switch_rolls_back_automaton(self):
        world = make_world(eff_pos=(0.0, 0.3))  # outside region
        automatons = make_automatons(world)
        assert automatons[0].contact == 0
        automatons = apply_contact_commands(world, automatons, [1.0], 0.01)
        assert automatons[0].contact == 0  # policy observes failure
        assert automatons[0].tau > 19.0  # tau not reset, retry stays possible


class TestFeasibility:
    def test_interior_command_unchanged(self):
        # Inside the reach disk and within one tick's velocity budget.
        world = make_world(eff_pos=(0.0, 0.2), r_free=0.55)
        cmd = Pose2(np.array([0.0, 0.201]))
        out = feasibility_filter(cmd, world, 0)
        assert np.allclose(out.position, cmd.position)

    def test_far_command_projected_radially(self):
        world = make_world(eff_pos=(0.0, 0.54), r_free=0.55, velocity_limit=1e9)
        cmd = Pose2(np.array([0.0, 1.1]))
        out = feasibility_filter(cmd, world, 0)
        assert np.allclose(out.position, [0.0, 0.55], atol=1e-12)

    def test_velocity_clamp(self):
        world = make_world(eff_pos=(0.0, 0.2), velocity_limit=0.25)
        cmd = Pose2(np.array([0.0, 0.3]))
        out = feasibility_filter(cmd, world, 0)
        assert np.linalg.norm(out.position - [0.0, 0.2]) <= 0.25 * world.config.dt + 1e-12

    def test_support_extends_reach(self):
        cfg = WorldConfig(r_free=0.55, r_supported=0.85, velocity_limit=1e9)
        world = World(
            config=cfg,
            box_shape=cfg.make_shape(),
            box_pose=Pose2(np.array([5.0, 5.0])),
            effectors=[
                Effector(Pose2(np.array([0.0, 0.5])), radius=0.035),
                Effector(Pose2(np.array([0.2, 0.1])), radius=0.035),
            ],
            supports=[SupportRegion(np.array([0.2, 0.1]), 0.1)],
            target=Pose2(np.array([0.0, 0.5])),
            marker=MarkerObservation(Pose2(np.array([5.0, 5.0])), attached="box"),
            base=np.zeros(2),
        )
        far = Pose2(np.array([0.0, 0.84]))
        clipped = feasibility_filter(far, world, 0)
        assert np.linalg.norm(clipped.position) == pytest.approx(0.55)
        request_contact_switch(world, 1, True)
        for _ in range(310):
            step(world, [world.effectors[0].pose.copy(), world.effectors[1].pose.copy()])
        assert world.effectors[1].mode == ENABLED
        extended = feasibility_filter(far, world, 0)
        assert np.linalg.norm(extended.position) == pytest.approx(0.84)

    def test_filter_output_always_within_reach_fuzz(self):
        world = make_world(eff_pos=(0.0, 0.2), r_free=0.55, velocity_limit=1e9)
        rng = np.random.default_rng(9)
        for _ in range(500):
            cmd = Pose2(rng.uniform(-2, 2, 2), rng.uniform(-4, 4))
            out = feasibility_filter(cmd, world, 0)
            assert np.linalg.norm(out.position - world.base) <= 0.55 + 1e-9


class TestSpawns:
    def test_reach_same_seed_identical(self):
        a = spawn_reach_episode(np.random.default_rng(4), "in")
        b = spawn_reach_episode(np.random.default_rng(4), "in")
        assert np.array_equal(a.supports[0].center, b.supports[0].center)
        assert np.array_equal(a.effectors[0].pose.position, b.effectors[0].pose.position)
        assert a.seed == b.seed

    def test_reach_right_platform_fixed_offset(self):
        cfg = ReachTaskConfig()
        w = spawn_reach_episode(np.random.default_rng(1), "in", cfg)
        assert np.allclose(
            w.supports[1].center - w.supports[0].center, cfg.platform_offset
        )
        assert np.allclose(w.marker.pose.position, w.supports[0].center)

    def test_reach_in_distribution_window(self):
        cfg = ReachTaskConfig()
        for seed in range(50):
            w = spawn_reach_episode(np.random.default_rng(seed), "in", cfg)
            pair = (w.supports[0].center + w.supports[1].center) / 2
            assert cfg.pair_center.contains(pair)

    def test_reach_ood_excludes_nominal(self):
        cfg = ReachTaskConfig()
        for seed in range(50):
            w = spawn_reach_episode(np.random.default_rng(seed), "ood", cfg)
            pair = (w.supports[0].center + w.supports[1].center) / 2
            assert not cfg.pair_center.contains(pair)
            assert cfg.pair_center_wide.contains(pair)

    def test_push_spawn_contracts(self):
        cfg = PushTaskConfig()
        a = spawn_push_episode(np.random.default_rng(2), "t", cfg)
        b = spawn_push_episode(np.random.default_rng(2), "t", cfg)
        assert np.array_equal(a.box_pose.position, b.box_pose.position)
        assert a.box_pose.heading == b.box_pose.heading
        assert cfg.box_window.contains(a.box_pose.position)
        u = spawn_push_episode(np.random.default_rng(3), "u", cfg)
        assert len(u.box_shape.parts) == 3


class TestOutcomes:
    def _world_with_enabled(self, dist_m):
        world = make_world(eff_pos=(0.2, 0.1))
        request_contact_switch(world, 0, True)
        for _ in range(310):
            step(world, [Pose2(np.array([0.2, 0.1]))])
        world.supports = [
            SupportRegion(world.effectors[0].pose.position + [dist_m, 0.0], 0.06)
        ]
        return world

    def test_enabled_close_succeeds(self):
        o = reach_outcome(self._world_with_enabled(0.07))
        assert o.success and o.error_cm == pytest.approx(7.0, abs=0.2)

    def test_enabled_far_fails(self):
        o = reach_outcome(self._world_with_enabled(0.09))
        assert not o.success and o.error_cm == pytest.approx(9.0, abs=0.2)

    def test_never_enabled_fails_regardless(self):
        world = make_world(eff_pos=(0.2, 0.1))
        world.supports = [SupportRegion(world.effectors[0].pose.position, 0.06)]
        o = reach_outcome(world)
        assert not o.success and o.error_cm < 1.0

    def test_push_error_delegates_to_overlap(self):
        world = make_world(box_pos=(0.0, 0.5))
        world.target = Pose2(np.array([0.0, 0.5]))
        assert push_error(world) == pytest.approx(0.0)
        world.target = Pose2(np.array([5.0, 0.5]))
        assert push_error(world) == pytest.approx(1.0)


class TestScriptedDemonstrators:
    def test_reach_platform_choice_is_balanced(self):
        # Coin-flip statistics over 200 seeds.
        from multisupport.demonstrator import ReachDemonstrator

        count = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            world = spawn_reach_episode(rng, "in")
            demo = ReachDemonstrator(world, rng)
            count += demo.platform
        freq = count / 200
        assert abs(freq - 0.5) < 0.08

    def test_reach_demos_succeed(self):
        for seed in range(20):
            demo = run_scripted_episode("reach", seed)
            world = _replay_to_world(demo)
            assert reach_outcome(world).success

    @pytest.mark.slow
    def test_push_demos_reach_low_error(self):
        from multisupport.runner import DemonstratorStuck

        finals = []
        seed = 100
        attempts = 0
        while len(finals) < 10 and attempts < 13:
            try:
                demo = run_scripted_episode("push", seed + attempts)
                world = _replay_to_world(demo)
                finals.append(push_error(world))
            except DemonstratorStuck:
                finals.append(1.0)
            attempts += 1
        good = sum(e < 0.2 for e in finals)
        assert good >= 0.9 * len(finals)


def _replay_to_world(demo):
    from multisupport.runner import _spawn_from_demo
    from multisupport.geom import Pose2 as P
    from multisupport.runner import make_automatons as mk_auts

    world = _spawn_from_demo(demo)
    auts = mk_auts(world)
    dt = world.config.dt
    for k in range(len(demo.t)):
        poses = [P(demo.cmds[k, i, :2].copy(), demo.cmds[k, i, 2]) for i in range(demo.n_effectors)]
        gammas = [float(demo.cmds[k, i, 3]) for i in range(demo.n_effectors)]
        auts = apply_contact_commands(world, auts, gammas, dt)
        step(world, poses, dt)
    return world
