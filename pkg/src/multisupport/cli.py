"""Command-line entry points: collect, train, run, eval, replay, serve, soak."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="multisupport")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="collect scripted demonstrations")
    p.add_argument("--task", choices=["reach", "push"], required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", choices=["t", "u"], default="t")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a policy from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=["flow", "ddpm", "bc"], required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--augment-p", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=25)

    p = sub.add_parser("run", help="autonomous rollouts, printing outcomes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=["reach", "push"], required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", choices=["in", "ood"], default="in")
    p.add_argument("--method", default=None, help="override sampling method (e.g. ddim)")
    p.add_argument("--steps", type=int, default=20)

    p = sub.add_parser("eval", help="benchmark suites; nonzero exit on violations")
    p.add_argument("--checkpoints", nargs="+", required=True,
                   help="method=path pairs, e.g. flow=flow.ckpt ddim=ddpm.ckpt")
    p.add_argument("--task", choices=["reach", "push"], required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=300.0)
    p.add_argument("--out", default="reports")
    p.add_argument("--timing-samples", type=int, default=200)

    p = sub.add_parser("replay", help="bit-exact playback of recorded episodes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--episode", default=None, help="episode id (default: all)")

    p = sub.add_parser("serve", help="run the live bridge service")
    p.add_argument("--task", choices=["reach", "push-t", "push-u"], default="push-t")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--mode", choices=["teleoperation", "autonomous", "shared"],
                   default="teleoperation")
    p.add_argument("--owned-effector", type=int, default=0)
    p.add_argument("--dataset", default=None, help="where recorded episodes go")
    p.add_argument("--bind", default=None, help="host:port (or MULTISUPPORT_BIND)")
    p.add_argument("--frontend", default=None, help="static cockpit directory")

    p = sub.add_parser("soak", help="executor continuity soak test")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--minutes", type=float, default=10.0)
    p.add_argument("--task", choices=["reach", "push"], default="push")
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    return {
        "collect": cmd_collect,
        "train": cmd_train,
        "run": cmd_run,
        "eval": cmd_eval,
        "replay": cmd_replay,
        "serve": cmd_serve,
        "soak": cmd_soak,
    }[args.command](args)


def cmd_collect(args) -> int:
    from .dataset import save_dataset
    from .runner import collect_dataset

    t0 = time.perf_counter()
    done = []

    def progress(demo):
        done.append(demo)
        if len(done) % 10 == 0:
            print(f"  {len(done)}/{args.episodes} episodes "
                  f"({time.perf_counter() - t0:.0f}s)", flush=True)

    demos = collect_dataset(
        args.task, args.episodes, seed=args.seed, shape=args.shape,
        on_episode=progress,
    )
    path = save_dataset(demos, args.out)
    total = sum(len(d.t) for d in demos) / 100.0
    print(f"wrote {len(demos)} episodes ({total:.0f} s of data) to {path}")
    return 0


def cmd_train(args) -> int:
    from .dataset import compute_norm_stats, load_dataset, make_training_windows
    from .encoding import augment_marker_times
    from .generative import FlowModel, fit
    from .unet import UNetConfig

    demos = load_dataset(args.dataset)
    windows = make_training_windows(demos, stride=args.stride)
    stats = compute_norm_stats(windows)
    states = stats.normalize_states(windows.states).astype(np.float32)
    actions = stats.normalize_actions(windows.actions).astype(np.float32)
    print(f"{len(demos)} episodes -> {len(states)} windows "
          f"(state dim {windows.layout.state_dim}, action dim {windows.layout.action_dim})")
    cfg = UNetConfig(
        horizon=32,
        action_dim=windows.layout.action_dim,
        state_dim=windows.layout.state_dim,
    )
    model = FlowModel.create(cfg, args.method, seed=args.seed, norm=stats)
    layout = windows.layout
    augment = (
        (lambda sb, rng: augment_marker_times(sb, layout, rng, p=args.augment_p))
        if args.augment_p > 0
        else None
    )
    t0 = time.perf_counter()
    result = fit(
        model, states, actions,
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, augment=augment, log_every=args.log_every,
    )
    print(f"trained {args.method} for {args.epochs} epochs in "
          f"{time.perf_counter() - t0:.0f}s; final loss {result.final_loss:.4f}")
    model.save(args.out)
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_run(args) -> int:
    from .generative import FlowModel, sample_actions
    from .runner import run_policy_episode
    from .tasks import (
        push_error,
        reach_outcome,
        spawn_push_episode,
        spawn_reach_episode,
    )

    model = FlowModel.load(args.checkpoint)
    successes = 0
    for i in range(args.episodes):
        world_rng = np.random.default_rng(1_000_000 + args.seed * 10_000 + i)
        s_rng = np.random.default_rng(2_000_000 + args.seed * 10_000 + i)
        sampler = lambda st: sample_actions(model, st, s_rng, method=args.method,
                                            steps=args.steps)
        if args.task == "reach":
            from .tasks import ReachTaskConfig

            world = spawn_reach_episode(world_rng, args.dist)
            run_policy_episode(world, sampler, duration=ReachTaskConfig().episode_length)
            o = reach_outcome(world)
            successes += o.success
            print(f"episode {i}: success={o.success} error={o.error_cm:.1f}cm")
        else:
            world = spawn_push_episode(world_rng, "t")
            best = [push_error(world)]
            run_policy_episode(
                world, sampler, duration=300.0,
                on_tick=lambda w, r: best.__setitem__(0, min(best[0], push_error(w)))
                if int(round(w.clock / w.config.dt)) % 100 == 0 else None,
            )
            print(f"episode {i}: best error {best[0]:.3f}")
    if args.task == "reach":
        print(f"success rate: {successes}/{args.episodes}")
    return 0


def cmd_eval(args) -> int:
    from .benchmarks import (
        ReachRow,
        emit_report,
        run_push_benchmark,
        run_reach_benchmark,
        time_inference,
        quartiles,
    )
    from .generative import FlowModel

    entries = []
    for spec_str in args.checkpoints:
        method, _, path = spec_str.partition("=")
        entries.append((method, FlowModel.load(path)))

    rows, curves = [], []
    violations = []
    for method, model in entries:
        sample_method = method if method in ("ddim", "flow", "ddpm", "bc") else None
        ms_mean, ms_std = time_inference(
            model, n=args.timing_samples, method=sample_method,
        )
        if args.task == "reach":
            row = ReachRow(method=method, inference_ms_mean=ms_mean,
                           inference_ms_std=ms_std, seed=args.seed)
            frag = run_reach_benchmark(model, n=args.trials, dist="in",
                                       seed=args.seed, method=sample_method)
            frag.update(run_reach_benchmark(model, n=args.trials, dist="ood",
                                            seed=args.seed, method=sample_method))
            for k, v in frag.items():
                setattr(row, k, v)
            rows.append(row)
            print(f"{method}: in {row.in_success*100:.0f}% ({row.in_median_cm:.1f}cm) | "
                  f"ood {row.ood_success*100:.0f}% ({row.ood_median_cm:.1f}cm) | "
                  f"{ms_mean:.0f}±{ms_std:.0f} ms")
        else:
            curve = run_push_benchmark(model, n=args.trials, horizon_s=args.horizon,
                                       seed=args.seed, method=sample_method)
            curve.method = method
            curves.append(curve)
            med, q1, q3 = quartiles(curve.final_errors)
            print(f"{method}: final error median {med:.3f} [{q1:.3f}, {q3:.3f}]")
            if not all(np.all(np.diff(c) <= 1e-12) for c in curve.curves):
                violations.append(f"{method}: best-so-far curve not monotone")

    by_method = {m: model for m, model in entries}
    if args.task == "reach" and "flow" in by_method and "bc" in by_method:
        flow_row = next(r for r in rows if r.method == "flow")
        bc_row = next(r for r in rows if r.method == "bc")
        if flow_row.in_success < 0.9:
            violations.append(f"flow in-dist success {flow_row.in_success:.2f} < 0.9")
        gap = flow_row.in_success - bc_row.in_success
        ratio = bc_row.in_median_cm / flow_row.in_median_cm
        if gap < 0.15 and not ratio >= 2.0:
            violations.append(
                f"bc separation: gap {gap:.2f} < 0.15 and error ratio {ratio:.2f} < 2"
            )
        ood_gap = flow_row.ood_success - bc_row.ood_success
        if ood_gap < 0.10:
            violations.append(f"ood ordering: flow-bc gap {ood_gap:.2f} < 0.10")
    if args.task == "push" and len(curves) >= 2:
        med = {c.method: quartiles(c.final_errors)[0] for c in curves}
        if "flow" in med and med["flow"] >= 0.5:
            violations.append(f"flow push median {med['flow']:.3f} >= 0.5")
        if "flow" in med and "bc" in med and med["flow"] > med["bc"]:
            violations.append("flow push median exceeds bc")

    paths = emit_report(rows, curves, args.out)
    print(f"report written to {paths['summary']}")
    for v in violations:
        print(f"VIOLATION: {v}", file=sys.stderr)
    return 1 if violations else 0


def cmd_replay(args) -> int:
    from .dataset import load_dataset
    from .runner import replay_episode

    demos = load_dataset(args.dataset)
    if args.episode is not None:
        demos = [d for d in demos if d.episode_id == args.episode]
        if not demos:
            print(f"no episode {args.episode!r}", file=sys.stderr)
            return 2
    failures = 0
    for demo in demos:
        final = replay_episode(demo)
        ok = final == demo.final_state
        print(f"{demo.episode_id}: {'bit-exact' if ok else 'MISMATCH'}")
        failures += not ok
    return 1 if failures else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import SimService, create_app

    bind = args.bind or os.environ.get("MULTISUPPORT_BIND", "127.0.0.1:8733")
    host, _, port = bind.partition(":")
    service = SimService(
        task=args.task,
        seed=args.seed,
        checkpoint=args.checkpoint,
        mode=args.mode,
        owned_effector=args.owned_effector,
        dataset_path=args.dataset,
    )
    service.start()
    app = create_app(service, frontend_dir=args.frontend)
    try:
        uvicorn.run(app, host=host, port=int(port or 8733), log_level="warning")
    finally:
        service.stop()
    return 0


def cmd_soak(args) -> int:
    from .soak import run_soak

    report = run_soak(
        checkpoint=args.checkpoint,
        minutes=args.minutes,
        task=args.task,
        seed=args.seed,
    )
    print(report.summary())
    return 0 if report.ok() else 1


if __name__ == "__main__":
    sys.exit(main())
