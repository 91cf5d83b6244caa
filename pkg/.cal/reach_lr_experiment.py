import numpy as np, time, json, functools
from multisupport.runner import collect_dataset, run_policy_episode
from multisupport.dataset import make_training_windows, compute_norm_stats
from multisupport.generative import FlowModel, fit, sample_actions
from multisupport.unet import UNetConfig
from multisupport.tasks import spawn_reach_episode, reach_outcome
from multisupport.encoding import augment_marker_times

t0 = time.perf_counter()
demos = collect_dataset('reach', 200, seed=0)
ws = make_training_windows(demos)
stats = compute_norm_stats(ws)
S = stats.normalize_states(ws.states).astype(np.float32)
A = stats.normalize_actions(ws.actions).astype(np.float32)
print('demos %d windows %d (%.0fs)' % (len(demos), len(S), time.perf_counter()-t0), flush=True)
layout = ws.layout

def evaluate(model, n, dist, tag):
    succ, errs = 0, []
    for seed in range(n):
        rng_w = np.random.default_rng(10000 + seed)
        world = spawn_reach_episode(rng_w, dist)
        rng_s = np.random.default_rng(20000 + seed)
        sampler = lambda st: sample_actions(model, st, rng_s, steps=20)
        run_policy_episode(world, sampler, duration=20.0, latency=0.8)
        o = reach_outcome(world)
        succ += o.success
        if o.contact_established:
            errs.append(o.error_cm)
    med = float(np.median(errs)) if errs else float('nan')
    print('%s %s: success %d/%d, median err %.2f cm' % (tag, dist, succ, n, med), flush=True)
    return succ / n, med

aug = lambda sb, rng: augment_marker_times(sb, layout, rng, p=0.3)
for lr in (3e-4, 1e-4):
    cfg = UNetConfig(horizon=32, action_dim=layout.action_dim, state_dim=layout.state_dim)
    model = FlowModel.create(cfg, 'flow', seed=0, norm=stats)
    t0 = time.perf_counter()
    res = fit(model, S, A, epochs=500, batch_size=256, lr=lr, seed=1, augment=aug)
    print('lr %g: train %.0f s, loss %.2f -> %.3f' % (lr, time.perf_counter()-t0, res.losses[0], res.final_loss), flush=True)
    evaluate(model, 30, 'in', 'flow-lr%g' % lr)
    evaluate(model, 30, 'ood', 'flow-lr%g' % lr)
    model.save('/root/pkg/.cal/flow_lr%g.ckpt' % lr)
