# Train bc and ddpm on the same reach corpus; evaluate all samplers.
import numpy as np, time
from multisupport.runner import collect_dataset, run_policy_episode
from multisupport.dataset import make_training_windows, compute_norm_stats
from multisupport.generative import FlowModel, fit, sample_actions
from multisupport.unet import UNetConfig
from multisupport.tasks import spawn_reach_episode, reach_outcome
from multisupport.encoding import augment_marker_times

demos = collect_dataset('reach', 200, seed=0)
ws = make_training_windows(demos)
stats = compute_norm_stats(ws)
S = stats.normalize_states(ws.states).astype(np.float32)
A = stats.normalize_actions(ws.actions).astype(np.float32)
layout = ws.layout
print('windows', len(S), flush=True)
aug = lambda sb, rng: augment_marker_times(sb, layout, rng, p=0.3)

def evaluate(model, n, dist, tag, method=None, steps=None):
    succ, errs = 0, []
    for seed in range(n):
        world = spawn_reach_episode(np.random.default_rng(10000 + seed), dist)
        rng_s = np.random.default_rng(20000 + seed)
        sampler = lambda st: sample_actions(model, st, rng_s, method=method, steps=steps)
        run_policy_episode(world, sampler, duration=20.0, latency=0.8)
        o = reach_outcome(world)
        succ += o.success
        if o.contact_established: errs.append(o.error_cm)
    med = float(np.median(errs)) if errs else float('nan')
    print('%s %s: success %d/%d, median err %.2f cm' % (tag, dist, succ, n, med), flush=True)

for method in ('bc', 'ddpm'):
    cfg = UNetConfig(horizon=32, action_dim=layout.action_dim, state_dim=layout.state_dim)
    model = FlowModel.create(cfg, method, seed=0, norm=stats)
    t0 = time.perf_counter()
    res = fit(model, S, A, epochs=500, batch_size=256, lr=3e-4, seed=1, augment=aug)
    print('%s: train %.0fs, final loss %.3f' % (method, time.perf_counter()-t0, res.final_loss), flush=True)
    model.save('/root/pkg/.cal/%s.ckpt' % method)
    if method == 'bc':
        evaluate(model, 30, 'in', 'bc')
        evaluate(model, 30, 'ood', 'bc')
    else:
        evaluate(model, 30, 'in', 'ddpm')
        evaluate(model, 30, 'ood', 'ddpm')
        evaluate(model, 30, 'in', 'ddim', method='ddim', steps=20)
