import numpy as np, time
from multisupport.runner import collect_dataset, run_policy_episode
from multisupport.dataset import make_training_windows, compute_norm_stats, save_dataset
from multisupport.generative import FlowModel, fit, sample_actions
from multisupport.unet import UNetConfig
from multisupport.tasks import spawn_push_episode, push_error
from multisupport.encoding import augment_marker_times

t0 = time.perf_counter()
demos = collect_dataset('push', 20, seed=0)
save_dataset(demos, '/root/pkg/.cal/push20.msds')
print('collected 20 push demos (%.0fs), durations: %s' % (
    time.perf_counter()-t0, [int(d.t[-1]) for d in demos]), flush=True)
ws = make_training_windows(demos, stride=4)
stats = compute_norm_stats(ws)
S = stats.normalize_states(ws.states).astype(np.float32)
A = stats.normalize_actions(ws.actions).astype(np.float32)
layout = ws.layout
print('windows %d state_dim %d action_dim %d' % (len(S), layout.state_dim, layout.action_dim), flush=True)
aug = lambda sb, rng: augment_marker_times(sb, layout, rng, p=0.3)

cfg = UNetConfig(horizon=32, action_dim=layout.action_dim, state_dim=layout.state_dim)
model = FlowModel.create(cfg, 'flow', seed=0, norm=stats)
t0 = time.perf_counter()
res = fit(model, S, A, epochs=120, batch_size=256, lr=3e-4, seed=1, augment=aug)
print('train 120 ep: %.0fs loss %.2f -> %.3f' % (time.perf_counter()-t0, res.losses[0], res.final_loss), flush=True)
model.save('/root/pkg/.cal/push_flow_pilot.ckpt')

t0 = time.perf_counter()
finals = []
for seed in range(8):
    world = spawn_push_episode(np.random.default_rng(30000+seed), 't')
    rng_s = np.random.default_rng(40000+seed)
    sampler = lambda st: sample_actions(model, st, rng_s, steps=20)
    best = [push_error(world)]
    def track(w, r):
        if int(round(w.clock/w.config.dt)) % 25 == 0:
            best[0] = min(best[0], push_error(w))
    run_policy_episode(world, sampler, duration=300.0, latency=0.8, on_tick=track)
    finals.append(best[0])
    print('  trial %d: best %.3f support=%s' % (seed, best[0], world.effectors[1].mode), flush=True)
print('eval %.0fs | median best %.3f' % (time.perf_counter()-t0, np.median(finals)), flush=True)
