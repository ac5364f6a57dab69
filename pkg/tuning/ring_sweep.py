import time
import numpy as np
from ltgan import trainer as tr, datasets as D, evaluation as E
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec

ring = D.RingSpec()

def run(seed, steps, g_hidden, d_hidden, tap_shape, batch, alpha_g=2e-4, alpha_d=2e-4,
        d_step=1, lam=1.0, warmup=500, objective="lt"):
    spec = NetworkSpec(latent_dim=8, image_shape=(2,1,1), g_hidden=g_hidden, d_hidden=d_hidden,
                       feature_tap_index=len(d_hidden)-1, tap_shape=tap_shape)
    cfg = TrainConfig(steps=steps, warmup=warmup, batch=batch, seed=seed, objective=objective,
                      lam=lam, alpha_g=alpha_g, alpha_d=alpha_d, d_step=d_step)
    state = tr.build_trainer(cfg, spec)
    tr.train(state, D.RingSource(ring))
    cov, kl = E.mode_coverage(state, ring, 4000, np.random.default_rng(0))
    return cov, round(kl,3)

t0=time.time()
grid = {
  "w64 b128":            dict(g_hidden=(64,64), d_hidden=(64,64), tap_shape=(4,4,4), batch=128),
  "w64 b256":            dict(g_hidden=(64,64), d_hidden=(64,64), tap_shape=(4,4,4), batch=256),
  "w128 b128":           dict(g_hidden=(128,128), d_hidden=(128,128), tap_shape=(8,4,4), batch=128),
  "w128 b256":           dict(g_hidden=(128,128), d_hidden=(128,128), tap_shape=(8,4,4), batch=256),
  "w128 b128 ttur":      dict(g_hidden=(128,128), d_hidden=(128,128), tap_shape=(8,4,4), batch=128, alpha_d=4e-4, alpha_g=1e-4),
  "w64 b256 lr5e-4":     dict(g_hidden=(64,64), d_hidden=(64,64), tap_shape=(4,4,4), batch=256, alpha_g=5e-4, alpha_d=5e-4),
}
with open("/root/pkg/tuning/ring_sweep.log", "w") as fh:
    for name, kw in grid.items():
        res = [run(seed, 6000, **kw) for seed in (0,1)]
        line = f"{name:22s}: {res}   ({time.time()-t0:.0f}s)"
        print(line); fh.write(line+"\n"); fh.flush()
