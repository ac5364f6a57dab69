import time
import numpy as np
from ltgan import trainer as tr, datasets as D, evaluation as E
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec

ring = D.RingSpec()

def run(seed, steps, input_scale=4.0, batch=128, g_hidden=(64, 64), d_hidden=(64, 64),
        tap=(16, 2, 2), alpha_g=2e-4, alpha_d=2e-4, d_step=1, lam=1.0, warmup=500,
        objective="lt", sigma_eps=0.5, probes=(6000, 12000, 20000)):
    spec = NetworkSpec(latent_dim=8, image_shape=(2, 1, 1), g_hidden=g_hidden, d_hidden=d_hidden,
                       feature_tap_index=len(d_hidden) - 1, tap_shape=tap, input_scale=input_scale)
    cfg = TrainConfig(steps=0, warmup=warmup, batch=batch, seed=seed, objective=objective,
                      lam=lam, alpha_g=alpha_g, alpha_d=alpha_d, d_step=d_step, sigma_eps=sigma_eps)
    state = tr.build_trainer(cfg, spec)
    src = D.RingSource(ring)
    out = []
    for p in probes:
        if p > steps:
            break
        state.config.steps = p
        tr.train(state, src)
        cov, kl = E.mode_coverage(state, ring, 4000, np.random.default_rng(0))
        out.append((p, cov, round(kl, 3)))
    return out

t0 = time.time()
with open("/root/pkg/tuning/ring_20k.log", "w") as fh:
    for name, kw in {
        "lam1": dict(lam=1.0),
        "lam2": dict(lam=2.0),
        "lam1 gwide": dict(g_hidden=(128, 128)),
        "lam1 eps03": dict(sigma_eps=0.3),
    }.items():
        for seed in (0, 1):
            res = run(seed, 20000, **kw)
            line = f"{name:12s} seed {seed}: {res}   ({time.time()-t0:.0f}s)"
            print(line)
            fh.write(line + "\n")
            fh.flush()
print("DONE")
