import time
import numpy as np
from ltgan import trainer as tr, datasets as D, evaluation as E
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec

ring = D.RingSpec()

def run(seed, steps, latent_dim=8, g_leak=0.2, input_scale=4.0, batch=128,
        g_hidden=(64, 64), d_hidden=(64, 64), warmup=500, lam=1.0,
        alpha_g=2e-4, alpha_d=2e-4, loss="hinge", probes=(6000, 12000, 20000)):
    spec = NetworkSpec(latent_dim=latent_dim, image_shape=(2, 1, 1), g_hidden=g_hidden,
                       d_hidden=d_hidden, feature_tap_index=1, tap_shape=(16, 2, 2),
                       input_scale=input_scale, g_leak=g_leak)
    cfg = TrainConfig(steps=0, warmup=warmup, batch=batch, seed=seed, objective="lt",
                      lam=lam, alpha_g=alpha_g, alpha_d=alpha_d, loss=loss)
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
with open("/root/pkg/tuning/ring_20k_c.log", "w") as fh:
    for name, kw in [
        ("d2 gleak", dict(latent_dim=2)),
        ("d8 gleak", dict(latent_dim=8)),
        ("d2 gleak scale8", dict(latent_dim=2, input_scale=8.0)),
    ]:
        for seed in (0, 1, 2):
            res = run(seed, 20000, **kw)
            line = f"{name:18s} seed {seed}: {res}   ({time.time()-t0:.0f}s)"
            print(line)
            fh.write(line + "\n")
            fh.flush()
print("DONE")
