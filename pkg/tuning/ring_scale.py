import time
import numpy as np
from ltgan import trainer as tr, datasets as D, evaluation as E
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec

ring = D.RingSpec()

def run(seed, steps, input_scale, batch=128, g_hidden=(64, 64), d_hidden=(64, 64), tap=(16, 2, 2),
        alpha_g=2e-4, alpha_d=2e-4, d_step=1, lam=1.0, warmup=500, objective="lt"):
    spec = NetworkSpec(latent_dim=8, image_shape=(2, 1, 1), g_hidden=g_hidden, d_hidden=d_hidden,
                       feature_tap_index=len(d_hidden) - 1, tap_shape=tap, input_scale=input_scale)
    cfg = TrainConfig(steps=steps, warmup=warmup, batch=batch, seed=seed, objective=objective,
                      lam=lam, alpha_g=alpha_g, alpha_d=alpha_d, d_step=d_step)
    state = tr.build_trainer(cfg, spec)
    tr.train(state, D.RingSource(ring))
    cov, kl = E.mode_coverage(state, ring, 4000, np.random.default_rng(0))
    return cov, round(kl, 3)

t0 = time.time()
with open("/root/pkg/tuning/ring_scale.log", "w") as fh:
    for name, kw in {
        "scale2 b128": dict(input_scale=2.0),
        "scale4 b128": dict(input_scale=4.0),
        "scale8 b128": dict(input_scale=8.0),
        "scale4 b256": dict(input_scale=4.0, batch=256),
        "scale4 b128 baseline": dict(input_scale=4.0, objective="baseline"),
    }.items():
        res = [run(seed, 6000, **kw) for seed in (0, 1)]
        line = f"{name:24s}: {res}   ({time.time()-t0:.0f}s)"
        print(line)
        fh.write(line + "\n")
        fh.flush()
print("DONE")
