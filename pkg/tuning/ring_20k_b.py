import time
import numpy as np
from ltgan import trainer as tr, datasets as D, evaluation as E
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec


def run(seed, steps, ring, warmup, input_scale=4.0, batch=128, d_step=1, lam=1.0,
        alpha_g=2e-4, alpha_d=2e-4, beta1=0.5, probes=(6000, 12000, 20000)):
    spec = NetworkSpec(latent_dim=8, image_shape=(2, 1, 1), g_hidden=(64, 64), d_hidden=(64, 64),
                       feature_tap_index=1, tap_shape=(16, 2, 2), input_scale=input_scale)
    cfg = TrainConfig(steps=0, warmup=warmup, batch=batch, seed=seed, objective="lt",
                      lam=lam, alpha_g=alpha_g, alpha_d=alpha_d, d_step=d_step, beta1=beta1)
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
ring05 = D.RingSpec()
with open("/root/pkg/tuning/ring_20k_b.log", "w") as fh:
    for name, ring, kw in [
        ("warm100", ring05, dict(warmup=100)),
        ("warm0", ring05, dict(warmup=0)),
        ("warm100 dstep2", ring05, dict(warmup=100, d_step=2, probes=(6000, 12000))),
        ("warm100 beta0", ring05, dict(warmup=100, beta1=0.0)),
    ]:
        for seed in (0, 1, 2):
            res = run(seed, 20000, ring, **kw)
            line = f"{name:16s} seed {seed}: {res}   ({time.time()-t0:.0f}s)"
            print(line)
            fh.write(line + "\n")
            fh.flush()
print("DONE")
