import time
import numpy as np
from ltgan import trainer as tr, datasets as D, evaluation as E
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec

spec = NetworkSpec()
shapes = D.ShapesSpec()
train_corpus = D.build_corpus(shapes, 4096, np.random.default_rng(np.random.SeedSequence((0, 0))))
test_corpus = D.build_corpus(shapes, 1024, np.random.default_rng(np.random.SeedSequence((0, 1))))
ext = E.build_extractor(256, 0)
pack = E.make_eval_pack(test_corpus.images, ext, 512)

def run(seed, sigma, steps=4000, lam=1.0, warmup=500):
    cfg = TrainConfig(steps=steps, warmup=warmup, batch=32, seed=seed, sigma_eps=sigma, lam=lam)
    state = tr.build_trainer(cfg, spec)
    tr.train(state, D.ShapesSource(train_corpus, seed=0))
    fid = E.training_fid(state, pack)
    sweep = E.aux_accuracy_sweep(state, [0.05, 0.5, 0.9], n_pairs=2048, seed=0)
    return fid, sweep

t0 = time.time()
with open("/root/pkg/tuning/shapes_sweep.log", "w") as fh:
    for sigma in (0.05, 0.5, 0.9):
        for seed in (0, 1, 2):
            fid, sweep = run(seed, sigma)
            line = (f"sigma {sigma} seed {seed}: fid {fid:.4f}  "
                    f"acc@0.05 {sweep[0.05]:.3f} acc@0.5 {sweep[0.5]:.3f} acc@0.9 {sweep[0.9]:.3f}"
                    f"   ({time.time()-t0:.0f}s)")
            print(line)
            fh.write(line + "\n")
            fh.flush()
print("DONE")
