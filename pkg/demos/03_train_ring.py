"""Mode-coverage on the 8-Gaussian ring: pairing task vs plain baseline.

A short run (not the full benchmark, which uses 20k steps); prints covered
modes and the histogram KL to uniform for both objectives.

Run: python3 demos/03_train_ring.py [steps]
"""

import sys
import time

import numpy as np

from ltgan import datasets as D
from ltgan import evaluation as E
from ltgan import trainer as tr
from ltgan.cli import RING_NET_DEFAULTS, build_experiment, resolve_items

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 3000

ring = D.RingSpec()
print(f"ring: {ring.n_modes} modes, radius {ring.radius}, std {ring.std}")

for objective in ("lt", "baseline"):
    items = resolve_items(None, {
        "train.objective": objective,
        "train.steps": str(steps),
        "train.seed": "0",
    })
    exp = build_experiment(items)
    state = tr.build_trainer(exp.cfg, exp.spec)
    t0 = time.time()
    tr.train(state, exp.source)
    covered, kl = E.mode_coverage(state, ring, 8000, np.random.default_rng(0))
    print(f"{objective:9s}: {covered}/{ring.n_modes} modes covered, "
          f"KL to uniform {kl:.3f}  ({time.time() - t0:.0f}s, {steps} steps)")
