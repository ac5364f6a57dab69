"""Train on the shapes corpus and inspect quality with the proxy metric.

Writes a sample mosaic PNG next to this script and prints the proxy-FID
trajectory plus the oracle's view of the generated samples.

Run: python3 demos/04_train_shapes.py [steps]
"""

import os
import sys
import time

import numpy as np

from ltgan import datasets as D
from ltgan import evaluation as E
from ltgan import images as im
from ltgan import trainer as tr
from ltgan.cli import build_experiment, resolve_items

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2500

items = resolve_items(None, {
    "data.kind": "shapes",
    "train.steps": str(steps),
    "train.eval_every": str(max(1, steps // 5)),
    "train.seed": "0",
})
exp = build_experiment(items)
state = tr.build_trainer(exp.cfg, exp.spec)
t0 = time.time()
log = tr.train(state, exp.source, eval_pack=exp.eval_pack())
print(f"{steps} steps in {time.time() - t0:.0f}s")
print("proxy-FID trajectory:", [(s, round(v, 3)) for s, v in log.series("fid")])
print("pairing accuracy    :", [(s, round(v, 3)) for s, v in log.series("aux_acc")])

images, _ = tr.sample_images(state, 64, np.random.default_rng(7))
shapes = exp.train_corpus.spec
measured = [D.measure_attributes(img, shapes) for img in images]
valid = [m for m in measured if m.valid]
print(f"\noracle view of 64 samples: {len(valid)} valid, "
      f"brightness spread {np.std([m.brightness for m in valid]):.3f}, "
      f"size spread {np.std([m.size for m in valid]):.3f}")

out = os.path.join(os.path.dirname(__file__), "shapes_samples.png")
with open(out, "wb") as fh:
    fh.write(im.encode_png(im.mosaic(images[:32], cols=8)))
print(f"wrote sample mosaic -> {out}")
