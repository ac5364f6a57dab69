"""The latent-transformation pretext task, step by step.

Two perturbation vectors are tiled across a batch of 2b codes; each row is
paired with a shuffled partner and the auxiliary net must say whether both
rows were moved by the same perturbation.

Run: python3 demos/02_pairing_task.py
"""

import math

import numpy as np

from ltgan import nn, objectives as obj

rng = np.random.default_rng(0)

print("== batch construction ==")
batch = obj.make_latent_batch(b=3, d=4, sigma_z=1.0, sigma_eps=0.5, rng=rng)
print("eps ids   :", batch.eps_id)
print("shuffle   :", batch.shuffle)
print("labels    :", batch.y_ss.astype(int))
print("label rule: y[i] = 1 iff eps_id[i] == eps_id[shuffle[i]]")

print("\n== loss anchors ==")
spec = nn.NetworkSpec(latent_dim=8, image_shape=(1, 4, 4), g_hidden=(16,),
                      d_hidden=(16, 16), feature_tap_index=1, tap_shape=(4, 2, 2))
g = nn.build_generator(spec, seed=0, dtype=np.float64)
d = nn.build_discriminator(spec, seed=1, dtype=np.float64)
a = nn.build_auxiliary(spec, seed=2, dtype=np.float64)  # zero output layer -> constant 0.5

batch = obj.make_latent_batch(b=4, d=8, sigma_z=1.0, sigma_eps=0.5, rng=rng)
res = obj.ltgan_objective(g, d, a, batch, lam=1.0)
print(f"pairing loss of the constant-0.5 classifier: {res.aux.item():.9f}")
print(f"ln 2                                       : {math.log(2):.9f}")

report = res.report(lam=1.0)
print(f"decomposition: total {report.total_g:.6f} = adv {report.g_adv:.6f} + 1.0 * aux {report.aux:.6f}")

print("\n== the transformed image is G(z + eps) ==")
f = obj.lt_feature_delta(d, g, batch)
print("feature delta shape:", f.shape, "(2b pairs, pooled tap width)")
zero = obj.LatentBatch(batch.z, np.zeros_like(batch.eps), batch.eps_id, batch.shuffle, batch.y_ss)
print("with eps = 0 the delta is exactly zero:",
      bool(np.all(obj.lt_feature_delta(d, g, zero).data == 0.0)))
