"""Spin up the HTTP API on a quick checkpoint and exercise every endpoint.

Run: python3 demos/06_serve_api.py
"""

import json
import tempfile
import threading
import urllib.request

import numpy as np

from ltgan import serve, steer
from ltgan import trainer as tr
from ltgan.cli import build_experiment, resolve_items

items = resolve_items(None, {"data.kind": "shapes", "train.steps": "400",
                             "train.warmup": "100", "train.seed": "0"})
exp = build_experiment(items)
state = tr.build_trainer(exp.cfg, exp.spec)
tr.train(state, exp.source)

tmp = tempfile.mkdtemp(prefix="ltgan-demo-")
ckpt = f"{tmp}/model.ltgn"
dirs = f"{tmp}/directions.jsonl"
tr.save_checkpoint(state, ckpt, extras=exp.extras)
steer.append_direction(dirs, steer.Direction(
    "random-probe", steer._unit(np.random.default_rng(0).normal(size=64)), "svm", {}))

session = serve.load_session(ckpt, dirs)
httpd = serve.build_server(session, port=0)
port = httpd.server_address[1]
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{port}"
print(f"serving on {base}")


def get(path):
    with urllib.request.urlopen(base + path) as r:
        return json.loads(r.read())


def post(path, body):
    req = urllib.request.Request(base + path, data=json.dumps(body).encode(),
                                 headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(req) as r:
        return json.loads(r.read())


info = get("/v1/model/info")
print("model info:", {k: info[k] for k in ("latent_dim", "image_shape", "step")})

z = list(np.random.default_rng(1).normal(size=info["latent_dim"]))
gen = post("/v1/generate", {"latent": z})
print(f"generate: PNG of {len(gen['image'])} base64 chars, raw range "
      f"[{min(gen['raw']):.3f}, {max(gen['raw']):.3f}]")

listing = get("/v1/directions")
print("directions:", [(d["id"], d["source"]) for d in listing])

trav = post("/v1/traverse", {"latent": z, "direction_id": listing[0]["id"],
                             "alphas": [-2, 0, 2]})
print("traverse: center frame equals /v1/generate:",
      trav["images"][1]["image"] == gen["image"])

pair = post("/v1/epsilon_pair", {"sigma_eps": 0.5, "seed": 42})
print(f"epsilon pair: aux same-probability {pair['aux_same_prob']:.3f}")

httpd.shutdown()
print("done")
