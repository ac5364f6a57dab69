import base64
import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from ltgan import serve, steer
from ltgan import trainer as tr
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec


@pytest.fixture(scope="module")
def server_url(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("serve")
    state = tr.build_trainer(TrainConfig(steps=2, warmup=0, batch=4, seed=5), NetworkSpec())
    tr.train(state, _shapes_source())
    ckpt = str(tmp / "model.ltgn")
    tr.save_checkpoint(state, ckpt)
    directions = str(tmp / "directions.jsonl")
    rng = np.random.default_rng(0)
    steer.append_direction(directions, steer.Direction(
        "brightness", steer._unit(rng.normal(size=64)), "svm", {"eval_accuracy": 0.8}))
    session = serve.load_session(ckpt, directions)
    httpd = serve.build_server(session, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()


def _shapes_source():
    from ltgan import datasets as D
    corpus = D.build_corpus(D.ShapesSpec(), 64, np.random.default_rng(0))
    return D.ShapesSource(corpus, seed=0)


def _get(url):
    with urllib.request.urlopen(url) as resp:
        return resp.status, json.loads(resp.read())


def _post(url, body):
    req = urllib.request.Request(url, data=json.dumps(body).encode(),
                                 headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def test_model_info(server_url):
    status, info = _get(f"{server_url}/v1/model/info")
    assert status == 200
    assert info["latent_dim"] == 64
    assert info["image_shape"] == [1, 16, 16]
    assert info["step"] == 2
    status2, info2 = _get(f"{server_url}/v1/model/info")
    assert info2 == info  # repeated calls identical


def test_generate_deterministic_and_range(server_url):
    z = list(np.random.default_rng(1).normal(size=64))
    bodies = [_post(f"{server_url}/v1/generate", {"latent": z}) for _ in range(5)]
    assert all(s == 200 for s, _ in bodies)
    first = bodies[0][1]
    assert all(b["image"] == first["image"] for _, b in bodies)  # byte-identical PNG
    assert all(-1.0 <= v <= 1.0 for v in first["raw"])  # tanh range
    assert first["shape"] == [1, 16, 16]
    png = base64.b64decode(first["image"])
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_generate_validation(server_url):
    status, body = _post(f"{server_url}/v1/generate", {"latent": [0.0] * 63})
    assert status == 400 and "64" in body["error"]
    status, body = _post(f"{server_url}/v1/generate", {"latent": [0.0] * 64, "class": 1})
    assert status == 400 and "unconditional" in body["error"]


def test_epsilon_pair_contract(server_url):
    body = {"sigma_eps": 0.5, "seed": 42}
    s1, r1 = _post(f"{server_url}/v1/epsilon_pair", body)
    s2, r2 = _post(f"{server_url}/v1/epsilon_pair", body)
    assert s1 == s2 == 200
    assert r1 == r2  # fixed seed: identical response
    assert len(r1["z"]) == 64 and len(r1["z_plus_eps"]) == 64
    assert 0.0 <= r1["aux_same_prob"] <= 1.0
    # sigma -> 0: images pixel-identical within float render tolerance
    _, tiny = _post(f"{server_url}/v1/epsilon_pair", {"sigma_eps": 1e-7, "seed": 1})
    a = np.array(tiny["image_a"]["raw"])
    b = np.array(tiny["image_b"]["raw"])
    assert np.max(np.abs(a - b)) < 1e-4
    assert tiny["image_a"]["image"] == tiny["image_b"]["image"]
    status, _ = _post(f"{server_url}/v1/epsilon_pair", {"sigma_eps": -1.0, "seed": 0})
    assert status == 400


def test_traverse_consistency(server_url):
    z = list(np.random.default_rng(2).normal(size=64))
    _, gen = _post(f"{server_url}/v1/generate", {"latent": z})
    _, dirs = _get(f"{server_url}/v1/directions")
    did = dirs[0]["id"]
    status, trav = _post(f"{server_url}/v1/traverse",
                         {"latent": z, "direction_id": did, "alphas": [-1.0, 0.0, 1.0]})
    assert status == 200
    assert len(trav["images"]) == 3
    assert trav["images"][1]["image"] == gen["image"]  # alpha = 0 equals /v1/generate
    status, rev = _post(f"{server_url}/v1/traverse",
                        {"latent": z, "direction_id": did, "alphas": [1.0, 0.0, -1.0]})
    assert [f["image"] for f in rev["images"]] == [f["image"] for f in trav["images"]][::-1]
    status, _ = _post(f"{server_url}/v1/traverse",
                      {"latent": z, "direction_id": "nope", "alphas": [0.0]})
    assert status == 404


def test_directions_listing_matches_file(server_url):
    status, dirs = _get(f"{server_url}/v1/directions")
    assert status == 200
    assert len(dirs) == 1
    assert dirs[0]["name"] == "brightness"
    assert dirs[0]["source"] == "svm"
    ids = [d["id"] for d in dirs]
    assert len(set(ids)) == len(ids)


def test_unknown_endpoint_404(server_url):
    status, body = _post(f"{server_url}/v1/nothing", {})
    assert status == 404


def test_config_digest_tracks_checkpoint(tmp_path):
    from ltgan import serve as srv
    corpus_src = _shapes_source()
    s1 = tr.build_trainer(TrainConfig(steps=1, warmup=0, batch=4, seed=1), NetworkSpec())
    tr.train(s1, corpus_src)
    p1 = str(tmp_path / "one.ltgn")
    tr.save_checkpoint(s1, p1)
    s2 = tr.build_trainer(TrainConfig(steps=2, warmup=0, batch=4, seed=1), NetworkSpec())
    tr.train(s2, corpus_src)
    p2 = str(tmp_path / "two.ltgn")
    tr.save_checkpoint(s2, p2)
    d1 = srv.load_session(p1).config_digest
    d1_again = srv.load_session(p1).config_digest
    d2 = srv.load_session(p2).config_digest
    assert d1 == d1_again      # same checkpoint -> same digest
    assert d1 != d2            # different checkpoint -> different digest
