"""HTTP JSON API over a frozen checkpoint.

Every endpoint is a pure function of (checkpoint, request body, declared
seed): the session never mutates, so concurrent requests are safe and
replays are byte-identical. Images are returned both as base64 PNG
(single-channel models) and as raw floats so clients can render and tests
can assert numerically.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import images as im
from . import nn, steer
from . import tensor as T
from . import trainer as tr


@dataclass
class ServeSession:
    state: tr.TrainerState
    directions: list[dict] = field(default_factory=list)
    config_digest: str = ""
    counters: dict[str, int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count(self, endpoint: str) -> None:
        with self._lock:
            self.counters[endpoint] = self.counters.get(endpoint, 0) + 1

    def direction_by_id(self, direction_id: str) -> dict | None:
        for record in self.directions:
            if record["id"] == direction_id:
                return record
        return None


def load_session(checkpoint_path: str, directions_path: str | None = None) -> ServeSession:
    state, _ = tr.load_checkpoint(checkpoint_path)
    for net in (state.g, state.d, state.a):
        net.set_requires_grad(False)  # read-only snapshot
    digest = hashlib.blake2b(digest_size=16)
    with open(checkpoint_path, "rb") as fh:
        digest.update(fh.read())
    directions = steer.load_directions(directions_path) if directions_path else []
    return ServeSession(state=state, directions=directions, config_digest=digest.hexdigest())


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _image_payload(image: np.ndarray) -> dict:
    payload = {"raw": [float(v) for v in np.asarray(image, dtype=np.float64).ravel()],
               "shape": list(image.shape)}
    if image.shape[0] == 1:
        payload["image"] = base64.b64encode(im.encode_png(image)).decode("ascii")
    return payload


def _parse_latent(session: ServeSession, body: dict, key: str = "latent") -> np.ndarray:
    latent = body.get(key)
    d = session.state.spec.latent_dim
    if not isinstance(latent, list) or len(latent) != d:
        raise ApiError(400, f"'{key}' must be a list of {d} floats")
    try:
        return np.asarray(latent, dtype=np.float32)
    except (TypeError, ValueError) as exc:
        raise ApiError(400, f"'{key}' holds non-numeric values") from exc


def _parse_class(session: ServeSession, body: dict) -> np.ndarray | None:
    state = session.state
    if "class" in body and body["class"] is not None:
        if not state.config.conditional:
            raise ApiError(400, "model is unconditional: 'class' not accepted")
        cid = body["class"]
        if not isinstance(cid, int) or not (0 <= cid < state.spec.n_classes):
            raise ApiError(400, f"'class' must be an integer in [0, {state.spec.n_classes})")
        return np.array([cid])
    if state.config.conditional:
        return np.array([0])
    return None


# ---------------------------------------------------------------------------
# endpoint implementations (pure functions of session + body)
# ---------------------------------------------------------------------------

def model_info(session: ServeSession) -> dict:
    state = session.state
    return {
        "latent_dim": state.spec.latent_dim,
        "image_shape": list(state.spec.image_shape),
        "conditional": state.config.conditional,
        "n_classes": state.spec.n_classes,
        "sigma_z": state.config.sigma_z,
        "sigma_eps": state.config.sigma_eps,
        "step": state.step,
        "config_digest": session.config_digest,
    }


def generate_endpoint(session: ServeSession, body: dict) -> dict:
    z = _parse_latent(session, body)
    classes = _parse_class(session, body)
    image = tr.generate(session.state, z[None, :], classes)[0]
    return _image_payload(image)


def traverse_endpoint(session: ServeSession, body: dict) -> dict:
    record = session.direction_by_id(str(body.get("direction_id")))
    if record is None:
        raise ApiError(404, f"unknown direction '{body.get('direction_id')}'")
    z = _parse_latent(session, body)
    alphas = body.get("alphas")
    if not isinstance(alphas, list) or not alphas:
        raise ApiError(400, "'alphas' must be a non-empty list of floats")
    classes = _parse_class(session, body)
    vector = np.asarray(record["vector"], dtype=np.float64)
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ApiError(400, f"direction '{record['id']}' is degenerate (zero vector)")
    direction = steer.Direction(record["name"], vector / norm, record["source"],
                                dict(record.get("metadata") or {}))
    strip = steer.latent_traverse(session.state, z, direction, [float(a) for a in alphas],
                                  class_id=None if classes is None else int(classes[0]))
    return {"images": [_image_payload(frame) for frame in strip],
            "alphas": [float(a) for a in alphas]}


def epsilon_pair_endpoint(session: ServeSession, body: dict) -> dict:
    state = session.state
    sigma = body.get("sigma_eps")
    if not isinstance(sigma, (int, float)) or sigma <= 0:
        raise ApiError(400, "'sigma_eps' must be > 0")
    seed = body.get("seed")
    if not isinstance(seed, int):
        raise ApiError(400, "'seed' must be an integer")
    rng = np.random.default_rng(seed)
    if body.get("latent") is not None:
        z = _parse_latent(session, body)
    else:
        z = rng.normal(0.0, state.config.sigma_z, size=state.spec.latent_dim).astype(np.float32)
    eps = rng.normal(0.0, float(sigma), size=state.spec.latent_dim).astype(np.float32)
    classes = _parse_class(session, body)
    image_a = tr.generate(state, z[None, :], classes)[0]
    image_b = tr.generate(state, (z + eps)[None, :], classes)[0]
    both = T.constant(np.stack([image_a, image_b]))
    feats = nn.discriminator_features(state.d, both).data
    delta = T.constant((feats[0] - feats[1])[None, :])
    prob = nn.auxiliary_forward(state.a, delta, delta).data
    return {
        "z": [float(v) for v in z],
        "z_plus_eps": [float(v) for v in (z + eps)],
        "image_a": _image_payload(image_a),
        "image_b": _image_payload(image_b),
        "aux_same_prob": float(prob[0, 0]),
    }


def directions_endpoint(session: ServeSession) -> list[dict]:
    # the unit vector rides along so clients can compose multi-direction
    # edits (z + sum of alpha_i v_i) and request them via /v1/generate
    return [{"id": r["id"], "name": r["name"], "source": r["source"],
             "metadata": r.get("metadata", {}), "vector": r["vector"]} for r in session.directions]


# ---------------------------------------------------------------------------
# http plumbing
# ---------------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    session: ServeSession | None = None

    def log_message(self, *args):  # quiet by default
        pass

    def _send(self, status: int, payload) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            parsed = json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"invalid JSON body: {exc}") from exc
        if not isinstance(parsed, dict):
            raise ApiError(400, "body must be a JSON object")
        return parsed

    def _dispatch(self, method: str) -> None:
        session = self.session
        try:
            if session is None:
                raise ApiError(503, "no checkpoint loaded")
            if method == "GET" and self.path == "/v1/model/info":
                session.count("model_info")
                self._send(200, model_info(session))
            elif method == "GET" and self.path == "/v1/directions":
                session.count("directions")
                self._send(200, directions_endpoint(session))
            elif method == "POST" and self.path == "/v1/generate":
                session.count("generate")
                self._send(200, generate_endpoint(session, self._body()))
            elif method == "POST" and self.path == "/v1/traverse":
                session.count("traverse")
                self._send(200, traverse_endpoint(session, self._body()))
            elif method == "POST" and self.path == "/v1/epsilon_pair":
                session.count("epsilon_pair")
                self._send(200, epsilon_pair_endpoint(session, self._body()))
            else:
                raise ApiError(404, f"no such endpoint: {method} {self.path}")
        except ApiError as exc:
            self._send(exc.status, {"error": exc.message})
        except Exception as exc:  # pragma: no cover - defensive
            self._send(500, {"error": f"internal error: {exc}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()


def build_server(session: ServeSession, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("SessionHandler", (_Handler,), {"session": session})
    return ThreadingHTTPServer((host, port), handler)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ltgan-serve", description="serve a frozen checkpoint over HTTP")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--directions", default=None)
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)
    session = load_session(args.checkpoint, args.directions)
    server = build_server(session, args.host, args.port)
    print(f"serving {args.checkpoint} on http://{args.host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
