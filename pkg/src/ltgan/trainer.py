"""Alternating D and G/A training with warmup, checkpointing and metrics.

Every randomness role (data, z, eps, shuffle, cls, rot, eval) owns its own
PCG64 stream spawned from the config seed, so toggling the pairing weight
or the objective never shifts the latent draws of another role. The G/A
update shares one forward pass: the auxiliary parameters take the
gradient of the pairing loss alone while the generator takes the gradient
of the combined objective, via two reverse sweeps over the same tape.

During a G step all of D (parameters and power-iteration buffers) is a
frozen snapshot; gradients still flow through E to the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import nn, objectives as obj
from . import tensor as T
from .config import TrainConfig
from .nn import NetworkSpec

ROLES = ("data", "z", "eps", "shuffle", "cls", "rot", "eval")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_checkpoint: str | None):
        super().__init__(f"non-finite loss at generator step {step}"
                         + (f"; last good checkpoint: {last_checkpoint}" if last_checkpoint else ""))
        self.step = step
        self.last_checkpoint = last_checkpoint


@dataclass
class MetricLog:
    records: list[tuple[int, str, float]] = field(default_factory=list)

    def add(self, step: int, name: str, value: float) -> None:
        self.records.append((step, name, float(value)))

    def series(self, name: str) -> list[tuple[int, float]]:
        return [(s, v) for s, n, v in self.records if n == name]

    def last(self, name: str) -> float | None:
        series = self.series(name)
        return series[-1][1] if series else None

    def lines(self) -> str:
        return "".join(f"{s} {n} {format(v, '.17g')}\n" for s, n, v in self.records)

    def save(self, path: str) -> None:
        ckpt.atomic_write_text(path, self.lines())


@dataclass
class TrainerState:
    config: TrainConfig
    spec: NetworkSpec
    g: nn.NetworkState
    d: nn.NetworkState
    a: nn.NetworkState
    adam_g: T.AdamState
    adam_d: T.AdamState
    adam_a: T.AdamState
    rngs: dict[str, np.random.Generator]
    step: int = 0
    d_updates: int = 0

    def digests(self) -> dict[str, str]:
        return {"g": nn.state_digest(self.g), "d": nn.state_digest(self.d), "a": nn.state_digest(self.a)}


def build_trainer(cfg: TrainConfig, spec: NetworkSpec) -> TrainerState:
    cfg.validate()
    if cfg.conditional and not spec.conditional:
        raise cfgmod.ConfigError("conditional training needs net.n_classes and net.embed_dim")
    children = np.random.SeedSequence(cfg.seed).spawn(len(ROLES) + 3)
    rngs = {role: np.random.Generator(np.random.PCG64(child))
            for role, child in zip(ROLES, children)}
    g = nn.build_generator(spec, children[len(ROLES)])
    d = nn.build_discriminator(spec, children[len(ROLES) + 1])
    a = nn.build_auxiliary(spec, children[len(ROLES) + 2])
    return TrainerState(
        config=cfg, spec=spec, g=g, d=d, a=a,
        adam_g=T.AdamState(cfg.alpha_g, cfg.beta1, cfg.beta2),
        adam_d=T.AdamState(cfg.alpha_d, cfg.beta1, cfg.beta2),
        adam_a=T.AdamState(cfg.alpha_a, cfg.aux_beta1, cfg.aux_beta2),
        rngs=rngs,
    )


def generate(state: TrainerState, z: np.ndarray, classes: np.ndarray | None = None) -> np.ndarray:
    """Frozen-generator inference (no tape)."""
    out = nn.generator_forward(state.g, T.constant(np.asarray(z, dtype=np.float32)), classes)
    return out.data


def sample_images(state: TrainerState, n: int, rng: np.random.Generator,
                  classes: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    z = rng.normal(0.0, state.config.sigma_z, size=(n, state.spec.latent_dim)).astype(np.float32)
    if state.config.conditional and classes is None:
        classes = rng.integers(0, state.spec.n_classes, size=n)
    return generate(state, z, classes), classes


def _named_grads(params: dict[str, T.Tensor], grad_map: dict[T.Tensor, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: grad_map[p] for name, p in params.items()}


def _lt_active(state: TrainerState) -> bool:
    return state.config.objective == "lt" and state.step >= state.config.warmup


def _rot_active(state: TrainerState) -> bool:
    return state.config.objective == "rotation-ss" and state.step >= state.config.warmup


def train_step_d(state: TrainerState, real_images: np.ndarray,
                 real_classes: np.ndarray | None = None) -> obj.LossReport:
    cfg = state.config
    spec = state.spec
    if real_images.shape[1:] != spec.image_shape:
        raise T.ShapeError(f"real batch shape {real_images.shape[1:]} != spec {spec.image_shape}")
    b = cfg.batch
    n_real = real_images.shape[0]
    with_eps = cfg.objective == "lt" and not (cfg.warmup_covers_d and state.step < cfg.warmup)

    if with_eps:
        z = state.rngs["z"].normal(0.0, cfg.sigma_z, size=(b, spec.latent_dim)).astype(np.float32)
        eps = state.rngs["eps"].normal(0.0, cfg.sigma_eps, size=(b, spec.latent_dim)).astype(np.float32)
        codes = np.concatenate([z, z + eps])
        fake_classes = None
        if cfg.conditional:
            cls = state.rngs["cls"].integers(0, spec.n_classes, size=b)
            fake_classes = np.concatenate([cls, cls])
    else:
        codes = state.rngs["z"].normal(0.0, cfg.sigma_z, size=(2 * b, spec.latent_dim)).astype(np.float32)
        fake_classes = state.rngs["cls"].integers(0, spec.n_classes, size=2 * b) if cfg.conditional else None

    state.g.set_requires_grad(False)
    try:
        fakes = nn.generator_forward(state.g, T.constant(codes), fake_classes).data
    finally:
        state.g.set_requires_grad(True)

    state.a.set_requires_grad(False)
    try:
        with T.Tape() as tape:
            imgs = T.constant(np.concatenate([real_images, fakes]))
            all_classes = None
            if cfg.conditional:
                all_classes = np.concatenate([real_classes, fake_classes])
            logits, _ = nn.discriminator_forward(state.d, imgs, all_classes, update_sn=True)
            d_real = T.take(logits, slice(0, n_real))
            d_fake = T.take(logits, slice(n_real, n_real + codes.shape[0]))
            if cfg.loss == "hinge":
                loss = obj.hinge_d_loss(d_real, d_fake)
            else:
                loss, _ = obj.nonsat_losses(d_real, d_fake)
            if _rot_active(state):
                rot = obj.rotation_ss_loss(state.d, T.constant(real_images), state.rngs["rot"])
                loss = T.add(loss, T.mul(T.constant(np.float32(cfg.lam)), rot))
            grads = T.backward(loss, wrt=list(state.d.params.values()))
    finally:
        state.a.set_requires_grad(True)
    T.adam_update(state.d.params, _named_grads(state.d.params, grads), state.adam_d)
    state.d_updates += 1
    return obj.LossReport(d_loss=loss.item(), tape_ops=len(tape))


def train_step_g(state: TrainerState) -> obj.LossReport:
    cfg = state.config
    spec = state.spec
    b = cfg.batch
    state.d.set_requires_grad(False)
    try:
        with T.Tape() as tape:
            if _lt_active(state):
                batch = obj.make_latent_batch(
                    b, spec.latent_dim, cfg.sigma_z, cfg.sigma_eps,
                    state.rngs["z"], eps_rng=state.rngs["eps"], shuffle_rng=state.rngs["shuffle"])
                classes = state.rngs["cls"].integers(0, spec.n_classes, size=2 * b) if cfg.conditional else None
                res = obj.ltgan_objective(state.g, state.d, state.a, batch, cfg.lam,
                                          class_ids=classes, loss_family=cfg.loss)
                grads_a = T.backward(res.aux, wrt=list(state.a.params.values()))
                grads_g = T.backward(res.total, wrt=list(state.g.params.values()))
                T.adam_update(state.a.params, _named_grads(state.a.params, grads_a), state.adam_a)
                T.adam_update(state.g.params, _named_grads(state.g.params, grads_g), state.adam_g)
                report = res.report(cfg.lam)
            else:
                z = state.rngs["z"].normal(0.0, cfg.sigma_z, size=(2 * b, spec.latent_dim)).astype(np.float32)
                classes = state.rngs["cls"].integers(0, spec.n_classes, size=2 * b) if cfg.conditional else None
                imgs = nn.generator_forward(state.g, T.constant(z), classes)
                logits, _ = nn.discriminator_forward(state.d, imgs, classes, update_sn=False)
                adv = obj.hinge_g_loss(logits) if cfg.loss == "hinge" else obj.nonsat_g_loss(logits)
                total = adv
                if _rot_active(state):
                    rot = obj.rotation_ss_loss(state.d, imgs, state.rngs["rot"])
                    total = T.add(adv, T.mul(T.constant(np.float32(cfg.lam)), rot))
                grads_g = T.backward(total, wrt=list(state.g.params.values()))
                T.adam_update(state.g.params, _named_grads(state.g.params, grads_g), state.adam_g)
                report = obj.LossReport(g_adv=adv.item(), total_g=total.item())
    finally:
        state.d.set_requires_grad(True)
    report.tape_ops = len(tape)
    state.step += 1
    return report


def train(state: TrainerState, source, out_dir: str | None = None,
          eval_pack=None, extras: dict[str, str] | None = None,
          log: MetricLog | None = None) -> MetricLog:
    """Run to config.steps, emitting metrics and periodic checkpoints."""
    import os

    from . import evaluation

    cfg = state.config
    log = log if log is not None else MetricLog()
    last_ckpt: str | None = None
    while state.step < cfg.steps:
        clamped_before = obj.clamp_events()
        try:
            for _ in range(cfg.d_step):
                images, classes = source.batch(state.d_updates, 2 * cfg.batch)
                rep_d = train_step_d(state, images, classes if cfg.conditional else None)
            rep_g = train_step_g(state)
        except T.NonFiniteError as exc:
            raise TrainingDiverged(state.step, last_ckpt) from exc
        if cfg.loss == "nonsat":
            log.add(state.step, "clamped", obj.clamp_events() - clamped_before)
        step = state.step
        values = [("d_loss", rep_d.d_loss), ("g_adv", rep_g.g_adv), ("total_g", rep_g.total_g)]
        if rep_g.aux is not None:
            values.append(("aux", rep_g.aux))
        for name, value in values:
            if value is not None and not np.isfinite(value):
                raise TrainingDiverged(step, last_ckpt)
            log.add(step, name, value)
        if eval_pack is not None and cfg.eval_every and step % cfg.eval_every == 0:
            log.add(step, "fid", evaluation.training_fid(state, eval_pack))
            if cfg.objective == "lt":
                acc_rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence((cfg.seed, step, 7))))
                log.add(step, "aux_acc", evaluation.aux_accuracy_once(
                    state, cfg.sigma_eps, n_pairs=256, rng=acc_rng))
        if out_dir and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            last_ckpt = os.path.join(out_dir, f"ckpt-{step:06d}.ltgn")
            save_checkpoint(state, last_ckpt, extras)
    if out_dir:
        final = os.path.join(out_dir, "ckpt-final.ltgn")
        save_checkpoint(state, final, extras)
        log.save(os.path.join(out_dir, "metrics.log"))
    return log


# ---------------------------------------------------------------------------
# checkpoint composition
# ---------------------------------------------------------------------------

_RESERVED_PREFIXES = ("train.", "net.", "state.")


def _rng_to_text(gen: np.random.Generator) -> str:
    s = gen.bit_generator.state
    return ",".join(str(x) for x in (s["state"]["state"], s["state"]["inc"],
                                     s["has_uint32"], s["uinteger"]))


def _rng_from_text(text: str) -> np.random.Generator:
    a, b, c, d = (int(x) for x in text.split(","))
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = {"bit_generator": "PCG64", "state": {"state": a, "inc": b},
                               "has_uint32": c, "uinteger": d}
    return gen


def save_checkpoint(state: TrainerState, path: str, extras: dict[str, str] | None = None) -> None:
    items: dict[str, str] = {}
    items.update(cfgmod.dataclass_items("train", state.config))
    items.update(cfgmod.dataclass_items("net", state.spec))
    items["state.step"] = str(state.step)
    items["state.d_updates"] = str(state.d_updates)
    for role, gen in state.rngs.items():
        items[f"state.rng.{role}"] = _rng_to_text(gen)
    tensors: dict[str, np.ndarray] = {}
    for role, net, adam in (("g", state.g, state.adam_g), ("d", state.d, state.adam_d),
                            ("a", state.a, state.adam_a)):
        items[f"state.adam_{role}.t"] = str(adam.t)
        for name, p in net.params.items():
            tensors[f"{role}/{name}"] = p.data
        for name, m in adam.m.items():
            tensors[f"adam_{role}/m/{name}"] = m
            tensors[f"adam_{role}/v/{name}"] = adam.v[name]
    for name, sn in state.d.sn.items():
        tensors[f"sn/{name}/u"] = sn.u
        tensors[f"sn/{name}/v"] = sn.v
    if extras:
        for key, value in extras.items():
            if key.startswith(_RESERVED_PREFIXES):
                raise cfgmod.ConfigError(f"extra checkpoint key '{key}' collides with a reserved namespace")
            items[key] = str(value)
    ckpt.write_payload(path, cfgmod.canonical_lines(items), tensors)


def load_checkpoint(path: str) -> tuple[TrainerState, dict[str, str]]:
    text, tensors = ckpt.read_payload(path)
    items = cfgmod.parse_config_text(text)
    cfg = cfgmod.dataclass_from_items(TrainConfig, "train", items)
    spec = cfgmod.dataclass_from_items(NetworkSpec, "net", items)
    state = build_trainer(cfg, spec)
    state.step = int(items["state.step"])
    state.d_updates = int(items["state.d_updates"])
    for role in ROLES:
        state.rngs[role] = _rng_from_text(items[f"state.rng.{role}"])
    for role, net, adam in (("g", state.g, state.adam_g), ("d", state.d, state.adam_d),
                            ("a", state.a, state.adam_a)):
        adam.t = int(items[f"state.adam_{role}.t"])
        for name, p in net.params.items():
            key = f"{role}/{name}"
            if key not in tensors:
                raise ckpt.CheckpointError(f"{path}: missing tensor record '{key}'")
            if tensors[key].shape != p.data.shape:
                raise ckpt.CheckpointError(f"{path}: tensor '{key}' has shape {tensors[key].shape}, "
                                           f"expected {p.data.shape}")
            p.data = tensors[key]
        for name in net.params:
            mkey = f"adam_{role}/m/{name}"
            if mkey in tensors:
                adam.m[name] = tensors[mkey]
                adam.v[name] = tensors[f"adam_{role}/v/{name}"]
    for name, sn in state.d.sn.items():
        sn.u = tensors[f"sn/{name}/u"]
        sn.v = tensors[f"sn/{name}/v"]
        sn.sigma = float(sn.u @ state.d.params[name].data @ sn.v)
    extras = {k: v for k, v in items.items() if not k.startswith(_RESERVED_PREFIXES)}
    return state, extras
