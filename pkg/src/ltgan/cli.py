"""Command-line entry points: train, eval, ablate, steer, serve, dataset.

Configuration resolves in layers: dataclass defaults, data-kind defaults,
the --config file, then dotted CLI overrides (`--train.seed 7`). Unknown
keys exit with code 2 naming the key. Every run with an output directory
writes a resolved-config snapshot next to its artifacts, and all outputs
are written atomically.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import datasets as ds
from . import evaluation as ev
from . import images as im
from . import steer as steermod
from . import trainer as tr
from .config import ConfigError, TrainConfig
from .nn import NetworkSpec

RING_NET_DEFAULTS = {
    "net.latent_dim": "8",
    "net.image_shape": "2,1,1",
    "net.g_hidden": "64,64",
    "net.d_hidden": "64,64",
    "net.feature_tap_index": "1",
    "net.tap_shape": "16,2,2",
}

CONDITIONAL_NET_DEFAULTS = {"net.n_classes": "2", "net.embed_dim": "8"}

DATA_DEFAULTS = {"data.kind": "ring", "data.n_train": "4096", "data.n_test": "1024", "data.seed": "0"}

EXTRACTOR_SEED = 0


def resolve_items(config_path: str | None, overrides: dict[str, str]) -> dict[str, str]:
    known = cfgmod.known_keys()
    items: dict[str, str] = {}
    items.update(cfgmod.dataclass_items("train", TrainConfig()))
    items.update(DATA_DEFAULTS)
    file_items = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            file_items = cfgmod.parse_config_text(fh.read())
    for layer in (file_items, overrides):
        for key, value in layer.items():
            if key not in known:
                raise ConfigError(f"unknown key `{key}`")
            items[key] = value
    kind = items.get("data.kind", "ring")
    if kind not in ("ring", "shapes"):
        raise ConfigError(f"data.kind must be ring | shapes, got `{kind}`")
    net_defaults = dict(RING_NET_DEFAULTS) if kind == "ring" else {}
    if items.get("train.conditional") == "true":
        if kind != "shapes":
            raise ConfigError("train.conditional requires data.kind = shapes")
        net_defaults.update(CONDITIONAL_NET_DEFAULTS)
    for key, value in net_defaults.items():
        items.setdefault(key, value)
    items.update(cfgmod.dataclass_items("net", cfgmod.dataclass_from_items(NetworkSpec, "net", items)))
    return items


@dataclass
class Experiment:
    items: dict[str, str]
    cfg: TrainConfig
    spec: NetworkSpec
    source: object
    eval_images: np.ndarray
    ring_spec: ds.RingSpec | None = None
    train_corpus: ds.ShapesCorpus | None = None
    test_corpus: ds.ShapesCorpus | None = None

    @property
    def extras(self) -> dict[str, str]:
        return {k: v for k, v in self.items.items() if not k.startswith(("train.", "net."))}

    def extractor(self) -> ev.ProxyFeatureExtractor:
        c, h, w = self.spec.image_shape
        return ev.build_extractor(c * h * w, EXTRACTOR_SEED)

    def eval_pack(self) -> ev.EvalPack:
        return ev.make_eval_pack(self.eval_images, self.extractor(), self.cfg.fid_samples)


def build_experiment(items: dict[str, str]) -> Experiment:
    cfg = cfgmod.dataclass_from_items(TrainConfig, "train", items)
    cfg.validate()
    spec = cfgmod.dataclass_from_items(NetworkSpec, "net", items)
    data_seed = int(items["data.seed"])
    kind = items["data.kind"]
    if kind == "ring":
        ring_items = {k: v for k, v in items.items() if k.startswith("ring.")}
        ring_items["ring.seed"] = str(data_seed)  # data.seed owns the sampling stream
        ring_spec = cfgmod.dataclass_from_items(ds.RingSpec, "ring", ring_items)
        n_eval = max(1024, cfg.fid_samples)
        eval_images = ds.sample_ring(ring_spec, np.random.default_rng(np.random.SeedSequence((data_seed, 1))),
                                     n_eval).reshape(n_eval, 2, 1, 1)
        return Experiment(items, cfg, spec, ds.RingSource(ring_spec), eval_images, ring_spec=ring_spec)
    shapes_items = {k: v for k, v in items.items() if k.startswith("shapes.")}
    shapes_spec = cfgmod.dataclass_from_items(ds.ShapesSpec, "shapes", shapes_items)
    n_train, n_test = int(items["data.n_train"]), int(items["data.n_test"])
    train_corpus = ds.build_corpus(shapes_spec, n_train,
                                   np.random.default_rng(np.random.SeedSequence((data_seed, 0))))
    test_corpus = ds.build_corpus(shapes_spec, n_test,
                                  np.random.default_rng(np.random.SeedSequence((data_seed, 1))))
    return Experiment(items, cfg, spec, ds.ShapesSource(train_corpus, seed=data_seed),
                      test_corpus.images, train_corpus=train_corpus, test_corpus=test_corpus)


def _write_snapshot(out_dir: str, items: dict[str, str]) -> None:
    ckpt.atomic_write_text(os.path.join(out_dir, "resolved.cfg"), cfgmod.canonical_lines(items))


def _collect_overrides(unknown: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    i = 0
    while i < len(unknown):
        token = unknown[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"unexpected argument `{token}`")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            i += 1
            if i >= len(unknown):
                raise ConfigError(f"missing value for `--{key}`")
            value = unknown[i]
        overrides[key] = value
        i += 1
    return overrides


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args, overrides) -> int:
    items = resolve_items(args.config, overrides)
    if args.seed is not None:
        items["train.seed"] = str(args.seed)
    exp = build_experiment(items)
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, items)
    state = tr.build_trainer(exp.cfg, exp.spec)
    pack = exp.eval_pack() if exp.cfg.eval_every else None
    tr.train(state, exp.source, out_dir=args.out, eval_pack=pack, extras=exp.extras)
    print(f"trained {exp.cfg.steps} generator steps -> {os.path.join(args.out, 'ckpt-final.ltgn')}")
    return 0


def _load_for_eval(checkpoint_path: str) -> tuple[tr.TrainerState, Experiment]:
    state, extras = tr.load_checkpoint(checkpoint_path)
    items = dict(extras)
    items.update(cfgmod.dataclass_items("train", state.config))
    items.update(cfgmod.dataclass_items("net", state.spec))
    exp = build_experiment(items)
    return state, exp


def cmd_eval(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown key `{next(iter(overrides))}`")
    state, exp = _load_for_eval(args.checkpoint)
    seed = args.seed if args.seed is not None else 0
    lines: list[str] = []
    step = state.step

    if args.metric == "fid":
        value = ev.training_fid(state, exp.eval_pack())
        lines.append(f"{step} fid {format(value, '.17g')}")
    elif args.metric == "modes":
        if exp.ring_spec is None:
            raise ConfigError("modes metric needs a ring checkpoint")
        covered, kl = ev.mode_coverage(state, exp.ring_spec, args.samples,
                                       np.random.default_rng(seed))
        lines.append(f"{step} modes_covered {covered}")
        lines.append(f"{step} mode_kl {format(kl, '.17g')}")
    elif args.metric == "aux-sweep":
        sigmas = [float(s) for s in args.sigmas.split(",")]
        sweep = ev.aux_accuracy_sweep(state, sigmas, n_pairs=args.samples, seed=seed)
        for sigma, acc in sweep.items():
            lines.append(f"{step} aux_acc@{format(sigma, 'g')} {format(acc, '.17g')}")
    elif args.metric == "cas":
        if exp.test_corpus is None:
            raise ConfigError("cas metric needs a shapes checkpoint")
        value = ev.cas_toy(state, exp.test_corpus, seed=seed)
        lines.append(f"{step} cas {format(value, '.17g')}")
        lines.append(f"{step} cas_real_reference "
                     f"{format(ev.cas_real_reference(exp.train_corpus, exp.test_corpus, seed=seed), '.17g')}")
    elif args.metric == "ppl":
        value = steermod.perceptual_path_length(state, exp.extractor(), n_paths=args.samples,
                                                rng=np.random.default_rng(seed))
        lines.append(f"{step} ppl {format(value, '.17g')}")
    elif args.metric == "correlation":
        if exp.test_corpus is None:
            raise ConfigError("correlation metric needs a shapes checkpoint")
        rep = steermod.attribute_correlation(state, n_samples=max(5000, args.samples),
                                             rng=np.random.default_rng(seed))
        for i, a in enumerate(rep.names):
            for j, b in enumerate(rep.names):
                if j > i:
                    lines.append(f"{step} corr.{a}.{b} {format(rep.matrix[i, j], '.17g')}")
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown metric `{args.metric}`")

    report = "\n".join(lines) + "\n"
    if args.out:
        ckpt.atomic_write_text(args.out, report)
    sys.stdout.write(report)
    return 0


def cmd_ablate(args, overrides) -> int:
    items = resolve_items(args.config, overrides)
    if args.seed is not None:
        items["train.seed"] = str(args.seed)
    exp = build_experiment(items)
    values = [float(v) for v in args.values.split(",")]
    seeds = tuple(range(int(items["train.seed"]), int(items["train.seed"]) + args.seeds))
    table = ev.ablation_harness(exp.cfg, exp.spec, exp.source, exp.eval_pack(),
                                args.axis, values, seeds=seeds, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    _write_snapshot(args.out, items)
    ckpt.atomic_write_text(os.path.join(args.out, "cells.csv"), table.cells_csv())
    ckpt.atomic_write_text(os.path.join(args.out, "summary.csv"), table.summary_csv())
    sys.stdout.write(table.summary_csv())
    return 0


def cmd_steer(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown key `{next(iter(overrides))}`")
    state, exp = _load_for_eval(args.checkpoint)
    seed = args.seed if args.seed is not None else 0
    if args.steer_cmd == "fit":
        dataset = steermod.collect_attribute_dataset(state, args.attribute, n_total=args.samples,
                                                     k=args.extremes, rng=np.random.default_rng(seed))
        direction, acc = steermod.fit_linear_boundary(dataset)
        new_id = steermod.append_direction(args.directions, direction)
        print(f"fit boundary '{args.attribute}' -> id {new_id}, eval accuracy {acc:.4f}")
        return 0
    if args.steer_cmd == "learn-transform":
        direction = steermod.learn_transform_direction(state, args.transform,
                                                       rng=np.random.default_rng(seed))
        new_id = steermod.append_direction(args.directions, direction)
        print(f"learned transform '{args.transform}' -> id {new_id}, "
              f"loss {direction.metadata['final_loss']:.6f} "
              f"(baseline {direction.metadata['baseline_loss']:.6f})")
        return 0
    if args.steer_cmd == "traverse":
        records = steermod.load_directions(args.directions)
        record = next((r for r in records if r["id"] == args.direction_id), None)
        if record is None:
            raise ConfigError(f"unknown key `{args.direction_id}` in {args.directions}")
        vector = np.asarray(record["vector"])
        direction = steermod.Direction(record["name"], vector / np.linalg.norm(vector), record["source"])
        alphas = [float(a) for a in args.alphas.split(",")]
        rng = np.random.default_rng(seed)
        strips = []
        for _ in range(args.rows):
            z = rng.normal(0.0, state.config.sigma_z, size=state.spec.latent_dim).astype(np.float32)
            strips.append(steermod.latent_traverse(state, z, direction, alphas))
        grid = im.mosaic(np.concatenate(strips), cols=len(alphas))
        data = im.encode_png(grid)
        tmp = args.out + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, args.out)
        print(f"wrote {args.rows}x{len(alphas)} traversal mosaic -> {args.out}")
        return 0
    raise ConfigError(f"unknown steer subcommand `{args.steer_cmd}`")  # pragma: no cover


def cmd_dataset(args, overrides) -> int:
    items = resolve_items(args.config, overrides)
    if items["data.kind"] != "shapes":
        raise ConfigError("dataset export supports data.kind = shapes")
    exp = build_experiment(items)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    ds.save_corpus(args.out, exp.train_corpus)
    test_path = os.path.splitext(args.out)[0] + "-test" + os.path.splitext(args.out)[1]
    ds.save_corpus(test_path, exp.test_corpus)
    _write_snapshot(out_dir, items)
    print(f"wrote {len(exp.train_corpus)} train renders -> {args.out}")
    print(f"wrote {len(exp.test_corpus)} test renders -> {test_path}")
    return 0


def cmd_serve(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown key `{next(iter(overrides))}`")
    from . import serve as srv
    argv = ["--checkpoint", args.checkpoint, "--port", str(args.port)]
    if args.directions:
        argv += ["--directions", args.directions]
    return srv.main(argv)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltgan",
                                     description="desk-scale GAN lab with a latent-transformation pretext task")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override train.seed")
        p.add_argument("--jobs", type=int, default=1)
        if out_required:
            p.add_argument("--out", required=True)
        else:
            p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="run a training experiment")
    common(p, out_required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("metric", choices=["fid", "modes", "aux-sweep", "cas", "ppl", "correlation"])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--sigmas", default="0.05,0.5,0.9")
    common(p)

    p = sub.add_parser("ablate", help="hyper-parameter grid over seeds")
    p.add_argument("--axis", choices=["sigma_eps", "lam"], required=True)
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--seeds", type=int, default=3)
    common(p, out_required=True)

    p = sub.add_parser("steer", help="boundaries, traversals, transform directions")
    steer_sub = p.add_subparsers(dest="steer_cmd", required=True)
    pf = steer_sub.add_parser("fit")
    pf.add_argument("--checkpoint", required=True)
    pf.add_argument("--attribute", required=True)
    pf.add_argument("--directions", required=True)
    pf.add_argument("--samples", type=int, default=20_000)
    pf.add_argument("--extremes", type=int, default=2_000)
    common(pf)
    pt = steer_sub.add_parser("traverse")
    pt.add_argument("--checkpoint", required=True)
    pt.add_argument("--directions", required=True)
    pt.add_argument("--direction-id", required=True)
    pt.add_argument("--alphas", default="-3,-2,-1,0,1,2,3")
    pt.add_argument("--rows", type=int, default=4)
    common(pt, out_required=True)
    pl = steer_sub.add_parser("learn-transform")
    pl.add_argument("--checkpoint", required=True)
    pl.add_argument("--transform", choices=list(steermod.TRANSFORMS), required=True)
    pl.add_argument("--directions", required=True)
    common(pl)

    p = sub.add_parser("serve", help="HTTP JSON API over a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--directions", default=None)
    p.add_argument("--port", type=int, default=8765)
    common(p)

    p = sub.add_parser("dataset", help="render and export a shapes corpus")
    common(p, out_required=True)

    return parser


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "steer": cmd_steer,
    "serve": cmd_serve,
    "dataset": cmd_dataset,
}


def main(argv=None) -> int:
    parser = _parser()
    args, unknown = parser.parse_known_args(argv)
    try:
        overrides = _collect_overrides(unknown)
        return COMMANDS[args.command](args, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ds.DataError, ev.EvalError, steermod.SteerError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
