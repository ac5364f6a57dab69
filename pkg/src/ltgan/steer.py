"""Latent-space analysis: linear attribute boundaries, traversal,
attribute correlation, perceptual path length and image-space transform
direction fitting.

Boundaries are fit by an in-repo hinge + L2 subgradient solver (step size
1 / (reg * t)); the planted-boundary recovery test validates it. All
analyses are read-only over frozen checkpoints.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import datasets as ds
from . import nn
from . import tensor as T


class SteerError(ValueError):
    pass


@dataclass
class Direction:
    """Unit vector in latent space with fit metadata."""

    name: str
    vector: np.ndarray
    source: str                      # "svm" | "transform-fit"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        norm = np.linalg.norm(self.vector)
        if not self.metadata.get("degenerate") and abs(norm - 1.0) > 1e-9:
            raise SteerError(f"direction '{self.name}' is not unit norm ({norm})")


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise SteerError("cannot normalize a zero vector")
    return v / n


# ---------------------------------------------------------------------------
# attribute boundary datasets
# ---------------------------------------------------------------------------

@dataclass
class BoundaryDataset:
    attribute: str
    train_z: np.ndarray
    train_y: np.ndarray   # +1 / -1
    eval_z: np.ndarray
    eval_y: np.ndarray
    k: int


def _oracle_scores(state, attribute: str, n_total: int, rng: np.random.Generator,
                   chunk: int = 512) -> tuple[np.ndarray, np.ndarray, int]:
    from . import trainer

    if attribute not in ds.ATTRIBUTE_NAMES:
        raise SteerError(f"attribute '{attribute}' is not oracle-measurable "
                         f"(choose from {ds.ATTRIBUTE_NAMES})")
    shapes_spec = ds.ShapesSpec(size=state.spec.image_shape[1])
    codes = np.empty((n_total, state.spec.latent_dim), dtype=np.float32)
    scores = np.empty(n_total, dtype=np.float64)
    nulls = 0
    for lo in range(0, n_total, chunk):
        hi = min(lo + chunk, n_total)
        z = rng.normal(0.0, state.config.sigma_z, size=(hi - lo, state.spec.latent_dim)).astype(np.float32)
        classes = rng.integers(0, state.spec.n_classes, size=hi - lo) if state.config.conditional else None
        images = trainer.generate(state, z, classes)
        codes[lo:hi] = z
        for i, img in enumerate(images):
            m = ds.measure_attributes(img, shapes_spec, classify=False)
            if not m.valid:
                nulls += 1
                scores[lo + i] = np.nan
            else:
                scores[lo + i] = getattr(m, attribute)
    return codes, scores, nulls


def collect_attribute_dataset(state, attribute: str, n_total: int = 20_000,
                              k: int = 2_000, rng: np.random.Generator | None = None,
                              train_fraction: float = 0.7) -> BoundaryDataset:
    """Score n_total generated samples with the oracle, keep the top-k and
    bottom-k extremes, and split 70/30 into train/eval (balanced)."""
    import warnings

    rng = rng if rng is not None else np.random.default_rng(0)
    codes, scores, nulls = _oracle_scores(state, attribute, n_total, rng)
    if nulls > 0.5 * n_total:
        raise SteerError(f"{nulls}/{n_total} generations had no measurable foreground")
    if nulls > 0.1 * n_total:
        warnings.warn(f"{nulls}/{n_total} null-attribute generations", RuntimeWarning)
    ok = np.where(np.isfinite(scores))[0]
    if len(ok) < 2 * k:
        raise SteerError(f"only {len(ok)} scored samples for top/bottom {k}")
    order = ok[np.argsort(scores[ok])]
    bottom, top = order[:k], order[-k:]

    def split(idx):
        shuffled = idx[rng.permutation(len(idx))]
        n_train = int(round(train_fraction * len(idx)))
        return shuffled[:n_train], shuffled[n_train:]

    top_tr, top_ev = split(top)
    bot_tr, bot_ev = split(bottom)
    train_z = np.concatenate([codes[top_tr], codes[bot_tr]])
    train_y = np.concatenate([np.ones(len(top_tr)), -np.ones(len(bot_tr))])
    eval_z = np.concatenate([codes[top_ev], codes[bot_ev]])
    eval_y = np.concatenate([np.ones(len(top_ev)), -np.ones(len(bot_ev))])
    return BoundaryDataset(attribute, train_z, train_y, eval_z, eval_y, k)


# ---------------------------------------------------------------------------
# linear boundary fitting (hinge + L2 subgradient)
# ---------------------------------------------------------------------------

def fit_linear_boundary(dataset: BoundaryDataset, epochs: int = 20, reg: float = 1e-3,
                        seed: int = 0) -> tuple[Direction, float]:
    """Max-margin linear boundary; returns the unit normal and held-out
    accuracy. The returned solution is the tail-averaged iterate (average
    over the second half of updates), which removes most of the
    subgradient noise. Flags non-convergence when train accuracy stays
    near chance."""
    z, y = dataset.train_z.astype(np.float64), dataset.train_y.astype(np.float64)
    n, d = z.shape
    balance = abs(float(y.mean()))
    if balance > 0.01:
        raise SteerError(f"boundary dataset is unbalanced (mean label {y.mean():+.3f})")
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    t = 0
    w_sum = np.zeros(d)
    b_sum = 0.0
    count = 0
    tail_start = epochs * n // 2
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (reg * t)
            if y[i] * (z[i] @ w + b) < 1.0:
                w = (1.0 - eta * reg) * w + eta * y[i] * z[i]
                b += eta * y[i]
            else:
                w = (1.0 - eta * reg) * w
            if t > tail_start:
                w_sum += w
                b_sum += b
                count += 1
    w = w_sum / count
    b = b_sum / count

    def accuracy(zz, yy):
        return float((np.sign(zz @ w + b) == yy).mean())

    train_acc = accuracy(z, y)
    eval_acc = accuracy(dataset.eval_z.astype(np.float64), dataset.eval_y.astype(np.float64))
    meta = {"attribute": dataset.attribute, "train_accuracy": train_acc,
            "eval_accuracy": eval_acc, "bias": float(b),
            "converged": train_acc >= 0.5 + 0.05}
    return Direction(dataset.attribute, _unit(w), "svm", meta), eval_acc


# ---------------------------------------------------------------------------
# traversal
# ---------------------------------------------------------------------------

def latent_traverse(state, z: np.ndarray, direction: Direction, alphas,
                    class_id: int | None = None) -> np.ndarray:
    """G(z + alpha * v) for each alpha, in the given order.

    Each code runs as its own batch: BLAS does not guarantee bit-identical
    rows across batch sizes, and alpha = 0 must reproduce G(z) exactly.
    """
    from . import trainer

    z = np.asarray(z, dtype=np.float32).reshape(-1)
    if z.shape[0] != state.spec.latent_dim:
        raise SteerError(f"latent has length {z.shape[0]}, expected {state.spec.latent_dim}")
    vec = direction.vector.astype(np.float32)
    classes = None
    if state.config.conditional:
        classes = np.full(1, 0 if class_id is None else class_id)
    frames = [trainer.generate(state, (z + np.float32(alpha) * vec)[None, :], classes)[0]
              for alpha in alphas]
    return np.stack(frames)


# ---------------------------------------------------------------------------
# attribute correlation
# ---------------------------------------------------------------------------

@dataclass
class CorrelationReport:
    names: tuple[str, ...]
    matrix: np.ndarray
    n_samples: int
    flagged: tuple[str, ...] = ()    # zero-variance attributes (undefined rows)


def correlation_matrix(columns: dict[str, np.ndarray]) -> CorrelationReport:
    names = tuple(columns)
    data = np.stack([np.asarray(columns[n], dtype=np.float64) for n in names])
    stds = data.std(axis=1)
    flagged = tuple(n for n, s in zip(names, stds) if s < 1e-12)
    k = len(names)
    matrix = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            if names[i] in flagged or names[j] in flagged:
                matrix[i, j] = matrix[j, i] = np.nan
            else:
                cov = np.mean((data[i] - data[i].mean()) * (data[j] - data[j].mean()))
                matrix[i, j] = matrix[j, i] = cov / (stds[i] * stds[j])
    return CorrelationReport(names, matrix, data.shape[1], flagged)


def attribute_correlation(state, n_samples: int = 5000,
                          rng: np.random.Generator | None = None) -> CorrelationReport:
    """Correlation matrix of oracle attributes over generated samples."""
    from . import trainer

    if n_samples < 5000:
        raise SteerError(f"n_samples must be >= 5000, got {n_samples}")
    rng = rng if rng is not None else np.random.default_rng(0)
    shapes_spec = ds.ShapesSpec(size=state.spec.image_shape[1])
    cols = {name: [] for name in ds.ATTRIBUTE_NAMES}
    done = 0
    while done < n_samples:
        chunk = min(512, n_samples - done)
        images, _ = trainer.sample_images(state, chunk, rng)
        for img in images:
            m = ds.measure_attributes(img, shapes_spec, classify=False)
            if not m.valid:
                continue
            for name in ds.ATTRIBUTE_NAMES:
                cols[name].append(getattr(m, name))
        done += chunk
    return correlation_matrix({n: np.array(v) for n, v in cols.items()})


# ---------------------------------------------------------------------------
# perceptual path length
# ---------------------------------------------------------------------------

def perceptual_path_length(model, extractor, n_paths: int = 512, eps: float = 1e-4,
                           rng: np.random.Generator | None = None,
                           latent_dim: int | None = None, sigma_z: float = 1.0) -> float:
    """Mean squared proxy-feature distance between images at latent
    interpolants t and t + eps, scaled by 1/eps^2."""
    from . import trainer

    rng = rng if rng is not None else np.random.default_rng(0)
    if callable(model):
        gen, d = model, latent_dim
        if d is None:
            raise SteerError("latent_dim is required for a callable model")
    else:
        gen = lambda z: trainer.generate(model, z)
        d = model.spec.latent_dim
        sigma_z = model.config.sigma_z
    total = 0.0
    done = 0
    while done < n_paths:
        chunk = min(256, n_paths - done)
        z1 = rng.normal(0.0, sigma_z, size=(chunk, d)).astype(np.float32)
        z2 = rng.normal(0.0, sigma_z, size=(chunk, d)).astype(np.float32)
        t = rng.uniform(0.0, 1.0, size=(chunk, 1)).astype(np.float32)
        za = z1 + t * (z2 - z1)
        zb = z1 + (t + eps) * (z2 - z1)
        fa = extractor.extract(gen(za))
        fb = extractor.extract(gen(zb))
        total += float((((fa - fb) ** 2).sum(axis=1) / eps ** 2).sum())
        done += chunk
    return total / n_paths


# ---------------------------------------------------------------------------
# image-space transform edits and direction learning
# ---------------------------------------------------------------------------

def _shift2d(images: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.full_like(images, -1.0)
    s = images.shape[-1]
    ys0, ys1 = max(0, dy), min(s, s + dy)
    xs0, xs1 = max(0, dx), min(s, s + dx)
    out[:, :, ys0:ys1, xs0:xs1] = images[:, :, ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx]
    return out


def _zoom(images: np.ndarray, scale: float) -> np.ndarray:
    """Center zoom by bilinear sampling; background fill."""
    s = images.shape[-1]
    center = (s - 1) / 2.0
    coords = (np.arange(s) - center) / scale + center
    lo = np.floor(coords).astype(int)
    frac = coords - lo
    x01 = (images + 1.0) / 2.0
    padded = np.zeros((*images.shape[:2], s + 2, s + 2))
    padded[:, :, 1:s + 1, 1:s + 1] = x01
    li = np.clip(lo + 1, 0, s + 1)
    hi = np.clip(lo + 2, 0, s + 1)
    fy, fx = frac[:, None], frac[None, :]
    iy_l, iy_h = li[:, None], hi[:, None]
    ix_l, ix_h = li[None, :], hi[None, :]
    out01 = ((1 - fy) * (1 - fx) * padded[:, :, iy_l, ix_l]
             + (1 - fy) * fx * padded[:, :, iy_l, ix_h]
             + fy * (1 - fx) * padded[:, :, iy_h, ix_l]
             + fy * fx * padded[:, :, iy_h, ix_h])
    return (2.0 * out01 - 1.0).astype(images.dtype)


def edit_image(images: np.ndarray, transform: str, alpha: float) -> np.ndarray:
    """Deterministic image-space edits parameterized by alpha."""
    if transform == "brightness-shift":
        x01 = (np.asarray(images, dtype=np.float64) + 1.0) / 2.0
        return (2.0 * np.clip(x01 * (1.0 + 0.25 * alpha), 0.0, 1.0) - 1.0).astype(images.dtype)
    if transform == "horizontal-shift":
        return _shift2d(images, 0, int(round(alpha)))
    if transform == "vertical-shift":
        return _shift2d(images, int(round(alpha)), 0)
    if transform == "zoom":
        return _zoom(images, 1.0 + 0.15 * alpha)
    if transform == "identity":
        return images.copy()
    raise SteerError(f"unknown transform '{transform}'")


TRANSFORMS = ("brightness-shift", "horizontal-shift", "vertical-shift", "zoom")


def learn_transform_direction(state, transform: str, alpha_grid=(-2.0, -1.0, 1.0, 2.0),
                              steps: int = 200, batch: int = 16, lr: float = 0.05,
                              rng: np.random.Generator | None = None) -> Direction:
    """Fit a latent direction w so G(z + alpha w) reconstructs the
    image-space edit of G(z) across the alpha grid."""
    if transform not in TRANSFORMS and transform != "identity":
        raise SteerError(f"transform must be one of {TRANSFORMS}, got '{transform}'")
    rng = rng if rng is not None else np.random.default_rng(0)
    d = state.spec.latent_dim
    w = T.param(np.zeros(d, dtype=np.float32))
    adam = T.AdamState(alpha=lr)
    state.g.set_requires_grad(False)

    def batch_loss(alpha: float, z: np.ndarray, classes):
        base = nn.generator_forward(state.g, T.constant(z), classes).data
        target = T.constant(edit_image(base, transform, alpha).astype(np.float32))
        moved = nn.generator_forward(
            state.g,
            T.add(T.constant(z), T.mul(T.constant(np.float32(alpha)),
                                       T.broadcast_to(T.reshape(w, (1, d)), z.shape))),
            classes)
        diff = T.sub(moved, target)
        return T.tmean(T.mul(diff, diff))

    best = (np.inf, w.data.copy())
    baseline_loss = None
    try:
        for _ in range(steps):
            alpha = float(rng.choice(alpha_grid))
            z = rng.normal(0.0, state.config.sigma_z, size=(batch, d)).astype(np.float32)
            classes = rng.integers(0, state.spec.n_classes, size=batch) if state.config.conditional else None
            with T.Tape():
                loss = batch_loss(alpha, z, classes)
                grads = T.backward(loss, wrt=[w])
            if baseline_loss is None:
                baseline_loss = loss.item()  # first step evaluates w = 0
            T.adam_update({"w": w}, {"w": grads[w]}, adam)
            if loss.item() < best[0]:
                best = (loss.item(), w.data.copy())
        alpha = float(alpha_grid[0])
        z = rng.normal(0.0, state.config.sigma_z, size=(batch, d)).astype(np.float32)
        classes = rng.integers(0, state.spec.n_classes, size=batch) if state.config.conditional else None
        final_loss = batch_loss(alpha, z, classes).item()
    finally:
        state.g.set_requires_grad(True)
    diverged = final_loss > best[0]
    chosen = best[1] if diverged else w.data.copy()
    loss_at_chosen = best[0] if diverged else final_loss
    norm = float(np.linalg.norm(chosen))
    meta = {"transform": transform, "final_loss": loss_at_chosen, "baseline_loss": baseline_loss,
            "degenerate": norm < 1e-6, "best_iterate": diverged, "fit_norm": norm}
    if meta["degenerate"]:
        return Direction(transform, np.zeros(d), "transform-fit", meta)
    return Direction(transform, _unit(chosen.astype(np.float64)), "transform-fit", meta)


def transform_fit_loss(state, w_vec: np.ndarray, transform: str, alpha_grid,
                       z: np.ndarray) -> float:
    """Mean reconstruction loss of a fixed direction over a z batch and the
    full alpha grid (no gradients); the optimization-sanity oracle."""
    from . import trainer

    total = 0.0
    w_vec = np.asarray(w_vec, dtype=np.float32)
    classes = np.zeros(z.shape[0], dtype=np.int64) if state.config.conditional else None
    for alpha in alpha_grid:
        base = trainer.generate(state, z, classes)
        target = edit_image(base, transform, float(alpha))
        moved = trainer.generate(state, z + np.float32(alpha) * w_vec[None, :], classes)
        total += float(((moved - target) ** 2).mean())
    return total / len(alpha_grid)


# ---------------------------------------------------------------------------
# directions file
# ---------------------------------------------------------------------------

def append_direction(path: str, direction: Direction) -> str:
    """Append one record; returns the assigned unique id."""
    existing = load_directions(path) if os.path.exists(path) else []
    new_id = f"d{len(existing)}-{direction.name}"
    record = {"id": new_id, "name": direction.name, "source": direction.source,
              "dim": int(direction.vector.size), "vector": direction.vector.tolist(),
              "metadata": direction.metadata}
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
    return new_id


def load_directions(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    ids = [r["id"] for r in out]
    if len(set(ids)) != len(ids):
        raise SteerError(f"{path}: duplicate direction ids")
    return out
