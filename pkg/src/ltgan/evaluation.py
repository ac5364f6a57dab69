"""Quantitative evaluation over frozen snapshots.

The image-quality metric is a Frechet distance between Gaussian fits of
features from a frozen, seeded random dense network. Absolute values are
meaningless; only comparisons under one extractor seed are reported.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace, field

import numpy as np

from . import datasets as ds
from . import nn, objectives as obj
from . import tensor as T


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# proxy features and moments
# ---------------------------------------------------------------------------

FEATURE_DIM = 32


@dataclass
class ProxyFeatureExtractor:
    """Frozen random dense net: flattened image -> 32-dim feature."""

    seed: int
    input_dim: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray

    def extract(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64).reshape(images.shape[0], -1)
        if x.shape[1] != self.input_dim:
            raise EvalError(f"extractor expects width {self.input_dim}, got {x.shape[1]}")
        h = x @ self.w1 + self.b1
        h = np.where(h > 0, h, 0.2 * h)
        return h @ self.w2


def build_extractor(input_dim: int, seed: int = 0, hidden: int = 64) -> ProxyFeatureExtractor:
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(input_dim, hidden))
    b1 = rng.normal(0.0, 0.1, size=hidden)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, FEATURE_DIM))
    return ProxyFeatureExtractor(seed, input_dim, w1, b1, w2)


@dataclass
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise EvalError(f"covariance shape {self.cov.shape} does not match mean size {self.mean.size}")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8):
            raise EvalError("covariance must be symmetric")
        low = np.linalg.eigvalsh(self.cov).min()
        if low < -1e-8:
            raise EvalError(f"covariance has eigenvalue {low:.3e} below the -1e-8 floor")


def fit_moments(features: np.ndarray) -> GaussianMoments:
    if features.ndim != 2 or features.shape[0] < 2:
        raise EvalError(f"need (n >= 2, dim) features, got {features.shape}")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False)
    cov = (cov + cov.T) / 2.0
    return GaussianMoments(mean, np.atleast_2d(cov))


def frechet_distance(m1: GaussianMoments, m2: GaussianMoments) -> float:
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).

    The square-root trace comes from the eigenvalues of S1 S2; negative
    eigenvalues above -1e-6 are numerical noise and clamp to zero, larger
    ones are an error.
    """
    if m1.mean.shape != m2.mean.shape:
        raise EvalError(f"moment dimensions differ: {m1.mean.shape} vs {m2.mean.shape}")
    for m in (m1, m2):
        if not (np.all(np.isfinite(m.mean)) and np.all(np.isfinite(m.cov))):
            raise EvalError("non-finite values in moments")
    diff = m1.mean - m2.mean
    eig = np.linalg.eigvals(m1.cov @ m2.cov)
    if np.abs(eig.imag).max(initial=0.0) > 1e-6:
        raise EvalError(f"eigenvalues of cov product are not numerically real "
                        f"(max imag {np.abs(eig.imag).max():.3e})")
    real = eig.real
    if real.min(initial=0.0) < -1e-6:
        raise EvalError(f"eigenvalue {real.min():.3e} of cov product below the -1e-6 floor")
    tr_sqrt = np.sqrt(np.clip(real, 0.0, None)).sum()
    return float(diff @ diff + np.trace(m1.cov) + np.trace(m2.cov) - 2.0 * tr_sqrt)


def _guarded_moments(features: np.ndarray) -> tuple[GaussianMoments, bool]:
    moments = fit_moments(features)
    if np.linalg.eigvalsh(moments.cov).min() < 1e-10:
        warnings.warn("degenerate feature covariance: adding 1e-6 ridge", RuntimeWarning)
        return GaussianMoments(moments.mean, moments.cov + 1e-6 * np.eye(moments.mean.size)), True
    return moments, False


def _generated_images(model, n: int, rng: np.random.Generator) -> np.ndarray:
    if callable(model):
        return np.asarray(model(n, rng))
    from . import trainer
    return trainer.sample_images(model, n, rng)[0]


def proxy_fid(real_images: np.ndarray, model, n_samples: int,
              extractor: ProxyFeatureExtractor, rng: np.random.Generator | None = None) -> float:
    """Frechet distance between moments of n real and n generated images."""
    if n_samples < 500:
        raise EvalError(f"n_samples must be >= 500, got {n_samples}")
    rng = rng if rng is not None else np.random.default_rng(extractor.seed)
    if real_images.shape[0] < n_samples:
        raise EvalError(f"need at least {n_samples} real images, got {real_images.shape[0]}")
    if real_images.shape[0] > n_samples:
        real_images = real_images[rng.choice(real_images.shape[0], n_samples, replace=False)]
    fake_images = _generated_images(model, n_samples, rng)
    m_real, r1 = _guarded_moments(extractor.extract(real_images))
    m_fake, r2 = _guarded_moments(extractor.extract(fake_images))
    if r1 != r2:  # ridge must hit both sides or neither
        other = m_fake if r1 else m_real
        fixed = GaussianMoments(other.mean, other.cov + 1e-6 * np.eye(other.mean.size))
        if r1:
            m_fake = fixed
        else:
            m_real = fixed
    return frechet_distance(m_real, m_fake)


@dataclass
class EvalPack:
    """Precomputed real-side moments for repeated training-time FID."""

    extractor: ProxyFeatureExtractor
    real_moments: GaussianMoments
    n_samples: int
    ridged: bool = False


def make_eval_pack(real_images: np.ndarray, extractor: ProxyFeatureExtractor,
                   n_samples: int = 512) -> EvalPack:
    if n_samples < 500:
        raise EvalError(f"n_samples must be >= 500, got {n_samples}")
    if real_images.shape[0] < n_samples:
        raise EvalError(f"need at least {n_samples} real images, got {real_images.shape[0]}")
    moments, ridged = _guarded_moments(extractor.extract(real_images[:n_samples]))
    return EvalPack(extractor, moments, n_samples, ridged)


def training_fid(state, pack: EvalPack) -> float:
    """FID of the current generator against the pack's real moments.

    The latent draws derive from (config seed, step), not from stream
    state, so re-evaluating a loaded checkpoint replays the exact
    training-time value."""
    from . import trainer
    rng = np.random.default_rng(np.random.SeedSequence((state.config.seed, state.step)))
    images, _ = trainer.sample_images(state, pack.n_samples, rng)
    m_fake, ridged = _guarded_moments(pack.extractor.extract(images))
    m_real = pack.real_moments
    if pack.ridged != ridged:
        if ridged:
            m_real = GaussianMoments(m_real.mean, m_real.cov + 1e-6 * np.eye(m_real.mean.size))
        else:
            m_fake = GaussianMoments(m_fake.mean, m_fake.cov + 1e-6 * np.eye(m_fake.mean.size))
    return frechet_distance(m_real, m_fake)


# ---------------------------------------------------------------------------
# mode coverage
# ---------------------------------------------------------------------------

def mode_coverage(model, ring_spec: ds.RingSpec, n_samples: int,
                  rng: np.random.Generator | None = None,
                  min_share_factor: float = 0.2) -> tuple[int, float]:
    """(modes covered, KL of the assigned-mode histogram to uniform).

    A sample belongs to its nearest mode when within 3 std; a mode counts
    as covered at a share of min_share_factor / n_modes of all samples.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = _generated_images(model, n_samples, rng).reshape(n_samples, 2)
    centers = ds.mode_centers(ring_spec)
    d2 = ((samples[:, None, :] - centers[None]) ** 2).sum(-1)
    nearest = np.argmin(d2, axis=1)
    within = np.sqrt(d2[np.arange(n_samples), nearest]) <= 3.0 * ring_spec.std
    hist = np.bincount(nearest[within], minlength=ring_spec.n_modes)
    covered = int((hist / n_samples >= min_share_factor / ring_spec.n_modes).sum())
    total = hist.sum()
    if total == 0:
        return 0, float("inf")
    p = hist / total
    nz = p > 0
    kl = float((p[nz] * np.log(p[nz] * ring_spec.n_modes)).sum())
    return covered, kl


# ---------------------------------------------------------------------------
# auxiliary accuracy sweep
# ---------------------------------------------------------------------------

def _eval_pairs(state, sigma_eps: float, n_pairs: int, rng: np.random.Generator):
    """LT pairs at an arbitrary sigma (evaluation is free to leave the
    training range)."""
    spec = state.spec
    b = n_pairs // 2
    z = rng.normal(0.0, state.config.sigma_z, size=(2 * b, spec.latent_dim)).astype(np.float32)
    two = rng.normal(0.0, sigma_eps, size=(2, spec.latent_dim)).astype(np.float32)
    eps = np.tile(two, (b, 1))
    eps_id = np.tile(np.array([0, 1]), b)
    shuffle = rng.permutation(2 * b)
    y = obj.labels_from_pattern(eps_id, shuffle)
    batch = obj.LatentBatch(z, eps, eps_id, shuffle, y)
    classes = rng.integers(0, spec.n_classes, size=2 * b) if state.config.conditional else None
    f = obj.lt_feature_delta(state.d, state.g, batch, class_ids=classes)
    partner = T.take(f, shuffle)
    prob = nn.auxiliary_forward(state.a, f, partner)
    return prob.data.ravel(), y


def aux_accuracy_once(state, sigma_eps: float, n_pairs: int, rng: np.random.Generator) -> float:
    correct = 0
    total = 0
    remaining = n_pairs + n_pairs % 2
    while remaining > 0:
        chunk = min(remaining, 512)
        prob, y = _eval_pairs(state, sigma_eps, chunk, rng)
        correct += int(((prob > 0.5) == (y > 0.5)).sum())
        total += len(y)
        remaining -= chunk
    return correct / total


def aux_accuracy_sweep(state, sigma_list, n_pairs: int = 2048, seed: int = 0) -> dict[float, float]:
    """Accuracy of the trained A on pairs built at each sigma; deterministic
    for a fixed checkpoint and seed."""
    out: dict[float, float] = {}
    for i, sigma in enumerate(sigma_list):
        if sigma <= 0:
            raise EvalError(f"sigma must be > 0, got {sigma}")
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        out[float(sigma)] = aux_accuracy_once(state, float(sigma), n_pairs, rng)
    return out


# ---------------------------------------------------------------------------
# toy classification accuracy score
# ---------------------------------------------------------------------------

def _center_normalize(images: np.ndarray) -> np.ndarray:
    """Shift the intensity centroid to the image center (fill background)
    and scale the peak to 1. Removes position/brightness nuisance so the
    dense classifier measures class information; applied identically to
    generated and real images."""
    out = np.full_like(images, -1.0, dtype=np.float32)
    s = images.shape[-1]
    ys, xs = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    for i, img in enumerate(images):
        x01 = (np.asarray(img[0], dtype=np.float64) + 1.0) / 2.0
        total = x01.sum()
        if total <= 1e-6:
            out[i] = img
            continue
        cy = (x01.sum(axis=1) * np.arange(s)).sum() / total
        cx = (x01.sum(axis=0) * np.arange(s)).sum() / total
        dy, dx = int(round(s / 2 - 0.5 - cy)), int(round(s / 2 - 0.5 - cx))
        shifted = np.zeros((s, s))
        src_y, src_x = ys - dy, xs - dx
        ok = (src_y >= 0) & (src_y < s) & (src_x >= 0) & (src_x < s)
        shifted[ok] = x01[src_y[ok], src_x[ok]]
        peak = shifted.max()
        if peak > 1e-6:
            shifted /= peak
        out[i, 0] = 2.0 * shifted - 1.0
    return out


def _train_classifier(images: np.ndarray, labels: np.ndarray, seed: int,
                      steps: int = 4000, batch: int = 64, hidden: int = 64):
    """Small dense classifier over center-normalized images; returns a
    predict function that applies the same normalization."""
    rng = np.random.default_rng(seed)
    images = _center_normalize(images)
    width = int(np.prod(images.shape[1:]))
    w1 = T.param(rng.normal(0, np.sqrt(2.0 / width), size=(width, hidden)).astype(np.float32))
    b1 = T.param(np.zeros(hidden, dtype=np.float32))
    w2 = T.param(rng.normal(0, 1.0 / np.sqrt(hidden), size=(hidden, 2)).astype(np.float32))
    b2 = T.param(np.zeros(2, dtype=np.float32))
    params = {"w1": w1, "b1": b1, "w2": w2, "b2": b2}
    adam = T.AdamState(alpha=1e-3)
    flat = images.reshape(images.shape[0], -1).astype(np.float32)
    for _ in range(steps):
        idx = rng.integers(0, flat.shape[0], size=batch)
        with T.Tape():
            x = T.constant(flat[idx])
            h = T.relu(T.add(T.matmul(x, w1), b1))
            logits = T.add(T.matmul(h, w2), b2)
            loss = obj.cross_entropy_logits(logits, labels[idx])
            grads = T.backward(loss, wrt=list(params.values()))
        T.adam_update(params, {k: grads[p] for k, p in params.items()}, adam)

    def predict(x: np.ndarray) -> np.ndarray:
        flat_x = _center_normalize(x).reshape(x.shape[0], -1).astype(np.float32)
        h = np.maximum(flat_x @ w1.data + b1.data, 0.0)
        return np.argmax(h @ w2.data + b2.data, axis=1)

    return predict


def cas_toy(state, test_corpus: ds.ShapesCorpus, n_train: int = 2048, seed: int = 0) -> float:
    """Train a classifier on generated labeled samples, test on real renders."""
    if not state.config.conditional:
        raise EvalError("toy CAS needs a class-conditional checkpoint")
    rng = np.random.default_rng(seed)
    from . import trainer
    classes = rng.integers(0, state.spec.n_classes, size=n_train)
    images = trainer.generate(state, rng.normal(0, state.config.sigma_z,
                                                size=(n_train, state.spec.latent_dim)).astype(np.float32),
                              classes)
    predict = _train_classifier(images, classes, seed)
    pred = predict(test_corpus.images)
    return float((pred == test_corpus.classes).mean())


def cas_real_reference(train_corpus: ds.ShapesCorpus, test_corpus: ds.ShapesCorpus,
                       seed: int = 0) -> float:
    """Upper reference: the same classifier trained on real renders."""
    predict = _train_classifier(train_corpus.images, train_corpus.classes.astype(np.int64), seed)
    pred = predict(test_corpus.images)
    return float((pred == test_corpus.classes).mean())


# ---------------------------------------------------------------------------
# ablation harness
# ---------------------------------------------------------------------------

@dataclass
class AblationTable:
    axis: str
    cells: list[dict] = field(default_factory=list)

    def add(self, value: float, seed: int, fid: float | None, status: str) -> None:
        self.cells.append({"axis": self.axis, "value": value, "seed": seed,
                           "fid": fid, "status": status})

    def summary(self) -> list[dict]:
        rows = []
        for value in sorted({c["value"] for c in self.cells}):
            fids = [c["fid"] for c in self.cells if c["value"] == value and c["status"] == "ok"]
            rows.append({
                "axis": self.axis, "value": value,
                "median_fid": float(np.median(fids)) if fids else None,
                "min_fid": float(np.min(fids)) if fids else None,
                "runs_ok": len(fids),
            })
        return rows

    def cells_csv(self) -> str:
        lines = ["axis,value,seed,fid,status"]
        for c in self.cells:
            fid = "" if c["fid"] is None else format(c["fid"], ".17g")
            lines.append(f"{c['axis']},{format_float(c['value'])},{c['seed']},{fid},{c['status']}")
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = ["axis,value,median_fid,min_fid,runs_ok"]
        for r in self.summary():
            med = "" if r["median_fid"] is None else format(r["median_fid"], ".17g")
            mn = "" if r["min_fid"] is None else format(r["min_fid"], ".17g")
            lines.append(f"{r['axis']},{format_float(r['value'])},{med},{mn},{r['runs_ok']}")
        return "\n".join(lines) + "\n"


def format_float(v: float) -> str:
    return format(float(v), "g")


def run_training_cell(base_cfg, spec, source, eval_pack, axis: str, value: float, seed: int) -> float:
    """One ablation training run; returns the final proxy-FID."""
    from . import trainer
    cfg = replace(base_cfg, seed=seed)
    if axis == "lam":
        # a zero pairing weight is exactly the plain-baseline trainer
        cfg = replace(cfg, lam=value, objective="baseline" if value == 0.0 else cfg.objective)
    elif axis == "sigma_eps":
        cfg = replace(cfg, sigma_eps=value)
    else:
        raise EvalError(f"unknown ablation axis '{axis}'")
    cfg.validate()
    state = trainer.build_trainer(cfg, spec)
    trainer.train(state, source)
    return training_fid(state, eval_pack)


def ablation_harness(base_cfg, spec, source, eval_pack, axis: str, values,
                     seeds=(0, 1, 2), jobs: int = 1) -> AblationTable:
    """Median proxy-FID per grid value over seeds. Invalid cells are
    rejected up front; failing runs are recorded and the harness continues."""
    table = AblationTable(axis)
    valid: list[tuple[float, int]] = []
    for value in values:
        if axis == "sigma_eps" and not (0 < value < base_cfg.sigma_z):
            for seed in seeds:
                table.add(value, seed, None, "invalid: sigma_eps must be in (0, sigma_z)")
            continue
        if axis == "lam" and value < 0:
            for seed in seeds:
                table.add(value, seed, None, "invalid: lam must be >= 0")
            continue
        valid.extend((value, seed) for seed in seeds)

    def run(value, seed):
        try:
            return value, seed, run_training_cell(base_cfg, spec, source, eval_pack, axis, value, seed), "ok"
        except Exception as exc:  # cell failures must not stop the harness
            return value, seed, None, f"error: {exc}"

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_training_cell, base_cfg, spec, source, eval_pack, axis, v, s)
                       for v, s in valid]
            for (value, seed), fut in zip(valid, futures):
                try:
                    table.add(value, seed, fut.result(), "ok")
                except Exception as exc:
                    table.add(value, seed, None, f"error: {exc}")
    else:
        for value, seed in valid:
            table.add(*run(value, seed))
    return table
