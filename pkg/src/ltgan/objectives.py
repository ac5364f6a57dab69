"""GAN losses and the latent-transformation self-supervision task.

A G-step batch carries 2b latent codes plus exactly two distinct
perturbation vectors tiled along the batch; the pairing labels compare
perturbation identity (index, never float equality) between each row and
its shuffled partner. The auxiliary loss is plain binary cross entropy on
the concatenated feature-delta pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T


class ConfigError(ValueError):
    pass


_CLAMP_EVENTS = 0


def clamp_events() -> int:
    """Number of probability values clamped at the log floor so far."""
    return _CLAMP_EVENTS


def reset_clamp_events() -> None:
    global _CLAMP_EVENTS
    _CLAMP_EVENTS = 0


def _count_clamped(values: np.ndarray, lo: float, hi: float) -> None:
    global _CLAMP_EVENTS
    _CLAMP_EVENTS += int(np.count_nonzero((values < lo) | (values > hi)))


@dataclass
class LossReport:
    """Named scalar losses for one step; total_g = g_adv + lam * aux."""

    d_loss: float | None = None
    g_adv: float | None = None
    aux: float | None = None
    total_g: float | None = None
    clamp_events: int = 0
    tape_ops: int = 0


@dataclass
class LatentBatch:
    z: np.ndarray         # (2b, d)
    eps: np.ndarray       # (2b, d): [eps1, eps2] tiled b times
    eps_id: np.ndarray    # (2b,) in {0, 1}
    shuffle: np.ndarray   # permutation of range(2b)
    y_ss: np.ndarray      # (2b,) float 0/1

    @property
    def pairs(self) -> int:
        return self.z.shape[0]

    def validate(self) -> None:
        n = self.z.shape[0]
        if n % 2 or self.eps.shape != self.z.shape:
            raise ConfigError("latent batch must hold 2b codes with matching eps pattern")
        if len(np.unique(self.eps_id)) != 2:
            raise ConfigError("exactly two distinct eps vectors are required")
        if sorted(self.shuffle.tolist()) != list(range(n)):
            raise ConfigError("shuffle must be a permutation of the batch")
        if not np.array_equal(self.y_ss, labels_from_pattern(self.eps_id, self.shuffle)):
            raise ConfigError("stored labels do not match eps identity under the shuffle")


def labels_from_pattern(eps_id: np.ndarray, shuffle: np.ndarray) -> np.ndarray:
    """y[i] = 1 iff row i and its shuffled partner carry the same eps index."""
    return (eps_id == eps_id[shuffle]).astype(np.float64)


def make_latent_batch(b: int, d: int, sigma_z: float, sigma_eps: float,
                      rng: np.random.Generator,
                      eps_rng: np.random.Generator | None = None,
                      shuffle_rng: np.random.Generator | None = None,
                      dtype=np.float32) -> LatentBatch:
    if b < 1:
        raise ConfigError("batch half-size b must be >= 1")
    if not sigma_eps < sigma_z:
        raise ConfigError(f"sigma_eps ({sigma_eps}) must be < sigma_z ({sigma_z})")
    eps_rng = eps_rng or rng
    shuffle_rng = shuffle_rng or rng
    z = rng.normal(0.0, sigma_z, size=(2 * b, d)).astype(dtype)
    two = eps_rng.normal(0.0, sigma_eps, size=(2, d)).astype(dtype)
    eps = np.tile(two, (b, 1))
    eps_id = np.tile(np.array([0, 1]), b)
    shuffle = shuffle_rng.permutation(2 * b)
    return LatentBatch(z, eps, eps_id, shuffle, labels_from_pattern(eps_id, shuffle))


# ---------------------------------------------------------------------------
# adversarial losses
# ---------------------------------------------------------------------------

def _check_logits(name: str, *logits: T.Tensor) -> None:
    for t in logits:
        if t.size == 0:
            raise ConfigError(f"{name}: empty batch")
        if not np.all(np.isfinite(t.data)):
            raise T.NonFiniteError(f"{name}: non-finite logits")


def hinge_d_loss(d_real: T.Tensor, d_fake: T.Tensor) -> T.Tensor:
    _check_logits("hinge_d_loss", d_real, d_fake)
    return T.add(T.tmean(T.relu(1.0 - d_real)), T.tmean(T.relu(1.0 + d_fake)))


def hinge_g_loss(d_fake: T.Tensor) -> T.Tensor:
    _check_logits("hinge_g_loss", d_fake)
    return T.neg(T.tmean(d_fake))


_LOG_FLOOR = 1e-12


def _safe_log(p: T.Tensor) -> T.Tensor:
    _count_clamped(p.data, _LOG_FLOOR, 1.0 - _LOG_FLOOR)
    return T.log(T.clip(p, _LOG_FLOOR, 1.0 - _LOG_FLOOR))


def nonsat_losses(d_real: T.Tensor, d_fake: T.Tensor) -> tuple[T.Tensor, T.Tensor]:
    _check_logits("nonsat_losses", d_real, d_fake)
    p_real = T.sigmoid(d_real)
    p_fake = T.sigmoid(d_fake)
    l_d = T.neg(T.add(T.tmean(_safe_log(p_real)), T.tmean(_safe_log(1.0 - p_fake))))
    l_g = T.neg(T.tmean(_safe_log(p_fake)))
    return l_d, l_g


def nonsat_g_loss(d_fake: T.Tensor) -> T.Tensor:
    _check_logits("nonsat_g_loss", d_fake)
    return T.neg(T.tmean(_safe_log(T.sigmoid(d_fake))))


def binary_cross_entropy(p: T.Tensor, y: np.ndarray) -> T.Tensor:
    yc = T.constant(np.asarray(y, dtype=p.data.dtype).reshape(p.shape))
    return T.neg(T.tmean(T.add(T.mul(yc, _safe_log(p)), T.mul(1.0 - yc, _safe_log(1.0 - p)))))


# ---------------------------------------------------------------------------
# latent-transformation task
# ---------------------------------------------------------------------------

def lt_feature_delta(d: nn.NetworkState, g: nn.NetworkState, batch: LatentBatch,
                     class_ids=None) -> T.Tensor:
    """f[i] = E(G(z_i)) - E(G(z_i + eps_i)), shape (2b, F)."""
    n = batch.pairs
    z_all = T.constant(np.concatenate([batch.z, batch.z + batch.eps], axis=0))
    ids = None if class_ids is None else np.concatenate([class_ids, class_ids])
    imgs = nn.generator_forward(g, z_all, ids)
    feats = nn.discriminator_features(d, imgs)
    return T.sub(T.take(feats, slice(0, n)), T.take(feats, slice(n, 2 * n)))


def lt_loss(a: nn.NetworkState, f: T.Tensor, shuffle: np.ndarray, y_ss: np.ndarray) -> T.Tensor:
    if f.shape[0] != len(y_ss) or f.shape[0] != len(shuffle):
        raise T.ShapeError(f"lt_loss: {f.shape[0]} deltas vs {len(y_ss)} labels / {len(shuffle)} shuffle entries")
    partner = T.take(f, np.asarray(shuffle))
    prob = nn.auxiliary_forward(a, f, partner)
    return binary_cross_entropy(prob, y_ss)


@dataclass
class GeneratorObjective:
    """Loss tensors for one G/A step plus their scalar report."""

    g_adv: T.Tensor
    aux: T.Tensor
    total: T.Tensor
    aux_prob: np.ndarray

    def report(self, lam: float) -> LossReport:
        # the decomposition identity is reported in float64 regardless of
        # the training dtype
        g_adv, aux = self.g_adv.item(), self.aux.item()
        return LossReport(g_adv=g_adv, aux=aux, total_g=g_adv + lam * aux)


def ltgan_objective(g: nn.NetworkState, d: nn.NetworkState, a: nn.NetworkState,
                    batch: LatentBatch, lam: float, class_ids=None,
                    loss_family: str = "hinge", update_sn: bool = False) -> GeneratorObjective:
    """Generator-side LT objective: adversarial term over both G(z) and
    G(z + eps), plus lam times the pairing loss. One shared forward pass."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    n = batch.pairs
    z_all = T.constant(np.concatenate([batch.z, batch.z + batch.eps], axis=0))
    ids = None if class_ids is None else np.concatenate([class_ids, class_ids])
    imgs = nn.generator_forward(g, z_all, ids)
    logits, feats = nn.discriminator_forward(d, imgs, ids, update_sn=update_sn)
    plain = T.take(logits, slice(0, n))
    moved = T.take(logits, slice(n, 2 * n))
    if loss_family == "hinge":
        g_adv = T.add(hinge_g_loss(plain), hinge_g_loss(moved))
    elif loss_family == "nonsat":
        g_adv = T.add(nonsat_g_loss(plain), nonsat_g_loss(moved))
    else:
        raise ConfigError(f"unknown loss family '{loss_family}'")
    f = T.sub(T.take(feats, slice(0, n)), T.take(feats, slice(n, 2 * n)))
    partner = T.take(f, np.asarray(batch.shuffle))
    prob = nn.auxiliary_forward(a, f, partner)
    aux = binary_cross_entropy(prob, batch.y_ss)
    total = T.add(g_adv, T.mul(T.constant(np.asarray(lam, dtype=aux.dtype)), aux))
    return GeneratorObjective(g_adv, aux, total, prob.data.copy())


# ---------------------------------------------------------------------------
# rotation baseline
# ---------------------------------------------------------------------------

def cross_entropy_logits(logits: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Mean CE over rows; the max shift is detached (the gradient is exact
    because log-softmax is shift invariant)."""
    shift = T.constant(logits.data.max(axis=1, keepdims=True))
    centered = T.sub(logits, shift)
    lse = T.log(T.tsum(T.exp(centered), axis=1, keepdims=True))
    log_probs = T.sub(centered, lse)
    picked = T.take(log_probs, (np.arange(len(labels)), np.asarray(labels)))
    return T.neg(T.tmean(picked))


def rotation_ss_loss(d: nn.NetworkState, images: T.Tensor, rng: np.random.Generator) -> T.Tensor:
    """SS-GAN style pretext: classify the 90-degree rotation applied."""
    if images.data.ndim != 4 or images.shape[2] != images.shape[3]:
        raise T.ShapeError(f"rotation_ss_loss: images must be square, got {images.shape}")
    n = images.shape[0]
    ks = rng.integers(0, 4, size=n)
    parts, labels = [], []
    for r in range(4):
        idx = np.where(ks == r)[0]
        if idx.size == 0:
            continue
        sub = T.take(images, idx)
        parts.append(sub if r == 0 else T.rot90(sub, r))
        labels.append(np.full(idx.size, r))
    rotated = parts[0] if len(parts) == 1 else T.concat(parts, axis=0)
    feats = nn.discriminator_features(d, rotated)
    logits = nn.rotation_head(d, feats)
    return cross_entropy_logits(logits, np.concatenate(labels))
