"""Generator, discriminator (with feature tap), auxiliary net, spectral norm.

All networks are stacks of dense layers at desk scale. The discriminator
exposes an encoder E as a strict prefix of its own computation: the
activations of one hidden layer, reshaped to (C, H, W), average-pooled and
flattened. The auxiliary net scores a concatenated pair of feature deltas
with a single ReLU hidden layer of width C and a sigmoid output.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T


class SpecError(ValueError):
    """Inconsistent network specification."""


@dataclass(frozen=True)
class NetworkSpec:
    """Layer plan shared by G, D (with tap) and A."""

    latent_dim: int = 64
    image_shape: tuple[int, int, int] = (1, 16, 16)
    g_hidden: tuple[int, ...] = (256,)
    d_hidden: tuple[int, ...] = (256, 64)
    feature_tap_index: int = 1          # index into d_hidden; never the logit
    tap_shape: tuple[int, int, int] = (16, 2, 2)  # channel count doubles as A's hidden width
    pool_kernel: int = 2
    leak: float = 0.2
    g_leak: float = 0.0                 # 0 = plain ReLU in G's hidden layers
    input_scale: float = 1.0            # fixed D input preconditioning; raises the
                                        # effective Lipschitz bound on small-range data
    n_classes: int = 0                  # 0 = unconditional
    embed_dim: int = 0

    def __post_init__(self):
        c, h, w = self.image_shape
        if min(self.latent_dim, c, h, w) < 1:
            raise SpecError(f"non-positive dimensions in spec: d={self.latent_dim}, image={self.image_shape}")
        if not self.g_hidden or not self.d_hidden:
            raise SpecError("generator/discriminator need at least one hidden layer")
        if not (0 <= self.feature_tap_index < len(self.d_hidden)):
            raise SpecError(
                f"feature_tap_index {self.feature_tap_index} must address a hidden layer "
                f"(0..{len(self.d_hidden) - 1}), not the logit")
        tc, th, tw = self.tap_shape
        if tc * th * tw != self.d_hidden[self.feature_tap_index]:
            raise SpecError(
                f"tap_shape {self.tap_shape} does not cover the tap layer width "
                f"{self.d_hidden[self.feature_tap_index]}")
        if self.pool_kernel < 1 or th // self.pool_kernel < 1 or tw // self.pool_kernel < 1:
            raise SpecError(f"pool kernel {self.pool_kernel} too large for tap shape {self.tap_shape}")
        if (self.n_classes == 0) != (self.embed_dim == 0):
            raise SpecError("conditional spec needs both n_classes and embed_dim (or neither)")
        if self.n_classes == 1:
            raise SpecError("conditional spec needs at least 2 classes")

    @property
    def conditional(self) -> bool:
        return self.n_classes > 0

    @property
    def image_width(self) -> int:
        c, h, w = self.image_shape
        return c * h * w

    @property
    def feature_width(self) -> int:
        """Flattened width of the pooled tap features (input half of A)."""
        tc, th, tw = self.tap_shape
        return tc * (th // self.pool_kernel) * (tw // self.pool_kernel)

    @property
    def aux_hidden(self) -> int:
        return self.tap_shape[0]


@dataclass
class SpectralNormState:
    """Left/right power-iteration vectors and the current sigma estimate."""

    u: np.ndarray
    v: np.ndarray
    sigma: float = 1.0


@dataclass
class NetworkState:
    role: str
    spec: NetworkSpec
    params: dict[str, T.Tensor]
    sn: dict[str, SpectralNormState] = field(default_factory=dict)

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def clone(self) -> "NetworkState":
        params = {k: T.Tensor(p.data.copy(), requires_grad=p.requires_grad) for k, p in self.params.items()}
        sn = {k: SpectralNormState(s.u.copy(), s.v.copy(), s.sigma) for k, s in self.sn.items()}
        return NetworkState(self.role, self.spec, params, sn)


def state_digest(state: NetworkState) -> str:
    """Stable hash of all parameters (update-isolation checks)."""
    h = hashlib.blake2b(digest_size=16)
    for name in sorted(state.params):
        h.update(name.encode())
        h.update(state.params[name].data.tobytes())
    return h.hexdigest()


def _kaiming(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float, dtype) -> np.ndarray:
    std = gain / np.sqrt(fan_in)
    return rng.normal(0.0, std, size=(fan_in, fan_out)).astype(dtype)


def build_generator(spec: NetworkSpec, seed: int, dtype=np.float32) -> NetworkState:
    rng = np.random.default_rng(seed)
    widths = [spec.latent_dim + spec.embed_dim, *spec.g_hidden, spec.image_width]
    params: dict[str, T.Tensor] = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        gain = np.sqrt(2.0) if i < len(widths) - 2 else 1.0
        params[f"w{i}"] = T.param(_kaiming(rng, fan_in, fan_out, gain, dtype))
        params[f"b{i}"] = T.param(np.zeros(fan_out, dtype=dtype))
    if spec.conditional:
        params["embed"] = T.param(rng.normal(0.0, 1.0, size=(spec.n_classes, spec.embed_dim)).astype(dtype))
    return NetworkState("generator", spec, params)


def build_discriminator(spec: NetworkSpec, seed: int, dtype=np.float32, sn_warmup: int = 60) -> NetworkState:
    rng = np.random.default_rng(seed)
    widths = [spec.image_width, *spec.d_hidden, 1]
    params: dict[str, T.Tensor] = {}
    sn: dict[str, SpectralNormState] = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if spec.conditional and i == spec.feature_tap_index + 1:
            fan_in += spec.embed_dim
        gain = np.sqrt(2.0) if i < len(widths) - 2 else 1.0
        w = _kaiming(rng, fan_in, fan_out, gain, dtype)
        params[f"w{i}"] = T.param(w)
        params[f"b{i}"] = T.param(np.zeros(fan_out, dtype=dtype))
        state = SpectralNormState(
            u=_unit(rng.normal(size=fan_in)).astype(dtype),
            v=_unit(rng.normal(size=fan_out)).astype(dtype),
        )
        for _ in range(sn_warmup):
            _power_iterate(w, state)
        sn[f"w{i}"] = state
    params["rot_w"] = T.param(_kaiming(rng, spec.feature_width, 4, 1.0, dtype))
    params["rot_b"] = T.param(np.zeros(4, dtype=dtype))
    if spec.conditional:
        params["embed"] = T.param(rng.normal(0.0, 1.0, size=(spec.n_classes, spec.embed_dim)).astype(dtype))
    return NetworkState("discriminator", spec, params, sn)


def build_auxiliary(spec: NetworkSpec, seed: int, dtype=np.float32) -> NetworkState:
    rng = np.random.default_rng(seed)
    fan_in = 2 * spec.feature_width
    hidden = spec.aux_hidden
    params = {
        "w0": T.param(_kaiming(rng, fan_in, hidden, np.sqrt(2.0), dtype)),
        "b0": T.param(np.zeros(hidden, dtype=dtype)),
        # zero output layer: A starts at exactly 0.5 probability
        "w1": T.param(np.zeros((hidden, 1), dtype=dtype)),
        "b1": T.param(np.zeros(1, dtype=dtype)),
    }
    return NetworkState("auxiliary", spec, params)


def aux_param_count(spec: NetworkSpec) -> int:
    f, c = spec.feature_width, spec.aux_hidden
    return (2 * f) * c + c + c * 1 + 1


# ---------------------------------------------------------------------------
# spectral normalization
# ---------------------------------------------------------------------------

def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def _power_iterate(w: np.ndarray, state: SpectralNormState) -> float:
    v = w.T @ state.u
    nv = np.linalg.norm(v)
    if nv > 0:
        state.v = (v / nv).astype(w.dtype)
    u = w @ state.v
    nu = np.linalg.norm(u)
    if nu > 0:
        state.u = (u / nu).astype(w.dtype)
    state.sigma = float(state.u @ w @ state.v)
    return state.sigma


def spectral_normalize(weight: T.Tensor, state: SpectralNormState, update: bool = True) -> T.Tensor:
    """Divide a weight matrix by its power-iteration sigma estimate.

    `update` runs one power iteration first (training path); the frozen
    path reuses the stored vectors so evaluation never mutates state.
    Gradients flow through the division with u, v treated as constants.
    """
    if weight.data.ndim != 2:
        raise T.ShapeError(f"spectral_normalize: expected a matrix, got shape {weight.shape}")
    if update:
        sigma = _power_iterate(weight.data, state)
    else:
        sigma = float(state.u @ weight.data @ state.v)
    if abs(sigma) < 1e-12:
        warnings.warn("spectral_normalize: sigma below 1e-12 floor (zero weight?)", RuntimeWarning)
        return T.mul(weight, T.constant(np.asarray(1e12, dtype=weight.data.dtype)))
    if not weight.requires_grad:
        return T.Tensor(weight.data / np.asarray(sigma, dtype=weight.data.dtype))
    u = T.constant(state.u.reshape(1, -1))
    v = T.constant(state.v.reshape(-1, 1))
    sigma_t = T.matmul(T.matmul(u, weight), v)  # (1, 1), differentiable in W
    return T.div(weight, sigma_t)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def conditional_embed(x: T.Tensor, class_ids, state: NetworkState) -> T.Tensor:
    """Concatenate the learned class embedding; identity when unconditional."""
    if not state.spec.conditional:
        return x
    if class_ids is None:
        raise ValueError(f"{state.role}: conditional spec requires class ids")
    ids = np.asarray(class_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] != x.shape[0]:
        raise T.ShapeError(f"class ids shape {ids.shape} does not match batch {x.shape[0]}")
    if ids.min() < 0 or ids.max() >= state.spec.n_classes:
        raise ValueError(f"unknown class id in {ids[(ids < 0) | (ids >= state.spec.n_classes)][:4]}")
    rows = T.take(state.params["embed"], ids)
    return T.concat([x, rows], axis=1)


def generator_forward(g: NetworkState, z: T.Tensor, class_ids=None) -> T.Tensor:
    spec = g.spec
    if z.data.ndim != 2 or z.shape[1] != spec.latent_dim:
        raise T.ShapeError(f"generator: latent batch must be (b, {spec.latent_dim}), got {z.shape}")
    x = conditional_embed(z, class_ids, g)
    n_layers = len(spec.g_hidden) + 1
    for i in range(n_layers):
        x = T.add(T.matmul(x, g.params[f"w{i}"]), g.params[f"b{i}"])
        if i == n_layers - 1:
            x = T.tanh(x)
        elif spec.g_leak > 0:
            x = T.leaky_relu(x, spec.g_leak)
        else:
            x = T.relu(x)
    return T.reshape(x, (z.shape[0], *spec.image_shape))


def _tap_features(spec: NetworkSpec, tap_act: T.Tensor) -> T.Tensor:
    b = tap_act.shape[0]
    x = T.reshape(tap_act, (b, *spec.tap_shape))
    x = T.avg_pool2d(x, spec.pool_kernel)
    return T.reshape(x, (b, spec.feature_width))


def discriminator_forward(d: NetworkState, images: T.Tensor, class_ids=None,
                          update_sn: bool = False, collect: list | None = None):
    """Full pass: returns (logits (b, 1), pooled tap features (b, F)).

    `collect` gathers every layer activation so tests can assert that the
    encoder is a strict prefix of this computation.
    """
    spec = d.spec
    if images.data.ndim != 4 or images.shape[1:] != spec.image_shape:
        raise T.ShapeError(f"discriminator: images must be (b, {spec.image_shape}), got {images.shape}")
    b = images.shape[0]
    x = T.reshape(images, (b, spec.image_width))
    if spec.input_scale != 1.0:
        x = T.mul(x, T.constant(np.asarray(spec.input_scale, dtype=images.data.dtype)))
    features = None
    n_layers = len(spec.d_hidden) + 1
    for i in range(n_layers):
        w = spectral_normalize(d.params[f"w{i}"], d.sn[f"w{i}"], update=update_sn)
        x = T.add(T.matmul(x, w), d.params[f"b{i}"])
        if i < n_layers - 1:
            x = T.leaky_relu(x, spec.leak)
            if collect is not None:
                collect.append((f"act{i}", x.data))
            if i == spec.feature_tap_index:
                features = _tap_features(spec, x)
                x = conditional_embed(x, class_ids, d)
    return x, features


def discriminator_features(d: NetworkState, images: T.Tensor) -> T.Tensor:
    """Encoder E: prefix of D up to the tap, average-pooled and flattened."""
    spec = d.spec
    if images.data.ndim != 4 or images.shape[1:] != spec.image_shape:
        raise T.ShapeError(f"encoder: images must be (b, {spec.image_shape}), got {images.shape}")
    b = images.shape[0]
    x = T.reshape(images, (b, spec.image_width))
    if spec.input_scale != 1.0:
        x = T.mul(x, T.constant(np.asarray(spec.input_scale, dtype=images.data.dtype)))
    for i in range(spec.feature_tap_index + 1):
        w = spectral_normalize(d.params[f"w{i}"], d.sn[f"w{i}"], update=False)
        x = T.leaky_relu(T.add(T.matmul(x, w), d.params[f"b{i}"]), spec.leak)
    return _tap_features(spec, x)


def rotation_head(d: NetworkState, features: T.Tensor) -> T.Tensor:
    """4-way rotation logits from pooled tap features."""
    return T.add(T.matmul(features, d.params["rot_w"]), d.params["rot_b"])


def auxiliary_forward(a: NetworkState, f1: T.Tensor, f2: T.Tensor) -> T.Tensor:
    """Probability in (0, 1) that two feature deltas share the same epsilon."""
    fw = a.spec.feature_width
    if f1.shape != f2.shape or f1.data.ndim != 2 or f1.shape[1] != fw:
        raise T.ShapeError(f"auxiliary: expected two (b, {fw}) halves, got {f1.shape} and {f2.shape}")
    x = T.concat([f1, f2], axis=1)
    h = T.relu(T.add(T.matmul(x, a.params["w0"]), a.params["b0"]))
    return T.sigmoid(T.add(T.matmul(h, a.params["w1"]), a.params["b1"]))
