import numpy as np
import pytest

from ltgan import nn
from ltgan import tensor as T

SPEC = nn.NetworkSpec()
SPEC64 = dict(dtype=np.float64)


def test_generator_output_shape_and_range():
    g = nn.build_generator(SPEC, seed=0)
    z = T.constant(np.random.default_rng(0).normal(size=(5, SPEC.latent_dim)).astype(np.float32))
    out = nn.generator_forward(g, z)
    assert out.shape == (5, *SPEC.image_shape)
    assert np.all(out.data >= -1.0) and np.all(out.data <= 1.0)


def test_build_determinism():
    a = nn.build_generator(SPEC, seed=7)
    b = nn.build_generator(SPEC, seed=7)
    assert nn.state_digest(a) == nn.state_digest(b)
    assert nn.state_digest(nn.build_discriminator(SPEC, 3)) == nn.state_digest(nn.build_discriminator(SPEC, 3))


def test_discriminator_logit_shape():
    d = nn.build_discriminator(SPEC, seed=1)
    imgs = T.constant(np.random.default_rng(1).normal(size=(4, *SPEC.image_shape)).astype(np.float32))
    logits, feats = nn.discriminator_forward(d, imgs)
    assert logits.shape == (4, 1)
    assert feats.shape == (4, SPEC.feature_width)


def test_bad_spec_rejected():
    with pytest.raises(nn.SpecError, match="tap"):
        nn.NetworkSpec(tap_shape=(4, 4, 5))
    with pytest.raises(nn.SpecError, match="logit"):
        nn.NetworkSpec(feature_tap_index=2)
    with pytest.raises(nn.SpecError, match="conditional"):
        nn.NetworkSpec(n_classes=2)


def test_features_deterministic_and_width():
    d = nn.build_discriminator(SPEC, seed=2)
    imgs = T.constant(np.random.default_rng(2).normal(size=(3, *SPEC.image_shape)).astype(np.float32))
    f1 = nn.discriminator_features(d, imgs)
    f2 = nn.discriminator_features(d, imgs)
    assert f1.shape == (3, SPEC.feature_width)
    assert np.array_equal(f1.data, f2.data)


def test_encoder_is_prefix_of_discriminator():
    d = nn.build_discriminator(SPEC, seed=3)
    imgs = T.constant(np.random.default_rng(3).normal(size=(2, *SPEC.image_shape)).astype(np.float32))
    collected: list = []
    logits, feats_full = nn.discriminator_forward(d, imgs, update_sn=False, collect=collected)
    feats = nn.discriminator_features(d, imgs)
    assert np.array_equal(feats.data, feats_full.data)
    # recompute the prefix independently and compare each shared activation
    x = imgs.data.reshape(2, -1)
    for i, (_, act) in enumerate(collected):
        w = d.params[f"w{i}"].data / d.sn[f"w{i}"].sigma
        pre = x @ w + d.params[f"b{i}"].data
        x = np.where(pre > 0, pre, SPEC.leak * pre)
        assert np.allclose(act, x, atol=1e-6)


def test_encoder_gradient_wrt_latent():
    spec = nn.NetworkSpec(latent_dim=6, g_hidden=(16,), d_hidden=(16, 16),
                          feature_tap_index=1, tap_shape=(4, 2, 2), image_shape=(1, 4, 4))
    g = nn.build_generator(spec, seed=4, dtype=np.float64)
    d = nn.build_discriminator(spec, seed=5, dtype=np.float64)

    def f(z):
        return T.tsum(nn.discriminator_features(d, nn.generator_forward(g, z)))

    z0 = T.param(np.random.default_rng(6).normal(size=(2, 6)))
    report = T.grad_check(f, [z0], h=1e-6, tol=1e-5)
    assert report.passed, report


def test_auxiliary_range_and_initial_half():
    a = nn.build_auxiliary(SPEC, seed=8)
    rng = np.random.default_rng(8)
    f1 = T.constant(rng.normal(size=(6, SPEC.feature_width)).astype(np.float32))
    f2 = T.constant(rng.normal(size=(6, SPEC.feature_width)).astype(np.float32))
    p = nn.auxiliary_forward(a, f1, f2)
    assert p.shape == (6, 1)
    assert np.all(p.data == 0.5)  # zero output layer
    a.params["w1"].data[:] = rng.normal(size=a.params["w1"].shape)
    p = nn.auxiliary_forward(a, f1, f2)
    assert np.all((p.data > 0) & (p.data < 1))


def test_auxiliary_order_sensitivity():
    a = nn.build_auxiliary(SPEC, seed=9)
    rng = np.random.default_rng(9)
    a.params["w1"].data[:] = rng.normal(size=a.params["w1"].shape)
    f1 = T.constant(rng.normal(size=(4, SPEC.feature_width)).astype(np.float32))
    f2 = T.constant(rng.normal(size=(4, SPEC.feature_width)).astype(np.float32))
    p12 = nn.auxiliary_forward(a, f1, f2)
    p21 = nn.auxiliary_forward(a, f2, f1)
    assert not np.allclose(p12.data, p21.data)


def test_auxiliary_width_mismatch():
    a = nn.build_auxiliary(SPEC, seed=10)
    bad = T.constant(np.zeros((2, SPEC.feature_width + 1), dtype=np.float32))
    ok = T.constant(np.zeros((2, SPEC.feature_width), dtype=np.float32))
    with pytest.raises(T.ShapeError):
        nn.auxiliary_forward(a, bad, ok)


def test_aux_param_count_matches_architecture():
    a = nn.build_auxiliary(SPEC, seed=11)
    total = sum(p.size for p in a.params.values())
    assert total == nn.aux_param_count(SPEC)
    f, c = SPEC.feature_width, SPEC.aux_hidden
    assert nn.aux_param_count(SPEC) == (2 * f) * c + c + c * 1 + 1


def test_spectral_norm_identity():
    state = nn.SpectralNormState(u=nn._unit(np.ones(3)), v=nn._unit(np.ones(3)))
    w = T.constant(np.eye(3))
    for _ in range(25):
        out = nn.spectral_normalize(w, state)
    assert np.allclose(out.data, np.eye(3), atol=1e-9)


def test_spectral_norm_diag_exact():
    rng = np.random.default_rng(12)
    state = nn.SpectralNormState(u=nn._unit(rng.normal(size=2)), v=nn._unit(rng.normal(size=2)))
    w = T.constant(np.diag([2.0, 1.0]))
    for _ in range(60):
        out = nn.spectral_normalize(w, state)
    assert abs(state.sigma - 2.0) < 1e-6  # exact SVD oracle: top singular value is 2
    assert np.allclose(out.data, np.diag([1.0, 0.5]), atol=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_spectral_norm_bounds_any_matrix(seed):
    rng = np.random.default_rng(seed)
    w = T.constant(rng.normal(size=(24, 16)) * 3.0)
    state = nn.SpectralNormState(u=nn._unit(rng.normal(size=24)), v=nn._unit(rng.normal(size=16)))
    for _ in range(20):
        out = nn.spectral_normalize(w, state)
    top = np.linalg.svd(out.data, compute_uv=False)[0]
    assert top <= 1.0 + 1e-3


def test_spectral_norm_zero_matrix_warns():
    state = nn.SpectralNormState(u=nn._unit(np.ones(2)), v=nn._unit(np.ones(2)))
    with pytest.warns(RuntimeWarning, match="sigma"):
        out = nn.spectral_normalize(T.constant(np.zeros((2, 2))), state)
    assert np.array_equal(out.data, np.zeros((2, 2)))


def test_spectral_norm_gradient_flows():
    rng = np.random.default_rng(13)
    state = nn.SpectralNormState(u=nn._unit(rng.normal(size=3)), v=nn._unit(rng.normal(size=3)))

    def f(w):
        return T.tsum(T.mul(nn.spectral_normalize(w, state, update=False), T.constant(np.ones((3, 3)))))

    w0 = T.param(rng.normal(size=(3, 3)))
    nn._power_iterate(w0.data, state)
    report = T.grad_check(f, [w0], h=1e-6, tol=1e-5)
    assert report.passed, report


def test_conditional_embed_passthrough_and_width():
    g = nn.build_generator(SPEC, seed=14)
    z = T.constant(np.zeros((3, SPEC.latent_dim), dtype=np.float32))
    assert nn.conditional_embed(z, None, g) is z

    cspec = nn.NetworkSpec(n_classes=2, embed_dim=8)
    gc = nn.build_generator(cspec, seed=15)
    out = nn.conditional_embed(z, np.array([0, 1, 0]), gc)
    assert out.shape == (3, cspec.latent_dim + cspec.embed_dim)
    with pytest.raises(ValueError, match="class"):
        nn.conditional_embed(z, np.array([0, 2, 0]), gc)


def test_conditional_networks_distinguish_classes():
    cspec = nn.NetworkSpec(n_classes=2, embed_dim=8)
    g = nn.build_generator(cspec, seed=16)
    d = nn.build_discriminator(cspec, seed=17)
    z = T.constant(np.random.default_rng(16).normal(size=(4, cspec.latent_dim)).astype(np.float32))
    img0 = nn.generator_forward(g, z, np.zeros(4, dtype=int))
    img1 = nn.generator_forward(g, z, np.ones(4, dtype=int))
    assert not np.allclose(img0.data, img1.data)
    l0, _ = nn.discriminator_forward(d, img0, np.zeros(4, dtype=int))
    l1, _ = nn.discriminator_forward(d, img0, np.ones(4, dtype=int))
    assert not np.allclose(l0.data, l1.data)


def test_discriminator_sn_bound_after_build():
    d = nn.build_discriminator(SPEC, seed=18)
    for name, state in d.sn.items():
        w = d.params[name].data / state.sigma
        assert np.linalg.svd(w, compute_uv=False)[0] <= 1.0 + 1e-2
