import itertools
import math

import numpy as np
import pytest

from ltgan import nn, objectives as obj
from ltgan import tensor as T

SPEC = nn.NetworkSpec(latent_dim=8, image_shape=(1, 4, 4), g_hidden=(16,),
                      d_hidden=(16, 16), feature_tap_index=1, tap_shape=(4, 2, 2))


def _nets(dtype=np.float64, seed=0):
    g = nn.build_generator(SPEC, seed, dtype=dtype)
    d = nn.build_discriminator(SPEC, seed + 1, dtype=dtype)
    a = nn.build_auxiliary(SPEC, seed + 2, dtype=dtype)
    a.params["w1"].data[:] = np.random.default_rng(seed + 3).normal(size=a.params["w1"].shape)
    return g, d, a


# -- hinge / non-saturating ---------------------------------------------------

def test_hinge_zero_at_met_margins():
    l = obj.hinge_d_loss(T.constant(np.full((4, 1), 1.0)), T.constant(np.full((4, 1), -1.0)))
    assert l.item() == 0.0


def test_hinge_at_zero_logits():
    l = obj.hinge_d_loss(T.constant(np.zeros((3, 1))), T.constant(np.zeros((3, 1))))
    assert l.item() == pytest.approx(2.0, abs=1e-12)


def test_hinge_zero_iff_margins_met():
    rng = np.random.default_rng(0)
    real = T.constant(rng.uniform(1.0, 3.0, size=(8, 1)))
    fake = T.constant(rng.uniform(-3.0, -1.0, size=(8, 1)))
    assert obj.hinge_d_loss(real, fake).item() == 0.0
    real_bad = T.constant(np.array([[0.99], [2.0]]))
    assert obj.hinge_d_loss(real_bad, fake).item() > 0.0


def test_hinge_g_symmetric_cancellation():
    assert obj.hinge_g_loss(T.constant(np.array([[2.0], [-2.0]]))).item() == 0.0


def test_nonsat_at_zero_logits():
    l_d, l_g = obj.nonsat_losses(T.constant(np.zeros((5, 1))), T.constant(np.zeros((5, 1))))
    assert l_d.item() == pytest.approx(2.0 * math.log(2.0), abs=1e-12)
    assert l_g.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_nonsat_limit_and_clamp_count():
    obj.reset_clamp_events()
    l_d, _ = obj.nonsat_losses(T.constant(np.full((2, 1), 50.0)), T.constant(np.full((2, 1), -50.0)))
    assert l_d.item() == pytest.approx(0.0, abs=1e-9)
    obj.reset_clamp_events()
    obj.nonsat_losses(T.constant(np.full((2, 1), 500.0)), T.constant(np.full((2, 1), -500.0)))
    assert obj.clamp_events() > 0  # sigmoid underflows to 0/1 and hits the floor


def test_empty_batch_rejected():
    with pytest.raises(obj.ConfigError, match="empty"):
        obj.hinge_g_loss(T.constant(np.zeros((0, 1))))


# -- latent batch construction ------------------------------------------------

def test_latent_batch_identity_and_swap_labels():
    rng = np.random.default_rng(1)
    batch = obj.make_latent_batch(1, 4, 1.0, 0.5, rng)
    assert np.array_equal(obj.labels_from_pattern(batch.eps_id, np.array([0, 1])), [1.0, 1.0])
    assert np.array_equal(obj.labels_from_pattern(batch.eps_id, np.array([1, 0])), [0.0, 0.0])


def test_latent_batch_structure():
    rng = np.random.default_rng(2)
    batch = obj.make_latent_batch(3, 5, 1.0, 0.4, rng)
    batch.validate()
    assert batch.z.shape == (6, 5)
    assert np.array_equal(batch.eps[0], batch.eps[2]) and np.array_equal(batch.eps[1], batch.eps[3])
    assert not np.array_equal(batch.eps[0], batch.eps[1])


def test_latent_batch_sigma_ordering_enforced():
    with pytest.raises(obj.ConfigError, match="sigma"):
        obj.make_latent_batch(2, 4, 1.0, 1.0, np.random.default_rng(0))


@pytest.mark.parametrize("b", [1, 2, 3])
def test_label_enumeration_oracle(b):
    """Exhaustive (2b)! permutations: labels match the identity comparison
    and the mean positive fraction equals the enumerated value."""
    eps_id = np.tile(np.array([0, 1]), b)
    n = 2 * b
    total_pos = 0
    for perm in itertools.permutations(range(n)):
        perm = np.array(perm)
        expected = (eps_id == eps_id[perm]).astype(float)
        got = obj.labels_from_pattern(eps_id, perm)
        assert np.array_equal(got, expected)
        total_pos += int(expected.sum())
    frac = total_pos / (math.factorial(n) * n)
    # each row matches b of the 2b slots under a uniform permutation
    assert frac == pytest.approx(b / (2 * b - 0), abs=1e-12) or frac == pytest.approx(0.5, abs=1e-12)


def test_label_fraction_exact_value():
    # direct enumeration value for b = 2 (pattern 0 1 0 1): mean fraction 1/2
    eps_id = np.tile(np.array([0, 1]), 2)
    fracs = [obj.labels_from_pattern(eps_id, np.array(p)).mean()
             for p in itertools.permutations(range(4))]
    assert np.mean(fracs) == pytest.approx(0.5, abs=1e-15)


# -- feature delta and pairing loss -------------------------------------------

def test_feature_delta_zero_eps():
    g, d, _ = _nets()
    rng = np.random.default_rng(3)
    batch = obj.make_latent_batch(2, SPEC.latent_dim, 1.0, 0.5, rng)
    batch.eps[:] = 0.0
    f = obj.lt_feature_delta(d, g, batch)
    assert np.array_equal(f.data, np.zeros_like(f.data))


def test_feature_delta_antisymmetry():
    g, d, _ = _nets()
    rng = np.random.default_rng(4)
    batch = obj.make_latent_batch(2, SPEC.latent_dim, 1.0, 0.5, rng)
    f = obj.lt_feature_delta(d, g, batch)
    swapped = obj.LatentBatch(batch.z + batch.eps, -batch.eps, batch.eps_id, batch.shuffle, batch.y_ss)
    f_swapped = obj.lt_feature_delta(d, g, swapped)
    assert np.allclose(f.data, -f_swapped.data, atol=1e-12)


def test_feature_delta_grad_wrt_g_params():
    g, d, _ = _nets()
    batch = obj.make_latent_batch(1, SPEC.latent_dim, 1.0, 0.5, np.random.default_rng(5))
    with T.Tape():
        f = obj.lt_feature_delta(d, g, batch)
        loss = T.tsum(T.mul(f, f))
        grads = T.backward(loss, wrt=list(g.params.values()))
    assert any(np.abs(v).max() > 0 for v in grads.values())
    g.set_requires_grad(False)
    with T.Tape():
        f = obj.lt_feature_delta(d, g, batch)
        loss = T.tsum(T.mul(f, f))
        grads = T.backward(loss, wrt=list(g.params.values()))
    assert all(np.abs(v).max() == 0 for v in grads.values())


def test_lt_loss_constant_half_is_ln2():
    _, _, a = _nets()
    a.params["w1"].data[:] = 0.0  # back to the exact 0.5 classifier
    rng = np.random.default_rng(6)
    f = T.constant(rng.normal(size=(8, SPEC.feature_width)))
    y = rng.integers(0, 2, 8).astype(float)
    loss = obj.lt_loss(a, f, np.arange(8), y)
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-9)


def test_lt_loss_perfect_classifier_floor():
    spec = SPEC
    a = nn.build_auxiliary(spec, seed=0, dtype=np.float64)
    rng = np.random.default_rng(7)
    f = T.constant(rng.normal(size=(4, spec.feature_width)))
    y = np.array([1.0, 0.0, 1.0, 0.0])
    probs = T.constant(y.reshape(-1, 1))
    loss = obj.binary_cross_entropy(probs, y)
    assert loss.item() <= 1e-11  # only the clamp floor contributes


def test_lt_loss_hand_built_two_pairs():
    p = T.constant(np.array([[0.9], [0.2]]))
    loss = obj.binary_cross_entropy(p, np.array([1.0, 0.0]))
    assert loss.item() == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2.0, abs=1e-12)


def test_lt_loss_permutation_consistent():
    _, _, a = _nets()
    rng = np.random.default_rng(8)
    n = 6
    f = rng.normal(size=(n, SPEC.feature_width))
    shuffle = rng.permutation(n)
    y = obj.labels_from_pattern(np.tile([0, 1], 3), shuffle)
    base = obj.lt_loss(a, T.constant(f), shuffle, y).item()
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    shuffle2 = inv[shuffle[perm]]
    relabeled = obj.lt_loss(a, T.constant(f[perm]), shuffle2, y[perm]).item()
    assert relabeled == pytest.approx(base, abs=1e-12)


# -- combined objective --------------------------------------------------------

def test_objective_lambda_zero_matches_adversarial():
    g, d, a = _nets()
    batch = obj.make_latent_batch(2, SPEC.latent_dim, 1.0, 0.5, np.random.default_rng(9))
    res = obj.ltgan_objective(g, d, a, batch, lam=0.0)
    assert res.total.item() == pytest.approx(res.g_adv.item(), abs=1e-12)


def test_objective_report_identity():
    g, d, a = _nets()
    batch = obj.make_latent_batch(2, SPEC.latent_dim, 1.0, 0.5, np.random.default_rng(10))
    for lam in (0.5, 1.0, 2.0):
        rep = obj.ltgan_objective(g, d, a, batch, lam=lam).report(lam)
        assert abs(rep.total_g - rep.g_adv - lam * rep.aux) < 1e-9


def test_objective_negative_lambda_rejected():
    g, d, a = _nets()
    batch = obj.make_latent_batch(1, SPEC.latent_dim, 1.0, 0.5, np.random.default_rng(11))
    with pytest.raises(obj.ConfigError, match="lambda"):
        obj.ltgan_objective(g, d, a, batch, lam=-0.1)


@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_objective_aux_gradient_scales_with_lambda(lam):
    g, d, a = _nets()
    batch = obj.make_latent_batch(2, SPEC.latent_dim, 1.0, 0.5, np.random.default_rng(12))
    with T.Tape():
        res = obj.ltgan_objective(g, d, a, batch, lam=lam)
        g_total = T.backward(res.total, wrt=list(a.params.values()))
        g_aux = T.backward(res.aux, wrt=list(a.params.values()))
    for p in a.params.values():
        assert np.allclose(g_total[p], lam * g_aux[p], rtol=1e-10, atol=1e-12)


def test_objective_full_gradcheck():
    """Central finite differences over every G parameter of the complete
    LT generator loss on a 2-sample toy net."""
    g, d, a = _nets(seed=20)
    batch = obj.make_latent_batch(1, SPEC.latent_dim, 1.0, 0.5, np.random.default_rng(13))
    d.set_requires_grad(False)
    a.set_requires_grad(False)

    def f(*params):
        res = obj.ltgan_objective(g, d, a, batch, lam=1.0)
        return res.total

    report = T.grad_check(f, list(g.params.values()), h=1e-5, tol=1e-4)
    assert report.passed, f"max rel err {report.max_rel_err:.3e}"


# -- rotation baseline ----------------------------------------------------------

def test_rotation_identity_and_uniform_loss():
    g, d, _ = _nets()
    rng = np.random.default_rng(14)
    imgs = T.constant(rng.normal(size=(8, *SPEC.image_shape)))
    d.params["rot_w"].data[:] = 0.0
    d.params["rot_b"].data[:] = 0.0
    loss = obj.rotation_ss_loss(d, imgs, np.random.default_rng(0))
    assert loss.item() == pytest.approx(math.log(4.0), abs=1e-12)


def test_rotation_rejects_non_square():
    d = nn.build_discriminator(nn.NetworkSpec(latent_dim=4, image_shape=(1, 2, 8), g_hidden=(8,),
                                              d_hidden=(16, 16), feature_tap_index=1,
                                              tap_shape=(4, 2, 2)), seed=0)
    with pytest.raises(T.ShapeError, match="square"):
        obj.rotation_ss_loss(d, T.constant(np.zeros((2, 1, 2, 8))), np.random.default_rng(0))
