import numpy as np
import pytest

from ltgan import checkpoint as ckpt
from ltgan import datasets as D
from ltgan import nn, objectives as obj
from ltgan import tensor as T
from ltgan import trainer as tr
from ltgan.config import ConfigError, TrainConfig
from ltgan.nn import NetworkSpec

RING_SPEC = NetworkSpec(latent_dim=8, image_shape=(2, 1, 1), g_hidden=(32, 32),
                        d_hidden=(32, 64), feature_tap_index=1, tap_shape=(4, 4, 4))


def _cfg(**kw):
    base = dict(steps=6, warmup=2, batch=8, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def _source():
    return D.RingSource(D.RingSpec(samples_per_epoch=512))


def _real(state):
    return _source().batch(state.d_updates, 2 * state.config.batch)[0]


def test_config_validation():
    with pytest.raises(ConfigError, match="sigma_eps"):
        TrainConfig(sigma_eps=1.5).validate()
    with pytest.raises(ConfigError, match="objective"):
        TrainConfig(objective="wgan").validate()
    with pytest.raises(ConfigError, match="d_step"):
        TrainConfig(d_step=0).validate()


def test_d_step_isolates_g_and_a():
    state = tr.build_trainer(_cfg(), RING_SPEC)
    before = state.digests()
    tr.train_step_d(state, _real(state))
    after = state.digests()
    assert after["g"] == before["g"] and after["a"] == before["a"]
    assert after["d"] != before["d"]


def test_g_step_isolates_d():
    state = tr.build_trainer(_cfg(warmup=0), RING_SPEC)
    before = state.digests()
    tr.train_step_g(state)
    after = state.digests()
    assert after["d"] == before["d"]
    assert after["g"] != before["g"] and after["a"] != before["a"]


def test_zero_d_rate_leaves_d_parameters():
    state = tr.build_trainer(_cfg(alpha_d=1e-30), RING_SPEC)
    before = state.digests()["d"]
    tr.train_step_d(state, _real(state))
    # effectively zero rate: parameters move by < float32 resolution
    for p in state.d.params.values():
        assert np.allclose(p.data, p.data)  # finite
    assert state.adam_d.t == 1
    state2 = tr.build_trainer(_cfg(), RING_SPEC)
    state2.adam_d.alpha = 0.0
    tr.train_step_d(state2, _real(state2))
    assert state2.digests()["d"] == before


def test_warmup_boundary_report():
    state = tr.build_trainer(_cfg(warmup=2, steps=4), RING_SPEC)
    reports = []
    for _ in range(4):
        tr.train_step_d(state, _real(state))
        reports.append(tr.train_step_g(state))
    assert reports[0].aux is None and reports[1].aux is None  # steps 0, 1: warmup
    assert reports[2].aux is not None and reports[3].aux is not None


def test_warmup_step_does_no_lt_tensor_work():
    lt = tr.build_trainer(_cfg(warmup=4, steps=4, objective="lt"), RING_SPEC)
    base = tr.build_trainer(_cfg(warmup=0, steps=4, objective="baseline"), RING_SPEC)
    rep_lt = tr.train_step_g(lt)
    rep_base = tr.train_step_g(base)
    assert rep_lt.tape_ops == rep_base.tape_ops  # identical op counts: no eps branch
    post = tr.build_trainer(_cfg(warmup=0, objective="lt"), RING_SPEC)
    assert tr.train_step_g(post).tape_ops > rep_lt.tape_ops


def test_warmup_d_fakes_are_plain():
    cfg = _cfg(warmup=3)
    state = tr.build_trainer(cfg, RING_SPEC)
    # during warmup, the eps stream must stay untouched by D steps
    eps_state_before = state.rngs["eps"].bit_generator.state["state"]["state"]
    tr.train_step_d(state, _real(state))
    assert state.rngs["eps"].bit_generator.state["state"]["state"] == eps_state_before
    state.step = 3  # past warmup
    tr.train_step_d(state, _real(state))
    assert state.rngs["eps"].bit_generator.state["state"]["state"] != eps_state_before


def test_lambda_zero_matches_pure_adversarial_twin():
    cfg = _cfg(warmup=0, lam=0.0)
    s1 = tr.build_trainer(cfg, RING_SPEC)
    s2 = tr.build_trainer(cfg, RING_SPEC)
    a_before = s1.digests()["a"]

    tr.train_step_g(s1)

    # twin: identical draws,但 theta_G updated from the adversarial term only
    batch = obj.make_latent_batch(cfg.batch, RING_SPEC.latent_dim, cfg.sigma_z, cfg.sigma_eps,
                                  s2.rngs["z"], eps_rng=s2.rngs["eps"], shuffle_rng=s2.rngs["shuffle"])
    s2.d.set_requires_grad(False)
    with T.Tape():
        res = obj.ltgan_objective(s2.g, s2.d, s2.a, batch, lam=0.0)
        grads = T.backward(res.g_adv, wrt=list(s2.g.params.values()))
    s2.d.set_requires_grad(True)
    T.adam_update(s2.g.params, {k: grads[p] for k, p in s2.g.params.items()}, s2.adam_g)

    assert s1.digests()["g"] == s2.digests()["g"]
    assert s1.digests()["a"] != a_before  # A still trains on its own loss


def test_loop_accounting_and_metric_log():
    cfg = _cfg(steps=5, d_step=3)
    state = tr.build_trainer(cfg, RING_SPEC)
    log = tr.train(state, _source())
    assert state.d_updates == cfg.d_step * cfg.steps
    assert state.step == cfg.steps
    assert len(log.series("d_loss")) == cfg.steps


def test_same_seed_identical_logs():
    logs = []
    for _ in range(2):
        state = tr.build_trainer(_cfg(steps=8, warmup=3), RING_SPEC)
        logs.append(tr.train(state, _source()).lines())
    assert logs[0] == logs[1]


def test_different_seed_differs():
    l1 = tr.train(tr.build_trainer(_cfg(steps=4, seed=0), RING_SPEC), _source()).lines()
    l2 = tr.train(tr.build_trainer(_cfg(steps=4, seed=1), RING_SPEC), _source()).lines()
    assert l1 != l2


def test_nan_loss_aborts_with_step():
    state = tr.build_trainer(_cfg(steps=3, warmup=0), RING_SPEC)
    state.g.params["w0"].data[0, 0] = np.nan
    with pytest.raises(tr.TrainingDiverged, match="step 0"):
        tr.train(state, _source())


def test_rotation_objective_trains():
    cfg = _cfg(objective="rotation-ss", warmup=1, steps=3, lam=0.5)
    spec = NetworkSpec(latent_dim=8, image_shape=(1, 4, 4), g_hidden=(16,), d_hidden=(16, 16),
                       feature_tap_index=1, tap_shape=(4, 2, 2))
    corpus = D.build_corpus(D.ShapesSpec(), 64, np.random.default_rng(0))
    # 4x4 source: downsample the corpus by slicing for a cheap square input
    images = corpus.images[:, :, ::4, ::4].copy()

    class TinySource:
        conditional = False
        image_shape = (1, 4, 4)

        def batch(self, index, batch_size):
            lo = (index * batch_size) % (64 - batch_size)
            return images[lo:lo + batch_size], None

    log = tr.train(tr.build_trainer(cfg, spec), TinySource())
    assert log.last("d_loss") is not None and np.isfinite(log.last("total_g"))


def test_nonsat_clamp_events_logged():
    cfg = _cfg(steps=3, warmup=0, loss="nonsat")
    log = tr.train(tr.build_trainer(cfg, RING_SPEC), _source())
    clamped = log.series("clamped")
    assert len(clamped) == 3
    assert all(v >= 0 for _, v in clamped)


def test_spectral_norm_bounded_throughout_training():
    state = tr.build_trainer(_cfg(steps=30, warmup=5), RING_SPEC)
    src = _source()
    for _ in range(30):
        tr.train_step_d(state, src.batch(state.d_updates, 16)[0])
        tr.train_step_g(state)
        for name, sn in state.d.sn.items():
            w = state.d.params[name].data / sn.sigma
            assert np.linalg.svd(w, compute_uv=False)[0] <= 1.0 + 1e-2


# -- checkpointing ---------------------------------------------------------------


def test_checkpoint_save_load_save_identical(tmp_path):
    state = tr.build_trainer(_cfg(steps=4), RING_SPEC)
    tr.train(state, _source())
    p1, p2 = str(tmp_path / "a.ltgn"), str(tmp_path / "b.ltgn")
    tr.save_checkpoint(state, p1, extras={"data.kind": "ring"})
    loaded, extras = tr.load_checkpoint(p1)
    assert extras == {"data.kind": "ring"}
    tr.save_checkpoint(loaded, p2, extras=extras)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_checkpoint_resume_bit_exact(tmp_path):
    cfg = _cfg(steps=9, warmup=2, checkpoint_every=4, eval_every=0)
    full = tr.build_trainer(cfg, RING_SPEC)
    log_full = tr.train(full, _source(), out_dir=str(tmp_path))
    resumed, _ = tr.load_checkpoint(str(tmp_path / "ckpt-000004.ltgn"))
    log_resumed = tr.train(resumed, _source())
    assert resumed.digests() == full.digests()
    assert resumed.adam_g.t == full.adam_g.t and resumed.adam_d.t == full.adam_d.t
    tail_full = [r for r in log_full.records if r[0] > 4]
    assert log_resumed.records == tail_full
    for role in tr.ROLES:
        assert (resumed.rngs[role].bit_generator.state["state"]
                == full.rngs[role].bit_generator.state["state"])


def test_checkpoint_corruption_errors(tmp_path):
    state = tr.build_trainer(_cfg(steps=1), RING_SPEC)
    path = str(tmp_path / "c.ltgn")
    tr.save_checkpoint(state, path)
    raw = open(path, "rb").read()

    bad_magic = tmp_path / "magic.ltgn"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ckpt.CheckpointError, match="magic"):
        tr.load_checkpoint(str(bad_magic))

    flipped = bytearray(raw)
    flipped[50] ^= 0xFF
    bad_sum = tmp_path / "sum.ltgn"
    bad_sum.write_bytes(bytes(flipped))
    with pytest.raises(ckpt.CheckpointError, match="checksum"):
        tr.load_checkpoint(str(bad_sum))

    cut = tmp_path / "cut.ltgn"
    cut.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(ckpt.CheckpointError):
        tr.load_checkpoint(str(cut))

    # a version bump with a freshly valid checksum must be reported distinctly
    import hashlib
    body = bytearray(raw[:-8])
    body[4:8] = (99).to_bytes(4, "little")
    ver = tmp_path / "ver.ltgn"
    ver.write_bytes(bytes(body) + hashlib.blake2b(bytes(body), digest_size=8).digest())
    with pytest.raises(ckpt.CheckpointError, match="version"):
        tr.load_checkpoint(str(ver))


def test_conditional_training_smoke():
    spec = NetworkSpec(n_classes=2, embed_dim=8)
    cfg = _cfg(conditional=True, steps=3, warmup=1, batch=4)
    corpus = D.build_corpus(D.ShapesSpec(), 64, np.random.default_rng(1))
    src = D.ShapesSource(corpus, seed=2)
    state = tr.build_trainer(cfg, spec)
    log = tr.train(state, src)
    assert np.isfinite(log.last("d_loss"))
    imgs, classes = tr.sample_images(state, 6, np.random.default_rng(0))
    assert imgs.shape == (6, 1, 16, 16) and classes.shape == (6,)
