import numpy as np
import pytest

from ltgan import datasets as D

SPEC = D.ShapesSpec()


# -- ring ----------------------------------------------------------------------

def test_ring_mode_frequencies_binomial_bound():
    spec = D.RingSpec()
    rng = np.random.default_rng(0)
    pts = D.sample_ring(spec, rng, 80_000)
    centers = D.mode_centers(spec)
    assign = np.argmin(((pts[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    p = 1.0 / spec.n_modes
    bound = 3.0 * np.sqrt(p * (1 - p) / 80_000)
    freqs = np.bincount(assign, minlength=spec.n_modes) / 80_000
    assert np.all(np.abs(freqs - p) < bound)


def test_ring_mean_and_tail():
    spec = D.RingSpec()
    pts = D.sample_ring(spec, np.random.default_rng(1), 80_000)
    assert np.linalg.norm(pts.mean(axis=0)) < 0.01
    assert np.all(np.linalg.norm(pts, axis=1) <= spec.radius + 6.0 * spec.std)


def test_ring_spec_spacing_invariant():
    with pytest.raises(D.DataError, match="spacing"):
        D.RingSpec(std=0.2)


def test_ring_source_reproducible_and_resumable():
    src = D.RingSource(D.RingSpec(samples_per_epoch=64))
    it = src.batches(16)
    a = [next(it)[0].copy() for _ in range(6)]
    fresh = D.RingSource(D.RingSpec(samples_per_epoch=64))
    for i, x in enumerate(a):
        assert np.array_equal(x, fresh.batch(i, 16)[0])
    assert not np.array_equal(a[0], a[4])  # epoch 1 pool differs from epoch 0


# -- renderer --------------------------------------------------------------------

def _attr(**kw):
    base = dict(brightness=0.8, center_x=0.5, center_y=0.5, size=0.3, class_id=D.CLASS_SQUARE)
    base.update(kw)
    return D.AttributeVector(**base)


def test_render_blank_at_zero_brightness():
    img = D.render_shape(_attr(brightness=0.0), SPEC)
    assert np.array_equal(img, np.zeros_like(img))


def test_render_brightness_linearity():
    a = D.render_shape(_attr(brightness=0.3), SPEC)
    b = D.render_shape(_attr(brightness=0.6), SPEC)
    assert np.allclose(b, 2.0 * a, atol=1e-12)


def test_render_centroid_centered_square():
    img = D.render_shape(_attr(center_x=0.5, center_y=0.5), SPEC)
    w = img[0]
    coords = (np.arange(SPEC.size) + 0.5) / SPEC.size
    cx = (w.sum(axis=0) * coords).sum() / w.sum()
    cy = (w.sum(axis=1) * coords).sum() / w.sum()
    half_px = 0.5 / SPEC.size
    assert abs(cx - 0.5) < half_px and abs(cy - 0.5) < half_px


def test_render_rejects_out_of_frame():
    with pytest.raises(D.DataError, match="frame"):
        D.render_shape(_attr(center_x=0.05, size=0.3), SPEC)
    with pytest.raises(D.DataError, match="brightness"):
        D.render_shape(_attr(brightness=1.5), SPEC)


def test_render_range_and_training_mapping():
    img = D.render_shape(_attr(), SPEC)
    assert img.min() >= 0.0 and img.max() <= 1.0
    tr = D.to_training(img)
    assert tr.min() >= -1.0 and tr.max() <= 1.0
    assert np.allclose(D.from_training(tr), img, atol=1e-7)


# -- oracle ----------------------------------------------------------------------

def test_oracle_round_trip_1000():
    rng = np.random.default_rng(10)
    attrs = D.sample_attributes(SPEC, rng, 1000)
    cls_ok = 0
    for a in attrs:
        m = D.measure_attributes(D.render_training(a, SPEC), SPEC)
        assert m.valid
        assert abs(m.brightness - a.brightness) < 0.05
        assert abs(m.center_x - a.center_x) * SPEC.size < 1.0
        assert abs(m.center_y - a.center_y) * SPEC.size < 1.0
        assert abs(m.size - a.size) < 0.03  # documented size tolerance
        cls_ok += (m.class_id == a.class_id)
    assert cls_ok / 1000 >= 0.99


def test_oracle_blank_image_flagged():
    m = D.measure_attributes(np.full((1, 16, 16), -1.0, dtype=np.float32), SPEC)
    assert not m.valid


def test_oracle_flip_invariant_brightness():
    a = _attr(center_x=0.4, brightness=0.77)
    img = D.render_training(a, SPEC)
    m1 = D.measure_attributes(img, SPEC)
    m2 = D.measure_attributes(img[:, :, ::-1], SPEC)
    assert m1.brightness == pytest.approx(m2.brightness, abs=1e-12)


def test_oracle_clamps_out_of_range_with_flag():
    a = D.AttributeVector(brightness=0.2, center_x=0.5, center_y=0.5, size=0.3,
                          class_id=D.CLASS_SQUARE)
    m = D.measure_attributes(D.render_training(a, SPEC), SPEC)
    assert m.clamped and m.brightness == SPEC.brightness_range[0]


# -- corpus ----------------------------------------------------------------------

def test_corpus_save_load_round_trip(tmp_path):
    corpus = D.build_corpus(SPEC, 32, np.random.default_rng(5))
    path = tmp_path / "shapes.bin"
    D.save_corpus(str(path), corpus)
    loaded = D.load_corpus(str(path))
    assert loaded.spec == SPEC
    assert np.array_equal(loaded.images, corpus.images)
    assert np.array_equal(loaded.attrs, corpus.attrs)
    assert np.array_equal(loaded.classes, corpus.classes)
    D.save_corpus(str(tmp_path / "again.bin"), loaded)
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_corpus_truncation_detected(tmp_path):
    corpus = D.build_corpus(SPEC, 4, np.random.default_rng(6))
    path = tmp_path / "shapes.bin"
    D.save_corpus(str(path), corpus)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(D.DataError, match="truncated"):
        D.load_corpus(str(path))


def test_corpus_iteration_epoch_shuffled_reproducible():
    corpus = D.build_corpus(SPEC, 64, np.random.default_rng(7))
    src = D.ShapesSource(corpus, seed=8)

    def labels(n_batches):
        it = D.ShapesSource(corpus, seed=8).batches(16)
        return [next(it)[1].copy() for _ in range(n_batches)]

    run1 = labels(6)
    run2 = labels(6)
    for a, b in zip(run1, run2):
        assert np.array_equal(a, b)
    epoch1 = np.concatenate(run1[:4])  # 4 batches of 16 = one epoch of 64
    assert sorted(epoch1.tolist()) == sorted(corpus.classes.tolist())
    assert not np.array_equal(epoch1[:32], np.concatenate(run1[4:6]))
    # random access agrees with sequential iteration (resume contract)
    assert np.array_equal(src.batch(5, 16)[1], run1[5])
