import numpy as np
import pytest

from ltgan import datasets as D
from ltgan import evaluation as E
from ltgan import trainer as tr
from ltgan.config import TrainConfig
from ltgan.nn import NetworkSpec

# shared acceptance-scale experiment defaults
SHAPES_NET = NetworkSpec()
SHAPES_CFG = dict(warmup=500, batch=32, lam=1.0, sigma_eps=0.5)
SHAPES_STEPS = 4_000


@pytest.fixture(scope="session")
def shapes_data():
    shapes = D.ShapesSpec()
    train = D.build_corpus(shapes, 4096, np.random.default_rng(np.random.SeedSequence((0, 0))))
    test = D.build_corpus(shapes, 1024, np.random.default_rng(np.random.SeedSequence((0, 1))))
    ext = E.build_extractor(256, 0)
    pack = E.make_eval_pack(test.images, ext, 512)
    return shapes, train, test, ext, pack


def train_shapes_state(seed: int, sigma_eps: float, train_corpus, steps=SHAPES_STEPS,
                       objective="lt") -> tr.TrainerState:
    kw = dict(SHAPES_CFG)
    kw["sigma_eps"] = sigma_eps
    cfg = TrainConfig(steps=steps, seed=seed, objective=objective, **kw)
    state = tr.build_trainer(cfg, SHAPES_NET)
    tr.train(state, D.ShapesSource(train_corpus, seed=0))
    return state


@pytest.fixture(scope="session")
def shapes_lt_states(shapes_data):
    _, train, _, _, _ = shapes_data
    return {seed: train_shapes_state(seed, 0.5, train) for seed in (0, 1, 2)}
