import numpy as np
import pytest

from quatmotion.motiondata import make_synth_corpus, synth_gait


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit_quats(rng, shape):
    q = rng.normal(size=shape + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


@pytest.fixture
def gait():
    skel, clip, feats = synth_gait(frequency=1.2, speed=1.0, duration=10,
                                   seed=0)
    return skel, clip, feats


@pytest.fixture(scope="session")
def corpus():
    skel, clips = make_synth_corpus(3, seed=7, duration=6)
    return skel, clips
