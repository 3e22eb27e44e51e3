import os

import numpy as np
import pytest

from nlpvq.audio import load_pcm
from nlpvq.codec import CodecConfig, encode
from nlpvq.vq import design_lbg

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURE_DIR, name)


@pytest.fixture(scope="session")
def clip_a():
    return load_pcm(fixture_path("clip_a.wav"))


@pytest.fixture(scope="session")
def clip_b():
    return load_pcm(fixture_path("clip_b.wav"))


@pytest.fixture(scope="session")
def train_clip():
    return load_pcm(fixture_path("train_10s.wav"))


@pytest.fixture(scope="session")
def bootstrap_residuals(train_clip):
    """Round-0 training set: vector-predictor + 3-bit scalar-quantizer
    residuals of the 10 s training clip."""
    cfg = CodecConfig(scheme="vpred-scalar", nq_bits_per_sample=3.0)
    _, _, residuals = encode(train_clip, cfg)
    return residuals


@pytest.fixture(scope="session")
def lbg_codebook_nq3(bootstrap_residuals):
    """64-codeword LBG codebook (Nq = 3 at vector dimension 2)."""
    return design_lbg(bootstrap_residuals, 64)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
