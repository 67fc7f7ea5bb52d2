import numpy as np
import pytest

from parasent.encoders import EncoderConfig, SentenceEncoder
from parasent.numeric import RandomSource
from parasent.vocab import EmbeddingTable


def make_table(n_words=8, dim=4, seed=0):
    rng = RandomSource(seed)
    words = [f"w{i}" for i in range(n_words)]
    return EmbeddingTable.from_vectors(words, rng.normal(1.0, size=(n_words, dim)), dtype=np.float64)


def random_params(encoder, rng, scale=0.5):
    """Random float64 encoder parameters (no word vectors)."""
    return {k: rng.normal(scale, size=s) for k, s in encoder.param_shapes().items()}


@pytest.fixture
def table():
    return make_table()


@pytest.fixture
def rng():
    return RandomSource(1234)


@pytest.fixture
def encoder_factory():
    def build(kind, dim=4, bidirectional=False, combine="sum", hidden_size=None):
        return SentenceEncoder(EncoderConfig(kind, bidirectional, combine, hidden_size), dim)
    return build


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
