import numpy as np
import pytest

from reality_forge.clicklog import Click, Clickstream, ClickstreamCollection, SyntheticConfig, generate_synthetic


def make_collection(texts_by_stream):
    """Collection from ``{stream_id: [response text per click]}``."""
    streams = []
    for sid, texts in texts_by_stream.items():
        clicks = [Click(sid, k, 1000 + 10 * k, "", t) for k, t in enumerate(texts)]
        streams.append(Clickstream(sid, tuple(clicks)))
    return ClickstreamCollection(streams)


@pytest.fixture
def small_planted():
    cfg = SyntheticConfig(num_streams=4, stream_len=6)
    return generate_synthetic(cfg, seed=3)


@pytest.fixture
def random_collection():
    """Five streams of four clicks drawn from a 6-word vocabulary."""
    rng = np.random.default_rng(11)
    words = [f"w{i}" for i in range(6)]
    return make_collection(
        {
            f"s{i}": [" ".join(rng.choice(words, size=rng.integers(1, 5))) for _ in range(4)]
            for i in range(5)
        }
    )
