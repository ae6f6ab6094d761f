import numpy as np
import pytest

from rfadex import data as rfdata
from rfadex import signal as rfsignal


def make_dataset(per_class=12, seed=11, snr_lo=14.0, snr_hi=20.0, classes=None):
    """Small synthetic dataset for unit tests."""
    classes = classes or list(rfsignal.ModClass)
    rng = np.random.default_rng(seed)
    frames = []
    for cls in classes:
        for _ in range(per_class):
            frames.append(
                rfsignal.generate_frame(
                    cls,
                    float(rng.uniform(snr_lo, snr_hi)),
                    seed=int(rng.integers(0, 2**62)),
                )
            )
    return rfdata.frames_to_dataset(frames, provenance=f"test per_class={per_class}")


@pytest.fixture(scope="session")
def small_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def random_vectors_dataset():
    """Dataset of random (non-signal) vectors, for format round-trips."""
    rng = np.random.default_rng(3)
    n = 100
    return rfdata.Dataset(
        rng.normal(size=(n, rfdata.VEC_LEN)).astype(np.float32),
        rng.integers(0, 4, n).astype(np.uint8),
        rng.uniform(-10, 30, n).astype(np.float32),
        provenance="random",
    )
