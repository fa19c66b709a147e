import pytest

from otattack import dataset as ds


@pytest.fixture(scope="session")
def toy_dataset():
    # the full evaluation corpus: 64 images x 5 captions
    return ds.generate_dataset(64, 5, (16, 16), seed=101)


@pytest.fixture(scope="session")
def small_dataset():
    # cheap corpus for plumbing tests
    return ds.generate_dataset(12, 3, (16, 16), seed=7)
