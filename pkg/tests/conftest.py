import numpy as np
import pytest

from senscov.datasets import Dataset, render_digits
from senscov.engine import build_mlp, sgd_train


@pytest.fixture(scope="session")
def digits():
    """800 rendered digit images as flat [0,1] vectors."""
    images, labels = render_digits(800, seed=101)
    inputs = [img.astype(np.float64).ravel() / 255.0 for img in images]
    return Dataset(inputs, labels.astype(int), "test", 10)


@pytest.fixture(scope="session")
def trained_small(digits):
    """A small trained classifier: 784-16-10 on 500 digits."""
    train = digits.subset(range(500), split="train")
    model = build_mlp([784, 16, 10], seed=5)
    return sgd_train(model, train, epochs=4, learning_rate=0.2, batch_size=32, seed=5)
