import os

import numpy as np
import pytest

from ttfs_sim import conversion, datasets, dnn, kopt

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "mnist")

# Pinned training configuration for the desk-scale MNIST baseline; chosen
# once by sweeping learning rate / epochs / batch size and frozen so the
# acceptance run is reproducible.
MNIST_TRAIN_CFG = dnn.TrainConfig(
    learning_rate=0.1, epochs=20, batch_size=16, rng_seed=0
)


def _mnist_file(name):
    path = os.path.join(DATA_DIR, name)
    if not os.path.exists(path):
        pytest.fail(f"bundled MNIST file missing: {path}")
    return path


@pytest.fixture(scope="session")
def mnist():
    return {
        "train_x": datasets.load_idx_images(_mnist_file("train-images-idx3-ubyte.gz")),
        "train_y": datasets.load_idx_labels(_mnist_file("train-labels-idx1-ubyte.gz")),
        "test_x": datasets.load_idx_images(_mnist_file("t10k-images-idx3-ubyte.gz")),
        "test_y": datasets.load_idx_labels(_mnist_file("t10k-labels-idx1-ubyte.gz")),
    }


@pytest.fixture(scope="session")
def trained_mnist_net(mnist):
    net = dnn.build_mlp([784, 300, 10], time_window=80, seed=MNIST_TRAIN_CFG.rng_seed)
    net, _ = dnn.train(net, mnist["train_x"], mnist["train_y"], MNIST_TRAIN_CFG)
    return net


@pytest.fixture(scope="session")
def mnist_stats(trained_mnist_net, mnist):
    return dnn.record_stats(trained_mnist_net, mnist["train_x"])


@pytest.fixture(scope="session")
def normalized_mnist(trained_mnist_net, mnist_stats):
    return conversion.normalize(trained_mnist_net, mnist_stats)


@pytest.fixture(scope="session")
def optimized_mnist(normalized_mnist):
    net, stats = normalized_mnist
    opt, rows = kopt.optimize(net, stats)
    return opt, rows
