import numpy as np
import pytest

from ssagcn.graph import Graph


def make_graph(num_nodes, edges, labels=None, num_classes=None, features=None):
    labels = np.zeros(num_nodes, dtype=np.int64) if labels is None else np.asarray(labels)
    return Graph.from_edges(num_nodes, np.asarray(edges, dtype=np.int64).reshape(-1, 2), labels,
                            num_classes, features=features)


def random_graph(rng, n, p=0.3, num_classes=2, feature_dim=None):
    dense = rng.random((n, n)) < p
    np.fill_diagonal(dense, False)
    edges = np.argwhere(dense)
    labels = rng.integers(0, num_classes, size=n)
    feats = None if feature_dim is None else (rng.random((n, feature_dim)) < 0.3).astype(np.uint8)
    return Graph.from_edges(n, edges, labels, num_classes, features=feats)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (2, 0)])


@pytest.fixture
def path3():
    return make_graph(3, [(0, 1), (1, 2)])
