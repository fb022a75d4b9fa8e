import numpy as np
import pytest

from graphmu.graphs import Graph, adjacency_from_edges

# Calibrated desk-scale fixture: hard enough that a 5%-of-edges budget
# measurably degrades the trained model, clean enough to train stably.
SBM_FIXTURE = dict(blocks=3, per_block=50, p_in=0.15, p_out=0.02, d=16, noise=0.25)


def make_graph(n, edges, d=4, num_classes=2, labels=None, train=None, seed=0):
    """Small ad-hoc graph with seeded features for structural tests."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels if labels is not None else rng.integers(0, num_classes, n))
    train_mask = np.zeros(n, dtype=bool)
    train_mask[list(train) if train is not None else range(n)] = True
    return Graph(
        adjacency=adjacency_from_edges(n, edges),
        features=rng.random((n, d)),
        labels=labels,
        train_mask=train_mask,
        val_mask=np.zeros(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        num_classes=num_classes,
    )


@pytest.fixture
def path5():
    # a-b-c-d-e
    return make_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)])


def random_graph(n, p, seed, d=4, num_classes=2):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return make_graph(n, list(zip(iu[keep], ju[keep])), d=d,
                      num_classes=num_classes, seed=seed + 1)
