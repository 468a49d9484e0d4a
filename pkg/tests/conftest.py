import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from forestdd.forest import Forest, Leaf, Node
from forestdd.predicates import Predicate

IRIS_CLASSES = ("Iris-setosa", "Iris-versicolor", "Iris-virginica")
IRIS_FEATURES = ("sepallength", "sepalwidth", "petallength", "petalwidth")

# small predicate universe: 3 features x 4 thresholds = 12 predicates
THRESHOLDS = (1.0, 2.0, 3.0, 4.0)
N_FEATURES = 3
# one point in every cell of every feature, so GRID covers all realizable assignments
CELL_POINTS = (0.5, 1.5, 2.5, 3.5, 4.5)
GRID = np.array(list(itertools.product(CELL_POINTS, repeat=N_FEATURES)))


def trees(n_classes=3, max_depth=4):
    leaf = st.integers(0, n_classes - 1).map(Leaf)
    pred = st.builds(Predicate, st.integers(0, N_FEATURES - 1), st.sampled_from(THRESHOLDS))

    def extend(children):
        return st.builds(Node, pred, children, children)

    return st.recursive(leaf, extend, max_leaves=2 ** max_depth)


def forests(min_trees=0, max_trees=5, n_classes=3):
    return st.lists(trees(n_classes), min_size=min_trees, max_size=max_trees).map(
        lambda ts: Forest(ts, [f"c{i}" for i in range(n_classes)], [f"f{i}" for i in range(N_FEATURES)])
    )


def random_tree(rng, depth=3, n_classes=3, n_features=N_FEATURES, thresholds=THRESHOLDS):
    if depth == 0 or rng.random() < 0.2:
        return Leaf(int(rng.integers(n_classes)))
    p = Predicate(int(rng.integers(n_features)), float(rng.choice(thresholds)))
    return Node(p, random_tree(rng, depth - 1, n_classes, n_features, thresholds),
                random_tree(rng, depth - 1, n_classes, n_features, thresholds))


def iris3_forest():
    """Three small Iris trees sharing petalwidth < 1.65; every tree says setosa below petallength 2.45."""
    pl, pw, sl = 2, 3, 0
    setosa, versicolor, virginica = Leaf(0), Leaf(1), Leaf(2)
    t0 = Node(Predicate(pl, 2.45), setosa,
              Node(Predicate(pw, 1.65), versicolor, virginica))
    t1 = Node(Predicate(pw, 1.65),
              Node(Predicate(pl, 2.7), setosa, versicolor),
              Node(Predicate(pl, 2.45), setosa, virginica))
    t2 = Node(Predicate(pl, 2.45), setosa,
              Node(Predicate(pw, 1.65),
                   Node(Predicate(sl, 7.0), versicolor, virginica),
                   virginica))
    return Forest([t0, t1, t2], IRIS_CLASSES, IRIS_FEATURES)


@pytest.fixture
def iris3():
    return iris3_forest()
