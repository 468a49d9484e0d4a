"""Decision trees, random forests, a small CART trainer, and file formats.

Trees take the then-branch when ``x[feature] < threshold``. Class labels are
dense integer indices into ``Forest.classes``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import FormatError, UsageError
from .predicates import Predicate


@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class Node:
    pred: Predicate
    then: "DecisionTree"
    else_: "DecisionTree"


DecisionTree = Union[Leaf, Node]


def tree_predicates(tree: DecisionTree) -> Iterator[Predicate]:
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Node):
            yield t.pred
            stack.append(t.else_)
            stack.append(t.then)


def tree_size(tree: DecisionTree) -> int:
    """Number of nodes, internal and leaves."""
    if isinstance(tree, Leaf):
        return 1
    return 1 + tree_size(tree.then) + tree_size(tree.else_)


def tree_depth(tree: DecisionTree) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.then), tree_depth(tree.else_))


def trace_tree(tree: DecisionTree, x) -> Tuple[int, int]:
    """Return ``(label, internal nodes visited)`` for feature vector ``x``."""
    steps = 0
    while isinstance(tree, Node):
        p = tree.pred
        try:
            v = x[p.feature]
        except (IndexError, KeyError):
            raise UsageError(f"feature vector has no feature {p.feature}") from None
        tree = tree.then if v < p.threshold else tree.else_
        steps += 1
    return tree.label, steps


def classify_tree(tree: DecisionTree, x) -> int:
    return trace_tree(tree, x)[0]


@dataclass(frozen=True)
class Forest:
    trees: Tuple[DecisionTree, ...]
    classes: Tuple[str, ...]
    features: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "features", tuple(self.features))
        if len(set(self.classes)) != len(self.classes):
            raise UsageError("class names must be unique")
        if not self.classes:
            raise UsageError("a forest needs at least one class")

    def __len__(self):
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def prefix(self, n: int) -> "Forest":
        return Forest(self.trees[:n], self.classes, self.features)

    def predicates(self) -> List[Predicate]:
        """Distinct predicates used by any tree, in global order."""
        return sorted({p for t in self.trees for p in tree_predicates(t)})

    def size(self) -> int:
        return sum(tree_size(t) for t in self.trees)


class ForestVote(NamedTuple):
    word: Tuple[int, ...]
    vector: Tuple[int, ...]
    winner: int
    degenerate: bool


def majority(vector: Sequence[int]) -> int:
    """Index of the largest count; ties go to the smallest index."""
    best = 0
    for c in range(1, len(vector)):
        if vector[c] > vector[best]:
            best = c
    return best


def classify_forest(forest: Forest, x) -> ForestVote:
    word = tuple(classify_tree(t, x) for t in forest.trees)
    counts = [0] * forest.n_classes
    for c in word:
        counts[c] += 1
    return ForestVote(word, tuple(counts), majority(counts), degenerate=not word)


def forest_steps(forest: Forest, x) -> int:
    """Per-tree path lengths plus one read per tree result."""
    return sum(trace_tree(t, x)[1] for t in forest.trees) + len(forest.trees)


def _tree_batch(tree, X, rows, labels, steps):
    if isinstance(tree, Leaf):
        labels[rows] = tree.label
        return
    steps[rows] += 1
    go = X[rows, tree.pred.feature] < tree.pred.threshold
    _tree_batch(tree.then, X, rows[go], labels, steps)
    _tree_batch(tree.else_, X, rows[~go], labels, steps)


def predict_trees(forest: Forest, X) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized per-tree decisions.

    Returns ``(labels, steps)``, both shaped ``(n_rows, n_trees)``.
    """
    X = np.asarray(X, dtype=float)
    labels = np.zeros((len(X), len(forest.trees)), dtype=np.int64)
    steps = np.zeros_like(labels)
    rows = np.arange(len(X))
    for j, t in enumerate(forest.trees):
        col_l = np.zeros(len(X), dtype=np.int64)
        col_s = np.zeros(len(X), dtype=np.int64)
        _tree_batch(t, X, rows, col_l, col_s)
        labels[:, j], steps[:, j] = col_l, col_s
    return labels, steps


def vote_counts(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes), dtype=np.int64)
    for c in range(n_classes):
        out[:, c] = (labels == c).sum(axis=1)
    return out


# -- datasets ---------------------------------------------------------------


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: List[str]
    class_names: List[str]
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(self.feature_names))
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise UsageError("X and y have different numbers of rows")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= len(self.class_names)):
            raise UsageError("class index out of range")

    def __len__(self):
        return len(self.y)

    def select_features(self, names: Sequence[str]) -> np.ndarray:
        """Columns of ``X`` reordered to ``names``."""
        cols = []
        for name in names:
            if name not in self.feature_names:
                raise FormatError(f"dataset has no feature {name!r}")
            cols.append(self.feature_names.index(name))
        return self.X[:, cols]


def load_dataset(path, class_names: Optional[Sequence[str]] = None) -> Dataset:
    """Read a CSV file: header row, numeric feature columns, class name last.

    Class indices follow first appearance unless ``class_names`` fixes them.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise FormatError(f"{path}: header needs at least one feature and a class column")
    classes = list(class_names) if class_names is not None else []
    index = {c: i for i, c in enumerate(classes)}
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, found {len(row)}")
        values = []
        for col, cell in enumerate(row[:-1], start=1):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise FormatError(f"{path}:{lineno}: column {col} ({header[col - 1]}): non-numeric value {cell!r}")
            values.append(v)
        label = row[-1].strip()
        if label not in index:
            if class_names is not None:
                raise FormatError(f"{path}:{lineno}: unknown class {label!r}")
            index[label] = len(classes)
            classes.append(label)
        X.append(values)
        y.append(index[label])
    return Dataset(np.array(X, dtype=float).reshape(-1, len(header) - 1), np.array(y, dtype=np.int64),
                   header[:-1], classes, source=str(path))


def iris_path() -> Path:
    return Path(__file__).parent / "data" / "iris.csv"


def load_iris() -> Dataset:
    return load_dataset(iris_path())


# -- training -----------------------------------------------------------------


def _best_split(X, y, rows, features, n_classes):
    """Best (feature, threshold) by Gini over ``features``, or None if nothing improves."""
    counts = np.bincount(y[rows], minlength=n_classes)
    n = len(rows)
    best_score = (counts.astype(float) ** 2).sum() / n
    best = None
    for f in features:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], y[rows][order]
        cut = np.nonzero(xs[1:] > xs[:-1])[0]
        if len(cut) == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        left = np.cumsum(onehot, axis=0)[cut]
        right = counts - left
        nl = (cut + 1).astype(float)
        score = (left ** 2).sum(axis=1) / nl + (right ** 2).sum(axis=1) / (n - nl)
        k = int(np.argmax(score))
        if score[k] > best_score + 1e-12:
            a, b = xs[cut[k]], xs[cut[k] + 1]
            threshold = (a + b) / 2.0
            if not a < threshold <= b:
                threshold = b
            best_score, best = score[k], (int(f), float(threshold))
    return best


def _grow(X, y, rows, n_classes, n_sub, rng):
    counts = np.bincount(y[rows], minlength=n_classes)
    label = int(np.argmax(counts))
    if len(rows) < 2 or counts[label] == len(rows):
        return Leaf(label)
    features = np.sort(rng.choice(X.shape[1], size=n_sub, replace=False))
    split = _best_split(X, y, rows, features, n_classes)
    if split is None:
        return Leaf(label)
    f, t = split
    go = X[rows, f] < t
    return Node(Predicate(f, t),
                _grow(X, y, rows[go], n_classes, n_sub, rng),
                _grow(X, y, rows[~go], n_classes, n_sub, rng))


def n_split_features(n_features: int, max_features: Union[int, str, None] = None) -> int:
    """Size of the random feature subset tried at each split.

    ``None`` or ``"log2"`` gives ``floor(log2(F)) + 1``, ``"sqrt"`` gives
    ``ceil(sqrt(F))``; an int is used as is. Always clipped to ``[1, F]``.
    """
    if max_features is None or max_features == "log2":
        k = int(math.log2(n_features)) + 1 if n_features else 0
    elif max_features == "sqrt":
        k = math.ceil(math.sqrt(n_features))
    elif isinstance(max_features, int) and not isinstance(max_features, bool) and max_features > 0:
        k = max_features
    else:
        raise UsageError(f"invalid max_features {max_features!r}")
    return max(1, min(k, n_features))


def train_tree(data: Dataset, rng: np.random.Generator, max_features: Union[int, str, None] = None) -> DecisionTree:
    n_sub = n_split_features(data.X.shape[1], max_features)
    rows = rng.integers(0, len(data), size=len(data))
    return _grow(data.X, data.y, rows, len(data.class_names), n_sub, rng)


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for tree ``index``; independent of how many trees are trained."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def train_forest(data: Dataset, n_trees: int, seed: int = 0, max_features: Union[int, str, None] = None,
                 start: int = 0) -> Forest:
    """Bootstrap-aggregated CART trees with Gini splits and random feature subsets.

    Tree ``i`` depends only on ``(data, seed, i)``, so the forest for ``n``
    trees is a prefix of the forest for any larger ``n``.
    """
    if n_trees < 0:
        raise UsageError("n_trees must be non-negative")
    if n_trees > 0 and len(data) == 0:
        raise UsageError("cannot train trees on an empty dataset")
    trees = [train_tree(data, tree_rng(seed, i), max_features) for i in range(start, start + n_trees)]
    return Forest(trees, data.class_names, data.feature_names)


# -- serialization ------------------------------------------------------------


def tree_to_dict(tree: DecisionTree) -> dict:
    if isinstance(tree, Leaf):
        return {"leaf": tree.label}
    return {"feature": tree.pred.feature, "threshold": tree.pred.threshold,
            "then": tree_to_dict(tree.then), "else": tree_to_dict(tree.else_)}


def forest_to_dict(forest: Forest) -> dict:
    return {"classes": list(forest.classes), "features": list(forest.features),
            "trees": [tree_to_dict(t) for t in forest.trees]}


def dumps_forest(forest: Forest) -> str:
    return json.dumps(forest_to_dict(forest), separators=(",", ":")) + "\n"


def save_forest(forest: Forest, path) -> None:
    Path(path).write_text(dumps_forest(forest), encoding="utf-8")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise FormatError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = set(allowed) - set(obj)
    if missing:
        raise FormatError(f"{where}: missing field(s) {sorted(missing)}")


def tree_from_dict(obj, n_features: int, n_classes: int, where: str = "tree") -> DecisionTree:
    if isinstance(obj, dict) and "leaf" in obj:
        _check_keys(obj, ("leaf",), where)
        label = obj["leaf"]
        if not _is_int(label) or not 0 <= label < n_classes:
            raise FormatError(f"{where}: leaf class {label!r} out of range")
        return Leaf(label)
    _check_keys(obj, ("feature", "threshold", "then", "else"), where)
    f, t = obj["feature"], obj["threshold"]
    if not _is_int(f) or not 0 <= f < n_features:
        raise FormatError(f"{where}: feature {f!r} out of range")
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise FormatError(f"{where}: threshold must be a finite number")
    return Node(Predicate(f, float(t)),
                tree_from_dict(obj["then"], n_features, n_classes, where + ".then"),
                tree_from_dict(obj["else"], n_features, n_classes, where + ".else"))


def forest_from_dict(obj) -> Forest:
    _check_keys(obj, ("classes", "features", "trees"), "forest")
    classes, features, trees = obj["classes"], obj["features"], obj["trees"]
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise FormatError("forest.classes: expected a list of names")
    if not isinstance(features, list) or not all(isinstance(c, str) for c in features):
        raise FormatError("forest.features: expected a list of names")
    if not isinstance(trees, list):
        raise FormatError("forest.trees: expected a list")
    try:
        return Forest([tree_from_dict(t, len(features), len(classes), f"trees[{i}]") for i, t in enumerate(trees)],
                      classes, features)
    except UsageError as e:
        raise FormatError(f"forest: {e}") from None


def load_forest(path) -> Forest:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None
    return forest_from_dict(obj)
