"""Forest-to-diagram compilation.

Three terminal algebras are used, one manager each:

* class words, tuples of class indices under concatenation with ``()`` as unit;
* class vectors, per-class vote counts under component-wise addition;
* class labels, produced from vectors by majority vote.

Trees are compiled with ``ite`` and joined in forest order with the lifted
monoid operation. Unsatisfiable-path elimination can run after every join
(``interleaved``), once per stage (``final``), or both.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .add import DEFAULT_NODE_BUDGET, TERMINAL, AddRef, Manager, SizeReport
from .exceptions import FormatError, NodeBudgetExceeded, UsageError
from .forest import DecisionTree, Forest, Leaf, majority
from .predicates import Predicate, PredicateOrder
from .uspe import apply_feasible, eliminate

STAGES = ("word", "vector", "majority")
USPE_MODES = ("off", "interleaved", "final", "both")

EMPTY_WORD = ()


def concat(a, b):
    return a + b


def vector_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def zero_vector(n_classes: int):
    return (0,) * n_classes


def unit_vector(label: int, n_classes: int):
    v = [0] * n_classes
    v[label] = 1
    return tuple(v)


mv = majority


@lru_cache(maxsize=None)
def letter_counter(n_classes: int):
    """Word -> class vector abstraction (one function object per class count)."""
    def count(word):
        v = [0] * n_classes
        for c in word:
            v[c] += 1
        return tuple(v)
    return count


def forest_order(forest: Forest) -> PredicateOrder:
    return PredicateOrder(forest.predicates()).finalize()


def _compile_tree(tree: DecisionTree, m: Manager, leaf) -> int:
    if isinstance(tree, Leaf):
        return m.terminal(leaf(tree.label))
    pid = m.order.id_of(tree.pred)
    return m._ite(pid, _compile_tree(tree.then, m, leaf), _compile_tree(tree.else_, m, leaf))


def d_W(tree: DecisionTree, m: Manager) -> AddRef:
    """Class-word diagram of one tree: one-letter words at the leaves."""
    return m.ref(_compile_tree(tree, m, lambda c: (c,)))


def d_V(tree: DecisionTree, m: Manager, n_classes: int) -> AddRef:
    """Class-vector diagram of one tree: unit vectors at the leaves."""
    return m.ref(_compile_tree(tree, m, lambda c: unit_vector(c, n_classes)))


SCHEDULES = ("balanced", "linear")


class Aggregator:
    """Fold tree diagrams under a lifted monoid operation.

    ``kind`` is ``"word"`` or ``"vector"``. With ``interleaved=True`` every
    join is followed by unsatisfiable-path elimination (fused into the join).
    Trees passed to :meth:`extend` are combined pairwise (``"balanced"``) or
    one after another (``"linear"``); both give the identical diagram, since
    the operations are associative and results are canonical. ``history``
    records the accumulated size after each tree when ``track_sizes`` is set,
    which forces the linear schedule.
    """

    def __init__(self, kind: str, order: PredicateOrder, n_classes: int, interleaved: bool = False,
                 node_budget: Optional[int] = DEFAULT_NODE_BUDGET, schedule: str = "balanced",
                 track_sizes: bool = False, manager: Optional[Manager] = None):
        if kind not in ("word", "vector"):
            raise UsageError(f"cannot aggregate {kind!r} diagrams")
        if schedule not in SCHEDULES:
            raise UsageError(f"schedule must be one of {SCHEDULES}, got {schedule!r}")
        self.kind = kind
        self.n_classes = n_classes
        self.interleaved = interleaved
        self.schedule = "linear" if track_sizes else schedule
        self.manager = manager if manager is not None else Manager(order, node_budget=node_budget, name=kind)
        if kind == "word":
            self.op, self.unit = concat, EMPTY_WORD
        else:
            self.op, self.unit = vector_add, zero_vector(n_classes)
        self.root = self.manager.constant(self.unit)
        self.n_trees = 0
        self.track_sizes = track_sizes
        self.history: List[SizeReport] = []

    def tree_diagram(self, tree: DecisionTree) -> AddRef:
        if self.kind == "word":
            d = d_W(tree, self.manager)
        else:
            d = d_V(tree, self.manager, self.n_classes)
        return eliminate(d) if self.interleaved else d

    def combine(self, a: AddRef, b: AddRef) -> AddRef:
        if self.interleaved:
            return apply_feasible(self.op, a, b)
        return self.manager.apply(self.op, a, b)

    def add(self, tree: DecisionTree) -> AddRef:
        self.root = self.combine(self.root, self.tree_diagram(tree))
        self.n_trees += 1
        if self.track_sizes:
            self.history.append(self.manager.size(self.root))
        return self.root

    def extend(self, trees: Sequence[DecisionTree]) -> AddRef:
        trees = list(trees)
        if self.schedule == "linear":
            for t in trees:
                self.add(t)
            return self.root
        if not trees:
            return self.root
        level = [self.tree_diagram(t) for t in trees]
        while len(level) > 1:
            nxt = [self.combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if len(level) % 2:
                nxt.append(level[-1])
            level = nxt
        self.root = self.combine(self.root, level[0])
        self.n_trees += len(trees)
        return self.root


def aggregate_words(forest: Forest, m: Optional[Manager] = None, interleaved: bool = False,
                    schedule: str = "balanced") -> AddRef:
    """``d_W(t0) . d_W(t1) . ...`` starting from the empty word."""
    order = m.order if m is not None else forest_order(forest)
    agg = Aggregator("word", order, forest.n_classes, interleaved, schedule=schedule, manager=m)
    return agg.extend(forest.trees)


def aggregate_vectors(forest: Forest, m: Optional[Manager] = None, interleaved: bool = False,
                      schedule: str = "balanced") -> AddRef:
    """Sum of the trees' class-vector diagrams, starting from the zero vector."""
    order = m.order if m is not None else forest_order(forest)
    agg = Aggregator("vector", order, forest.n_classes, interleaved, schedule=schedule, manager=m)
    return agg.extend(forest.trees)


def majority_diagram(vectors: AddRef, target: Optional[Manager] = None) -> AddRef:
    """Map a class-vector diagram through majority vote into ``target``."""
    target = target if target is not None else Manager(vectors.manager.order, node_budget=vectors.manager.node_budget, name="majority")
    return vectors.manager.map(mv, vectors, target)


def compile_majority(forest: Forest, uspe: str = "off", node_budget: Optional[int] = DEFAULT_NODE_BUDGET) -> AddRef:
    cfg = PipelineConfig(stage="majority", uspe=uspe, node_budget=node_budget)
    return run_pipeline(forest, cfg).majority.root


@dataclass(frozen=True)
class PipelineConfig:
    stage: str = "majority"
    uspe: str = "both"
    node_budget: Optional[int] = DEFAULT_NODE_BUDGET
    schedule: str = "balanced"
    track_sizes: bool = False

    def __post_init__(self):
        if self.stage not in STAGES:
            raise UsageError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.uspe not in USPE_MODES:
            raise UsageError(f"uspe must be one of {USPE_MODES}, got {self.uspe!r}")

    @property
    def interleaved(self) -> bool:
        return self.uspe in ("interleaved", "both")

    @property
    def final(self) -> bool:
        return self.uspe in ("final", "both")

    @property
    def stages(self) -> Sequence[str]:
        """Diagrams that must be built; majority is derived from vectors."""
        return ("vector", "majority") if self.stage == "majority" else (self.stage,)


@dataclass
class CompiledDiagram:
    """A compiled diagram together with what is needed to read its output."""

    kind: str
    root: AddRef
    classes: Sequence[str]
    features: Sequence[str]
    degenerate: bool = False

    @property
    def manager(self) -> Manager:
        return self.root.manager

    def size(self) -> SizeReport:
        return self.manager.size(self.root)

    def read_cost(self, value) -> int:
        """Extra steps to turn a terminal value into a class decision."""
        return 0 if self.kind == "majority" else len(value)

    def trace(self, x):
        return self.manager.trace(self.root, x)

    def trace_batch(self, X):
        """Terminal values and internal-node steps for each row of ``X``."""
        nodes, steps = self.manager.trace_batch(self.root, X)
        values = self.manager.values
        return [values[n] for n in nodes], steps

    def predict(self, X) -> np.ndarray:
        values, _ = self.trace_batch(X)
        if self.kind == "majority":
            return np.asarray(values, dtype=np.int64).reshape(-1)
        if self.kind == "vector":
            return np.asarray([mv(v) for v in values], dtype=np.int64)
        k = len(self.classes)
        return np.asarray([mv(letter_counter(k)(w)) for w in values], dtype=np.int64)

    def to_dot(self) -> str:
        if self.kind == "majority":
            fmt = lambda c: self.classes[c]
        elif self.kind == "word":
            fmt = lambda w: "(" + ", ".join(self.classes[c] for c in w) + ")"
        else:
            fmt = lambda v: "(" + ", ".join(map(str, v)) + ")"
        return self.manager.to_dot(self.root, feature_names=list(self.features), fmt=fmt)

    def to_dict(self) -> dict:
        """JSON-ready artifact; nodes are listed children first."""
        m = self.manager
        order = _postorder(m, self.root.node)
        index = {n: i for i, n in enumerate(order)}
        nodes = []
        for n in order:
            if m.var[n] == TERMINAL:
                v = m.values[n]
                nodes.append({"value": v if self.kind == "majority" else list(v)})
            else:
                p = m.order[m.var[n]]
                nodes.append({"feature": p.feature, "threshold": p.threshold,
                              "then": index[m.hi[n]], "else": index[m.lo[n]]})
        return {"kind": self.kind, "classes": list(self.classes), "features": list(self.features),
                "root": index[self.root.node], "nodes": nodes}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")


def _postorder(m: Manager, root: int) -> List[int]:
    out, seen = [], set()
    stack = [(root, False)]
    while stack:
        n, expanded = stack.pop()
        if expanded:
            out.append(n)
            continue
        if n in seen:
            continue
        seen.add(n)
        stack.append((n, True))
        if m.var[n] != TERMINAL:
            stack.append((m.lo[n], False))
            stack.append((m.hi[n], False))
    return out


def diagram_from_dict(obj, node_budget: Optional[int] = None) -> CompiledDiagram:
    if not isinstance(obj, dict):
        raise FormatError("diagram: expected an object")
    expected = {"kind", "classes", "features", "root", "nodes"}
    if set(obj) != expected:
        raise FormatError(f"diagram: fields must be exactly {sorted(expected)}")
    kind, classes, features, nodes = obj["kind"], obj["classes"], obj["features"], obj["nodes"]
    if kind not in STAGES:
        raise FormatError(f"diagram: unknown kind {kind!r}")
    if not isinstance(nodes, list) or not nodes:
        raise FormatError("diagram: nodes must be a non-empty list")
    preds = []
    for i, nd in enumerate(nodes):
        if isinstance(nd, dict) and "value" not in nd:
            if set(nd) != {"feature", "threshold", "then", "else"}:
                raise FormatError(f"diagram.nodes[{i}]: bad fields {sorted(nd)}")
            preds.append(Predicate(int(nd["feature"]), float(nd["threshold"])))
    order = PredicateOrder(preds).finalize()
    m = Manager(order, node_budget=node_budget, name=kind)
    built: List[int] = []
    for i, nd in enumerate(nodes):
        if not isinstance(nd, dict):
            raise FormatError(f"diagram.nodes[{i}]: expected an object")
        if "value" in nd:
            if set(nd) != {"value"}:
                raise FormatError(f"diagram.nodes[{i}]: bad fields {sorted(nd)}")
            v = nd["value"]
            built.append(m.terminal(v if kind == "majority" else tuple(v)))
            continue
        hi_i, lo_i = nd["then"], nd["else"]
        if not (isinstance(hi_i, int) and isinstance(lo_i, int) and 0 <= hi_i < i and 0 <= lo_i < i):
            raise FormatError(f"diagram.nodes[{i}]: children must refer to earlier nodes")
        pid = order.id_of(Predicate(int(nd["feature"]), float(nd["threshold"])))
        built.append(m._ite(pid, built[hi_i], built[lo_i]))
    root = obj["root"]
    if not isinstance(root, int) or not 0 <= root < len(built):
        raise FormatError("diagram: root out of range")
    return CompiledDiagram(kind, m.ref(built[root]), list(classes), list(features))


def load_diagram(path, node_budget: Optional[int] = None) -> CompiledDiagram:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None
    return diagram_from_dict(obj, node_budget)


@dataclass
class PipelineArtifacts:
    config: PipelineConfig
    order: PredicateOrder
    diagrams: Dict[str, CompiledDiagram] = field(default_factory=dict)
    sizes: Dict[str, SizeReport] = field(default_factory=dict)
    history: Dict[str, List[SizeReport]] = field(default_factory=dict)

    @property
    def word(self) -> Optional[CompiledDiagram]:
        return self.diagrams.get("word")

    @property
    def vector(self) -> Optional[CompiledDiagram]:
        return self.diagrams.get("vector")

    @property
    def majority(self) -> Optional[CompiledDiagram]:
        return self.diagrams.get("majority")

    @property
    def final(self) -> CompiledDiagram:
        return self.diagrams[self.config.stage]


def run_pipeline(forest: Forest, cfg: PipelineConfig = PipelineConfig(),
                 order: Optional[PredicateOrder] = None) -> PipelineArtifacts:
    """Compile ``forest`` up to ``cfg.stage``.

    Raises :class:`NodeBudgetExceeded` with the offending stage name when a
    manager outgrows ``cfg.node_budget``.
    """
    order = order if order is not None else forest_order(forest)
    out = PipelineArtifacts(cfg, order)
    k = forest.n_classes

    def finish(kind, root):
        if cfg.final:
            root = eliminate(root)
        d = CompiledDiagram(kind, root, forest.classes, forest.features, degenerate=not forest.trees)
        out.diagrams[kind] = d
        out.sizes[kind] = d.size()

    for kind in cfg.stages:
        try:
            if kind == "majority":
                if not forest.trees:
                    warnings.warn("empty forest: majority diagram is the constant first class", stacklevel=2)
                vectors = out.diagrams["vector"].root
                finish(kind, majority_diagram(vectors))
                continue
            agg = Aggregator(kind, order, k, interleaved=cfg.interleaved, node_budget=cfg.node_budget,
                             schedule=cfg.schedule, track_sizes=cfg.track_sizes)
            agg.extend(forest.trees)
            out.history[kind] = agg.history
            finish(kind, agg.root)
        except NodeBudgetExceeded as e:
            raise NodeBudgetExceeded(e.budget, kind) from None
    return out
