"""Hardware-independent step counts and structure sizes, and forest-size sweeps.

A classification step is one internal node visited. Models that hand back
more than a single class also pay one step per value read to reach the
final decision: ``n`` for a forest or a class word, ``|C|`` for a class
vector, nothing for a class terminal.
"""

from __future__ import annotations

import csv
import io
import json
import multiprocessing
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .add import DEFAULT_NODE_BUDGET, SizeReport
from .compile import Aggregator, CompiledDiagram, forest_order, majority_diagram
from .exceptions import NodeBudgetExceeded, UsageError
from .forest import Dataset, Forest, Leaf, forest_steps, predict_trees, train_forest
from .uspe import eliminate

MODEL_KINDS = ("forest", "word", "vector", "majority")

Model = Union[Forest, CompiledDiagram]


def count_steps(model: Model, x) -> int:
    if isinstance(model, Forest):
        return forest_steps(model, x)
    value, steps = model.trace(x)
    return steps + model.read_cost(value)


def count_steps_batch(model: Model, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if isinstance(model, Forest):
        _, steps = predict_trees(model, X)
        return steps.sum(axis=1) + len(model.trees)
    values, steps = model.trace_batch(X)
    return steps + np.array([model.read_cost(v) for v in values], dtype=np.int64)


def _tree_counts(tree) -> Tuple[int, int]:
    if isinstance(tree, Leaf):
        return 0, 1
    a, b = _tree_counts(tree.then), _tree_counts(tree.else_)
    return 1 + a[0] + b[0], a[1] + b[1]


def measure_size(model: Model) -> SizeReport:
    """Forests: all tree nodes summed over trees. Diagrams: distinct reachable nodes."""
    if isinstance(model, Forest):
        internal = terminal = 0
        for t in model.trees:
            i, l = _tree_counts(t)
            internal += i
            terminal += l
        return SizeReport(internal, terminal)
    return model.size()


@dataclass
class StepReport:
    kind: str
    uspe: bool
    per_row: List[int]

    @property
    def average(self) -> Fraction:
        if not self.per_row:
            return Fraction(0)
        return Fraction(sum(self.per_row), len(self.per_row))

    @property
    def label(self) -> str:
        return model_label(self.kind, self.uspe)


def model_label(kind: str, uspe: bool) -> str:
    if kind == "forest":
        return "forest"
    return f"{kind} DD*" if uspe else f"{kind} DD"


@dataclass
class Cell:
    n: int
    kind: str
    uspe: bool
    steps: Optional[StepReport] = None
    size: Optional[SizeReport] = None
    budget_exceeded: bool = False

    @property
    def label(self) -> str:
        return model_label(self.kind, self.uspe)


@dataclass(frozen=True)
class SweepConfig:
    kinds: Sequence[str] = MODEL_KINDS
    uspe: Sequence[bool] = (False, True)
    node_budget: Optional[int] = DEFAULT_NODE_BUDGET
    max_features: Union[int, str, None] = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_jobs < 0:
            raise UsageError("n_jobs must be non-negative")
        bad = set(self.kinds) - set(MODEL_KINDS)
        if bad:
            raise UsageError(f"unknown model kinds {sorted(bad)}")


@dataclass
class SweepResult:
    dataset: str
    seed: int
    n_values: List[int]
    cells: List[Cell] = field(default_factory=list)

    def cell(self, n: int, kind: str, uspe: bool = False) -> Cell:
        for c in self.cells:
            if c.n == n and c.kind == kind and (kind == "forest" or c.uspe == uspe):
                return c
        raise KeyError((n, kind, uspe))

    def curve(self, kind: str, uspe: bool = False) -> List[Cell]:
        return [self.cell(n, kind, uspe) for n in self.n_values]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "model", "uspe", "avg_steps", "internal", "terminal", "total", "budget_flag"])
        for c in self.cells:
            avg = f"{float(c.steps.average):.4f}" if c.steps else ""
            size = (c.size.internal, c.size.terminal, c.size.total) if c.size else ("", "", "")
            w.writerow([c.n, c.kind, int(c.uspe), avg, *size, int(c.budget_exceeded)])
        return buf.getvalue()

    def to_json(self) -> str:
        cells = []
        for c in self.cells:
            cells.append({
                "n": c.n, "model": c.kind, "uspe": c.uspe, "budget_exceeded": c.budget_exceeded,
                "avg_steps": float(c.steps.average) if c.steps else None,
                "steps": c.steps.per_row if c.steps else None,
                "size": {"internal": c.size.internal, "terminal": c.size.terminal, "total": c.size.total}
                if c.size else None,
            })
        return json.dumps({"dataset": self.dataset, "seed": self.seed, "n_values": self.n_values,
                           "cells": cells}, indent=1)

    def summary(self, n: Optional[int] = None) -> str:
        """Forest versus final diagram at ``n`` (default: largest), steps and sizes."""
        n = self.n_values[-1] if n is None else n
        forest = self.cell(n, "forest")
        final = next((c for c in (self.cell(n, "majority", u) for u in (True, False)
                                  if any(x.kind == "majority" and x.uspe == u for x in self.cells))
                      if not c.budget_exceeded), None)
        lines = [f"{self.dataset}, n = {n}, seed = {self.seed}"]
        if final is None:
            lines.append("  no majority diagram completed at this size")
            return "\n".join(lines)
        fs, ds = float(forest.steps.average), float(final.steps.average)
        lines.append(f"  avg steps: forest {fs:,.2f} | {final.label} {ds:,.2f} ({_pct(ds, fs)})")
        ft, dt = forest.size.total, final.size.total
        lines.append(f"  size:      forest {ft:,} | {final.label} {dt:,} ({_pct(dt, ft)})")
        return "\n".join(lines)


def _pct(new, old):
    if not old:
        return "n/a"
    return f"{100.0 * (new - old) / old:+.2f}%"


def _diagram_cell(n, kind, uspe, d: CompiledDiagram, X) -> Cell:
    steps = count_steps_batch(d, X)
    return Cell(n, kind, uspe, StepReport(kind, uspe, [int(s) for s in steps]), d.size())


def _run_chain(forest: Forest, X, n_values, kind, uspe, kinds, node_budget) -> List[Cell]:
    """Incrementally aggregate one diagram kind, snapshotting at every ``n``.

    ``kind`` is ``"word"`` or ``"vector"``; a vector chain also yields the
    majority cells when requested.
    """
    order = forest_order(forest)
    agg = Aggregator(kind, order, forest.n_classes, interleaved=uspe, node_budget=node_budget)
    wanted = [k for k in ((kind,) if kind == "word" else ("vector", "majority")) if k in kinds]
    cells: List[Cell] = []
    done = 0
    for i, n in enumerate(n_values):
        try:
            agg.extend(forest.trees[done:n])
            done = n
            if kind in wanted:
                cells.append(_diagram_cell(n, kind, uspe, CompiledDiagram(kind, agg.root, forest.classes,
                                                                          forest.features), X))
            if "majority" in wanted:
                root = majority_diagram(agg.root)
                if uspe:
                    root = eliminate(root)
                d = CompiledDiagram("majority", root, forest.classes, forest.features, degenerate=n == 0)
                cells.append(_diagram_cell(n, "majority", uspe, d, X))
        except NodeBudgetExceeded:
            have = {(c.n, c.kind) for c in cells}
            for m in n_values[i:]:
                for k in wanted:
                    if (m, k) not in have:
                        cells.append(Cell(m, k, uspe, budget_exceeded=True))
            break
    return cells


def sweep(data: Dataset, n_values: Iterable[int], seed: int = 0, cfg: SweepConfig = SweepConfig(),
          forest: Optional[Forest] = None) -> SweepResult:
    """Train one forest of ``max(n_values)`` trees and measure every model on its prefixes.

    Step averages run over all dataset rows. A diagram chain that outgrows
    ``cfg.node_budget`` is reported as cut off from that size on. Each chain
    (one diagram kind with or without USPE) runs in its own worker process,
    ``cfg.n_jobs`` at a time; ``n_jobs=0`` runs everything in this process.
    """
    n_values = sorted(set(int(n) for n in n_values))
    if not n_values:
        raise UsageError("n_values must not be empty")
    if n_values[0] < 0:
        raise UsageError("n_values must be non-negative")
    if forest is None:
        forest = train_forest(data, n_values[-1], seed, max_features=cfg.max_features)
    elif len(forest) < n_values[-1]:
        raise UsageError("forest has fewer trees than the largest requested size")
    X = data.X
    result = SweepResult(dataset=data.source or "dataset", seed=seed, n_values=n_values)

    if "forest" in cfg.kinds:
        _, tree_steps = predict_trees(forest.prefix(n_values[-1]), X)
        cum = np.concatenate([np.zeros((len(X), 1), dtype=np.int64), np.cumsum(tree_steps, axis=1)], axis=1)
        for n in n_values:
            steps = cum[:, n] + n
            result.cells.append(Cell(n, "forest", False, StepReport("forest", False, [int(s) for s in steps]),
                                     measure_size(forest.prefix(n))))

    chains = []
    for uspe in cfg.uspe:
        if "word" in cfg.kinds:
            chains.append(("word", uspe))
        if "vector" in cfg.kinds or "majority" in cfg.kinds:
            chains.append(("vector", uspe))
    args = [(forest.prefix(n_values[-1]), X, n_values, kind, uspe, tuple(cfg.kinds), cfg.node_budget)
            for kind, uspe in chains]
    if cfg.n_jobs == 0 or not args:
        outputs = [_run_chain(*a) for a in args]
    else:
        # a fresh worker per chain hands each chain's memory back when it ends
        with multiprocessing.get_context().Pool(min(cfg.n_jobs, len(args)), maxtasksperchild=1) as pool:
            outputs = pool.starmap(_run_chain, args, chunksize=1)
    for cells in outputs:
        result.cells.extend(cells)

    rank = {k: i for i, k in enumerate(MODEL_KINDS)}
    result.cells.sort(key=lambda c: (c.n, c.uspe, rank[c.kind]))
    return result


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(np.corrcoef(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))[0, 1])
