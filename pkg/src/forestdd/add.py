"""Ordered, reduced, hash-consed algebraic decision diagrams.

A :class:`Manager` owns a unique table of nodes over one terminal domain.
Nodes are plain integers internally; the public API hands out
:class:`AddRef` handles that remember their manager, so equal handles mean
equal functions (for a fixed predicate order and terminal domain).

Internal nodes test a predicate id from a shared :class:`PredicateOrder`;
``hi`` is followed when the predicate holds, ``lo`` otherwise.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, Mapping, Optional, Union

import numpy as np

from .exceptions import NodeBudgetExceeded, UsageError
from .predicates import PredicateOrder

# Recursion depth of ite/apply/map is bounded by the number of predicates.
if sys.getrecursionlimit() < 10000:
    sys.setrecursionlimit(10000)

TERMINAL = sys.maxsize  # level of terminal nodes; sorts after every predicate id

DEFAULT_NODE_BUDGET = 5_000_000


@dataclass(frozen=True)
class SizeReport:
    internal: int
    terminal: int

    @property
    def total(self) -> int:
        return self.internal + self.terminal


class AddRef:
    """Handle to a node stored in a :class:`Manager`."""

    __slots__ = ("manager", "node")

    def __init__(self, manager: "Manager", node: int):
        self.manager = manager
        self.node = node

    def __eq__(self, other):
        if not isinstance(other, AddRef):
            return NotImplemented
        return self.manager is other.manager and self.node == other.node

    def __hash__(self):
        return hash((id(self.manager), self.node))

    def __repr__(self):
        m = self.manager
        if m.var[self.node] == TERMINAL:
            return f"AddRef(terminal={m.values[self.node]!r})"
        return f"AddRef(node={self.node}, pred={m.var[self.node]})"

    @property
    def is_terminal(self) -> bool:
        return self.manager.var[self.node] == TERMINAL

    @property
    def value(self):
        if not self.is_terminal:
            raise UsageError("internal nodes carry no terminal value")
        return self.manager.values[self.node]

    @property
    def pred(self) -> int:
        if self.is_terminal:
            raise UsageError("terminal nodes test no predicate")
        return self.manager.var[self.node]

    @property
    def then_(self) -> "AddRef":
        return AddRef(self.manager, self.manager.hi[self.node])

    @property
    def else_(self) -> "AddRef":
        return AddRef(self.manager, self.manager.lo[self.node])


Assignment = Union[Mapping[int, bool], Callable[[int], bool]]


class Manager:
    """Unique table and operation caches for diagrams over one terminal domain.

    Terminal values must be hashable; two terminals are merged iff their
    values compare equal. Caches are never evicted and live as long as the
    manager. ``node_budget`` caps the number of stored nodes (internal plus
    terminal); exceeding it raises :class:`NodeBudgetExceeded`.
    """

    def __init__(self, order: PredicateOrder, node_budget: Optional[int] = DEFAULT_NODE_BUDGET,
                 name: Optional[str] = None):
        self.order = order
        self.node_budget = node_budget
        self.name = name
        # parallel arrays indexed by node id
        self.var = []
        self.hi = []
        self.lo = []
        self.values = []
        self._unique: Dict[tuple, int] = {}
        self._terminals: Dict[Hashable, int] = {}
        self._ite_cache: Dict[tuple, int] = {}
        self._apply_cache: Dict[Callable, Dict[tuple, int]] = {}
        self._map_cache: Dict[tuple, Dict[int, int]] = {}
        self.caches: Dict[str, dict] = {}

    def __len__(self):
        return len(self.var)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Manager{label} nodes={len(self.var)} predicates={len(self.order)}>"

    # -- raw node level ---------------------------------------------------

    def _check_budget(self):
        if self.node_budget is not None and len(self.var) >= self.node_budget:
            raise NodeBudgetExceeded(self.node_budget, self.name)

    def terminal(self, value) -> int:
        node = self._terminals.get(value)
        if node is None:
            self._check_budget()
            node = len(self.var)
            self.var.append(TERMINAL)
            self.hi.append(-1)
            self.lo.append(-1)
            self.values.append(value)
            self._terminals[value] = node
        return node

    def mk(self, pid: int, hi: int, lo: int) -> int:
        """Return the unique node ``(pid, hi, lo)``, collapsing ``hi == lo``.

        Callers must respect the order: ``pid`` below the levels of both
        children.
        """
        if hi == lo:
            return hi
        key = (pid, hi, lo)
        node = self._unique.get(key)
        if node is None:
            self._check_budget()
            node = len(self.var)
            self.var.append(pid)
            self.hi.append(hi)
            self.lo.append(lo)
            self.values.append(None)
            self._unique[key] = node
        return node

    def ref(self, node: int) -> AddRef:
        return AddRef(self, node)

    def _own(self, f: AddRef) -> int:
        if not isinstance(f, AddRef):
            raise UsageError(f"expected an AddRef, got {type(f).__name__}")
        if f.manager is not self:
            raise UsageError("diagram belongs to a different manager")
        return f.node

    def _pid(self, p) -> int:
        if isinstance(p, (int, np.integer)):
            p = int(p)
            if not 0 <= p < len(self.order):
                raise UsageError(f"unknown predicate id {p}")
            return p
        return self.order.id_of(p)

    # -- construction -----------------------------------------------------

    def constant(self, value) -> AddRef:
        return AddRef(self, self.terminal(value))

    def ite(self, p, f: AddRef, g: AddRef) -> AddRef:
        """Diagram for "if predicate ``p`` then ``f`` else ``g``".

        ``p`` is a predicate id or a registered :class:`Predicate`.
        """
        return AddRef(self, self._ite(self._pid(p), self._own(f), self._own(g)))

    def _ite(self, p: int, f: int, g: int) -> int:
        if f == g:
            return f
        var, hi, lo = self.var, self.hi, self.lo
        vf, vg = var[f], var[g]
        if p < vf and p < vg:
            return self.mk(p, f, g)
        key = (p, f, g)
        r = self._ite_cache.get(key)
        if r is not None:
            return r
        m = min(p, vf, vg)
        if m == p:
            # p is tested first; only f's then-side and g's else-side survive
            r = self.mk(p, hi[f] if vf == p else f, lo[g] if vg == p else g)
        else:
            fh, fl = (hi[f], lo[f]) if vf == m else (f, f)
            gh, gl = (hi[g], lo[g]) if vg == m else (g, g)
            r = self.mk(m, self._ite(p, fh, gh), self._ite(p, fl, gl))
        self._ite_cache[key] = r
        return r

    def apply(self, op: Callable, f: AddRef, g: AddRef) -> AddRef:
        """Pointwise ``op(f(x), g(x))``; memoized on ``(op, f, g)``."""
        return AddRef(self, self._apply(op, self._own(f), self._own(g)))

    def _apply(self, op: Callable, f: int, g: int) -> int:
        cache = self._apply_cache.get(op)
        if cache is None:
            cache = self._apply_cache[op] = {}
        var, hi, lo, values = self.var, self.hi, self.lo, self.values
        terminal, mk = self.terminal, self.mk

        def rec(f, g):
            key = (f, g)
            r = cache.get(key)
            if r is not None:
                return r
            vf, vg = var[f], var[g]
            if vf == TERMINAL and vg == TERMINAL:
                r = terminal(op(values[f], values[g]))
            elif vf == vg:
                r = mk(vf, rec(hi[f], hi[g]), rec(lo[f], lo[g]))
            elif vf < vg:
                r = mk(vf, rec(hi[f], g), rec(lo[f], g))
            else:
                r = mk(vg, rec(f, hi[g]), rec(f, lo[g]))
            cache[key] = r
            return r

        return rec(f, g)

    def map(self, h: Callable, f: AddRef, target: Optional["Manager"] = None) -> AddRef:
        """Pointwise ``h(f(x))``, built in ``target`` (default: this manager)."""
        node = self._own(f)
        target = self if target is None else target
        if target.order is not self.order:
            raise UsageError("target manager must share the predicate order")
        key = (h, target)
        cache = self._map_cache.get(key)
        if cache is None:
            cache = self._map_cache[key] = {}
        var, hi, lo, values = self.var, self.hi, self.lo, self.values

        def rec(n):
            r = cache.get(n)
            if r is not None:
                return r
            if var[n] == TERMINAL:
                r = target.terminal(h(values[n]))
            else:
                r = target.mk(var[n], rec(hi[n]), rec(lo[n]))
            cache[n] = r
            return r

        return AddRef(target, rec(node))

    # -- queries ----------------------------------------------------------

    def evaluate(self, f: AddRef, assignment: Assignment):
        """Follow ``assignment`` (predicate id -> bool) from ``f`` to a terminal value."""
        n = self._own(f)
        lookup = assignment if callable(assignment) else assignment.__getitem__
        var = self.var
        while var[n] != TERMINAL:
            try:
                taken = lookup(var[n])
            except (KeyError, IndexError):
                raise UsageError(f"assignment does not define predicate {var[n]}") from None
            n = self.hi[n] if taken else self.lo[n]
        return self.values[n]

    def trace(self, f: AddRef, x):
        """Classify feature vector ``x``; return ``(value, internal nodes visited)``."""
        n = self._own(f)
        var, order = self.var, self.order
        steps = 0
        while var[n] != TERMINAL:
            p = order[var[n]]
            n = self.hi[n] if x[p.feature] < p.threshold else self.lo[n]
            steps += 1
        return self.values[n], steps

    def classify(self, f: AddRef, x):
        return self.trace(f, x)[0]

    def trace_batch(self, f: AddRef, X):
        """Vectorized :meth:`trace` over the rows of ``X``.

        Returns ``(terminal_node_ids, steps)`` as integer arrays; use
        ``manager.values[i]`` to read a terminal's value.
        """
        root = self._own(f)
        X = np.asarray(X, dtype=float)
        nodes = self.reachable(root)
        index = {n: i for i, n in enumerate(nodes)}
        k = len(nodes)
        feat = np.zeros(k, dtype=np.intp)
        thr = np.zeros(k)
        hi = np.arange(k)
        lo = np.arange(k)
        internal = np.zeros(k, dtype=bool)
        for i, n in enumerate(nodes):
            if self.var[n] != TERMINAL:
                p = self.order[self.var[n]]
                feat[i], thr[i], internal[i] = p.feature, p.threshold, True
                hi[i], lo[i] = index[self.hi[n]], index[self.lo[n]]
        cur = np.full(len(X), index[root], dtype=np.intp)
        steps = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = internal[cur]
        while active.any():
            r, c = rows[active], cur[active]
            go_hi = X[r, feat[c]] < thr[c]
            cur[r] = np.where(go_hi, hi[c], lo[c])
            steps[r] += 1
            active = internal[cur]
        return np.asarray(nodes, dtype=np.int64)[cur], steps

    def reachable(self, node: int):
        """Node ids reachable from ``node``, in depth-first preorder."""
        seen = {node}
        out = []
        stack = [node]
        var, hi, lo = self.var, self.hi, self.lo
        while stack:
            n = stack.pop()
            out.append(n)
            if var[n] != TERMINAL:
                for c in (lo[n], hi[n]):
                    if c not in seen:
                        seen.add(c)
                        stack.append(c)
        return out

    def size(self, f: AddRef) -> SizeReport:
        nodes = self.reachable(self._own(f))
        terminals = sum(1 for n in nodes if self.var[n] == TERMINAL)
        return SizeReport(internal=len(nodes) - terminals, terminal=terminals)

    def terminal_values(self, f: AddRef):
        return [self.values[n] for n in self.reachable(self._own(f)) if self.var[n] == TERMINAL]

    def support(self, f: AddRef):
        """Sorted predicate ids tested somewhere in ``f``."""
        return sorted({self.var[n] for n in self.reachable(self._own(f))} - {TERMINAL})

    # -- export -----------------------------------------------------------

    def to_dot(self, f: AddRef, feature_names=None, fmt: Callable = repr, name: str = "add") -> str:
        """Graphviz source: boxes for terminals, solid then-edges, dashed else-edges."""
        root = self._own(f)
        lines = [f"digraph {name} {{"]
        edges = []
        for n in self.reachable(root):
            if self.var[n] == TERMINAL:
                label = _dot_escape(fmt(self.values[n]))
                lines.append(f'  n{n} [shape=box, label="{label}"];')
            else:
                p = self.order[self.var[n]]
                feat = feature_names[p.feature] if feature_names else f"x{p.feature}"
                lines.append(f'  n{n} [shape=ellipse, label="{_dot_escape(feat)} < {p.threshold!r}"];')
                edges.append(f"  n{n} -> n{self.hi[n]} [style=solid];")
                edges.append(f"  n{n} -> n{self.lo[n]} [style=dashed];")
        lines.extend(edges)
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')
