"""Unsatisfiable-path elimination for diagrams over threshold predicates.

Predicate ids are ordered by (feature, threshold), so the tests on one
feature form a contiguous block along every path, with thresholds
increasing. Any realizable input satisfies the tests of a block like a point
on the real line: it falls into exactly one cell between consecutive
thresholds. :func:`eliminate` rewrites each block as a chain over the cell
boundaries where the outcome actually changes. Tests decided by earlier
tests on the same feature disappear, and so do tests that only separated
unrealizable combinations. The result depends only on the function over
realizable inputs, so it is canonical for the predicate order.
"""

from __future__ import annotations

from typing import Callable, Optional

from .add import TERMINAL, AddRef, Manager
from .predicates import INF, Decision, FeasibilityContext

_CANON = "uspe"


def _eliminate_node(m: Manager, node: int) -> int:
    cache = m.caches.setdefault(_CANON, {})
    var, hi, lo, preds, mk = m.var, m.hi, m.lo, m.order, m.mk

    def rec(n):
        if var[n] == TERMINAL:
            return n
        r = cache.get(n)
        if r is not None:
            return r
        feature = preds[var[n]].feature
        # thresholds tested in this block, ascending
        pids = set()
        stack = [n]
        seen = set()
        while stack:
            k = stack.pop()
            if k in seen or var[k] == TERMINAL or preds[var[k]].feature != feature:
                continue
            seen.add(k)
            pids.add(var[k])
            stack.append(hi[k])
            stack.append(lo[k])
        pids = sorted(pids)
        pos = {p: i for i, p in enumerate(pids)}
        # cell c lies between thresholds c-1 and c; test i holds exactly in cells 0..i
        cells = [0] * (len(pids) + 1)

        def fill(k, first, last):
            v = var[k]
            if v == TERMINAL or preds[v].feature != feature:
                r = rec(k)
                for c in range(first, last + 1):
                    cells[c] = r
                return
            i = pos[v]
            if i >= last:
                fill(hi[k], first, last)
            elif i < first:
                fill(lo[k], first, last)
            else:
                fill(hi[k], first, i)
                fill(lo[k], i + 1, last)

        fill(n, 0, len(pids))
        # test only the boundaries where the outcome changes
        r = cells[-1]
        for i in range(len(pids) - 1, -1, -1):
            if cells[i] != cells[i + 1]:
                r = mk(pids[i], cells[i], r)
        cache[n] = r
        return r

    return rec(node)


def eliminate(f: AddRef) -> AddRef:
    """Remove every test that no realizable input needs.

    The result agrees with ``f`` on all assignments produced by real feature
    vectors, tests nothing forced by the tests above it, and is a fixed point.
    """
    return AddRef(f.manager, _eliminate_node(f.manager, f.node))


def is_fixed_point(f: AddRef) -> bool:
    return eliminate(f) == f


def apply_feasible(op: Callable, f: AddRef, g: AddRef) -> AddRef:
    """``eliminate(manager.apply(op, f, g))`` without building unrealizable branches.

    The pointwise product is only expanded along paths whose tests are
    jointly satisfiable; forced tests are skipped on the fly.
    """
    m = f.manager
    m._own(f), m._own(g)
    cache = m.caches.setdefault(("apply_feasible", op), {})
    var, hi, lo, preds, mk, values, terminal = m.var, m.hi, m.lo, m.order, m.mk, m.values, m.terminal

    def rec(f, g, feature, lo_b, hi_b):
        vf, vg = var[f], var[g]
        if vf == TERMINAL and vg == TERMINAL:
            return terminal(op(values[f], values[g]))
        v = vf if vf < vg else vg
        p = preds[v]
        t = p.threshold
        if p.feature != feature:
            feature, lo_b, hi_b = p.feature, -INF, INF
        # later tests on this feature use thresholds >= t: a lower bound below t
        # never forces them, and any upper bound <= t forces all of them
        key = (f, g, lo_b if lo_b >= t else -INF, hi_b if hi_b > t else t)
        r = cache.get(key)
        if r is not None:
            return r
        fh, fl = (hi[f], lo[f]) if vf == v else (f, f)
        gh, gl = (hi[g], lo[g]) if vg == v else (g, g)
        if hi_b <= t:
            r = rec(fh, gh, feature, lo_b, hi_b)
        elif lo_b >= t:
            r = rec(fl, gl, feature, lo_b, hi_b)
        else:
            r = mk(v, rec(fh, gh, feature, lo_b, t), rec(fl, gl, feature, t, hi_b))
        cache[key] = r
        return r

    return AddRef(m, _eliminate_node(m, rec(f.node, g.node, -1, -INF, INF)))


def find_forced(f: AddRef) -> Optional[AddRef]:
    """First node whose test is decided by its ancestors on some path, if any.

    Threads a full :class:`FeasibilityContext` through a depth-first search,
    independently of :func:`eliminate`.
    """
    m = f.manager
    seen = set()
    stack = [(f.node, FeasibilityContext.top())]
    while stack:
        n, ctx = stack.pop()
        if m.var[n] == TERMINAL:
            continue
        p = m.order[m.var[n]]
        # ordered diagrams never test a smaller feature below this node
        ctx = ctx.restrict(g for g in ctx.features() if g >= p.feature)
        key = (n, ctx)
        if key in seen:
            continue
        seen.add(key)
        if ctx.decide(p) is not Decision.OPEN:
            return AddRef(m, n)
        stack.append((m.hi[n], ctx.assume(p, True)))
        stack.append((m.lo[n], ctx.assume(p, False)))
    return None


def has_forced_nodes(f: AddRef) -> bool:
    return find_forced(f) is not None
