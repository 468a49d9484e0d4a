"""Threshold predicates, their global order, and interval feasibility contexts."""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .exceptions import UsageError

INF = math.inf


@dataclass(frozen=True, order=True)
class Predicate:
    """The test ``x[feature] < threshold``.

    Field order makes the dataclass ordering the global (feature, threshold)
    lexicographic order.
    """

    feature: int
    threshold: float

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise UsageError(f"threshold must be finite, got {self.threshold!r}")
        if self.feature < 0:
            raise UsageError(f"feature index must be non-negative, got {self.feature}")

    def holds(self, x) -> bool:
        return x[self.feature] < self.threshold

    def __str__(self):
        return f"x{self.feature} < {self.threshold!r}"


class PredicateOrder:
    """Registry assigning dense ids 0..P-1 in (feature, threshold) order.

    Ids returned by :meth:`register` are provisional ranks until
    :meth:`finalize` is called; after that the order is frozen and further
    registration of unseen predicates is an error.
    """

    def __init__(self, predicates: Iterable[Predicate] = ()):
        self._sorted: List[Predicate] = []
        self._ids: Dict[Predicate, int] = {}
        self._finalized = False
        for p in predicates:
            self.register(p)

    @property
    def finalized(self) -> bool:
        return self._finalized

    def register(self, p: Predicate) -> int:
        if p in self._ids:
            return self._ids[p]
        if self._finalized:
            raise UsageError(f"cannot register {p} after the predicate order was finalized")
        i = bisect.bisect_left(self._sorted, p)
        if i < len(self._sorted) and self._sorted[i] == p:
            return i
        self._sorted.insert(i, p)
        return i

    def finalize(self) -> "PredicateOrder":
        if not self._finalized:
            self._ids = {p: i for i, p in enumerate(self._sorted)}
            self._finalized = True
        return self

    def id_of(self, p: Predicate) -> int:
        if not self._finalized:
            raise UsageError("predicate order is not finalized")
        try:
            return self._ids[p]
        except KeyError:
            raise UsageError(f"unregistered predicate {p}") from None

    def __getitem__(self, pid: int) -> Predicate:
        return self._sorted[pid]

    def __len__(self):
        return len(self._sorted)

    def __iter__(self):
        return iter(self._sorted)

    def __contains__(self, p):
        return p in self._sorted if not self._finalized else p in self._ids

    def feature_of(self, pid: int) -> int:
        return self._sorted[pid].feature

    def truth_assignment(self, x) -> Dict[int, bool]:
        """Map every registered predicate id to its truth value under ``x``."""
        return {i: p.holds(x) for i, p in enumerate(self._sorted)}


class Decision(enum.Enum):
    FORCED_TRUE = "forced_true"
    FORCED_FALSE = "forced_false"
    OPEN = "open"


def decide_interval(lo: float, hi: float, threshold: float) -> Decision:
    """Decide ``x < threshold`` for ``x`` ranging over ``[lo, hi)``."""
    if hi <= threshold:
        return Decision.FORCED_TRUE
    if lo >= threshold:
        return Decision.FORCED_FALSE
    return Decision.OPEN


class FeasibilityContext:
    """Conjunction of threshold literals, kept as one interval per feature.

    Feature ``f`` is constrained to ``lo <= x[f] < hi``. Features that carry no
    constraint are absent. Instances are immutable; an empty interval is never
    stored (:meth:`assume` returns ``None`` instead).
    """

    __slots__ = ("_bounds", "_hash")

    def __init__(self, bounds: Optional[Dict[int, Tuple[float, float]]] = None):
        bounds = dict(bounds or {})
        for f, (lo, hi) in bounds.items():
            if not lo < hi:
                raise UsageError(f"empty interval [{lo}, {hi}) for feature {f}")
        self._bounds = bounds
        self._hash = None

    @classmethod
    def top(cls) -> "FeasibilityContext":
        return cls()

    def interval(self, feature: int) -> Tuple[float, float]:
        return self._bounds.get(feature, (-INF, INF))

    def features(self):
        return sorted(self._bounds)

    def assume(self, p: Predicate, branch: bool) -> Optional["FeasibilityContext"]:
        lo, hi = self.interval(p.feature)
        if branch:
            hi = min(hi, p.threshold)
        else:
            lo = max(lo, p.threshold)
        if lo >= hi:
            return None
        bounds = dict(self._bounds)
        bounds[p.feature] = (lo, hi)
        return FeasibilityContext(bounds)

    def decide(self, p: Predicate) -> Decision:
        lo, hi = self.interval(p.feature)
        return decide_interval(lo, hi, p.threshold)

    def restrict(self, features: Iterable[int]) -> "FeasibilityContext":
        keep = set(features)
        return FeasibilityContext({f: b for f, b in self._bounds.items() if f in keep})

    def contains(self, x) -> bool:
        return all(lo <= x[f] < hi for f, (lo, hi) in self._bounds.items())

    def __eq__(self, other):
        if not isinstance(other, FeasibilityContext):
            return NotImplemented
        return self._bounds == other._bounds

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._bounds.items()))
        return self._hash

    def __repr__(self):
        parts = [f"{lo} <= x{f} < {hi}" for f, (lo, hi) in sorted(self._bounds.items())]
        return f"FeasibilityContext({', '.join(parts) or 'top'})"
