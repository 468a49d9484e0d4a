import numpy as np
from hypothesis import given, settings

from conftest import GRID, N_FEATURES, THRESHOLDS, forests, random_tree, trees
from forestdd.add import TERMINAL, Manager
from forestdd.compile import PipelineConfig, d_V, run_pipeline, vector_add
from forestdd.forest import Forest, load_iris, train_forest
from forestdd.predicates import Predicate, PredicateOrder
from forestdd.uspe import apply_feasible, eliminate, find_forced, has_forced_nodes, is_fixed_point

ORDER = PredicateOrder(Predicate(f, t) for f in range(N_FEATURES) for t in THRESHOLDS).finalize()


def vectors(m, forest):
    f = m.constant((0, 0, 0))
    for t in forest.trees:
        f = m.apply(vector_add, f, d_V(t, m, 3))
    return f


def outputs(f):
    return [f.manager.classify(f, x) for x in GRID]


def paths_have_contradiction(f):
    # brute force over root-to-terminal paths with explicit literal lists
    m = f.manager
    stack = [(f.node, ())]
    while stack:
        n, lits = stack.pop()
        if m.var[n] == TERMINAL:
            continue
        p = m.order[m.var[n]]
        for q, b in lits:
            if q.feature == p.feature and ((b and q.threshold <= p.threshold) or
                                           (not b and q.threshold >= p.threshold)):
                return True
        stack.append((m.hi[n], lits + ((p, True),)))
        stack.append((m.lo[n], lits + ((p, False),)))
    return False


def test_forced_node_removed():
    m = Manager(ORDER)
    a, b, c = m.constant("a"), m.constant("b"), m.constant("c")
    inner = m.ite(Predicate(0, 2.0), a, b)
    f = m.ite(Predicate(0, 1.0), inner, c)
    # x0 < 1 forces x0 < 2 on the then-branch
    assert find_forced(f) == inner
    g = eliminate(f)
    assert g == m.ite(Predicate(0, 1.0), a, c)
    assert not has_forced_nodes(g)


def test_unrealizable_split_removed():
    m = Manager(ORDER)
    a, b = m.constant("a"), m.constant("b")
    # the only difference sits behind x0 >= 3 and x0 < 2
    f = m.ite(Predicate(0, 2.0), m.ite(Predicate(0, 3.0), a, b), a)
    assert eliminate(f) == a


def test_constant_and_terminal_fixed_points():
    m = Manager(ORDER)
    c = m.constant((1, 2))
    assert eliminate(c) == c
    assert is_fixed_point(c)


@settings(max_examples=60, deadline=None)
@given(forests(max_trees=4))
def test_eliminate_sound_forced_free_idempotent(forest):
    m = Manager(ORDER)
    f = vectors(m, forest)
    g = eliminate(f)
    assert outputs(g) == outputs(f)
    assert find_forced(g) is None
    assert not paths_have_contradiction(g)
    assert eliminate(g) == g
    assert m.size(g).total <= m.size(f).total


@settings(max_examples=60, deadline=None)
@given(trees(n_classes=2, max_depth=3), trees(n_classes=2, max_depth=3))
def test_eliminate_is_canonical(t1, t2):
    m = Manager(ORDER)
    f, g = d_V(t1, m, 2), d_V(t2, m, 2)
    assert (eliminate(f) == eliminate(g)) == (outputs(f) == outputs(g))


@settings(max_examples=60, deadline=None)
@given(forests(max_trees=3), forests(max_trees=3))
def test_apply_feasible_is_eliminated_apply(fa, fb):
    m = Manager(ORDER)
    f, g = vectors(m, fa), vectors(m, fb)
    h = apply_feasible(vector_add, f, g)
    assert h == eliminate(m.apply(vector_add, f, g))
    assert h == apply_feasible(vector_add, eliminate(f), eliminate(g))


def test_find_forced_agrees_with_path_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        forest = Forest([random_tree(rng) for _ in range(2)], ["a", "b", "c"], ["f0", "f1", "f2"])
        f = vectors(Manager(ORDER), forest)
        assert (find_forced(f) is not None) == paths_have_contradiction(f)


def test_petal_thresholds_example():
    order = PredicateOrder([Predicate(2, 2.45), Predicate(2, 2.7)]).finalize()
    m = Manager(order)
    a, b, c = m.constant("setosa"), m.constant("versicolor"), m.constant("virginica")
    f = m.ite(Predicate(2, 2.45), m.ite(Predicate(2, 2.7), a, b), c)
    assert eliminate(f) == m.ite(Predicate(2, 2.45), a, c)
    assert not is_fixed_point(f)


def test_disjoint_features_unchanged():
    m = Manager(ORDER)
    a, b = m.constant(0), m.constant(1)
    f = m.ite(Predicate(0, 1.0), m.ite(Predicate(1, 2.0), a, b), m.ite(Predicate(2, 3.0), b, a))
    assert eliminate(f) == f


def test_iris_majority_shrinks():
    forest = train_forest(load_iris(), 10, seed=1)
    off = run_pipeline(forest, PipelineConfig(uspe="off")).majority.size().total
    both = run_pipeline(forest, PipelineConfig(uspe="both")).majority.size().total
    assert both < off
