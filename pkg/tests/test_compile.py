import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GRID, forests, trees
from forestdd.add import Manager
from forestdd.compile import (
    Aggregator,
    CompiledDiagram,
    PipelineConfig,
    d_V,
    d_W,
    diagram_from_dict,
    forest_order,
    letter_counter,
    load_diagram,
    majority_diagram,
    mv,
    run_pipeline,
)
from forestdd.exceptions import FormatError, NodeBudgetExceeded, UsageError
from forestdd.forest import Forest, classify_forest, classify_tree, load_iris, train_forest
from forestdd.predicates import Predicate
from forestdd.uspe import eliminate, is_fixed_point

MODES = ("off", "interleaved", "final", "both")

# one point per cell of every feature the three-tree fixture tests
IRIS3_GRID = np.array([[sl, 3.0, pl, pw] for sl in (5.0, 7.5) for pl in (1.0, 2.5, 4.0) for pw in (0.5, 2.0)])


@settings(max_examples=40, deadline=None)
@given(trees())
def test_tree_diagrams(tree):
    forest = Forest([tree], ["a", "b", "c"], ["f0", "f1", "f2"])
    m = Manager(forest_order(forest))
    w, v = d_W(tree, m), d_V(tree, m, 3)
    for x in GRID:
        c = classify_tree(tree, x)
        assert m.classify(w, x) == (c,)
        assert m.classify(v, x) == tuple(int(i == c) for i in range(3))


@pytest.mark.filterwarnings("ignore:empty forest")
@settings(max_examples=25, deadline=None)
@given(forests(), st.sampled_from(MODES))
def test_stages_match_forest_oracle(forest, uspe):
    out = run_pipeline(forest, PipelineConfig(stage="word", uspe=uspe))
    vec = run_pipeline(forest, PipelineConfig(stage="majority", uspe=uspe))
    for x in GRID:
        vote = classify_forest(forest, x)
        assert out.word.trace(x)[0] == vote.word
        assert vec.vector.trace(x)[0] == vote.vector
        assert vec.majority.trace(x)[0] == vote.winner


@settings(max_examples=25, deadline=None)
@given(forests(max_trees=6), st.booleans())
def test_schedules_agree(forest, interleaved):
    order = forest_order(forest)
    m = Manager(order)
    roots = set()
    for schedule in ("balanced", "linear"):
        agg = Aggregator("vector", order, 3, interleaved=interleaved, schedule=schedule, manager=m)
        roots.add(agg.extend(forest.trees))
    # incremental extension reaches the same diagram as well
    agg = Aggregator("vector", order, 3, interleaved=interleaved, manager=m)
    agg.extend(forest.trees[:2])
    roots.add(agg.extend(forest.trees[2:]))
    assert len(roots) == 1


@settings(max_examples=25, deadline=None)
@given(forests(min_trees=2, max_trees=5), st.randoms(use_true_random=False), st.booleans())
def test_vector_aggregation_ignores_tree_order(forest, rnd, interleaved):
    shuffled = list(forest.trees)
    rnd.shuffle(shuffled)
    order = forest_order(forest)
    m = Manager(order)
    a = Aggregator("vector", order, 3, interleaved=interleaved, manager=m).extend(forest.trees)
    b = Aggregator("vector", order, 3, interleaved=interleaved, manager=m).extend(shuffled)
    assert a == b


@settings(max_examples=25, deadline=None)
@given(forests(), st.booleans())
def test_abstractions_commute(forest, interleaved):
    # counting letters of the word diagram gives the vector diagram, and
    # majority of either gives the same label diagram
    order = forest_order(forest)
    mw, mvec, mlab = Manager(order), Manager(order), Manager(order)
    w = Aggregator("word", order, 3, interleaved=interleaved, manager=mw).extend(forest.trees)
    v = Aggregator("vector", order, 3, interleaved=interleaved, manager=mvec).extend(forest.trees)
    count = letter_counter(3)
    fix = eliminate if interleaved else (lambda f: f)
    assert fix(mw.map(count, w, mvec)) == v
    via_words = fix(mw.map(lambda word: mv(count(word)), w, mlab))
    assert via_words == fix(majority_diagram(v, mlab))


def test_vector_not_larger_than_word():
    forest = train_forest(load_iris(), 8, seed=2)
    for uspe in MODES:
        w = run_pipeline(forest, PipelineConfig(stage="word", uspe=uspe)).word.size()
        v = run_pipeline(forest, PipelineConfig(stage="vector", uspe=uspe)).vector.size()
        assert v.total <= w.total and v.terminal <= w.terminal


def test_iris3_majority_diagram(iris3):
    out = run_pipeline(iris3, PipelineConfig(stage="majority", uspe="both"))
    d = out.majority
    for x in IRIS3_GRID:
        assert d.trace(x)[0] == classify_forest(iris3, x).winner
    # worked out by hand: sepallength < 7 at the root, petallength chain below,
    # and a three-way tie (setosa wins) for 2.45 <= petallength < 2.7, sepallength >= 7
    assert (d.size().internal, d.size().terminal) == (6, 3)
    assert d.root.manager.order[d.root.pred] == Predicate(0, 7.0)
    assert d.trace([5.0, 3.0, 1.4, 0.2]) == (0, 2)
    assert d.trace([7.5, 3.0, 2.6, 1.0])[0] == 0
    assert d.trace([6.0, 3.0, 2.6, 1.0])[0] == 1


def test_empty_forest():
    forest = Forest([], ["a", "b"], ["x"])
    word = run_pipeline(forest, PipelineConfig(stage="word")).word
    assert word.root.is_terminal and word.root.value == ()
    with pytest.warns(UserWarning, match="empty forest"):
        maj = run_pipeline(forest, PipelineConfig(stage="majority")).majority
    assert maj.root.value == 0 and maj.degenerate


def test_config_validation():
    with pytest.raises(UsageError):
        PipelineConfig(stage="label")
    with pytest.raises(UsageError):
        PipelineConfig(uspe="sometimes")
    with pytest.raises(UsageError):
        Aggregator("majority", forest_order(Forest([], ["a"], [])), 1)
    assert PipelineConfig(stage="majority").stages == ("vector", "majority")


def test_budget_names_stage():
    forest = train_forest(load_iris(), 10, seed=1)
    with pytest.raises(NodeBudgetExceeded) as err:
        run_pipeline(forest, PipelineConfig(stage="word", uspe="off", node_budget=500))
    assert err.value.stage == "word"


def test_interleaved_stays_smaller_than_off():
    forest = train_forest(load_iris(), 8, seed=3)
    off = run_pipeline(forest, PipelineConfig(stage="majority", uspe="off"))
    both = run_pipeline(forest, PipelineConfig(stage="majority", uspe="both"))
    final = run_pipeline(forest, PipelineConfig(stage="majority", uspe="final"))
    assert both.vector.size().total < off.vector.size().total
    # final-only elimination reaches the same canonical sizes
    assert final.majority.size() == both.majority.size()
    assert final.vector.size() == both.vector.size()


def test_artifact_roundtrip(tmp_path):
    data = load_iris()
    forest = train_forest(data, 10, seed=4)
    for stage in ("word", "vector", "majority"):
        d = run_pipeline(forest, PipelineConfig(stage=stage)).final
        path = tmp_path / f"{stage}.json"
        d.save(path)
        back = load_diagram(path)
        assert back.kind == stage
        assert back.size() == d.size()
        assert np.array_equal(back.predict(data.X), d.predict(data.X))
        assert back.trace_batch(data.X)[0] == d.trace_batch(data.X)[0]


def test_artifact_nodes_children_first(iris3):
    obj = run_pipeline(iris3, PipelineConfig()).majority.to_dict()
    for i, nd in enumerate(obj["nodes"]):
        if "value" not in nd:
            assert nd["then"] < i and nd["else"] < i
    assert obj["root"] == len(obj["nodes"]) - 1


def test_artifact_strict_loading(iris3):
    obj = run_pipeline(iris3, PipelineConfig()).majority.to_dict()
    bad = json.loads(json.dumps(obj))
    bad["nodes"][-1]["then"] = len(bad["nodes"])
    with pytest.raises(FormatError, match="earlier nodes"):
        diagram_from_dict(bad)
    bad = dict(obj, extra=1)
    with pytest.raises(FormatError):
        diagram_from_dict(bad)
    with pytest.raises(FormatError, match="unknown kind"):
        diagram_from_dict(dict(obj, kind="label"))


def test_dot_has_one_box_per_terminal(iris3):
    d = run_pipeline(iris3, PipelineConfig()).majority
    dot = d.to_dot()
    assert dot.count("shape=box") == d.size().terminal == 3
    assert "Iris-setosa" in dot and "petallength < 2.45" in dot


def test_predict_by_kind(iris3):
    X = IRIS3_GRID
    expected = [classify_forest(iris3, x).winner for x in X]
    for stage in ("word", "vector", "majority"):
        d = run_pipeline(iris3, PipelineConfig(stage=stage)).final
        assert d.predict(X).tolist() == expected


def test_read_cost():
    m = Manager(forest_order(Forest([], ["a", "b", "c"], [])))
    assert CompiledDiagram("word", m.constant((0, 1)), "abc", []).read_cost((0, 1)) == 2
    assert CompiledDiagram("vector", m.constant((0, 1, 0)), "abc", []).read_cost((0, 1, 0)) == 3
    assert CompiledDiagram("majority", m.constant(1), "abc", []).read_cost(1) == 0


def test_iris3_trees_compile_exactly(iris3):
    data = load_iris()
    m = Manager(forest_order(iris3))
    for tree in iris3.trees:
        w = d_W(tree, m)
        assert [m.classify(w, x) for x in data.X] == [(classify_tree(tree, x),) for x in data.X]


def test_iris3_stages_on_iris_rows(iris3):
    data = load_iris()
    word = run_pipeline(iris3, PipelineConfig(stage="word", uspe="off")).word
    out = run_pipeline(iris3, PipelineConfig(stage="majority", uspe="off"))
    for x in data.X:
        vote = classify_forest(iris3, x)
        assert word.trace(x)[0] == vote.word
        assert out.majority.trace(x)[0] == vote.winner
    # every terminal of the vector diagram counts all three trees
    m = out.vector.manager
    assert all(sum(v) == 3 for v in m.terminal_values(out.vector.root))


def test_iris3_vector_diagram_loses_unrealizable_terminal(iris3):
    off = run_pipeline(iris3, PipelineConfig(stage="vector", uspe="off")).vector
    both = run_pipeline(iris3, PipelineConfig(stage="vector", uspe="both")).vector
    assert not is_fixed_point(off.root)
    # (2, 1, 0) needs petallength < 2.45 and >= 2.7 at once
    assert (2, 1, 0) in off.manager.terminal_values(off.root)
    assert (2, 1, 0) not in both.manager.terminal_values(both.root)
    assert both.size().total < off.size().total
