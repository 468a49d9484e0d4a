"""``forestdd`` command line: train, compile, eval, bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .add import DEFAULT_NODE_BUDGET
from .compile import STAGES, USPE_MODES, PipelineConfig, diagram_from_dict, run_pipeline
from .exceptions import ForestDDError, NodeBudgetExceeded
from .forest import forest_from_dict, load_dataset, load_forest, predict_trees, save_forest, train_forest, vote_counts
from .metrics import SweepConfig, sweep


def _budget(text):
    v = int(text)
    return None if v <= 0 else v


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or min(sizes) < 0:
        raise argparse.ArgumentTypeError("sizes must be non-negative integers")
    return sizes


def cmd_train(args) -> int:
    data = load_dataset(args.dataset)
    if args.trees == 0:
        print("warning: training an empty forest (--trees 0)", file=sys.stderr)
    forest = train_forest(data, args.trees, seed=args.seed, max_features=args.max_features)
    save_forest(forest, args.out)
    print(f"trees: {len(forest)}  size: {forest.size()}  -> {args.out}")
    return 0


def cmd_compile(args) -> int:
    forest = load_forest(args.model)
    cfg = PipelineConfig(stage=args.stage, uspe=args.uspe, node_budget=args.node_budget)
    try:
        out = run_pipeline(forest, cfg)
    except NodeBudgetExceeded as e:
        print(f"error: stage {e.stage}: {e}", file=sys.stderr)
        return 3
    for kind in cfg.stages:
        s = out.sizes[kind]
        print(f"{kind:9s} internal {s.internal:>9,}  terminal {s.terminal:>7,}  total {s.total:>9,}")
    final = out.final
    final.save(args.out)
    if args.dot:
        Path(args.dot).write_text(final.to_dot(), encoding="utf-8")
    return 0


def _load_model(path):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, dict) and "trees" in obj:
        return forest_from_dict(obj)
    return diagram_from_dict(obj)


def _forest_labels(forest, X):
    if not len(X):
        return np.zeros(0, dtype=np.int64)
    labels, _ = predict_trees(forest, X)
    return vote_counts(labels, forest.n_classes).argmax(axis=1)


def cmd_eval(args) -> int:
    model = _load_model(args.artifact)
    data = load_dataset(args.dataset, class_names=list(model.classes))
    X = data.select_features(model.features)
    if hasattr(model, "trees"):
        pred = _forest_labels(model, X)
    else:
        pred = model.predict(X) if len(X) else np.zeros(0, dtype=np.int64)
    acc = f"{float((pred == data.y).mean()):.4f}" if len(data) else "n/a"
    print(f"rows: {len(data)}  accuracy: {acc}")
    if not args.oracle:
        return 0
    forest = load_forest(args.oracle)
    if list(forest.classes) != list(model.classes):
        print("error: oracle and artifact disagree on classes", file=sys.stderr)
        return 2
    expected = _forest_labels(forest, data.select_features(forest.features))
    bad = np.flatnonzero(pred != expected)
    print(f"mismatches: {len(bad)}")
    if len(bad):
        i = int(bad[0])
        row = ", ".join(f"{v:g}" for v in data.X[i])
        print(f"first mismatch: row {i + 1} [{row}]: artifact {model.classes[pred[i]]}, "
              f"forest {model.classes[expected[i]]}", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    data = load_dataset(args.dataset)
    cfg = SweepConfig(node_budget=args.node_budget, max_features=args.max_features, n_jobs=args.jobs)
    result = sweep(data, args.sizes, seed=args.seed, cfg=cfg)
    Path(args.out).write_text(result.to_csv(), encoding="utf-8")
    if args.json:
        Path(args.json).write_text(result.to_json(), encoding="utf-8")
    print(result.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forestdd", description="Compile random forests into decision diagrams.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a random forest from a CSV dataset")
    t.add_argument("dataset")
    t.add_argument("--trees", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-features", type=int, default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compile", help="compile a forest model into a diagram")
    c.add_argument("model")
    c.add_argument("--stage", choices=STAGES, default="majority")
    c.add_argument("--uspe", choices=USPE_MODES, default="both")
    c.add_argument("--node-budget", type=_budget, default=DEFAULT_NODE_BUDGET, help="0 disables the budget")
    c.add_argument("--out", required=True)
    c.add_argument("--dot")
    c.set_defaults(func=cmd_compile)

    e = sub.add_parser("eval", help="classify a dataset with a compiled diagram or forest")
    e.add_argument("artifact")
    e.add_argument("dataset")
    e.add_argument("--oracle", help="forest model to compare against")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="step counts and sizes over forest sizes")
    b.add_argument("dataset")
    b.add_argument("--sizes", type=_sizes, default=[10, 100, 1000])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--max-features", type=int, default=None)
    b.add_argument("--node-budget", type=_budget, default=DEFAULT_NODE_BUDGET)
    b.add_argument("--jobs", type=int, default=1, help="worker processes; 0 runs in-process")
    b.add_argument("--out", required=True)
    b.add_argument("--json")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ForestDDError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
