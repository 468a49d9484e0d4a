"""Compile random forests into single decision diagrams over threshold predicates."""

from .add import DEFAULT_NODE_BUDGET, AddRef, Manager, SizeReport
from .compile import (
    CompiledDiagram,
    PipelineConfig,
    aggregate_vectors,
    aggregate_words,
    compile_majority,
    load_diagram,
    majority_diagram,
    run_pipeline,
)
from .estimator import ForestDDClassifier
from .exceptions import FormatError, ForestDDError, NodeBudgetExceeded, UsageError
from .forest import (
    Dataset,
    Forest,
    Leaf,
    Node,
    classify_forest,
    load_dataset,
    load_forest,
    load_iris,
    save_forest,
    train_forest,
)
from .metrics import StepReport, SweepConfig, SweepResult, count_steps, measure_size, sweep
from .predicates import FeasibilityContext, Predicate, PredicateOrder
from .uspe import apply_feasible, eliminate, find_forced

__version__ = "0.1.0"
