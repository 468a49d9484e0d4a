"""scikit-learn style classifier: train a forest, serve predictions from its majority diagram."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .add import DEFAULT_NODE_BUDGET
from .compile import PipelineConfig, run_pipeline
from .forest import Dataset, Forest, train_forest
from .metrics import count_steps_batch


class ForestDDClassifier(ClassifierMixin, BaseEstimator):
    """Random forest compiled into a single decision diagram.

    ``fit`` trains ``n_estimators`` CART trees and compiles them up to
    ``stage``; ``predict`` walks one diagram per row instead of every tree.
    Features are referred to by column position (``x0``, ``x1``, ...) unless
    ``feature_names`` is given to ``fit``.
    """

    def __init__(self, n_estimators=100, random_state=0, max_features=None, stage="majority",
                 uspe="both", node_budget=DEFAULT_NODE_BUDGET):
        self.n_estimators = n_estimators
        self.random_state = random_state
        self.max_features = max_features
        self.stage = stage
        self.uspe = uspe
        self.node_budget = node_budget

    def fit(self, X, y, feature_names=None):
        X, y = check_X_y(X, y, dtype=float)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise ValueError("feature_names must have one entry per column")
        data = Dataset(X, codes, names, [str(c) for c in self.classes_])
        seed = 0 if self.random_state is None else int(self.random_state)
        self.forest_ = train_forest(data, self.n_estimators, seed=seed, max_features=self.max_features)
        self._compile()
        return self

    @classmethod
    def from_forest(cls, forest: Forest, **params):
        """Wrap an existing forest; class labels become its class names."""
        est = cls(n_estimators=len(forest), **params)
        est.forest_ = forest
        est.classes_ = np.asarray(forest.classes)
        est.n_features_in_ = len(forest.features)
        est._compile()
        return est

    def _compile(self):
        cfg = PipelineConfig(stage=self.stage, uspe=self.uspe, node_budget=self.node_budget)
        self.diagram_ = run_pipeline(self.forest_, cfg).final

    def _validate(self, X):
        check_is_fitted(self, "diagram_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._validate(X)
        return self.classes_[self.diagram_.predict(X)]

    def steps(self, X):
        """Classification steps per row for the compiled diagram."""
        return count_steps_batch(self.diagram_, self._validate(X))

    def forest_steps(self, X):
        return count_steps_batch(self.forest_, self._validate(X))
