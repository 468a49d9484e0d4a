class ForestDDError(Exception):
    """Base class for errors raised by forestdd."""


class UsageError(ForestDDError, ValueError):
    """An API was called with arguments that violate its contract."""


class FormatError(ForestDDError, ValueError):
    """A dataset, model or diagram file does not match its schema."""


class NodeBudgetExceeded(ForestDDError, RuntimeError):
    """A manager tried to store more nodes than its budget allows."""

    def __init__(self, budget, stage=None):
        self.budget = budget
        self.stage = stage
        where = f" during stage {stage!r}" if stage else ""
        super().__init__(f"node budget of {budget} stored nodes exceeded{where}")
