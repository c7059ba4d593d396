"""Uplift modeling toolkit.

Doubly robust CATE estimation on randomized-trial data, meta-learner
baselines, ranking metrics (uplift and cost curves), budgeted treatment
allocation, and a deterministic experiment harness with CSV/SVG reports.
"""

__version__ = "0.1.0"

from .errors import MetricUndefinedError, SchemaError, ValidationError

__all__ = ["MetricUndefinedError", "SchemaError", "ValidationError", "__version__"]
