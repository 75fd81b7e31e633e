"""Complexity-controllable question generation.

Two halves: a cross-domain question-complexity estimator built on five
surface features, and a mixture-of-experts sequence-to-sequence generator
whose experts are soft template banks keyed by complexity level.
"""

__version__ = "0.1.0"
