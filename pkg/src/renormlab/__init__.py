"""Numerical laboratory for renormalization of unicritical circle maps."""
from . import blaschke, circlemap, contfrac, experiments, pairs  # noqa: F401  (blaschke registers its families)

__version__ = "0.1.0"
