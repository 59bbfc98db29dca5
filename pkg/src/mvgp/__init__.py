"""Multi-view Gaussian process classification with posterior-consistency
regularization."""

__version__ = '0.1.0'
