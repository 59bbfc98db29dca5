"""Exception hierarchy shared by the library and the command-line front end."""

import numpy as np


class MvgpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MvgpError, ValueError):
    """Invalid configuration or argument combination."""


class DataError(MvgpError, ValueError):
    """Malformed, inconsistent or out-of-range input data."""


class NumericalError(MvgpError):
    """A numerical procedure failed (non-finite objective, factorization)."""


class FactorizationError(NumericalError, np.linalg.LinAlgError):
    """A matrix could not be factorized even after maximal jitter."""


class ModelFormatError(MvgpError, ValueError):
    """A serialized model could not be read."""
