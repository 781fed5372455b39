"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract (see ``gnpe.cli``):
I/O failures -> 2, ConfigError -> 3, TrainingError -> 4. Non-convergence of
the Gibbs sampler is *not* an exception; it is a first-class result value
(``GnpeResult.converged``), and only the CLI turns it into exit code 5.
"""


class GnpeError(Exception):
    """Base class for all package errors."""


class StructuralError(GnpeError, ValueError):
    """Inputs violate a structural precondition (shape, dimension, index range)."""


class DataError(GnpeError, ValueError):
    """Data contents are invalid (non-finite values, wrong domain)."""


class ConfigError(GnpeError, ValueError):
    """An experiment configuration is malformed or contains unknown keys."""


class TrainingError(GnpeError, RuntimeError):
    """Training diverged or produced non-finite quantities."""
