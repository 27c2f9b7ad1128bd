"""Error taxonomy shared across the pipeline.

Exit-code mapping used by the CLI: ConfigurationError -> 2,
NumericalDegeneracy -> 3, CheckFailure (and subclasses) -> 1.
"""


class AxiomaError(Exception):
    pass


class ConfigurationError(AxiomaError):
    """Bad config, unknown catalog tag, malformed field spec, invalid parameters."""


class CheckFailure(AxiomaError):
    """A verified property failed at the requested tolerance."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class NumericalDegeneracy(AxiomaError):
    """Conditioning or underflow made the computation meaningless."""


class NotAxiomA(CheckFailure):
    """Non-hyperbolic invariant set detected at tolerance."""


class TransversalityError(CheckFailure):
    """Saddle connection or cycle in the order graph."""
