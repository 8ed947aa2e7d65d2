"""Exception types shared across the package."""


class DistgapError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(DistgapError):
    """A configuration or parameter value violates its invariants."""


class EmptyGraphError(ParameterError):
    """Graph generation was asked for zero nodes."""


class DegenerateTaskError(DistgapError):
    """The sampled task cannot support training (too few valid nodes,
    or a score vector with zero variance)."""


class NumericError(DistgapError):
    """A forward pass produced non-finite activations.

    Carries the index of the transformer layer that failed (-1 for the
    input projection / readout stages).
    """

    def __init__(self, message: str, layer_index: int = -1):
        super().__init__(message)
        self.layer_index = layer_index


class ControllerError(DistgapError):
    """The feedback controller received a non-finite measurement."""


class IncompleteTableError(DistgapError):
    """A sweep table is missing cells required for selection."""

    def __init__(self, message: str, missing: list | None = None):
        super().__init__(message)
        self.missing = missing or []


class FormatError(DistgapError):
    """A serialized artifact (graph file, config, table) is malformed."""
