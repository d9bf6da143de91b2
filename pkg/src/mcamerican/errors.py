class ParameterError(ValueError):
    """Invalid model, contract or configuration input."""


class StabilityError(ParameterError):
    """Lattice risk-neutral probability outside (0, 1)."""
