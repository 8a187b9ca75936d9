"""Exception types shared across the toolkit."""


class PdectrlError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(PdectrlError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteFieldError(PdectrlError, FloatingPointError):
    """A field operation produced (or was given) NaN/Inf entries."""


class SimulationBlowUpError(PdectrlError, RuntimeError):
    """Time integration produced a non-finite state; the episode is unusable."""


class DomainError(PdectrlError, ValueError):
    """A query point lies outside the partitioned domain."""


class ConfigurationError(PdectrlError, ValueError):
    """Unsupported or inconsistent configuration value."""


class StaleCacheError(PdectrlError, RuntimeError):
    """A backward pass was given a cache that no longer matches the network."""


class AggregationError(PdectrlError, ValueError):
    """Run logs cannot be aggregated (mismatched lengths, empty input)."""


class SweepError(PdectrlError, RuntimeError):
    """A parameter sweep could not produce a usable result."""
