"""Exception hierarchy shared by all modules."""


class TaskSpecialistsError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(TaskSpecialistsError):
    """Tensor or layer shapes do not line up."""


class NumericError(TaskSpecialistsError):
    """A value that must be finite is NaN or infinite."""


class ConfigurationError(TaskSpecialistsError):
    """A config, spec, or argument combination is invalid."""


class ProtocolError(TaskSpecialistsError):
    """The sequential task protocol was violated (wrong order, double access)."""


class IngestionError(TaskSpecialistsError):
    """A dataset file could not be loaded as described by its manifest."""


class ClusteringError(TaskSpecialistsError):
    """K-Means preconditions violated (e.g. fewer points than clusters)."""


class InitializationError(TaskSpecialistsError):
    """The labelled batch cannot initialize the cluster lookup table."""


class CaptioningError(TaskSpecialistsError):
    """A sample cannot be attributed to any known class template."""


class GenerationError(TaskSpecialistsError):
    """A caption cannot be parsed back into generator parameters."""


class TrainingError(TaskSpecialistsError):
    """Training diverged or its data preconditions were not met."""


class MetricError(TaskSpecialistsError):
    """A metric was requested on incomplete results."""


class ContractViolation(TaskSpecialistsError):
    """An immutability or interface contract was broken by the caller."""
