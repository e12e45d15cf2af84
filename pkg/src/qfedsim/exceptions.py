"""Error taxonomy shared across the package.

Every failure mode raised by qfedsim derives from SimulationError so callers
can catch the package's errors without masking genuine bugs (TypeError etc.).
"""


class SimulationError(Exception):
    """Base class for all qfedsim errors."""


class CapacityError(SimulationError):
    """Requested size exceeds a hard implementation cap (e.g. qubit count)."""


class ShapeError(SimulationError):
    """Dimension or shape mismatch between otherwise valid values."""


class ContractError(SimulationError):
    """An operation was called outside its contract (e.g. sampling in exact mode)."""


class DegenerateInputError(SimulationError):
    """Input is degenerate for the requested operation (e.g. zero vector)."""


class NumericError(SimulationError):
    """A computation produced non-finite values."""


class LabelError(SimulationError):
    """A class label is outside the configured class set."""


class DataError(SimulationError):
    """Dataset-level failure: empty data, empty shard, missing artifact file."""


class ParseError(SimulationError):
    """A text input failed to parse; message names the offending line."""


class SchemaError(SimulationError):
    """Structured input has inconsistent layout (e.g. ragged CSV rows)."""


class PartitionError(SimulationError):
    """A valid partition could not be produced within the retry budget."""


class ConfigError(SimulationError):
    """Invalid experiment configuration; message names the offending key."""


class UndefinedMetricError(SimulationError):
    """A metric's denominator is zero for the given confusion counts."""
