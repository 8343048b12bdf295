"""Exception hierarchy shared across the package."""


class PredbanditError(Exception):
    """Base class for all library errors."""


class ArmIndexError(PredbanditError):
    """Arm index outside [0, K)."""


class DistributionError(PredbanditError):
    """Invalid predictive distribution (bad PMF, negative variance, ...)."""


class PrefixError(PredbanditError):
    """Requested prefix length exceeds the stored history."""


class GridTooShort(PredbanditError):
    """The geometric prefix grid would contain fewer than two points."""


class ParamError(PredbanditError):
    """Parameter outside its admissible range."""


class BridgeProtocolError(PredbanditError):
    """Wire-protocol violation or structured error from a model server."""

    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


class BridgeTimeout(PredbanditError):
    """Model server did not answer within the configured timeout."""


class SchemaError(PredbanditError):
    """A required column is missing from an input file."""


class ParseError(PredbanditError):
    """A cell could not be parsed; carries row/column information."""


class HorizonExhausted(PredbanditError):
    """A classification environment ran out of rows."""


class DegenerateWeights(PredbanditError):
    """All importance weights are zero; SNIPS is undefined."""


class WeightBoundError(PredbanditError):
    """An importance weight exceeds 1 / min propensity."""


class EmptyLog(PredbanditError):
    """An estimator was applied to an empty logged dataset."""


class ClusterError(PredbanditError):
    """Fewer than two clusters available for the cluster bootstrap."""


class ConfigError(PredbanditError):
    """Experiment configuration failed validation."""


class IncompleteResults(PredbanditError):
    """Result files are missing (scenario, agent, rep) cells."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)
