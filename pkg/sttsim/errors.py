# Errors
# Every failure the simulator reports on purpose derives from SimulationError.
# The CLI maps the families onto exit codes (see sttsim.cli).


class SimulationError(Exception):
    pass


class TraceError(SimulationError):
    pass


class TraceParseError(TraceError):

    def __init__(self, path, record : int, message : str, line : int = None):
        self.path = path
        self.record = record
        self.line = line if line is not None else record
        super().__init__(f"{path}: line {self.line}: {message}")


class TraceValidationError(TraceError):

    def __init__(self, record : int, message : str):
        self.record = record
        super().__init__(f"record {record}: {message}")


class ConfigurationError(SimulationError, ValueError):
    """Invalid user-supplied configuration, always names the offending field."""

    def __init__(self, field : str, message : str):
        self.field = field
        self.reason = message
        super().__init__(f"{field}: {message}")


class InsufficientSampleError(SimulationError):
    pass


class RetentionSwitchError(SimulationError):
    pass


class CacheInvariantError(SimulationError, AssertionError):
    # program errors only, never expected from valid input
    pass


class ReportError(SimulationError):
    pass


class SchemaError(ReportError):

    def __init__(self, column : str, message : str):
        self.column = column
        super().__init__(f"column '{column}': {message}")
