"""
Exception hierarchy for the DMTP trajectory prediction toolkit.

Every error raised deliberately by the library derives from ``DmtpError`` and,
where one fits, from the closest builtin exception so that callers can catch
either. The CLI maps these classes to exit codes and message prefixes.
"""


class DmtpError(Exception):
    """Base class for all library errors."""


class DimensionError(DmtpError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ShapeError(DimensionError):
    """Inputs describe a different number of agents, steps or features than expected."""


class ContractError(DmtpError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericalError(DmtpError, ArithmeticError):
    """A forward operation produced NaN or infinite values from finite inputs."""


class ConfigError(DmtpError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class SceneParseError(DmtpError, ValueError):
    """A scene, dataset or prediction document could not be parsed or violates an invariant.

    Attributes:
        field_path: Dotted path of the offending field (empty when unknown).
    """

    def __init__(self, message: str, field_path: str = "") -> None:
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


class DiffusionStepError(DmtpError, IndexError):
    """A diffusion step index lies outside ``[1, T]``."""


class CheckpointError(DmtpError, RuntimeError):
    """A checkpoint file is missing, truncated, corrupt or of another version."""


class MetricError(DmtpError, ValueError):
    """A metric cannot be computed for the given input."""


class PredictionMismatchError(DmtpError, ValueError):
    """Predictions and scenes do not describe the same scenes or agents."""


class DatasetError(DmtpError, ValueError):
    """A dataset is empty or its scenes cannot be used together."""


class ExplainInputError(DmtpError, ValueError):
    """An explanation routine received an incomplete game or unknown variable."""


class TrainingDivergedError(DmtpError, RuntimeError):
    """Training produced a non-finite loss or gradient.

    Attributes:
        component: Name of the loss component or parameter that went non-finite.
    """

    def __init__(self, component: str, step: int) -> None:
        self.component = component
        self.step = step
        super().__init__(f"non-finite value in {component} at step {step}")


class UsageError(DmtpError):
    """The command line could not be parsed."""
