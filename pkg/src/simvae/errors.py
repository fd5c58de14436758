"""Exception hierarchy shared across the package."""


class SimVAEError(Exception):
    """Base class for all package errors."""


class DimensionError(SimVAEError, ValueError):
    """Shapes or axes do not agree."""


class DomainError(SimVAEError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(SimVAEError, ArithmeticError):
    """A computation produced non-finite values."""


class ContractError(SimVAEError, ValueError):
    """A documented precondition of an operation was violated."""


class PreconditionError(ContractError):
    pass


class ConfigError(SimVAEError, ValueError):
    """Invalid or unknown configuration."""


class DataError(SimVAEError, ValueError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    """Base for file-format parse failures."""


class IdxMagicError(ParseError):
    pass


class IdxTruncatedError(ParseError):
    pass


class IdxDimensionError(ParseError):
    pass


class CheckpointError(SimVAEError):
    """Base for container/checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    """Stored parameter names or shapes disagree with the architecture."""


class TrainingError(SimVAEError, RuntimeError):
    pass


class ResumeError(TrainingError):
    pass
