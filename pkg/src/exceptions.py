"""
Exception hierarchy shared by every module.

Each error carries a machine-readable ``code`` and a ``details`` dict, and
the CLI maps the class to a process exit code via ``exit_code``.
"""

from typing import Any, Dict, Optional


class UcanError(Exception):
    """Base error with optional code and details."""

    exit_code = 1
    default_code = "ucan_error"

    def __init__(self, message: str, code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.code = code or self.default_code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"error": str(self), "code": self.code}
        if self.details:
            payload["details"] = self.details
        return payload


class DimensionError(UcanError):
    """Operand shapes do not agree."""

    default_code = "dimension_mismatch"


class DegenerateVectorError(UcanError):
    """A vector is too short to normalize."""

    default_code = "degenerate_vector"


class NonFiniteError(UcanError):
    """NaN or Inf reached a tensor."""

    default_code = "non_finite"


class ClassIndexError(UcanError, IndexError):
    """Class label outside [0, CL)."""

    default_code = "class_index"


class ContractError(UcanError):
    """A precondition on the call itself was violated."""

    default_code = "contract"


class CancelledError(UcanError):
    """A long-running stage stopped because cancellation was requested."""

    default_code = "cancelled"


class ConfigError(UcanError):
    """Invalid configuration value."""

    exit_code = 2
    default_code = "config"


class DataError(UcanError):
    """Dataset is empty, single-class or otherwise unusable."""

    exit_code = 3
    default_code = "data"


class ConvergenceError(UcanError):
    """Iterative solver hit its cap before meeting tolerance."""

    exit_code = 4
    default_code = "convergence"

    def __init__(self, message: str, residual: float, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        details.setdefault("residual", float(residual))
        super().__init__(message, details=details)
        self.residual = float(residual)


class ResolutionError(UcanError):
    """A required artifact is missing."""

    exit_code = 3
    default_code = "artifact_missing"

    def __init__(self, artifact: str, path: Any = None):
        where = f" at {path}" if path is not None else ""
        super().__init__(f"Required artifact '{artifact}' not found{where}",
                         details={"artifact": artifact, "path": str(path) if path is not None else None})
        self.artifact = artifact


class FormatError(DataError):
    """File layout does not match the expected format."""

    default_code = "format"


class BadMagicError(FormatError):
    default_code = "bad_magic"


class VersionMismatchError(FormatError):
    default_code = "version_mismatch"


class TruncatedFileError(FormatError):
    default_code = "truncated"


class ChecksumError(FormatError):
    default_code = "checksum"


class CorruptRecordError(FormatError):
    default_code = "corrupt_record"
