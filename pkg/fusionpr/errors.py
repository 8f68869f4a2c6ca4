"""
Exception hierarchy. Every error carries a short `kind` used in the
CLI's machine-readable error line.
"""
from typing import Optional


class FprError(Exception):
    kind = "error"


class InvalidPoseError(FprError):
    kind = "invalid_pose"


class ShapeError(FprError):
    kind = "shape"


class ConfigurationError(FprError):
    kind = "configuration"


class ArgumentError(FprError, ValueError):
    kind = "argument"


class InternalConsistencyError(FprError):
    kind = "internal_consistency"


class GenerationError(FprError):
    kind = "generation"


class UsageError(FprError):
    kind = "usage"


class DescriptorLookupError(FprError, KeyError):
    kind = "lookup"

    def __init__(self, sample_id: str):
        self.sample_id = sample_id
        super().__init__(f"no descriptor for id {sample_id!r}")

    def __str__(self):
        return self.args[0]


class FormatError(FprError):
    """Malformed file content. Names the path and the byte offset or field."""
    kind = "format"

    def __init__(self, message: str, path=None, offset: Optional[int] = None,
                 field: Optional[str] = None):
        self.message = message
        self.path = str(path) if path is not None else None
        self.offset = offset
        self.field = field
        location = []
        if self.path:
            location.append(self.path)
        if offset is not None:
            location.append(f"offset {offset}")
        if field:
            location.append(f"field {field}")
        text = f"{message} ({', '.join(location)})" if location else message
        super().__init__(text)


class UnsupportedVersionError(FormatError):
    kind = "unsupported_version"
