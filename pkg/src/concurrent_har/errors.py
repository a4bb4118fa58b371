"""Exception hierarchy shared by every subpackage."""


class HarError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HarError, ValueError):
    """Operand shapes do not agree."""

    def __init__(self, op, expected, actual):
        self.op = op
        self.expected = expected
        self.actual = actual
        super().__init__(f"{op}: expected {expected}, got {actual}")


class ConfigError(HarError, ValueError):
    """A network, plan or preprocessing configuration is invalid."""

    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer!r}: {message}"
        super().__init__(message)


class GraphStateError(HarError, RuntimeError):
    """Backward requested on something that has no recorded forward pass."""


class NonFiniteError(HarError, FloatingPointError):
    """A NaN or Inf reached a loss or gradient."""

    def __init__(self, message, name=None):
        self.name = name
        super().__init__(message)


class FormatError(HarError, ValueError):
    """A file does not match its declared binary or text format."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        parts = [message]
        if offset is not None:
            parts.append(f"at byte offset {offset}")
        if path is not None:
            parts.append(f"in {path}")
        super().__init__(" ".join(parts))


class MissingInputError(HarError, ValueError):
    """An enabled modality has no input for the requested time instance."""


class SequenceError(HarError, ValueError):
    """A case sequence breaks its ordering or labelling rules."""
