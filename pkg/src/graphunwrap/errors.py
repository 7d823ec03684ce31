"""Exception hierarchy shared by every graphunwrap module."""


class GraphUnwrapError(Exception):
    """Base class for all library errors."""


# signal handling
class ConstantChannel(GraphUnwrapError):
    def __init__(self, channel: int):
        super().__init__(f"channel {channel} is constant (std = 0)")
        self.channel = channel


class TooShort(GraphUnwrapError):
    pass


class NonPositiveLambda(GraphUnwrapError):
    pass


class MissingFoldCounts(GraphUnwrapError):
    pass


class BadDelta(GraphUnwrapError):
    pass


# graphs
class KTooLarge(GraphUnwrapError):
    pass


class ChannelMismatch(GraphUnwrapError):
    pass


class GraphMismatch(GraphUnwrapError):
    pass


# compute
class ShapeMismatch(GraphUnwrapError):
    pass


class NonFinite(GraphUnwrapError):
    pass


class NotScalarLoss(GraphUnwrapError):
    pass


class MissingGradients(GraphUnwrapError):
    pass


class ConfigMismatch(GraphUnwrapError):
    pass


# training / statistics
class EmptySplit(GraphUnwrapError):
    pass


class ConstantInput(GraphUnwrapError):
    pass


# files
class FormatError(GraphUnwrapError):
    """Malformed input file. Carries the path and (1-based) line when known."""

    def __init__(self, message: str, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class BadColumnCount(FormatError):
    pass


class NonNumericCell(FormatError):
    pass


class EmptyFile(FormatError):
    pass


class BadMagic(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class CorruptPayload(FormatError):
    pass


class BadBand(GraphUnwrapError):
    pass


class ConfigError(GraphUnwrapError):
    pass
