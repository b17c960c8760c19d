"""Exception hierarchy.

Two families map onto the CLI exit-code contract: :class:`DataError`
(exit 1) covers invalid inputs and violated preconditions, while
:class:`AdapterError` and :class:`IoFailure` (exit 2) cover anything that
talks to the outside world.
"""

from __future__ import annotations


class LeakscopeError(Exception):
    exit_code = 1


class DataError(LeakscopeError, ValueError):
    exit_code = 1


class MalformedHeader(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class InvalidConfig(DataError):
    pass


class ShiftOutOfRange(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class TooFewRows(DataError):
    pass


class EmptyContext(DataError):
    pass


class MissingClass(DataError):
    pass


class EmptyTestSet(DataError):
    pass


class ChannelMissing(DataError):
    pass


class ChannelMissingFromCalibration(ChannelMissing):
    pass


class EmptyDatabase(DataError):
    pass


class NothingLeftAfterExclusion(DataError):
    pass


class IoFailure(LeakscopeError, OSError):
    exit_code = 2


class AdapterError(LeakscopeError):
    exit_code = 2


class AdapterTimeout(AdapterError):
    pass


class AdapterMalformedOutput(AdapterError):
    pass


class AdapterInvalidSubset(AdapterError):
    pass


class BridgeUnavailable(AdapterError):
    pass


class BridgeProtocolError(AdapterError):
    pass
