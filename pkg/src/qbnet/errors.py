"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`QbnetError`
so callers (and the CLI) can separate domain failures from bugs.
"""


class QbnetError(Exception):
    """Base class for all package errors."""


class IndexOutOfRange(QbnetError, IndexError):
    pass


class CycleDetected(QbnetError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(map(str, self.cycle)))


class SelfEdge(QbnetError):
    pass


class DuplicateEdge(QbnetError):
    pass


class SetsNotDisjoint(QbnetError):
    pass


class GraphTooLargeForGlobalEnumeration(QbnetError):
    pass


class ScopeMismatch(QbnetError):
    pass


class ZeroConditionMass(QbnetError, ZeroDivisionError):
    pass


class TooManyJointStates(QbnetError):
    pass


class NotHermitian(QbnetError):
    pass


class NotSquare(QbnetError):
    pass


class NegativeEigenvalueBeyondTolerance(QbnetError):
    pass


class TraceNotOne(QbnetError):
    pass


class NotNormalized(QbnetError):
    pass


class MissingValue(QbnetError):
    pass


class ZeroDenominator(QbnetError, ZeroDivisionError):
    pass


class ScopePartitionInvalid(QbnetError):
    pass


class NegativeCMI(QbnetError):
    """A CMI came out more negative than round-off can explain."""


class ZeroReferenceAmplitude(QbnetError):
    pass


class ZeroAmplitudeStrictMode(QbnetError):
    pass


class GroundSetTooLarge(QbnetError):
    pass


class UnnormalizedNodeTable(QbnetError):
    pass


class AllZeroAffinityProduct(QbnetError):
    pass


class NotAllEncompassing(QbnetError):
    pass


class ToleranceInconsistency(QbnetError):
    """Two quantities that must agree disagree at the configured tolerance."""


class IndeterminateResult(QbnetError):
    """A CMI value landed inside the hysteresis band."""

    def __init__(self, value, low, high):
        self.value = value
        super().__init__(f"CMI {value:.3e} inside indeterminate band [{low:g}, {high:g}]")


class UnknownCheck(QbnetError, KeyError):
    pass


class NetworkSyntaxError(QbnetError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class ValidationError(QbnetError):
    def __init__(self, path, reason, line=None):
        self.path = path
        self.reason = reason
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{path}{where}: {reason}")
