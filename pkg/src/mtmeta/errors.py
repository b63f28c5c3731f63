"""Exception hierarchy.

``DataError`` subclasses signal malformed or inconsistent input and map to
CLI exit code 2; ``DegenerateError`` subclasses signal a statistic that is
undefined on otherwise valid data and map to exit code 3.
"""


class MetaEvalError(Exception):
    pass


class DataError(MetaEvalError):
    pass


class DegenerateError(MetaEvalError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DuplicateKey(ParseError):
    pass


class KeyMismatch(ParseError):
    pass


class MissingLengths(DataError):
    pass


class InconsistentMetricSets(DataError):
    pass


class MissingPValue(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NotDiscrete(DataError):
    pass


class ZeroGap(DataError):
    pass


class EmptyAlignment(DegenerateError):
    pass


class EmptySystem(DegenerateError):
    pass


class EmptySegment(DegenerateError):
    pass


class TooFewPoints(DegenerateError):
    pass


class NoValidGroups(DegenerateError):
    pass


class TooFewSystems(DegenerateError):
    pass


class NoUntiedPairs(DegenerateError):
    pass


class EmptyPairs(DegenerateError):
    pass


class AllPairsRemoved(DegenerateError):
    pass


class SplitTooSmall(DegenerateError):
    pass


class ConstantX(DegenerateError):
    pass
