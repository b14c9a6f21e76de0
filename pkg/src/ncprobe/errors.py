"""Exception hierarchy.

Everything derives from :class:`NcError` (a ``ValueError``) so callers that
only care about "bad input" can catch one type. The CLI maps ``NcError`` to
exit code 2 and ``OSError`` to exit code 1.
"""


class NcError(ValueError):
    pass


# input validation
class EmptyInput(NcError):
    pass


class DimensionMismatch(NcError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class LabelOutOfRange(NcError):
    pass


class EmptyClass(NcError):
    pass


class NonFiniteValue(NcError):
    pass


class InvalidSpec(NcError):
    pass


class OutOfRange(NcError):
    pass


class MaskLengthMismatch(NcError):
    pass


# file formats
class FormatError(NcError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class MalformedHeader(FormatError):
    pass


class ParseError(FormatError):
    def __init__(self, line: int, msg: str = ""):
        self.line = line
        super().__init__(f"line {line}: {msg}" if msg else f"line {line}")


class CountMismatch(FormatError):
    pass


# linear algebra
class NotSymmetric(NcError):
    pass


class NoConvergence(NcError):
    pass


class NegativeEigenvalueBeyondTolerance(NcError):
    pass


# metrics
class SingleClass(NcError):
    pass


class DegenerateMeans(NcError):
    pass


class CoincidentClassMeans(NcError):
    def __init__(self, i: int, j: int):
        self.pair = (i, j)
        super().__init__(f"class means {i} and {j} coincide")


class ZeroClassFeatures(NcError):
    def __init__(self, k: int):
        self.k = k
        super().__init__(f"class {k} has all-zero features")


class LengthMismatch(NcError):
    pass


class ConstantSeries(NcError):
    pass


class LayerMetricError(NcError):
    """A metric failed on one layer; ``layer`` is the 1-based layer index."""

    def __init__(self, layer: int, cause: Exception):
        self.layer = layer
        self.cause = cause
        super().__init__(f"layer {layer}: {type(cause).__name__}: {cause}")


# transfer
class LayerIndexOutOfRange(NcError):
    pass


class CannotTargetClassifier(LayerIndexOutOfRange):
    pass


class TargetTooLarge(NcError):
    pass
