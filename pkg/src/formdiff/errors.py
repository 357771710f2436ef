"""Exception types raised across the package."""


class FormDiffError(Exception):
    """Base class for all library errors."""


class MissingFace(FormDiffError):
    pass


class DiamondViolation(FormDiffError):
    pass


class DegenerateCell(FormDiffError):
    pass


class NotIncident(FormDiffError):
    pass


class NotHyperface(FormDiffError):
    pass


class NumericallyDegenerate(FormDiffError):
    pass


class NonOrientable(FormDiffError):
    pass


class NonCubicalCorners(FormDiffError):
    pass


class DegreeOverflow(FormDiffError):
    pass


class DegreeMismatch(FormDiffError):
    pass


class NonPositiveAlpha(FormDiffError):
    pass


class ConflictingBC(FormDiffError):
    pass


class SolverDivergence(FormDiffError):
    pass


class InvalidGeometry(FormDiffError):
    pass


class DimensionMismatch(FormDiffError):
    pass


class ParseError(FormDiffError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedSection(ParseError):
    pass


class ConfigError(FormDiffError):
    pass
