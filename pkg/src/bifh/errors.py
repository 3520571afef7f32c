"""Exception hierarchy shared by all bifh modules.

Two families matter to the command line front end: ``ConfigError`` for bad
inputs (exit code 10) and ``NumericalError`` for failures that happen while
computing (exit code 11).
"""


class BifhError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BifhError, ValueError):
    """Invalid user input: expressions, files, flags, preconditions."""


class NumericalError(BifhError, ArithmeticError):
    """A computation could not be carried out reliably."""


class ExpressionSyntaxError(ConfigError):
    """Expression text does not match the grammar.

    ``offset`` is the byte offset (UTF-8) of the offending token.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownIdentifier(ConfigError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} (at byte {offset})")
        self.name = name
        self.offset = offset


class MissingBinding(ConfigError):
    """A variable or curvature reference has no value bound to it."""


class DomainError(NumericalError, ValueError):
    """log, sqrt or a fractional power applied to a non-positive value."""


class DimensionMismatch(ConfigError):
    pass


class OffManifold(ConfigError):
    pass


class DegenerateInput(ConfigError):
    pass


class TooFewSamples(ConfigError):
    pass


class FrameCollapse(NumericalError):
    """Gram-Schmidt residual crosses the tolerance on too many samples."""


class StepTooLarge(NumericalError):
    pass


class AmbiguousRegime(ConfigError):
    """A curvature is zero on part of the grid and nonzero elsewhere."""


class NoCandidates(BifhError):
    """The case admits no weight function at all."""


class SingularityReached(NumericalError):
    pass


class StepRejected(NumericalError):
    pass


class ImmersionFailure(NumericalError):
    pass


class NormalDegeneracy(NumericalError):
    pass


class ModePreconditionFailed(ConfigError):
    pass
