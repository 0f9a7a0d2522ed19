"""Exception types raised across the package."""


class RadlabError(Exception):
    """Base class for all package errors."""


class InvalidDimension(RadlabError, ValueError):
    pass


class ResourceLimitExceeded(RadlabError, RuntimeError):
    pass


class OutOfRange(RadlabError, KeyError):
    pass


class LevelTooFine(RadlabError, ValueError):
    """A frequency block does not fit below the grid's Nyquist limit."""

    def __init__(self, j, j_admissible):
        self.j = j
        self.j_admissible = j_admissible
        super().__init__(
            f"level j={j} exceeds the Nyquist limit of this grid; "
            f"max admissible j is {j_admissible}"
        )


class SupportError(RadlabError, ValueError):
    """Input is not supported in the padded inner cube."""


class ParameterOrderError(RadlabError, ValueError):
    pass


class InsufficientRange(RadlabError, ValueError):
    pass


class SymmetryViolation(RadlabError, ValueError):
    def __init__(self, deviation, tolerance):
        self.deviation = deviation
        self.tolerance = tolerance
        super().__init__(
            f"input is not radial: relative deviation {deviation:.3e} "
            f"exceeds tolerance {tolerance:.1e}"
        )


class RegimeError(RadlabError, ValueError):
    pass


class ClassifierRejection(RadlabError, ValueError):
    def __init__(self, hypothesis, cite):
        self.hypothesis = hypothesis
        self.cite = cite
        super().__init__(f"inadmissible parameters: {hypothesis} [{cite}]")


class IndexMismatch(RadlabError, ValueError):
    pass


class ConfigError(RadlabError, ValueError):
    """Invalid experiment configuration; `path` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
