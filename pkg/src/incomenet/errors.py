"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """A value is outside the domain an operation accepts."""


class FormatError(ValueError):
    """An input file does not follow its documented CSV schema."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DuplicateClientError(ValueError):
    """The bank data lists the same phone more than once."""

    def __init__(self, duplicates):
        self.duplicates = sorted(duplicates)
        shown = ", ".join(self.duplicates[:20])
        more = "" if len(self.duplicates) <= 20 else f" (+{len(self.duplicates) - 20} more)"
        super().__init__(f"duplicate bank phones: {shown}{more}")


class NotFoundError(KeyError):
    pass


class UndefinedCorrelationError(ValueError):
    """Correlation requested on a constant or too-short sequence."""


class NumericError(ArithmeticError):
    """An iterative numeric routine failed to converge."""


class InsufficientEvidenceError(ValueError):
    """A classifier was asked to score a user with no labeled contacts."""


class UndefinedRateError(ValueError):
    """TPR or FPR is undefined because a class is empty."""


class ConfigError(ValueError):
    pass
