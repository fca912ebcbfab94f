"""Exception hierarchy. Each error carries the CLI exit code it maps to."""


class CTOQWError(Exception):
    """Base class for every failure raised by the library."""

    exit_code = 1


class DimensionError(CTOQWError, ValueError):
    """Shape or structural precondition violated (non-square, non-Hermitian, ...)."""


class ModelFileError(CTOQWError):
    """Malformed model or density file."""

    exit_code = 2

    def __init__(self, message: str, key: str | None = None, line: int | None = None, column: int | None = None):
        self.key = key
        self.line = line
        self.column = column
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}, column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class CertificationError(CTOQWError):
    """No weight matrix certified: a Dette condition fails at some site."""

    exit_code = 3

    def __init__(self, reason: str, site: int | None = None):
        self.reason = reason
        self.site = site
        prefix = f"site {site}: " if site is not None else ""
        super().__init__(f"no weight matrix certified ({prefix}{reason})")


class DensityError(CTOQWError, ValueError):
    """Matrix is not a valid density operator."""

    exit_code = 4


class CheckFailure(CTOQWError):
    """A numerical self-check exceeded its tolerance."""

    exit_code = 5

    def __init__(self, message: str, deviation: float | None = None):
        self.deviation = deviation
        super().__init__(message)


class SingularBlockError(CTOQWError):
    """Recurrence block too ill-conditioned to invert."""

    def __init__(self, block: str, site: int, condition: float):
        self.block = block
        self.site = site
        self.condition = condition
        super().__init__(f"{block} block at site {site} is singular (condition number {condition:.3e})")


class SupportError(CTOQWError):
    """Evaluation point lies on the spectral support, or support is out of range."""


class ConvergenceError(CTOQWError):
    """Iterative refinement stopped at its cap without meeting the tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved error {achieved:.3e})"
        super().__init__(message)
