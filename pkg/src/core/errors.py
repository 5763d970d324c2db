class GsftError(Exception):
    """Base class for every error raised by the solvers and loaders."""
    pass


class NonPositiveDepth(GsftError):
    pass


class DegenerateMatrix(GsftError):
    pass


class DegenerateConfiguration(GsftError):
    pass


class DimensionMismatch(GsftError):
    pass


class InsufficientSamples(GsftError):
    pass


class InconsistentPointCounts(GsftError):
    pass


class ParseError(GsftError):
    """Malformed input file; `line` and `field` point at the offending spot when known."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SignAmbiguity(GsftError):
    pass


class SolverInfeasible(GsftError):
    pass


class SolverFailure(GsftError):
    pass


class HighRankSolution(GsftError):
    """Raised only in strict mode; the solution is attached."""

    def __init__(self, message, solution=None):
        self.solution = solution
        super().__init__(message)


class DegenerateCloud(GsftError):
    pass


class NonConvergence(GsftError):
    """The boosted iteration hit max_iters; `best` holds the best iterate by objective."""

    def __init__(self, message, best=None, trace=None):
        self.best = best
        self.trace = trace
        super().__init__(message)


class ConfigInfeasible(GsftError):
    pass


class ReportIoError(GsftError):
    pass
