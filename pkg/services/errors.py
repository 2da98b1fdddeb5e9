"""Exception hierarchy shared by the service modules.

Every error carries the process exit code the command line maps it to:
1 for bad input or usage, 2 for numeric failures.
"""


class GeoKernelError(Exception):
    exit_code = 2


class InvalidArgument(GeoKernelError, ValueError):
    exit_code = 1


class ParseError(GeoKernelError):
    exit_code = 1


class MetricViolation(GeoKernelError):
    exit_code = 1

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class InvalidPoint(InvalidArgument):
    pass


class KindMismatch(InvalidArgument):
    pass


class AsymmetricRow(InvalidArgument):
    pass


class Unsupported(GeoKernelError):
    exit_code = 3


class NonConvergence(GeoKernelError):
    pass


class NotPositiveDefinite(GeoKernelError):
    pass


class AmbiguousLift(GeoKernelError):
    pass


class ClassChanged(GeoKernelError):
    pass


class OdeFailure(GeoKernelError):
    pass


class PointOffLoop(GeoKernelError):
    pass


class GridTooLarge(GeoKernelError):
    pass
