EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class JetconnError(Exception):
    exit_code = EXIT_RUNTIME


class ConfigError(JetconnError):
    """The problem definition is malformed or inconsistent."""

    exit_code = EXIT_CONFIG

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f'{path}: {message}'
        super().__init__(message)


class MathError(JetconnError):
    """A construction or evaluation failed for mathematical reasons."""

    exit_code = EXIT_RUNTIME


class SingularMetric(MathError):
    def __init__(self, determinant, where=None):
        self.determinant = determinant
        self.where = where
        super().__init__(f'metric is degenerate (det={determinant:.3e})' + (f' at {where}' if where else ''))


class NonconstantSignature(MathError):
    def __init__(self, first, second, first_point, second_point):
        self.signatures = (first, second)
        self.points = (first_point, second_point)
        super().__init__(f'signature {first} at {first_point} differs from {second} at {second_point}')


class SingularJacobian(MathError):
    def __init__(self, which, where=None):
        self.where = where
        super().__init__(f'{which} Jacobian is singular' + (f' at {where}' if where else ''))


class WrongArity(MathError):
    pass


class NotRegular(MathError):
    """A vertical metric or Lagrangian failed a structural (Kronecker) test."""

    def __init__(self, residual, where, clause=None):
        self.residual = residual
        self.where = where
        self.clause = clause
        label = f' [{clause}]' if clause else ''
        super().__init__(f'not Kronecker regular{label}: residual {residual:.3e} at {where}')


class DegenerateFactor(MathError):
    def __init__(self, rank, expected, where):
        self.rank = rank
        self.expected = expected
        self.where = where
        super().__init__(f'spatial factor has rank {rank} < {expected} at {where}')


class NoSpatialComponents(MathError):
    def __init__(self, cause):
        self.cause = cause
        super().__init__(f'NoSpatialComponents: energy Lagrangian is not Kronecker regular and '
                         f'no torsion-free fallback was given ({cause})')


class BlowUp(MathError):
    def __init__(self, time, norm, bound):
        self.time = time
        self.norm = norm
        super().__init__(f'state norm {norm:.3e} exceeded {bound:.3e} at t={time}')


class CoefficientError(MathError):
    def __init__(self, time, cause):
        self.time = time
        self.cause = cause
        super().__init__(f'coefficient evaluation failed at t={time}: {cause}')


class OutOfDomain(MathError):
    pass


class GridTooSmall(MathError):
    pass


class BoundaryViolation(MathError):
    def __init__(self, value, where):
        self.value = value
        self.where = where
        super().__init__(f'perturbation is {value:.3e} on the boundary at {where}')
