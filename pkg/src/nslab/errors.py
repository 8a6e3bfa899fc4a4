"""Exception hierarchy shared by every module."""


class NSLabError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""


class NumericalError(NSLabError):
    pass


class NonZeroMean(NumericalError):
    pass


class NotDivergenceFree(NumericalError):
    pass


class NegativeTime(NumericalError):
    pass


class NonPositiveTime(NumericalError):
    pass


class ZeroWavevector(NumericalError):
    pass


class EmptyShell(NumericalError):
    pass


class UnorderedRadii(NumericalError):
    pass


class BadExponent(NumericalError):
    pass


# Exponent pair (a, kappa) outside the admissible range; a subclass so callers can tell them apart.
class BadExponents(BadExponent):
    pass


class EmptyTrajectory(NumericalError):
    pass


class MeshMismatch(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class Instability(NumericalError):
    pass


class DegenerateFit(NumericalError):
    pass


class BadConfig(NSLabError):
    pass


class ConditionViolated(NSLabError):
    """A theorem hypothesis failed; ``check`` names which one."""

    def __init__(self, check, measured, bound):
        self.check = check
        self.measured = measured
        self.bound = bound
        super().__init__(f"hypothesis {check} violated: measured {measured:.6g} > bound {bound:.6g}")


# -- I/O and configuration

class SnapshotError(NSLabError):
    pass


class BadMagic(SnapshotError):
    pass


class TruncatedPayload(SnapshotError):
    pass


class ConfigError(NSLabError):
    pass


class ConfigIOError(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    def __init__(self, line, column, message):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ConfigSchemaError(ConfigError):
    """Carries every (key, reason) violation found, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{k}: {r}" for k, r in self.violations)
        super().__init__(text)
