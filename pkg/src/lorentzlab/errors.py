"""Exception hierarchy shared by all modules."""


class LorentzLabError(Exception):
    """Base class for every error raised by the package."""


class SingularMetric(LorentzLabError):
    pass


class OutOfDomain(LorentzLabError):
    pass


class NotTimelikeFuture(LorentzLabError):
    pass


class ExitedDomain(LorentzLabError):
    pass


class StepSizeUnderflow(LorentzLabError):
    pass


class NoConvergence(LorentzLabError):
    pass


class NotCausallyConnectable(LorentzLabError):
    pass


class Indeterminate(LorentzLabError):
    """Time separation could not be decided by the requested method."""


class NotCausal(LorentzLabError):
    pass


class NotConverged(LorentzLabError):
    pass


class QuadratureDomainClip(LorentzLabError):
    pass


class NotElliptic(LorentzLabError):
    pass


class SquareRootFailure(LorentzLabError):
    pass


class NewtonFail(LorentzLabError):
    pass


class ConfigError(LorentzLabError):
    """Invalid scenario or metric-spec file; message names the offending field."""
