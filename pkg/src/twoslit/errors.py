"""Exception hierarchy shared by all twoslit modules."""


class TwoSlitError(Exception):
    """Base class for every error raised by the package."""


class PhysicsError(TwoSlitError):
    """A numerical or physical failure (CLI exit code 1)."""


class QuadratureFailure(PhysicsError):
    pass


class NodeSingularity(PhysicsError):
    """The wavefunction modulus fell below the singularity floor."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class PhaseUnwrapFailure(PhysicsError):
    pass


class StepLimitExceeded(PhysicsError):
    pass


class NodeEncounter(PhysicsError):
    """A trajectory ran into a node; ``nearest`` is the smallest |psi|/peak seen."""

    def __init__(self, message, nearest=None, t=None):
        super().__init__(message)
        self.nearest = nearest
        self.t = t


class RejectionOverflow(PhysicsError):
    def __init__(self, message, acceptance_rate=None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class NoFringesDetected(PhysicsError):
    pass


class ConfigParseError(TwoSlitError):
    """Bad config input (CLI exit code 2)."""

    def __init__(self, message, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
