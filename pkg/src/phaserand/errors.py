"""Exception hierarchy shared by the library and the command line."""


class PhaseRandError(Exception):
    """Base class for every error raised by :mod:`phaserand`."""


class DomainError(PhaseRandError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(PhaseRandError, ValueError):
    """Arguments are individually valid but incompatible with each other."""


class DegeneracyError(PhaseRandError):
    """Eigenvectors could not be tagged one-to-one with photon numbers."""


class SpectralGapError(PhaseRandError):
    """The spectral gap needed for an eigenvector fidelity bound is not positive."""


class CertificationError(PhaseRandError):
    """A bound could not be certified (solver inaccurate or failed)."""


class InfeasibleProblemError(CertificationError):
    """The relaxed optimisation problem has no feasible point."""


class ConfigError(PhaseRandError):
    """Base class for configuration problems."""


class ConfigNotFoundError(ConfigError):
    pass


class ConfigSchemaError(ConfigError):
    pass


class ConfigRangeError(ConfigError):
    pass


class ConvergenceError(PhaseRandError):
    """A numerical refinement did not converge."""
