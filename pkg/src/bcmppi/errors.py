"""Exception types shared across the package."""


class BcmppiError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(BcmppiError):
    """Invalid configuration, scenario, or file schema."""


class DivergedStateError(BcmppiError):
    """A simulated state left the numerically sane envelope."""


class NoViableSampleError(BcmppiError):
    """Every sampled rollout diverged; there is no finite-cost candidate."""


class TrainingDivergedError(BcmppiError):
    """Surrogate training produced a non-finite loss."""


class ModelFormatError(BcmppiError):
    """A persisted surrogate artifact is malformed or corrupted."""
